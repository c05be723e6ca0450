"""Byte transports for whole frames, plus the eavesdropper tap."""

from __future__ import annotations

import queue
import socket
import threading
from typing import Callable

from .frame import HEADER_SIZE, frame_size


class TransportError(Exception):
    pass


class TransportTimeout(TransportError):
    pass


class Tap:
    """Append-only log of every frame put on the channel, in send order."""

    def __init__(self):
        self._frames: list[tuple[str, bytes]] = []
        self._lock = threading.Lock()

    def record(self, sender: str, data: bytes) -> None:
        with self._lock:
            self._frames.append((sender, bytes(data)))

    @property
    def frames(self) -> list[tuple[str, bytes]]:
        with self._lock:
            return list(self._frames)

    def log(self) -> bytes:
        return b"".join(data for _, data in self.frames)


class Transport:
    name = "transport"

    def send(self, data: bytes) -> None:
        raise NotImplementedError

    def recv(self, timeout: float | None = None) -> bytes:
        raise NotImplementedError

    def close(self) -> None:
        pass


class MemoryEndpoint(Transport):
    def __init__(self, name: str, inbox: queue.Queue, outbox: queue.Queue, tap: Tap | None):
        self.name = name
        self._inbox = inbox
        self._outbox = outbox
        self.tap = tap
        self.closed = False

    def send(self, data: bytes) -> None:
        if self.closed:
            raise TransportError(f"{self.name}: send on closed transport")
        if self.tap is not None:
            self.tap.record(self.name, data)
        self._outbox.put(bytes(data))

    def recv(self, timeout: float | None = None) -> bytes:
        try:
            return self._inbox.get(timeout=timeout)
        except queue.Empty:
            raise TransportTimeout(f"{self.name}: no frame within {timeout}s") from None

    def close(self) -> None:
        self.closed = True


def memory_pair(tap: Tap | None = None) -> tuple[MemoryEndpoint, MemoryEndpoint]:
    """Connected (alice, bob) in-memory endpoints sharing one tap."""
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return (
        MemoryEndpoint("alice", b_to_a, a_to_b, tap),
        MemoryEndpoint("bob", a_to_b, b_to_a, tap),
    )


class SocketTransport(Transport):
    """Raw frames over a stream socket, no extra envelope."""

    def __init__(self, sock: socket.socket, name: str = "socket", tap: Tap | None = None):
        self.sock = sock
        self.name = name
        self.tap = tap
        self._buf = b""

    def send(self, data: bytes) -> None:
        if self.tap is not None:
            self.tap.record(self.name, data)
        try:
            self.sock.sendall(data)
        except OSError as exc:
            raise TransportError(f"{self.name}: {exc}") from exc

    def _fill(self, n: int, timeout: float | None) -> None:
        self.sock.settimeout(timeout)
        while len(self._buf) < n:
            try:
                chunk = self.sock.recv(65536)
            except socket.timeout:
                raise TransportTimeout(f"{self.name}: no data within {timeout}s") from None
            except OSError as exc:
                raise TransportError(f"{self.name}: {exc}") from exc
            if not chunk:
                raise TransportError(f"{self.name}: peer closed the connection")
            self._buf += chunk

    def recv(self, timeout: float | None = None) -> bytes:
        self._fill(HEADER_SIZE, timeout)
        size = frame_size(self._buf[:HEADER_SIZE])
        self._fill(size, timeout)
        data, self._buf = self._buf[:size], self._buf[size:]
        return data

    def close(self) -> None:
        try:
            self.sock.close()
        except OSError:
            pass


class FaultyTransport(Transport):
    """Applies ``fault(n, data)`` to the n-th outgoing frame.

    The hook returns the bytes to put on the wire, or None to drop the frame.
    """

    def __init__(self, inner: Transport, fault: Callable[[int, bytes], bytes | None]):
        self.inner = inner
        self.name = inner.name
        self.fault = fault
        self.sent = 0

    def send(self, data: bytes) -> None:
        out = self.fault(self.sent, data)
        self.sent += 1
        if out is not None:
            self.inner.send(out)

    def recv(self, timeout: float | None = None) -> bytes:
        return self.inner.recv(timeout)

    def close(self) -> None:
        self.inner.close()
