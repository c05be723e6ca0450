"""Run Alice and Bob against each other over memory queues or a local socket."""

from __future__ import annotations

import socket
import threading
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..keystream import Keystream
from ..reconstruct import SolverConfig, pearson_rho, psnr
from .session import ReceivedWindow, Role, Session, SessionConfig
from .transport import FaultyTransport, SocketTransport, Tap, Transport, TransportError, memory_pair

Fault = Callable[[int, bytes], "bytes | None"]


@dataclass
class LoopbackResult:
    config: SessionConfig
    alice: Session
    bob: Session
    windows: list[ReceivedWindow]
    originals: np.ndarray
    tap: Tap
    rho: list[float] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)

    @property
    def mean_rho(self) -> float:
        return float(np.mean(self.rho)) if self.rho else float("nan")


def session_rngs(seed: int | None) -> tuple[Keystream | None, Keystream | None]:
    if seed is None:
        return None, None
    key = int(seed).to_bytes(8, "big", signed=False)
    return Keystream(key, b"ALI"), Keystream(key, b"BOB")


def _socket_pair(tap: Tap) -> tuple[Transport, Transport]:
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.bind(("127.0.0.1", 0))
    server.listen(1)
    client = socket.create_connection(server.getsockname())
    conn, _ = server.accept()
    server.close()
    for s in (client, conn):
        s.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
    return SocketTransport(client, "alice", tap), SocketTransport(conn, "bob", tap)


def run_loopback(
    windows: np.ndarray,
    config: SessionConfig,
    *,
    transport: str = "mem",
    seed: int | None = None,
    solver: SolverConfig = SolverConfig(),
    basis: str = "dct",
    alice_fault: Fault | None = None,
    bob_fault: Fault | None = None,
    timeout: float = 0.25,
    bob_config: SessionConfig | None = None,
) -> LoopbackResult:
    """Handshake, stream every row of ``windows`` and reconstruct on Bob's side."""
    windows = np.asarray(windows, dtype=np.float64)
    if windows.ndim != 2 or windows.shape[1] != config.N:
        raise ValueError(f"windows must have shape (n, {config.N})")
    tap = Tap()
    if transport == "mem":
        a_end, b_end = memory_pair(tap)
    elif transport == "socket":
        a_end, b_end = _socket_pair(tap)
    else:
        raise ValueError(f"unknown transport {transport!r}")
    if alice_fault is not None:
        a_end = FaultyTransport(a_end, alice_fault)
    if bob_fault is not None:
        b_end = FaultyTransport(b_end, bob_fault)

    rng_a, rng_b = session_rngs(seed)
    alice = Session(Role.ALICE, a_end, config, rng=rng_a, basis_kind=basis, solver=solver, timeout=timeout)
    bob = Session(Role.BOB, b_end, bob_config, rng=rng_b, basis_kind=basis, solver=solver, timeout=timeout)

    received: list[ReceivedWindow] = []
    failure: list[BaseException] = []

    def bob_main():
        try:
            bob.handshake()
            received.extend(bob.serve(idle_timeout=max(2.0, 10 * timeout)))
        except BaseException as exc:  # surfaced in the caller's thread
            failure.append(exc)

    worker = threading.Thread(target=bob_main, name="bob", daemon=True)
    worker.start()
    try:
        alice.handshake()
        for x in windows:
            alice.send_window(x)
        alice.close()
    finally:
        worker.join()
        a_end.close()
        b_end.close()
    if failure:
        raise failure[0]

    result = LoopbackResult(config, alice, bob, received, windows, tap)
    for w in received:
        x = windows[w.seq]
        result.rho.append(pearson_rho(x, w.result.x_hat))
        result.psnr.append(psnr(x, w.result.x_hat))
    return result


def run_alice(
    windows: np.ndarray,
    config: SessionConfig,
    transport: Transport,
    *,
    seed: int | None = None,
    timeout: float = 0.25,
) -> Session:
    """Alice alone: handshake, stream every window, close."""
    alice = Session(Role.ALICE, transport, config, rng=session_rngs(seed)[0], timeout=timeout)
    alice.handshake()
    for x in np.asarray(windows, dtype=np.float64):
        alice.send_window(x)
    alice.close()
    return alice


def run_bob(
    transport: Transport,
    config: SessionConfig | None = None,
    *,
    seed: int | None = None,
    solver: SolverConfig = SolverConfig(),
    basis: str = "dct",
    timeout: float = 0.25,
    idle_timeout: float = 5.0,
) -> tuple[Session, list[ReceivedWindow]]:
    """Bob alone: answer the handshake, then reconstruct until CLOSE."""
    bob = Session(
        Role.BOB, transport, config, rng=session_rngs(seed)[1], basis_kind=basis, solver=solver, timeout=timeout
    )
    bob.handshake()
    return bob, bob.serve(idle_timeout=idle_timeout)


def listen(addr: tuple[str, int], tap: Tap | None = None, accept_timeout: float = 30.0) -> SocketTransport:
    """Accept one connection on ``addr`` and wrap it as Bob's transport."""
    server = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    server.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    try:
        server.bind(addr)
        server.listen(1)
        server.settimeout(accept_timeout)
        conn, _ = server.accept()
    except OSError as exc:
        raise TransportError(f"listen on {addr[0]}:{addr[1]}: {exc}") from exc
    finally:
        server.close()
    return SocketTransport(conn, "bob", tap)


def connect(addr: tuple[str, int], tap: Tap | None = None, timeout: float = 10.0) -> SocketTransport:
    try:
        sock = socket.create_connection(addr, timeout=timeout)
    except OSError as exc:
        raise TransportError(f"connect to {addr[0]}:{addr[1]}: {exc}") from exc
    return SocketTransport(sock, "alice", tap)
