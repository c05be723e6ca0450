"""Alice/Bob session state machine.

Handshake (Alice drives, Bob answers every frame it accepts):

    A -> B  HELLO   domain-parameter id      B -> A  HELLO
    A -> B  PUBKEY  32-byte x-coordinate     B -> A  PUBKEY
    A -> B  CONFIG  M, CR, E, rate           B -> A  CONFIG (echo = ack)

Alice retransmits her last handshake frame when no answer arrives in time;
corrupted frames fail the CRC and are dropped by the receiver.  After the
handshake each DATA frame carries (epoch, seq) in clear, and Bob derives the
effective matrix for that window from those two numbers alone, so lost or
reordered frames never desynchronize the key schedule.
"""

from __future__ import annotations

import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .. import cs_codec, x25519
from ..cs_codec import DEFAULT_EPOCH_LENGTH, SensingMatrix
from ..keystream import Keystream
from ..reconstruct import (
    ReconstructionResult,
    SolverConfig,
    SparseBasis,
    matrix_lipschitz,
    reconstruct_measurement,
)
from .frame import Frame, FrameError, FrameType, frame_decode
from .transport import Transport, TransportTimeout

log = logging.getLogger(__name__)

DOMAIN_ID = b"X25519|CS4-GAUSS|SHA256-CTR|v1"
CONFIG_FMT = struct.Struct(">HHId")
EPOCH_MASK = 0xFFFF
SEQ_MASK = 0xFFFFFFFF


class ProtocolError(Exception):
    pass


class HandshakeError(ProtocolError):
    pass


class Role(Enum):
    ALICE = "alice"
    BOB = "bob"


class Phase(Enum):
    INIT = "init"
    PUBKEY_SENT = "pubkey-sent"
    ESTABLISHED = "established"
    STREAMING = "streaming"
    CLOSED = "closed"


@dataclass(frozen=True)
class SessionConfig:
    M: int = 128
    CR: int = 8
    epoch_length: int = DEFAULT_EPOCH_LENGTH
    sample_rate: float = 1000.0

    def __post_init__(self):
        cs_codec.check_dims(self.M, self.M * self.CR)
        if self.epoch_length < 1:
            raise cs_codec.ConfigError("epoch length must be >= 1")

    @property
    def N(self) -> int:
        return self.M * self.CR

    def pack(self) -> bytes:
        return CONFIG_FMT.pack(self.M, self.CR, self.epoch_length, self.sample_rate)

    @classmethod
    def unpack(cls, data: bytes) -> SessionConfig:
        if len(data) != CONFIG_FMT.size:
            raise ProtocolError(f"CONFIG payload of {len(data)} bytes")
        try:
            return cls(*CONFIG_FMT.unpack(data))
        except cs_codec.ConfigError as exc:
            raise ProtocolError(f"unusable CONFIG: {exc}") from exc


@dataclass
class Diagnostics:
    dropped_frames: int = 0
    retransmits: int = 0
    saturated_windows: int = 0
    saturation_events: int = 0
    ignored_frames: int = 0


@dataclass
class ReceivedWindow:
    epoch: int
    seq: int
    y: np.ndarray
    result: ReconstructionResult


@dataclass
class Session:
    role: Role
    transport: Transport
    config: SessionConfig | None = None
    rng: Keystream | None = None
    basis_kind: str = "dct"
    solver: SolverConfig = field(default_factory=SolverConfig)
    timeout: float = 0.25
    max_retries: int = 5

    def __post_init__(self):
        if self.role is Role.ALICE and self.config is None:
            raise ValueError("Alice needs a session configuration")
        self.phase = Phase.INIT
        self.keypair = x25519.generate_keypair(self.rng)
        self.peer_public: bytes | None = None
        self.shared_secret: bytes | None = None
        self.epoch = 0
        self.window_seq = 0
        self.matrix: SensingMatrix | None = None
        self.diagnostics = Diagnostics()
        self.sent: list[bytes] = []
        self._matrices: OrderedDict[int, tuple[SensingMatrix, float]] = OrderedDict()
        self._replies: dict[FrameType, bytes] = {}

    # -- plumbing ---------------------------------------------------------

    def _send(self, frame: Frame) -> bytes:
        data = frame.encode()
        self.sent.append(data)
        self.transport.send(data)
        return data

    def recv_frame(self, timeout: float | None = None) -> Frame | None:
        """Next decodable frame, or None if the one that arrived was bad."""
        data = self.transport.recv(self.timeout if timeout is None else timeout)
        try:
            return frame_decode(data)
        except FrameError as exc:
            self.diagnostics.dropped_frames += 1
            log.info("%s dropped frame: %s (code %d)", self.role.value, exc, exc.code)
            return None

    def _require_secret(self) -> bytes:
        if self.shared_secret is None:
            raise ProtocolError("no shared secret yet")
        return self.shared_secret

    def _agree(self) -> None:
        secret = x25519.shared_secret(self.keypair, self.peer_public, rng=self.rng)
        if not any(secret):
            self.phase = Phase.CLOSED
            raise HandshakeError("peer public key gives an all-zero shared secret")
        self.shared_secret = secret

    def _establish(self) -> None:
        self.phase = Phase.ESTABLISHED
        self.epoch = 0
        self.matrix = self.epoch_matrix(0)

    def epoch_matrix(self, epoch: int) -> SensingMatrix:
        return self._epoch_entry(epoch)[0]

    def _epoch_entry(self, epoch: int) -> tuple[SensingMatrix, float]:
        entry = self._matrices.get(epoch)
        if entry is None:
            cfg = self.config
            phi = cs_codec.derive_matrix(self._require_secret(), epoch, cfg.M, cfg.N)
            entry = (phi, matrix_lipschitz(phi))
            self._matrices[epoch] = entry
            while len(self._matrices) > 4:
                self._matrices.popitem(last=False)
        else:
            self._matrices.move_to_end(epoch)
        return entry

    def effective_matrix(self, epoch: int, seq: int) -> SensingMatrix:
        cfg = self.config
        transform = cs_codec.derive_window_transform(
            self._require_secret(), epoch, seq, cfg.M, cfg.N
        )
        return transform.apply(self.epoch_matrix(epoch))

    # -- handshake --------------------------------------------------------

    def handshake(self) -> Session:
        if self.phase is not Phase.INIT:
            raise ProtocolError(f"handshake from phase {self.phase.value}")
        if self.role is Role.ALICE:
            self._handshake_alice()
        else:
            self._handshake_bob()
        return self

    def _exchange(self, frame: Frame, expect: FrameType) -> Frame:
        """Send a handshake frame and wait for the answer, retransmitting."""
        self._send(frame)
        for attempt in range(self.max_retries + 1):
            while True:
                try:
                    reply = self.recv_frame()
                except TransportTimeout:
                    break
                if reply is None:
                    continue
                if reply.type is FrameType.CLOSE:
                    self.phase = Phase.CLOSED
                    raise HandshakeError("peer aborted the handshake")
                if reply.type is expect:
                    return reply
                self.diagnostics.ignored_frames += 1
            if attempt < self.max_retries:
                self.diagnostics.retransmits += 1
                self.sent.append(self.sent[-1])
                self.transport.send(self.sent[-1])
        self.phase = Phase.CLOSED
        raise HandshakeError(f"no {expect.name} after {self.max_retries} retransmissions")

    def _handshake_alice(self) -> None:
        hello = self._exchange(Frame(FrameType.HELLO, 0, 0, DOMAIN_ID), FrameType.HELLO)
        if hello.payload != DOMAIN_ID:
            self._abort()
            raise HandshakeError("peer uses different domain parameters")
        reply = self._exchange(Frame(FrameType.PUBKEY, 0, 1, self.keypair.public), FrameType.PUBKEY)
        self.phase = Phase.PUBKEY_SENT
        if len(reply.payload) != 32:
            self._abort()
            raise HandshakeError("malformed peer public key")
        self.peer_public = reply.payload
        try:
            self._agree()
        except HandshakeError:
            self._abort()
            raise
        echo = self._exchange(Frame(FrameType.CONFIG, 0, 2, self.config.pack()), FrameType.CONFIG)
        if echo.payload != self.config.pack():
            self._abort()
            raise HandshakeError("peer did not acknowledge the configuration")
        self._establish()

    def _handshake_bob(self) -> None:
        while self.phase is not Phase.ESTABLISHED:
            try:
                frame = self.recv_frame(timeout=self.timeout * (self.max_retries + 2))
            except TransportTimeout:
                self.phase = Phase.CLOSED
                raise HandshakeError("peer went silent during the handshake") from None
            if frame is not None:
                self._answer_handshake(frame)

    def _answer_handshake(self, frame: Frame) -> None:
        """Bob's reply to a handshake frame (idempotent for duplicates)."""
        if frame.type is FrameType.HELLO:
            if frame.payload != DOMAIN_ID:
                self._abort()
                raise HandshakeError("peer uses different domain parameters")
            self._reply(FrameType.HELLO, Frame(FrameType.HELLO, 0, 0, DOMAIN_ID))
        elif frame.type is FrameType.PUBKEY:
            if len(frame.payload) != 32:
                self._abort()
                raise HandshakeError("malformed peer public key")
            if self.peer_public is None:
                self.peer_public = frame.payload
                try:
                    self._agree()
                except HandshakeError:
                    self._abort()
                    raise
            self.phase = Phase.PUBKEY_SENT
            self._reply(FrameType.PUBKEY, Frame(FrameType.PUBKEY, 0, 1, self.keypair.public))
        elif frame.type is FrameType.CONFIG:
            if self.shared_secret is None:
                raise ProtocolError("CONFIG before key exchange")
            cfg = SessionConfig.unpack(frame.payload)
            if self.config is not None and self.config != cfg:
                log.info("bob adopts alice's configuration %s", cfg)
            self.config = cfg
            self._reply(FrameType.CONFIG, Frame(FrameType.CONFIG, 0, 2, cfg.pack()))
            if self.phase is not Phase.STREAMING:
                self._establish()
        elif frame.type is FrameType.CLOSE:
            self.phase = Phase.CLOSED
            raise HandshakeError("peer aborted the handshake")
        else:
            raise ProtocolError(f"{frame.type.name} before the handshake completed")

    def _reply(self, kind: FrameType, frame: Frame) -> None:
        if kind in self._replies:
            self.transport.send(self._replies[kind])
            self.sent.append(self._replies[kind])
        else:
            self._replies[kind] = self._send(frame)

    def _abort(self) -> None:
        self.phase = Phase.CLOSED
        try:
            self._send(Frame(FrameType.CLOSE))
        except Exception:  # the abort reason matters more than a dead link
            pass

    # -- streaming --------------------------------------------------------

    def send_window(self, x) -> Frame:
        if self.role is not Role.ALICE:
            raise ProtocolError("only Alice sends measurements")
        if self.phase not in (Phase.ESTABLISHED, Phase.STREAMING):
            raise ProtocolError(f"cannot stream in phase {self.phase.value}")
        if self.window_seq > SEQ_MASK:
            raise ProtocolError("window counter exhausted; re-key the session")
        self.phase = Phase.STREAMING
        seq = self.window_seq
        epoch = seq // self.config.epoch_length
        if epoch != self.epoch or self.matrix is None:
            self.epoch = epoch
            self.matrix = self.epoch_matrix(epoch)
        m = cs_codec.encode_window_hw(x, self.effective_matrix(epoch, seq))
        if m.saturation_count:
            self.diagnostics.saturated_windows += 1
            self.diagnostics.saturation_events += m.saturation_count
            log.warning("window %d saturated the accumulator %d times", seq, m.saturation_count)
        frame = Frame(FrameType.DATA, epoch & EPOCH_MASK, seq, m.y.astype("<i2").tobytes())
        self._send(frame)
        self.window_seq = seq + 1
        return frame

    def receive_window(self, frame: Frame) -> ReceivedWindow:
        if self.phase not in (Phase.ESTABLISHED, Phase.STREAMING):
            raise ProtocolError(f"DATA in phase {self.phase.value}")
        if frame.type is not FrameType.DATA:
            raise ProtocolError(f"expected DATA, got {frame.type.name}")
        cfg = self.config
        epoch = frame.seq // cfg.epoch_length
        if epoch & EPOCH_MASK != frame.epoch:
            raise ProtocolError(f"frame epoch {frame.epoch} does not match seq {frame.seq}")
        if epoch > self.epoch + 1:
            raise ProtocolError(f"epoch {epoch} is beyond current epoch {self.epoch} + 1")
        if len(frame.payload) != 2 * cfg.M:
            raise ProtocolError(f"DATA payload of {len(frame.payload)} bytes, expected {2 * cfg.M}")
        self.phase = Phase.STREAMING
        if epoch > self.epoch:
            self.epoch = epoch
            self.matrix = self.epoch_matrix(epoch)
        self.window_seq = max(self.window_seq, frame.seq + 1)
        y = np.frombuffer(frame.payload, dtype="<i2").astype(np.int64)
        _, L = self._epoch_entry(epoch)
        phi = self.effective_matrix(epoch, frame.seq)
        result = reconstruct_measurement(y, phi, SparseBasis(self.basis_kind, cfg.N), self.solver, L=L)
        return ReceivedWindow(epoch, frame.seq, y, result)

    def close(self) -> None:
        if self.phase is not Phase.CLOSED:
            try:
                self._send(Frame(FrameType.CLOSE, self.epoch & EPOCH_MASK, self.window_seq & SEQ_MASK))
            finally:
                self.phase = Phase.CLOSED

    def serve(self, idle_timeout: float = 5.0) -> list[ReceivedWindow]:
        """Bob's receive loop: reconstruct DATA until CLOSE or silence."""
        if self.role is not Role.BOB:
            raise ProtocolError("only Bob serves")
        out: list[ReceivedWindow] = []
        while True:
            try:
                frame = self.recv_frame(timeout=idle_timeout)
            except TransportTimeout:
                break
            if frame is None:
                continue
            if frame.type is FrameType.DATA:
                out.append(self.receive_window(frame))
            elif frame.type is FrameType.CLOSE:
                self.phase = Phase.CLOSED
                break
            else:
                # a late retransmission from Alice: answer it again
                self._answer_handshake(frame)
        return out
