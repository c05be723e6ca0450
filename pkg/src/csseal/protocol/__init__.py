"""Framed handshake and measurement streaming between Alice and Bob."""

from .frame import (
    BadCRC,
    BadLength,
    BadMagic,
    BadType,
    BadVersion,
    Frame,
    FrameError,
    FrameType,
    crc16,
    frame_decode,
    frame_encode,
)
from .loopback import LoopbackResult, connect, listen, run_alice, run_bob, run_loopback
from .session import (
    DOMAIN_ID,
    HandshakeError,
    Phase,
    ProtocolError,
    ReceivedWindow,
    Role,
    Session,
    SessionConfig,
)
from .transport import FaultyTransport, MemoryEndpoint, SocketTransport, Tap, TransportError, memory_pair

__all__ = [
    "BadCRC", "BadLength", "BadMagic", "BadType", "BadVersion", "DOMAIN_ID", "FaultyTransport",
    "Frame", "FrameError", "FrameType", "HandshakeError", "LoopbackResult", "MemoryEndpoint",
    "Phase", "ProtocolError", "ReceivedWindow", "Role", "Session", "SessionConfig",
    "SocketTransport", "Tap", "TransportError", "crc16", "frame_decode", "frame_encode",
    "connect", "listen", "memory_pair", "run_alice", "run_bob", "run_loopback",
]
