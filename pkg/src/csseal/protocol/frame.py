"""Wire frames: fixed 12-byte header, payload, CRC-16/CCITT-FALSE trailer.

    magic   u16  0xC5A1
    version u8   0x01
    type    u8   HELLO=1 PUBKEY=2 CONFIG=3 DATA=4 CLOSE=5
    epoch   u16
    seq     u32
    length  u16  payload bytes
    payload
    crc     u16  over every preceding byte

All multi-byte header fields and the CRC are big-endian.
"""

from __future__ import annotations

import binascii
import struct
from dataclasses import dataclass
from enum import IntEnum

MAGIC = 0xC5A1
VERSION = 0x01
HEADER = struct.Struct(">HBBHIH")
HEADER_SIZE = HEADER.size
CRC_SIZE = 2
MAX_PAYLOAD = 0xFFFF


class FrameType(IntEnum):
    HELLO = 1
    PUBKEY = 2
    CONFIG = 3
    DATA = 4
    CLOSE = 5


class FrameError(Exception):
    code = 0


class BadMagic(FrameError):
    code = 1


class BadVersion(FrameError):
    code = 2


class BadLength(FrameError):
    code = 3


class BadCRC(FrameError):
    code = 4


class BadType(FrameError):
    code = 5


def crc16(data: bytes) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021, init 0xFFFF, no reflection)."""
    return binascii.crc_hqx(data, 0xFFFF)


@dataclass(frozen=True)
class Frame:
    type: FrameType
    epoch: int = 0
    seq: int = 0
    payload: bytes = b""

    def encode(self) -> bytes:
        if len(self.payload) > MAX_PAYLOAD:
            raise BadLength(f"payload of {len(self.payload)} bytes does not fit a u16 length")
        head = HEADER.pack(MAGIC, VERSION, int(self.type), self.epoch, self.seq, len(self.payload))
        body = head + self.payload
        return body + struct.pack(">H", crc16(body))


def frame_encode(frame: Frame) -> bytes:
    return frame.encode()


def frame_size(header: bytes) -> int:
    """Total frame length announced by a header (checks magic and version)."""
    if len(header) < HEADER_SIZE:
        raise BadLength(f"header needs {HEADER_SIZE} bytes, got {len(header)}")
    magic, version, _, _, _, length = HEADER.unpack_from(header)
    if magic != MAGIC:
        raise BadMagic(f"magic 0x{magic:04X}")
    if version != VERSION:
        raise BadVersion(f"version {version}")
    return HEADER_SIZE + length + CRC_SIZE


def frame_decode(data: bytes) -> Frame:
    size = frame_size(data)
    if len(data) != size:
        raise BadLength(f"frame announces {size} bytes, got {len(data)}")
    (crc,) = struct.unpack(">H", data[-CRC_SIZE:])
    if crc16(data[:-CRC_SIZE]) != crc:
        raise BadCRC("checksum mismatch")
    _, _, ftype, epoch, seq, _ = HEADER.unpack_from(data)
    try:
        ftype = FrameType(ftype)
    except ValueError:
        raise BadType(f"frame type {ftype}") from None
    return Frame(ftype, epoch, seq, bytes(data[HEADER_SIZE:-CRC_SIZE]))
