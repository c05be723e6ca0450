"""SHA-256 counter-mode keystreams.

Block ``i`` of a stream is ``SHA256(key || label || be64(f0) || ... || be64(i))``
where ``f0, ...`` are the integer context fields (epoch, window index, ...).
"""

from __future__ import annotations

import hashlib
import struct

BLOCK = 32


class Keystream:
    """Deterministic byte stream bound to a key, a 3-byte label and context."""

    def __init__(self, key: bytes, label: bytes, *fields: int):
        prefix = bytes(key) + bytes(label) + b"".join(struct.pack(">Q", f) for f in fields)
        self._base = hashlib.sha256(prefix)
        self._counter = 0
        self._buf = b""

    def _block(self, counter: int) -> bytes:
        h = self._base.copy()
        h.update(struct.pack(">Q", counter))
        return h.digest()

    def read(self, n: int) -> bytes:
        if n < 0:
            raise ValueError("negative read")
        need = n - len(self._buf)
        if need > 0:
            nblocks = -(-need // BLOCK)
            blocks = [self._block(c) for c in range(self._counter, self._counter + nblocks)]
            self._counter += nblocks
            self._buf += b"".join(blocks)
        out, self._buf = self._buf[:n], self._buf[n:]
        return out

    def uint32(self) -> int:
        return int.from_bytes(self.read(4), "big")

    def below(self, bound: int) -> int:
        """Uniform integer in [0, bound) by rejection on 32-bit words."""
        if not 0 < bound <= 2**32:
            raise ValueError("bound out of range")
        limit = 2**32 - (2**32 % bound)
        while True:
            v = self.uint32()
            if v < limit:
                return v % bound
