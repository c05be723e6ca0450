"""Arithmetic in GF(2^255 - 19) on eight 32-bit limbs.

The heavy lifting lives in numba kernels that operate on ``int64`` arrays
of length 8 (one limb per slot, each limb below 2^32).  Every kernel takes
a trace buffer ``tb`` (uint8) and a cursor ``tc`` (int64[1]) and appends one
tag per field operation, so the x25519 ladder can be compiled end to end
while still emitting an operation trace.

Multiplication is a three-level Karatsuba (256 -> 128 -> 64 -> 32 bit
operands) with carry-corrected middle terms; the 32x32 -> 64 bit partial
products are formed explicitly in unsigned 64-bit registers.
"""

from __future__ import annotations

from enum import IntEnum
from typing import Iterable

import numpy as np
from numba import njit

P = 2**255 - 19
NLIMBS = 8
MASK32 = 0xFFFFFFFF

# 4p split into limbs; the ninth limb (value 1) is added as a carry-in.
_FOUR_P = np.array([(4 * P >> (32 * i)) & MASK32 for i in range(NLIMBS)], dtype=np.int64)
_P_LIMBS = np.array([(P >> (32 * i)) & MASK32 for i in range(NLIMBS)], dtype=np.int64)

# kara8 needs 45 words of scratch, sqr8 needs 37; product buffer follows.
WS_SIZE = 64
PROD_OFF = 48


class Op(IntEnum):
    ADD = 1
    SUB = 2
    MUL = 3
    SQR = 4
    FREEZE = 5
    SWAP = 6


class OpTrace:
    """Append-only record of field-operation tags."""

    def __init__(self, tags: Iterable[int] = ()):
        self._tags = bytearray(int(t) for t in tags)

    def append(self, op: Op) -> None:
        self._tags.append(int(op))

    def extend(self, tags) -> None:
        self._tags.extend(bytes(np.asarray(tags, dtype=np.uint8)))

    @property
    def tags(self) -> list[Op]:
        return [Op(t) for t in self._tags]

    def to_bytes(self) -> bytes:
        return bytes(self._tags)

    def count(self, op: Op) -> int:
        return self._tags.count(int(op))

    def __len__(self) -> int:
        return len(self._tags)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, OpTrace):
            return NotImplemented
        return self._tags == other._tags

    def __repr__(self) -> str:
        return f"OpTrace(len={len(self._tags)})"


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _emit(tb, tc, tag):
    i = tc[0]
    if i < tb.shape[0]:
        tb[i] = tag
    tc[0] = i + 1


@njit(cache=True)
def _mul1(a, ao, b, bo, out, oo, ws, wo):
    p = np.uint64(a[ao]) * np.uint64(b[bo])
    out[oo] = np.int64(p & np.uint64(0xFFFFFFFF))
    out[oo + 1] = np.int64(p >> np.uint64(32))


@njit(cache=True)
def _sqr1(a, ao, out, oo, ws, wo):
    p = np.uint64(a[ao]) * np.uint64(a[ao])
    out[oo] = np.int64(p & np.uint64(0xFFFFFFFF))
    out[oo + 1] = np.int64(p >> np.uint64(32))


def _make_kara(half, n):
    h = n // 2
    sa, sb, m, mid, child = 0, h, n, 2 * n, 3 * n + 1

    @njit(cache=True)
    def kara(a, ao, b, bo, out, oo, ws, wo):
        half(a, ao, b, bo, out, oo, ws, wo + child)
        half(a, ao + h, b, bo + h, out, oo + n, ws, wo + child)
        ca = 0
        cb = 0
        for i in range(h):
            t = a[ao + i] + a[ao + h + i] + ca
            ws[wo + sa + i] = t & 0xFFFFFFFF
            ca = t >> 32
            t = b[bo + i] + b[bo + h + i] + cb
            ws[wo + sb + i] = t & 0xFFFFFFFF
            cb = t >> 32
        half(ws, wo + sa, ws, wo + sb, ws, wo + m, ws, wo + child)
        for i in range(n):
            ws[wo + mid + i] = ws[wo + m + i] - out[oo + i] - out[oo + n + i]
        ws[wo + mid + n] = ca * cb
        for i in range(h):
            ws[wo + mid + h + i] += ca * ws[wo + sb + i] + cb * ws[wo + sa + i]
        c = 0
        for i in range(n + 1):
            t = out[oo + h + i] + ws[wo + mid + i] + c
            out[oo + h + i] = t & 0xFFFFFFFF
            c = t >> 32
        for i in range(n + 1, 2 * n - h):
            t = out[oo + h + i] + c
            out[oo + h + i] = t & 0xFFFFFFFF
            c = t >> 32

    return kara


def _make_sqr(half, n):
    h = n // 2
    sa, m, mid, child = 0, h, h + n, h + 2 * n + 1

    @njit(cache=True)
    def sqr(a, ao, out, oo, ws, wo):
        half(a, ao, out, oo, ws, wo + child)
        half(a, ao + h, out, oo + n, ws, wo + child)
        ca = 0
        for i in range(h):
            t = a[ao + i] + a[ao + h + i] + ca
            ws[wo + sa + i] = t & 0xFFFFFFFF
            ca = t >> 32
        half(ws, wo + sa, ws, wo + m, ws, wo + child)
        for i in range(n):
            ws[wo + mid + i] = ws[wo + m + i] - out[oo + i] - out[oo + n + i]
        ws[wo + mid + n] = ca
        for i in range(h):
            ws[wo + mid + h + i] += 2 * ca * ws[wo + sa + i]
        c = 0
        for i in range(n + 1):
            t = out[oo + h + i] + ws[wo + mid + i] + c
            out[oo + h + i] = t & 0xFFFFFFFF
            c = t >> 32
        for i in range(n + 1, 2 * n - h):
            t = out[oo + h + i] + c
            out[oo + h + i] = t & 0xFFFFFFFF
            c = t >> 32

    return sqr


_kara2 = _make_kara(_mul1, 2)
_kara4 = _make_kara(_kara2, 4)
_kara8 = _make_kara(_kara4, 8)
_sqr2 = _make_sqr(_sqr1, 2)
_sqr4 = _make_sqr(_sqr2, 4)
_sqr8 = _make_sqr(_sqr4, 8)


@njit(cache=True)
def _carry_fold(r, top):
    """Normalize 8 signed columns (plus a carry-in at 2^256) below 2^256."""
    c = 0
    for i in range(8):
        t = r[i] + c
        r[i] = t & 0xFFFFFFFF
        c = t >> 32
    r[0] += 38 * (c + top)
    c = 0
    for i in range(8):
        t = r[i] + c
        r[i] = t & 0xFFFFFFFF
        c = t >> 32
    # the second fold leaves a low part far below 2^32 - 38
    r[0] += 38 * c


@njit(cache=True)
def _reduce(out, ws):
    for i in range(8):
        out[i] = ws[PROD_OFF + i] + 38 * ws[PROD_OFF + 8 + i]
    _carry_fold(out, 0)


@njit(cache=True)
def fe_add(out, a, b, tb, tc):
    for i in range(8):
        out[i] = a[i] + b[i]
    _carry_fold(out, 0)
    _emit(tb, tc, 1)


@njit(cache=True)
def fe_sub(out, a, b, tb, tc):
    for i in range(8):
        out[i] = a[i] - b[i] + _FOUR_P[i]
    _carry_fold(out, 1)
    _emit(tb, tc, 2)


@njit(cache=True)
def fe_mul(out, a, b, ws, tb, tc):
    _kara8(a, 0, b, 0, ws, PROD_OFF, ws, 0)
    _reduce(out, ws)
    _emit(tb, tc, 3)


@njit(cache=True)
def fe_sqr(out, a, ws, tb, tc):
    _sqr8(a, 0, ws, PROD_OFF, ws, 0)
    _reduce(out, ws)
    _emit(tb, tc, 4)


@njit(cache=True)
def _csub_p(r):
    """r <- r - p if r >= p, by masked select."""
    t0 = np.empty(8, dtype=np.int64)
    c = 0
    for i in range(8):
        t = r[i] - _P_LIMBS[i] + c
        t0[i] = t & 0xFFFFFFFF
        c = t >> 32
    # c is -1 on borrow (keep r) and 0 otherwise (take t0)
    for i in range(8):
        r[i] = t0[i] ^ ((t0[i] ^ r[i]) & c)


@njit(cache=True)
def fe_freeze(out, a, tb, tc):
    for i in range(8):
        out[i] = a[i]
    _csub_p(out)
    _csub_p(out)
    _emit(tb, tc, 5)


@njit(cache=True)
def _sqr_n(r, n, ws, tb, tc):
    for _ in range(n):
        fe_sqr(r, r, ws, tb, tc)


@njit(cache=True)
def fe_invert(out, z, ws, tb, tc):
    """z^(p-2) by the fixed 254-squaring, 11-multiplication chain."""
    z2 = np.empty(8, dtype=np.int64)
    z9 = np.empty(8, dtype=np.int64)
    z11 = np.empty(8, dtype=np.int64)
    z2_5 = np.empty(8, dtype=np.int64)
    z2_10 = np.empty(8, dtype=np.int64)
    z2_20 = np.empty(8, dtype=np.int64)
    z2_50 = np.empty(8, dtype=np.int64)
    z2_100 = np.empty(8, dtype=np.int64)
    t = np.empty(8, dtype=np.int64)

    fe_sqr(z2, z, ws, tb, tc)
    fe_sqr(t, z2, ws, tb, tc)
    fe_sqr(t, t, ws, tb, tc)
    fe_mul(z9, t, z, ws, tb, tc)
    fe_mul(z11, z9, z2, ws, tb, tc)
    fe_sqr(t, z11, ws, tb, tc)
    fe_mul(z2_5, t, z9, ws, tb, tc)
    fe_sqr(t, z2_5, ws, tb, tc)
    _sqr_n(t, 4, ws, tb, tc)
    fe_mul(z2_10, t, z2_5, ws, tb, tc)
    fe_sqr(t, z2_10, ws, tb, tc)
    _sqr_n(t, 9, ws, tb, tc)
    fe_mul(z2_20, t, z2_10, ws, tb, tc)
    fe_sqr(t, z2_20, ws, tb, tc)
    _sqr_n(t, 19, ws, tb, tc)
    fe_mul(t, t, z2_20, ws, tb, tc)
    _sqr_n(t, 10, ws, tb, tc)
    fe_mul(z2_50, t, z2_10, ws, tb, tc)
    fe_sqr(t, z2_50, ws, tb, tc)
    _sqr_n(t, 49, ws, tb, tc)
    fe_mul(z2_100, t, z2_50, ws, tb, tc)
    fe_sqr(t, z2_100, ws, tb, tc)
    _sqr_n(t, 99, ws, tb, tc)
    fe_mul(t, t, z2_100, ws, tb, tc)
    _sqr_n(t, 50, ws, tb, tc)
    fe_mul(t, t, z2_50, ws, tb, tc)
    _sqr_n(t, 5, ws, tb, tc)
    fe_mul(out, t, z11, ws, tb, tc)


# ---------------------------------------------------------------------------
# Python-facing value type
# ---------------------------------------------------------------------------


class FieldElement:
    """An element of GF(p) held as eight little-endian 32-bit limbs.

    The limbs may encode any value below 2^256 (unfrozen form).  Equality
    compares residues mod p.
    """

    __slots__ = ("limbs",)

    def __init__(self, limbs):
        arr = np.asarray(limbs, dtype=np.int64)
        if arr.shape != (NLIMBS,):
            raise ValueError("a field element has exactly 8 limbs")
        if arr.min() < 0 or arr.max() > MASK32:
            raise ValueError("limbs must be 32-bit unsigned")
        self.limbs = arr

    @classmethod
    def _wrap(cls, arr) -> FieldElement:
        fe = object.__new__(cls)
        fe.limbs = arr
        return fe

    @classmethod
    def from_int(cls, v: int) -> FieldElement:
        if not 0 <= v < 2**256:
            v %= P
        return cls._wrap(np.frombuffer(v.to_bytes(32, "little"), dtype="<u4").astype(np.int64))

    @classmethod
    def from_bytes(cls, data: bytes) -> FieldElement:
        if len(data) != 32:
            raise ValueError("expected 32 bytes")
        return cls._wrap(np.frombuffer(data, dtype="<u4").astype(np.int64))

    @property
    def value(self) -> int:
        """Integer encoded by the limbs, not reduced."""
        return int.from_bytes(self.limbs.astype("<u4").tobytes(), "little")

    def __int__(self) -> int:
        return self.value % P

    def to_bytes(self) -> bytes:
        """32-byte little-endian encoding of the frozen value."""
        return freeze(self).limbs.astype("<u4").tobytes()

    def is_zero(self) -> bool:
        return int(self) == 0

    def __eq__(self, other: object) -> bool:
        if isinstance(other, int):
            return int(self) == other % P
        if not isinstance(other, FieldElement):
            return NotImplemented
        return int(self) == int(other)

    def __hash__(self) -> int:
        return hash(int(self))

    def __repr__(self) -> str:
        return f"FieldElement({hex(self.value)})"


def _buffers(n_tags: int):
    return np.zeros(n_tags, dtype=np.uint8), np.zeros(1, dtype=np.int64)


def _finish(out, tb, tc, trace):
    if trace is not None:
        trace.extend(tb[: tc[0]])
    return FieldElement._wrap(out)


def add(a: FieldElement, b: FieldElement, trace: OpTrace | None = None) -> FieldElement:
    out = np.empty(NLIMBS, dtype=np.int64)
    tb, tc = _buffers(1)
    fe_add(out, a.limbs, b.limbs, tb, tc)
    return _finish(out, tb, tc, trace)


def sub(a: FieldElement, b: FieldElement, trace: OpTrace | None = None) -> FieldElement:
    out = np.empty(NLIMBS, dtype=np.int64)
    tb, tc = _buffers(1)
    fe_sub(out, a.limbs, b.limbs, tb, tc)
    return _finish(out, tb, tc, trace)


def mul(a: FieldElement, b: FieldElement, trace: OpTrace | None = None) -> FieldElement:
    out = np.empty(NLIMBS, dtype=np.int64)
    ws = np.zeros(WS_SIZE, dtype=np.int64)
    tb, tc = _buffers(1)
    fe_mul(out, a.limbs, b.limbs, ws, tb, tc)
    return _finish(out, tb, tc, trace)


def square(a: FieldElement, trace: OpTrace | None = None) -> FieldElement:
    out = np.empty(NLIMBS, dtype=np.int64)
    ws = np.zeros(WS_SIZE, dtype=np.int64)
    tb, tc = _buffers(1)
    fe_sqr(out, a.limbs, ws, tb, tc)
    return _finish(out, tb, tc, trace)


def freeze(a: FieldElement, trace: OpTrace | None = None) -> FieldElement:
    out = np.empty(NLIMBS, dtype=np.int64)
    tb, tc = _buffers(1)
    fe_freeze(out, a.limbs, tb, tc)
    return _finish(out, tb, tc, trace)


def invert(a: FieldElement, trace: OpTrace | None = None) -> FieldElement:
    """Multiplicative inverse; maps 0 to 0 without branching."""
    out = np.empty(NLIMBS, dtype=np.int64)
    ws = np.zeros(WS_SIZE, dtype=np.int64)
    tb, tc = _buffers(300)
    fe_invert(out, a.limbs, ws, tb, tc)
    return _finish(out, tb, tc, trace)


ZERO = FieldElement.from_int(0)
ONE = FieldElement.from_int(1)
