"""x-only scalar multiplication on Curve25519 and the ECDH built on it.

Two ladders are provided.  ``scalar_mult_original`` swaps the working
points whenever a scalar bit is set and records each swap in the trace; it
exists as a differential-testing oracle and as a deliberately leaky
specimen.  ``scalar_mult_ct`` dispatches every bit to one of two ladder
steps that perform the same field operations with the point roles routed
differently, and projects the starting coordinates by a fresh random factor.
"""

from __future__ import annotations

import secrets
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numba import njit

from . import field256 as F
from .field256 import FieldElement, OpTrace
from .keystream import Keystream

A24 = 121665
BASE_X = 9
TRACE_CAPACITY = 8192

_A24 = F.FieldElement.from_int(A24).limbs
_ONE = F.ONE.limbs
_ZERO = F.ZERO.limbs


class CurvePoint(NamedTuple):
    """Projective x-line point, affine x = X / Z."""

    X: FieldElement
    Z: FieldElement

    def affine(self) -> FieldElement:
        return F.freeze(F.mul(self.X, F.invert(self.Z)))


@dataclass(frozen=True)
class KeyPair:
    private: bytes
    public: bytes


@njit(cache=True)
def _step(x1, x2, z2, x3, z3, tmp, ws, tb, tc):
    """(x2:z2), (x3:z3) <- 2*(x2:z2), (x2:z2)+(x3:z3); x1 is the difference."""
    a, aa, b, bb, e, c, d, da, cb, t = (
        tmp[0], tmp[1], tmp[2], tmp[3], tmp[4], tmp[5], tmp[6], tmp[7], tmp[8], tmp[9]
    )
    F.fe_add(a, x2, z2, tb, tc)
    F.fe_sqr(aa, a, ws, tb, tc)
    F.fe_sub(b, x2, z2, tb, tc)
    F.fe_sqr(bb, b, ws, tb, tc)
    F.fe_sub(e, aa, bb, tb, tc)
    F.fe_add(c, x3, z3, tb, tc)
    F.fe_sub(d, x3, z3, tb, tc)
    F.fe_mul(da, d, a, ws, tb, tc)
    F.fe_mul(cb, c, b, ws, tb, tc)
    F.fe_add(t, da, cb, tb, tc)
    F.fe_sqr(x3, t, ws, tb, tc)
    F.fe_sub(t, da, cb, tb, tc)
    F.fe_sqr(t, t, ws, tb, tc)
    F.fe_mul(z3, x1, t, ws, tb, tc)
    F.fe_mul(x2, aa, bb, ws, tb, tc)
    F.fe_mul(t, _A24, e, ws, tb, tc)
    F.fe_add(t, aa, t, tb, tc)
    F.fe_mul(z2, e, t, ws, tb, tc)


@njit(cache=True)
def _ladderstep0(x1, px, pz, qx, qz, tmp, ws, tb, tc):
    _step(x1, px, pz, qx, qz, tmp, ws, tb, tc)


@njit(cache=True)
def _ladderstep1(x1, px, pz, qx, qz, tmp, ws, tb, tc):
    _step(x1, qx, qz, px, pz, tmp, ws, tb, tc)


@njit(cache=True)
def _swap(u, v, tb, tc):
    for i in range(8):
        t = u[i]
        u[i] = v[i]
        v[i] = t
    F._emit(tb, tc, 6)


@njit(cache=True)
def _to_affine(out, px, pz, tmp, ws, tb, tc):
    zi = tmp[0]
    F.fe_invert(zi, pz, ws, tb, tc)
    F.fe_mul(out, px, zi, ws, tb, tc)
    F.fe_freeze(out, out, tb, tc)


@njit(cache=True)
def _smult_ct(bits, x1, lam, out, tb, tc):
    tmp = np.zeros((10, 8), dtype=np.int64)
    ws = np.zeros(F.WS_SIZE, dtype=np.int64)
    px = np.empty(8, dtype=np.int64)
    pz = np.empty(8, dtype=np.int64)
    qx = np.empty(8, dtype=np.int64)
    qz = np.empty(8, dtype=np.int64)
    F.fe_mul(px, _ONE, lam, ws, tb, tc)
    F.fe_mul(pz, _ZERO, lam, ws, tb, tc)
    F.fe_mul(qx, x1, lam, ws, tb, tc)
    F.fe_mul(qz, _ONE, lam, ws, tb, tc)
    for i in range(254, -1, -1):
        if bits[i] == 0:
            _ladderstep0(x1, px, pz, qx, qz, tmp, ws, tb, tc)
        else:
            _ladderstep1(x1, px, pz, qx, qz, tmp, ws, tb, tc)
    _to_affine(out, px, pz, tmp, ws, tb, tc)


@njit(cache=True)
def _smult_original(bits, x1, out, tb, tc):
    tmp = np.zeros((10, 8), dtype=np.int64)
    ws = np.zeros(F.WS_SIZE, dtype=np.int64)
    px = _ONE.copy()
    pz = _ZERO.copy()
    qx = x1.copy()
    qz = _ONE.copy()
    for i in range(254, -1, -1):
        if bits[i] == 1:
            _swap(px, qx, tb, tc)
            _swap(pz, qz, tb, tc)
        _step(x1, px, pz, qx, qz, tmp, ws, tb, tc)
        if bits[i] == 1:
            _swap(px, qx, tb, tc)
            _swap(pz, qz, tb, tc)
    _to_affine(out, px, pz, tmp, ws, tb, tc)


def _bits(scalar: bytes) -> np.ndarray:
    if len(scalar) != 32:
        raise ValueError("scalar must be 32 bytes")
    return np.unpackbits(np.frombuffer(scalar, dtype=np.uint8), bitorder="little")


def clamp(scalar: bytes) -> bytes:
    """Clear bits 0-2 and 255, set bit 254."""
    k = bytearray(scalar)
    if len(k) != 32:
        raise ValueError("scalar must be 32 bytes")
    k[0] &= 248
    k[31] &= 127
    k[31] |= 64
    return bytes(k)


def decode_u(data: bytes) -> FieldElement:
    """Field element from a 32-byte u-coordinate; bit 255 is ignored."""
    if len(data) != 32:
        raise ValueError("u-coordinate must be 32 bytes")
    b = bytearray(data)
    b[31] &= 127
    return FieldElement.from_bytes(bytes(b))


def random_projection(rng: Keystream | None = None) -> FieldElement:
    """Nonzero field element from the system CSPRNG or a seeded keystream."""
    while True:
        raw = bytearray(rng.read(32) if rng is not None else secrets.token_bytes(32))
        raw[31] &= 127
        lam = FieldElement.from_bytes(bytes(raw))
        if not lam.is_zero():
            return lam


def _collect(out, tb, tc, trace: OpTrace | None) -> FieldElement:
    if trace is not None:
        trace.extend(tb[: min(tc[0], tb.shape[0])])
    return FieldElement._wrap(out)


def scalar_mult_ct(
    scalar: bytes,
    x_base: FieldElement,
    *,
    rng: Keystream | None = None,
    trace: OpTrace | None = None,
) -> FieldElement:
    """Affine x of scalar*P using the branch-balanced ladder (bits 254..0)."""
    lam = random_projection(rng)
    out = np.empty(8, dtype=np.int64)
    tb = np.zeros(TRACE_CAPACITY if trace is not None else 0, dtype=np.uint8)
    tc = np.zeros(1, dtype=np.int64)
    _smult_ct(_bits(scalar), x_base.limbs, lam.limbs, out, tb, tc)
    return _collect(out, tb, tc, trace)


def scalar_mult_original(
    scalar: bytes, x_base: FieldElement, *, trace: OpTrace | None = None
) -> FieldElement:
    """Affine x of scalar*P with bit-conditional swaps (not constant-trace)."""
    out = np.empty(8, dtype=np.int64)
    tb = np.zeros(TRACE_CAPACITY if trace is not None else 0, dtype=np.uint8)
    tc = np.zeros(1, dtype=np.int64)
    _smult_original(_bits(scalar), x_base.limbs, out, tb, tc)
    return _collect(out, tb, tc, trace)


def _step_wrapper(kernel, P: CurvePoint, Q: CurvePoint, x_base: FieldElement, trace):
    px, pz = P.X.limbs.copy(), P.Z.limbs.copy()
    qx, qz = Q.X.limbs.copy(), Q.Z.limbs.copy()
    tmp = np.zeros((10, 8), dtype=np.int64)
    ws = np.zeros(F.WS_SIZE, dtype=np.int64)
    tb = np.zeros(64, dtype=np.uint8)
    tc = np.zeros(1, dtype=np.int64)
    kernel(x_base.limbs, px, pz, qx, qz, tmp, ws, tb, tc)
    if trace is not None:
        trace.extend(tb[: tc[0]])
    W = FieldElement._wrap
    return CurvePoint(W(px), W(pz)), CurvePoint(W(qx), W(qz))


def ladderstep0(P: CurvePoint, Q: CurvePoint, x_base: FieldElement, trace: OpTrace | None = None):
    """Bit-0 step: returns (2P, P+Q)."""
    return _step_wrapper(_ladderstep0, P, Q, x_base, trace)


def ladderstep1(P: CurvePoint, Q: CurvePoint, x_base: FieldElement, trace: OpTrace | None = None):
    """Bit-1 step: returns (P+Q, 2Q)."""
    return _step_wrapper(_ladderstep1, P, Q, x_base, trace)


def x25519(k: bytes, u: bytes, *, rng: Keystream | None = None) -> bytes:
    """The X25519 function: clamp k, decode u, multiply, encode."""
    return scalar_mult_ct(clamp(k), decode_u(u), rng=rng).to_bytes()


BASE_POINT = BASE_X.to_bytes(32, "little")


def keypair_from_seed(seed: bytes, *, rng: Keystream | None = None) -> KeyPair:
    private = clamp(seed)
    return KeyPair(private=private, public=x25519(private, BASE_POINT, rng=rng))


def generate_keypair(rng: Keystream | None = None) -> KeyPair:
    seed = rng.read(32) if rng is not None else secrets.token_bytes(32)
    return keypair_from_seed(seed, rng=rng)


def shared_secret(mine: KeyPair, theirs_public: bytes, *, rng: Keystream | None = None) -> bytes:
    """ECDH output; all-zero means the peer sent a degenerate point."""
    return x25519(mine.private, theirs_public, rng=rng)
