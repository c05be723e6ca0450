"""Key-derived 4-bit sensing matrices and the mixed-signal encoder model.

Matrix entries are level codes ``k`` in [-7, 7] standing for ``k/8``.  The
hardware encoder digitizes each input sample at PGA gains 4, 5, 6 and 7
and builds every product ``(k/8) * x`` from those four codes with at most
one arithmetic right shift and a two's-complement negation:

    |k|   source   shift
     1     x4       >> 2
     2     x4       >> 1
     3     x6       >> 1
     4..7  x|k|     -

Contributions are summed per row in a saturating signed 16-bit accumulator.
One accumulator LSB equals 1/4096 of full scale, so ``y_hw ~= 4096 * Phi x``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .keystream import Keystream

VALID_M = (64, 96, 128)
CR_RANGE = (2, 16)
LEVELS = 7
ACC_MIN, ACC_MAX = -(2**15), 2**15 - 1
LSB_PER_UNIT = 4096
ADC_SCALE = 512
# Signed code range of the digitizer; covers 7 * x * 512 for x in [-1, 1).
ADC_MIN, ADC_MAX = -4096, 4095
GAINS = (4, 5, 6, 7)
DEFAULT_EPOCH_LENGTH = 256

# (gain, shift) per |k|; gain 0 means the entry contributes nothing.
_ROUTE = {0: (0, 0), 1: (4, 2), 2: (4, 1), 3: (6, 1), 4: (4, 0), 5: (5, 0), 6: (6, 0), 7: (7, 0)}


class ConfigError(ValueError):
    """Matrix dimensions outside the programmable range."""


def check_dims(M: int, N: int) -> int:
    if M not in VALID_M:
        raise ConfigError(f"M must be one of {VALID_M}, got {M}")
    if N % M:
        raise ConfigError(f"N={N} is not an integer multiple of M={M}")
    cr = N // M
    if not CR_RANGE[0] <= cr <= CR_RANGE[1]:
        raise ConfigError(f"compression ratio {cr} outside {CR_RANGE}")
    return cr


@dataclass(frozen=True, eq=False)
class SensingMatrix:
    codes: np.ndarray  # int8, shape (M, N)
    key_id: int = 0

    @property
    def M(self) -> int:
        return self.codes.shape[0]

    @property
    def N(self) -> int:
        return self.codes.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self.codes.astype(np.float64) / 8.0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SensingMatrix):
            return NotImplemented
        return self.key_id == other.key_id and np.array_equal(self.codes, other.codes)

    def dumps(self) -> str:
        """Text dump: ``PHI M N epoch`` then one line of codes per row."""
        lines = [f"PHI {self.M} {self.N} {self.key_id}"]
        lines.extend(" ".join(str(int(v)) for v in row) for row in self.codes)
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> SensingMatrix:
        rows = text.strip().splitlines()
        tag, m, n, epoch = rows[0].split()
        if tag != "PHI":
            raise ValueError("not a matrix dump")
        m, n = int(m), int(n)
        codes = np.array([[int(v) for v in r.split()] for r in rows[1:]], dtype=np.int8)
        if codes.shape != (m, n):
            raise ValueError(f"dump declares {m}x{n} but holds {codes.shape}")
        if np.abs(codes).max(initial=0) > LEVELS:
            raise ValueError("level code outside [-7, 7]")
        return cls(codes, int(epoch))


@dataclass(frozen=True, eq=False)
class WindowTransform:
    """Column permutation plus row sign flips for one window."""

    perm: np.ndarray  # int64, shape (N,)
    signs: np.ndarray  # int8 in {-1, +1}, shape (M,)
    window: int = 0
    epoch: int = 0

    def apply(self, phi: SensingMatrix) -> SensingMatrix:
        codes = phi.codes[:, self.perm] * self.signs[:, None]
        return SensingMatrix(codes.astype(np.int8), phi.key_id)

    def invert(self, phi: SensingMatrix) -> SensingMatrix:
        codes = np.empty_like(phi.codes)
        codes[:, self.perm] = phi.codes * self.signs[:, None]
        return SensingMatrix(codes, phi.key_id)


@dataclass
class Measurement:
    y: np.ndarray  # int16, shape (M,)
    saturation_count: int = 0
    window: int = field(default=0, compare=False)


def _round_half_away(v: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.floor(np.abs(v) + 0.5)


def quantize_levels(sums: np.ndarray) -> np.ndarray:
    """Map sums of 8 keystream bytes to level codes.

    ``q = 3*(S - 1020)``; level = round-half-away(q / 209) clamped to [-7, 7],
    evaluated in integers.
    """
    q = 3 * (sums.astype(np.int64) - 1020)
    mag = (2 * np.abs(q) + 209) // 418
    return np.clip(np.sign(q) * mag, -LEVELS, LEVELS).astype(np.int8)


def derive_matrix(shared_secret: bytes, epoch: int, M: int, N: int) -> SensingMatrix:
    check_dims(M, N)
    raw = Keystream(shared_secret, b"PHI", epoch).read(M * N * 8)
    sums = np.frombuffer(raw, dtype=np.uint8).reshape(M * N, 8).sum(axis=1, dtype=np.int64)
    return SensingMatrix(quantize_levels(sums).reshape(M, N), epoch)


def level_probabilities() -> dict[int, float]:
    """Exact level distribution induced by :func:`quantize_levels`."""
    # distribution of the sum of eight uniform bytes by repeated convolution
    byte = np.full(256, 1 / 256)
    dist = byte
    for _ in range(7):
        dist = np.convolve(dist, byte)
    levels = quantize_levels(np.arange(dist.size))
    return {k: float(dist[levels == k].sum()) for k in range(-LEVELS, LEVELS + 1)}


def derive_window_transform(
    shared_secret: bytes, epoch: int, window_index: int, M: int, N: int
) -> WindowTransform:
    check_dims(M, N)
    ks = Keystream(shared_secret, b"SHF", epoch, window_index)
    perm = np.arange(N, dtype=np.int64)
    for i in range(N - 1, 0, -1):
        j = ks.below(i + 1)
        perm[i], perm[j] = perm[j], perm[i]
    bits = np.unpackbits(np.frombuffer(ks.read(-(-M // 8)), dtype=np.uint8), bitorder="little")[:M]
    signs = (1 - 2 * bits.astype(np.int8)).astype(np.int8)
    return WindowTransform(perm, signs, window_index, epoch)


def effective_matrix(
    shared_secret: bytes, epoch: int, window_index: int, M: int, N: int,
    base: SensingMatrix | None = None,
) -> SensingMatrix:
    if base is None:
        base = derive_matrix(shared_secret, epoch, M, N)
    return derive_window_transform(shared_secret, epoch, window_index, M, N).apply(base)


def _check_window(x, phi: SensingMatrix) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (phi.N,):
        raise ValueError(f"window has shape {x.shape}, matrix expects ({phi.N},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("window contains non-finite samples")
    return x


def digitize(x: np.ndarray) -> dict[int, np.ndarray]:
    """Four ADC codes per sample, one per PGA gain."""
    return {
        g: np.clip(_round_half_away(g * x * ADC_SCALE), ADC_MIN, ADC_MAX).astype(np.int64)
        for g in GAINS
    }


def contributions(x: np.ndarray, phi: SensingMatrix) -> np.ndarray:
    """Per-entry digital products (M x N int64) as the DP would emit them."""
    d = digitize(x)
    # lookup[|k|] holds the shifted code for every sample
    lookup = np.zeros((LEVELS + 1, x.size), dtype=np.int64)
    for mag, (gain, shift) in _ROUTE.items():
        if gain:
            lookup[mag] = d[gain] >> shift
    k = phi.codes.astype(np.int64)
    c = lookup[np.abs(k), np.arange(x.size)[None, :]]
    return np.where(k < 0, -c, c)


def _saturating_sum(c: np.ndarray) -> tuple[np.ndarray, int]:
    partial = np.cumsum(c, axis=1)
    if partial.min(initial=0) >= ACC_MIN and partial.max(initial=0) <= ACC_MAX:
        return partial[:, -1] if c.shape[1] else np.zeros(c.shape[0], np.int64), 0
    acc = np.zeros(c.shape[0], dtype=np.int64)
    events = 0
    for i in range(c.shape[1]):
        acc += c[:, i]
        over = (acc > ACC_MAX) | (acc < ACC_MIN)
        events += int(over.sum())
        np.clip(acc, ACC_MIN, ACC_MAX, out=acc)
    return acc, events


def encode_window_hw(x, phi: SensingMatrix) -> Measurement:
    x = _check_window(x, phi)
    y, sat = _saturating_sum(contributions(x, phi))
    return Measurement(y.astype(np.int16), sat)


def encode_window_float(x, phi: SensingMatrix) -> np.ndarray:
    x = _check_window(x, phi)
    return phi.values @ x
