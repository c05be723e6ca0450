"""Synthetic test signals and the CSV / binary signal-file formats."""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from scipy import signal as sps
from scipy.fft import idct

TARGET_RMS = 0.1
DEFAULT_RATE = 1000.0
CACHE_MAGIC = b"CSS1"


def scale_windows(x: np.ndarray, N: int, rms: float = TARGET_RMS) -> np.ndarray:
    """Scale a stream so its loudest length-N window has the given RMS."""
    n_win = x.size // N
    if n_win == 0:
        raise ValueError(f"stream shorter than one window ({x.size} < {N})")
    w = x[: n_win * N].reshape(n_win, N)
    peak = float(np.sqrt((w**2).mean(axis=1)).max())
    return x if peak == 0.0 else x * (rms / peak)


def sparse_windows(N: int, windows: int, K: int = 8, seed: int = 0) -> np.ndarray:
    """Windows with exactly K nonzero orthonormal-DCT coefficients each."""
    rng = np.random.default_rng(seed)
    s = np.zeros((windows, N))
    for w in range(windows):
        support = rng.choice(N, size=K, replace=False)
        amp = rng.normal(size=K)
        amp += np.sign(amp) * 0.2  # keep every coefficient clearly nonzero
        s[w, support] = amp
    x = idct(s, type=2, norm="ortho", axis=1)
    rms = np.sqrt((x**2).mean(axis=1, keepdims=True))
    return (x * (TARGET_RMS / rms)).ravel()


def _powerlaw_noise(n: int, slope: float, rate: float, rng) -> np.ndarray:
    coef = np.fft.rfft(rng.normal(size=n))
    f = np.fft.rfftfreq(n, 1.0 / rate)
    f[0] = f[1]
    coef *= f ** (slope / 2.0)
    return np.fft.irfft(coef, n)


def _bandlimit(x: np.ndarray, rate: float, low: float = 0.5, high: float = 250.0) -> np.ndarray:
    sos = sps.butter(5, [low, min(high, 0.45 * rate)], btype="bandpass", fs=rate, output="sos")
    return sps.sosfiltfilt(sos, x)


def eeg_like(
    N: int,
    windows: int,
    seed: int = 0,
    rate: float = DEFAULT_RATE,
    slope: float = -1.75,
    rhythm_floor: float = 0.5,
) -> np.ndarray:
    """1/f-type background plus waxing and waning alpha/beta rhythms, 0.5-250 Hz.

    ``rhythm_floor`` keeps a baseline rhythm between bursts, as in resting EEG.
    """
    rng = np.random.default_rng(seed)
    n = N * windows
    pad = N  # filter transients fall outside the returned stream
    total = n + 2 * pad
    x = _powerlaw_noise(total, slope, rate, rng)
    x /= x.std()
    t = np.arange(total) / rate
    for freq, amp in ((10.0, 2.0), (20.0, 1.0)):
        env = _powerlaw_noise(total, -4.0, rate, rng)
        env = rhythm_floor + np.clip(env / env.std(), 0.0, None)
        x += amp * env * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    x = _bandlimit(x, rate)[pad : pad + n]
    return scale_windows(x, N)


def spectral_slope(x: np.ndarray, rate: float = DEFAULT_RATE, fmin: float = 1.0, fmax: float = 100.0) -> float:
    """Log-log slope of the Welch periodogram, fitted on log-spaced bins."""
    x = np.asarray(x, dtype=np.float64)
    f, p = sps.welch(x, fs=rate, nperseg=min(x.size, 2048))
    edges = np.logspace(np.log10(fmin), np.log10(fmax), 21)
    lf, lp = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (f >= lo) & (f < hi)
        if sel.any():
            lf.append(np.log10(f[sel].mean()))
            lp.append(np.log10(p[sel].mean()))
    if len(lf) < 3:
        raise ValueError("signal too short for a slope fit over the requested band")
    return float(np.polyfit(lf, lp, 1)[0])


def burst_windows(
    N: int, windows: int, seed: int = 0, rate: float = DEFAULT_RATE, event_fraction: float = 0.2
) -> tuple[np.ndarray, np.ndarray]:
    """EEG-like background with high-energy transients in labelled windows.

    Returns the stream and a per-window label array (1 = event window).
    """
    rng = np.random.default_rng(seed)
    x = eeg_like(N, windows, seed=seed + 1, rate=rate).reshape(windows, N).copy()
    labels = (rng.random(windows) < event_fraction).astype(np.int8)
    t = np.arange(N) / rate
    for w in np.flatnonzero(labels):
        f0 = rng.uniform(3.0, 8.0)
        center = rng.uniform(0.3, 0.7) * t[-1]
        width = rng.uniform(0.1, 0.25) * t[-1]
        env = np.exp(-0.5 * ((t - center) / width) ** 2)
        spikes = np.sign(np.sin(2 * np.pi * f0 * t)) * np.abs(np.sin(2 * np.pi * f0 * t)) ** 3
        x[w] += rng.uniform(4.0, 7.0) * x.std() * env * spikes
    stream = _bandlimit(x.ravel(), rate)
    return scale_windows(stream, N), labels


def amplitude_series(
    template: np.ndarray, windows: int, spread: float = 0.05, jitter: float = 0.03, seed: int = 0
) -> np.ndarray:
    """Windows sharing one waveform, energy varying in [1 - spread, 1 + spread].

    Each window also carries a small independent component (relative
    amplitude ``jitter``) so no two windows are identical.
    """
    rng = np.random.default_rng(seed)
    template = np.asarray(template, dtype=np.float64)
    out = np.empty((windows, template.size))
    for w in range(windows):
        energy = rng.uniform(1.0 - spread, 1.0 + spread)
        noise = rng.normal(size=template.size)
        noise *= jitter * np.linalg.norm(template) / np.linalg.norm(noise)
        out[w] = np.sqrt(energy) * (template + noise)
    return out


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------


def write_csv(path, samples: np.ndarray, rate: float | None = None) -> None:
    with open(path, "w") as fh:
        if rate is not None:
            fh.write(f"# rate={rate:g}\n")
        for v in samples:
            fh.write(f"{float(v):.9g}\n")


def read_csv(path) -> tuple[np.ndarray, float | None]:
    rate = None
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                if line[1:].strip().startswith("rate="):
                    rate = float(line[1:].strip()[5:])
                continue
            try:
                values.append(float(line))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
    x = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{path}: non-finite sample")
    return x, rate


def write_cache(path, samples: np.ndarray) -> None:
    data = np.asarray(samples, dtype="<f4")
    Path(path).write_bytes(CACHE_MAGIC + struct.pack("<I", data.size) + data.tobytes())


def read_cache(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != CACHE_MAGIC or len(raw) < 8:
        raise ValueError(f"{path}: not a signal cache file")
    (count,) = struct.unpack("<I", raw[4:8])
    if len(raw) != 8 + 4 * count:
        raise ValueError(f"{path}: truncated cache ({len(raw)} bytes for {count} samples)")
    return np.frombuffer(raw[8:], dtype="<f4").astype(np.float64)


def load_signal(path) -> tuple[np.ndarray, float | None]:
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == CACHE_MAGIC:
        return read_cache(path), None
    return read_csv(path)


def windows_of(x: np.ndarray, N: int) -> np.ndarray:
    n_win = x.size // N
    if n_win == 0:
        raise ValueError(f"signal has {x.size} samples, fewer than one window of {N}")
    return x[: n_win * N].reshape(n_win, N)
