"""Security evaluation harnesses.

* ciphertext-only campaigns: Eve reconstructs captured measurements with
  matrices derived from random secrets;
* energy leakage: does ||y||^2 track ||x||^2 under a fixed or shuffled key;
* constant-trace check of the scalar multiplication.

Reports serialize to CSV (one row per observation) and a JSON summary.  The
outputs contain no timestamps, so equal seeds give byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import cs_codec, x25519
from .cs_codec import DEFAULT_EPOCH_LENGTH, SensingMatrix
from .field256 import OpTrace
from .keystream import Keystream
from .reconstruct import (
    SolverConfig,
    SparseBasis,
    UndefinedCorrelation,
    matrix_lipschitz,
    pearson_rho,
    reconstruct_measurement,
)

HIST_BIN_WIDTH = 0.02
HIST_EDGES = np.linspace(-1.0, 1.0, int(round(2.0 / HIST_BIN_WIDTH)) + 1)


def histogram(values: Sequence[float]) -> list[int]:
    """Counts over [-1, 1] in bins of 0.02 (the last bin includes +1)."""
    counts, _ = np.histogram(np.clip(np.asarray(values, float), -1.0, 1.0), bins=HIST_EDGES)
    return [int(c) for c in counts]


def _dump_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=True) + "\n")


# ---------------------------------------------------------------------------
# ciphertext-only attack
# ---------------------------------------------------------------------------


class _KeySchedule:
    """Effective matrices for one secret, base matrices cached per epoch."""

    def __init__(self, secret: bytes, M: int, N: int, epoch_length: int):
        self.secret = secret
        self.M, self.N, self.E = M, N, epoch_length
        self._epochs: dict[int, tuple[SensingMatrix, float]] = {}

    def base(self, epoch: int) -> tuple[SensingMatrix, float]:
        if epoch not in self._epochs:
            phi = cs_codec.derive_matrix(self.secret, epoch, self.M, self.N)
            self._epochs[epoch] = (phi, matrix_lipschitz(phi))
        return self._epochs[epoch]

    def window(self, seq: int) -> tuple[SensingMatrix, float]:
        epoch = seq // self.E
        phi, L = self.base(epoch)
        t = cs_codec.derive_window_transform(self.secret, epoch, seq, self.M, self.N)
        return t.apply(phi), L


@dataclass
class CoaSegment:
    index: int
    bob_rho: float
    eve_rho: list[float]

    @property
    def eve_best(self) -> float:
        return max(self.eve_rho)

    @property
    def delta(self) -> float:
        return self.bob_rho - self.eve_best


@dataclass
class CoaReport:
    attempts: int
    seed: int
    M: int
    N: int
    segments: list[CoaSegment] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def eve_values(self) -> np.ndarray:
        return np.array([r for s in self.segments for r in s.eve_rho], dtype=np.float64)

    @property
    def bob_mean_rho(self) -> float:
        return float(np.mean([s.bob_rho for s in self.segments]))

    @property
    def eve_mean_rho(self) -> float:
        return float(self.eve_values().mean())

    @property
    def eve_mean_abs_rho(self) -> float:
        return float(np.abs(self.eve_values()).mean())

    @property
    def eve_max_rho(self) -> float:
        return float(self.eve_values().max())

    @property
    def eve_max_abs_rho(self) -> float:
        return float(np.abs(self.eve_values()).max())

    def summary(self) -> dict:
        eve = self.eve_values()
        bob = [s.bob_rho for s in self.segments]
        return {
            "attempts_per_segment": self.attempts,
            "segments": len(self.segments),
            "seed": self.seed,
            "M": self.M,
            "N": self.N,
            "bob_mean_rho": self.bob_mean_rho,
            "eve_mean_rho": self.eve_mean_rho,
            "eve_mean_abs_rho": self.eve_mean_abs_rho,
            "eve_max_rho": self.eve_max_rho,
            "eve_max_abs_rho": self.eve_max_abs_rho,
            "eve_samples": int(eve.size),
            "histogram_bin_width": HIST_BIN_WIDTH,
            "bob_histogram": histogram(bob),
            "eve_histogram": histogram(eve),
            "notes": self.notes,
        }

    def write(self, out_dir, stem: str = "coa") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["segment", "party", "attempt", "rho"])
            for s in self.segments:
                w.writerow([s.index, "bob", "", repr(s.bob_rho)])
                for a, r in enumerate(s.eve_rho):
                    w.writerow([s.index, "eve", a, repr(r)])
        with open(out / f"{stem}_segments.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["segment", "bob_rho", "eve_best_rho", "delta_rho"])
            for s in self.segments:
                w.writerow([s.index, repr(s.bob_rho), repr(s.eve_best), repr(s.delta)])
        _dump_json(json_path, self.summary())
        return csv_path, json_path


def eve_secrets(rng_seed: int, count: int) -> list[bytes]:
    ks = Keystream(int(rng_seed).to_bytes(8, "big"), b"EVE")
    return [ks.read(32) for _ in range(count)]


def run_coa(
    segments: np.ndarray,
    true_secret: bytes,
    R: int,
    rng_seed: int,
    *,
    M: int = 128,
    epoch_length: int = DEFAULT_EPOCH_LENGTH,
    basis: str = "dct",
    solver: SolverConfig = SolverConfig(),
    secrets: Sequence[bytes] | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> CoaReport:
    """Ciphertext-only campaign.

    Segment ``i`` is sent as window ``i`` of a session keyed by
    ``true_secret``.  Eve knows the derivation and the cleartext counters and
    tries ``R`` guessed secrets (``secrets``, or random ones from
    ``rng_seed``), each used as a session key for the whole campaign.
    """
    segments = np.asarray(segments, dtype=np.float64)
    if segments.ndim != 2:
        raise ValueError("segments must be a 2-D array (segment, sample)")
    if R < 1:
        raise ValueError("R must be >= 1")
    N = segments.shape[1]
    cs_codec.check_dims(M, N)
    guesses = list(secrets) if secrets is not None else eve_secrets(rng_seed, R)
    if len(guesses) != R:
        raise ValueError(f"{len(guesses)} secrets supplied for R={R}")
    psi = SparseBasis(basis, N)
    bob = _KeySchedule(true_secret, M, N, epoch_length)
    eves = [_KeySchedule(s, M, N, epoch_length) for s in guesses]

    def attempt(sched: _KeySchedule, y, seq: int, x) -> float:
        phi, L = sched.window(seq)
        # the same solver object and basis for Bob and Eve: only the key differs
        return pearson_rho(x, reconstruct_measurement(y, phi, psi, solver, L=L).x_hat)

    report = CoaReport(R, rng_seed, M, N)
    for i, x in enumerate(segments):
        if np.ptp(x) == 0.0:
            report.notes.append(f"segment {i} skipped: zero variance")
            continue
        phi, _ = bob.window(i)
        m = cs_codec.encode_window_hw(x, phi)
        if m.saturation_count:
            report.notes.append(f"segment {i}: {m.saturation_count} saturation events")
        try:
            bob_rho = attempt(bob, m.y, i, x)
            eve_rho = [attempt(e, m.y, i, x) for e in eves]
        except UndefinedCorrelation:
            report.notes.append(f"segment {i} skipped: constant reconstruction")
            continue
        report.segments.append(CoaSegment(i, bob_rho, eve_rho))
        if progress is not None:
            progress(i + 1, len(segments))
    return report


# ---------------------------------------------------------------------------
# energy leakage
# ---------------------------------------------------------------------------


@dataclass
class EnergyReport:
    policy: str
    x_energy: np.ndarray
    y_energy: np.ndarray
    labels: np.ndarray | None = None

    @property
    def correlation(self) -> float:
        if np.ptp(self.x_energy) == 0.0 or np.ptp(self.y_energy) == 0.0:
            return math.nan
        return float(np.corrcoef(self.x_energy, self.y_energy)[0, 1])

    def summary(self) -> dict:
        return {
            "policy": self.policy,
            "segments": int(self.x_energy.size),
            "correlation": self.correlation,
        }


def run_energy_leakage(
    segments: np.ndarray,
    secret: bytes,
    policy: str,
    *,
    M: int = 128,
    epoch_length: int = DEFAULT_EPOCH_LENGTH,
    labels: np.ndarray | None = None,
) -> EnergyReport:
    """Energy pairs (||x||^2, ||Phi x||^2) per segment.

    ``fixed`` encodes every segment with the epoch-0 base matrix; ``shuffled``
    uses the per-window effective matrix of a normal session.
    """
    if policy not in ("fixed", "shuffled"):
        raise ValueError(f"unknown policy {policy!r}")
    segments = np.asarray(segments, dtype=np.float64)
    n, N = segments.shape
    sched = _KeySchedule(secret, M, N, epoch_length)
    xe = np.empty(n)
    ye = np.empty(n)
    for i, x in enumerate(segments):
        phi = sched.base(0)[0] if policy == "fixed" else sched.window(i)[0]
        y = cs_codec.encode_window_float(x, phi)
        xe[i] = float(x @ x)
        ye[i] = float(y @ y)
    if labels is not None:
        labels = np.asarray(labels)
        if labels.shape != (n,):
            raise ValueError("one label per segment required")
    return EnergyReport(policy, xe, ye, labels)


def write_energy_reports(reports: Sequence[EnergyReport], out_dir, stem: str = "energy"):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["policy", "segment", "label", "x_energy", "y_energy"])
        for r in reports:
            for i, (a, b) in enumerate(zip(r.x_energy, r.y_energy)):
                label = "" if r.labels is None else ("event" if r.labels[i] else "normal")
                w.writerow([r.policy, i, label, repr(float(a)), repr(float(b))])
    _dump_json(json_path, {r.policy: r.summary() for r in reports})
    return csv_path, json_path


# ---------------------------------------------------------------------------
# constant-trace check
# ---------------------------------------------------------------------------

ScalarMult = Callable[..., object]


@dataclass
class TraceReport:
    runs: int
    trace_lengths: list[int]
    all_equal: bool
    first_divergence: int | None = None
    divergent_run: int | None = None

    def summary(self) -> dict:
        return {
            "runs": self.runs,
            "all_equal": self.all_equal,
            "trace_length_min": min(self.trace_lengths),
            "trace_length_max": max(self.trace_lengths),
            "first_divergence": self.first_divergence,
            "divergent_run": self.divergent_run,
        }


def _first_difference(a: bytes, b: bytes) -> int:
    for i, (u, v) in enumerate(zip(a, b)):
        if u != v:
            return i
    return min(len(a), len(b))


def compare_traces(traces: Sequence[bytes]) -> TraceReport:
    ref = traces[0]
    report = TraceReport(len(traces), [len(t) for t in traces], True)
    for k, t in enumerate(traces[1:], 1):
        if t != ref:
            report.all_equal = False
            report.first_divergence = _first_difference(ref, t)
            report.divergent_run = k
            break
    return report


def trace_inputs(runs: int, rng_seed: int) -> list[tuple[bytes, bytes]]:
    """(scalar, u) pairs: the two extreme-weight scalars first, then random clamped ones."""
    ks = Keystream(int(rng_seed).to_bytes(8, "big"), b"TRC")
    extremes = [(8).to_bytes(32, "little"), (1 << 254).to_bytes(32, "little")]
    pairs = []
    for i in range(runs):
        scalar = extremes[i] if i < 2 else x25519.clamp(ks.read(32))
        pairs.append((scalar, ks.read(32)))
    return pairs


def collect_traces(smult: ScalarMult, pairs, **kwargs) -> list[bytes]:
    out = []
    for scalar, u in pairs:
        trace = OpTrace()
        smult(scalar, x25519.decode_u(u), trace=trace, **kwargs)
        out.append(trace.to_bytes())
    return out


@dataclass
class TraceCheck:
    ct: TraceReport
    control: TraceReport

    def summary(self) -> dict:
        return {"scalar_mult_ct": self.ct.summary(), "scalar_mult_original": self.control.summary()}

    def write(self, out_dir, stem: str = "timing") -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path, json_path = out / f"{stem}.csv", out / f"{stem}.json"
        with open(csv_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["run", "ct_trace_length", "original_trace_length"])
            for k, (a, b) in enumerate(zip(self.ct.trace_lengths, self.control.trace_lengths)):
                w.writerow([k, a, b])
        _dump_json(json_path, {"all_equal": self.ct.all_equal, **self.summary()})
        return csv_path, json_path


def run_trace_check(
    runs: int, rng_seed: int, *, smult: ScalarMult = x25519.scalar_mult_ct, control_runs: int | None = None
) -> TraceCheck:
    """Trace-equality over ``runs`` inputs, plus the swap ladder as a positive control."""
    if runs < 2:
        raise ValueError("runs must be >= 2")
    pairs = trace_inputs(runs, rng_seed)
    rng = Keystream(int(rng_seed).to_bytes(8, "big"), b"LAM")
    kwargs = {"rng": rng} if smult is x25519.scalar_mult_ct else {}
    ct = compare_traces(collect_traces(smult, pairs, **kwargs))
    control_pairs = pairs[: control_runs or min(runs, 100)]
    control = compare_traces(collect_traces(x25519.scalar_mult_original, control_pairs))
    return TraceCheck(ct, control)
