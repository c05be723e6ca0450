"""PNG figures written next to the CSV/JSON reports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .attacks import HIST_EDGES, CoaReport, EnergyReport, TraceCheck  # noqa: E402

_META = {"Software": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_coa(report: CoaReport, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 3.6), layout="constrained")
    bob = [s.bob_rho for s in report.segments]
    eve = report.eve_values()
    ax.hist(eve, bins=HIST_EDGES, density=True, alpha=0.7, label=f"Eve ({eve.size} attempts)")
    ax.hist(bob, bins=HIST_EDGES, density=True, alpha=0.7, label=f"Bob ({len(bob)} segments)")
    ax.set_xlabel("correlation coefficient")
    ax.set_ylabel("density")
    ax.set_xlim(-1, 1)
    ax.legend(loc="upper left")
    return _save(fig, path)


def plot_energy(reports: Sequence[EnergyReport], path) -> Path:
    fig, axes = plt.subplots(1, len(reports), figsize=(4.2 * len(reports), 3.8), layout="constrained")
    axes = np.atleast_1d(axes)
    for ax, r in zip(axes, reports):
        if r.labels is None:
            ax.scatter(r.x_energy, r.y_energy, s=8)
        else:
            for flag, name in ((0, "normal"), (1, "event")):
                sel = r.labels == flag
                ax.scatter(r.x_energy[sel], r.y_energy[sel], s=8, label=name)
            ax.legend(loc="upper left")
        ax.set_title(f"{r.policy} key, r = {r.correlation:.3f}")
        ax.set_xlabel("input energy")
        ax.set_ylabel("measurement energy")
    return _save(fig, path)


def plot_reconstruction(x: np.ndarray, x_hat: np.ndarray, rho: Sequence[float], path, rate: float = 1000.0) -> Path:
    fig, (top, bottom) = plt.subplots(2, 1, figsize=(7.0, 5.0), layout="constrained")
    t = np.arange(x.size) / rate
    top.plot(t, x, lw=0.9, label="original")
    top.plot(t, x_hat, lw=0.9, alpha=0.8, label="reconstructed")
    top.set_xlabel("time (s)")
    top.legend(loc="upper right")
    bottom.plot(np.asarray(rho), marker=".", lw=0.6)
    bottom.set_xlabel("window")
    bottom.set_ylabel("correlation")
    bottom.set_ylim(min(0.0, float(np.min(rho))), 1.02)
    return _save(fig, path)


def plot_traces(check: TraceCheck, path) -> Path:
    fig, ax = plt.subplots(figsize=(6.4, 3.4), layout="constrained")
    ax.plot(check.ct.trace_lengths, lw=0.8, label="branch-balanced ladder")
    ax.plot(check.control.trace_lengths, lw=0.8, label="swap ladder")
    ax.set_xlabel("run")
    ax.set_ylabel("operations recorded")
    ax.legend(loc="lower right")
    return _save(fig, path)
