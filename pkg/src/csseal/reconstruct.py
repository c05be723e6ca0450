"""l1 reconstruction (accelerated proximal gradient) and quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct, idct

from .cs_codec import LSB_PER_UNIT, SensingMatrix

POWER_ITERS = 50
# margin over the power-iteration estimate, which approaches ||A||^2 from below
LIPSCHITZ_MARGIN = 1.05


class UndefinedCorrelation(ValueError):
    """Pearson correlation of a constant vector."""


@dataclass(frozen=True)
class SparseBasis:
    kind: str  # "dct" | "identity"
    N: int

    def __post_init__(self):
        if self.kind not in ("dct", "identity"):
            raise ValueError(f"unknown basis {self.kind!r}")

    def analyze(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "dct":
            return dct(x, type=2, norm="ortho", axis=-1)
        return np.array(x, dtype=np.float64)

    def synthesize(self, s: np.ndarray) -> np.ndarray:
        if self.kind == "dct":
            return idct(s, type=2, norm="ortho", axis=-1)
        return np.array(s, dtype=np.float64)

    def sensing_operator(self, phi: SensingMatrix | np.ndarray) -> np.ndarray:
        """Dense ``Phi @ Psi^-1`` (rows of Phi analyzed by the basis)."""
        values = phi.values if isinstance(phi, SensingMatrix) else np.asarray(phi, float)
        return self.analyze(values)


@dataclass(frozen=True)
class SolverConfig:
    lam_scale: float = 0.01
    max_iter: int = 500
    tol: float = 1e-6
    restart: bool = True


@dataclass
class ReconstructionResult:
    x_hat: np.ndarray
    s: np.ndarray
    iterations: int
    objective: float
    converged: bool
    history: list[float] = field(default_factory=list, repr=False)


def lipschitz(A: np.ndarray, iters: int = POWER_ITERS) -> float:
    """Estimate ||A||_2^2 by power iteration on A^T A from a fixed start."""
    v = np.ones(A.shape[1]) / math.sqrt(A.shape[1])
    est = 0.0
    for _ in range(iters):
        w = A.T @ (A @ v)
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def _soft(v: np.ndarray, t: float) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def solve_bpdn(
    y,
    phi: SensingMatrix | np.ndarray,
    basis: SparseBasis,
    lam: float | None = None,
    max_iter: int = 500,
    tol: float = 1e-6,
    *,
    s0: np.ndarray | None = None,
    restart: bool = True,
    A: np.ndarray | None = None,
    L: float | None = None,
) -> ReconstructionResult:
    """Minimize ``lam*||s||_1 + 0.5*||y - Phi Psi^-1 s||^2`` by FISTA.

    With ``restart`` on, any iterate that raises the objective is discarded
    and replaced by a plain proximal step from the previous point, with the
    momentum reset, so the recorded objective never increases.

    ``A`` (the dense sensing operator) and ``L`` (Lipschitz constant of the
    gradient) may be passed in to skip recomputing them.
    """
    y = np.asarray(y, dtype=np.float64)
    if A is None:
        A = basis.sensing_operator(phi)
    if y.shape != (A.shape[0],):
        raise ValueError(f"measurement has shape {y.shape}, expected ({A.shape[0]},)")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(A))):
        raise ValueError("non-finite input")
    N = A.shape[1]
    if lam is None:
        lam = SolverConfig.lam_scale * float(np.max(np.abs(A.T @ y), initial=0.0))
    if lam < 0 or not math.isfinite(lam):
        raise ValueError("lam must be a finite non-negative number")

    s = np.zeros(N) if s0 is None else np.array(s0, dtype=np.float64)
    As = A @ s

    def objective(v, Av):
        r = Av - y
        return lam * float(np.abs(v).sum()) + 0.5 * float(r @ r)

    if L is None:
        L = lipschitz(A) * LIPSCHITZ_MARGIN
    if L == 0.0:
        f = objective(s, As)
        return ReconstructionResult(basis.synthesize(s), s, 0, f, True, [f])
    step = 1.0 / L

    def prox_step(v, Av):
        return _soft(v - step * (A.T @ (Av - y)), lam * step)

    f = objective(s, As)
    history = [f]
    # optimality check: a fixed point of the proximal map is a minimizer
    first = prox_step(s, As)
    if np.max(np.abs(first - s), initial=0.0) <= tol * max(1.0, np.max(np.abs(s), initial=0.0)):
        return ReconstructionResult(basis.synthesize(s), s, 0, f, True, history)

    z, Az = s.copy(), As.copy()
    t = 1.0
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        s_new = prox_step(z, Az)
        As_new = A @ s_new
        f_new = objective(s_new, As_new)
        if restart and f_new > f:
            s_new = prox_step(s, As)
            As_new = A @ s_new
            f_new = objective(s_new, As_new)
            t = 1.0
            z, Az = s_new.copy(), As_new.copy()
        else:
            t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            beta = (t - 1.0) / t_new
            z = s_new + beta * (s_new - s)
            Az = As_new + beta * (As_new - As)
            t = t_new
        rel = abs(f - f_new) / max(abs(f), 1e-300)
        s, As, f = s_new, As_new, f_new
        history.append(f)
        if rel < tol:
            converged = True
            break
    return ReconstructionResult(basis.synthesize(s), s, it, f, converged, history)


def reconstruct_measurement(
    y_codes,
    phi: SensingMatrix,
    basis: SparseBasis,
    config: SolverConfig = SolverConfig(),
    L: float | None = None,
) -> ReconstructionResult:
    """Solve from raw accumulator codes (LSB = 1/4096 full scale).

    Column permutations and row sign flips leave the singular values of a
    matrix unchanged, so callers may pass the ``L`` of the base matrix.
    """
    y = np.asarray(y_codes, dtype=np.float64) / LSB_PER_UNIT
    A = basis.sensing_operator(phi)
    lam = config.lam_scale * float(np.max(np.abs(A.T @ y), initial=0.0))
    return solve_bpdn(
        y, phi, basis, lam, config.max_iter, config.tol, restart=config.restart, A=A, L=L
    )


def matrix_lipschitz(phi: SensingMatrix) -> float:
    """Step-size constant shared by every shuffle of ``phi`` (any orthonormal basis)."""
    return lipschitz(phi.values) * LIPSCHITZ_MARGIN


def pearson_rho(x, x_hat) -> float:
    """Pearson correlation in the N*sum(xy) - sum(x)sum(y) form."""
    x = np.asarray(x, dtype=np.float64)
    xh = np.asarray(x_hat, dtype=np.float64)
    if x.shape != xh.shape or x.ndim != 1 or x.size < 2:
        raise ValueError("pearson_rho needs two vectors of equal length >= 2")
    n = x.size
    num = n * float(x @ xh) - float(x.sum()) * float(xh.sum())
    vx = n * float(x @ x) - float(x.sum()) ** 2
    vy = n * float(xh @ xh) - float(xh.sum()) ** 2
    if vx <= 0.0 or vy <= 0.0:
        raise UndefinedCorrelation("zero-variance input")
    return max(-1.0, min(1.0, num / math.sqrt(vx * vy)))


def psnr(x, x_hat) -> float:
    """20*log10(range(x) / RMSE) in dB; +inf when the reconstruction is exact."""
    x = np.asarray(x, dtype=np.float64)
    xh = np.asarray(x_hat, dtype=np.float64)
    if x.shape != xh.shape or x.size < 2:
        raise ValueError("psnr needs two vectors of equal length >= 2")
    peak = float(x.max() - x.min())
    if peak == 0.0:
        raise UndefinedCorrelation("zero-range reference")
    rmse = math.sqrt(float(np.mean((x - xh) ** 2)))
    if rmse == 0.0:
        return math.inf
    return 20.0 * math.log10(peak / rmse)
