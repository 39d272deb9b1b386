"""Brier loss-difference curves, conservative pointwise bands, and the
squared-L2 functional test of equal aggregate skill."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh
from scipy.stats import norm

from fcast_eval.core import TimeGrid, moving_average, stack_values

EIGEN_CLIP = 1e-12
MC_CHUNK = 10_000


class DegenerateKernelError(ValueError):
    pass


def brier(outcome, forecast):
    return (np.asarray(outcome, dtype=float) - np.asarray(forecast, dtype=float)) ** 2


def _paired(a, b, grid: TimeGrid | None):
    A, B = stack_values(a), stack_values(b)
    if A.shape != B.shape:
        raise ValueError(f"forecast sets differ in shape: {A.shape} vs {B.shape}")
    if grid is None:
        ga, gb = getattr(a[0], "grid", None), getattr(b[0], "grid", None)
        if ga is not None and gb is not None and ga != gb:
            raise ValueError("forecast sets are on different grids")
        grid = ga or gb or TimeGrid.uniform(A.shape[1])
    if A.shape[1] != len(grid):
        raise ValueError("forecasts do not match the grid")
    return A, B, grid


@dataclass(frozen=True, eq=False)
class LossCurvePair:
    grid: TimeGrid
    delta_hat: np.ndarray
    s_cons: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    n: int
    alpha: float = 0.05
    smoothed: bool = False


def loss_difference(a, b, outcomes, alpha: float = 0.05, smooth: bool = False,
                    window: float = 0.05, grid: TimeGrid | None = None) -> LossCurvePair:
    """Mean Brier loss of A minus that of B, with conservative bands.

    Positive values favour B. The variance plugs the bound p(1-p) <= 1/4
    into the pointwise martingale variance.
    """
    A, B, grid = _paired(a, b, grid)
    y = np.asarray(outcomes, dtype=float)
    n = y.size
    if n < 2:
        raise ValueError(f"need at least 2 games, got {n}")
    if A.shape[0] != n:
        raise ValueError("forecasts and outcomes do not line up")
    delta_hat = np.mean(brier(y[:, None], A) - brier(y[:, None], B), axis=0)
    s_cons = np.sqrt(conservative_variance(A, B))
    if smooth:
        delta_hat = moving_average(delta_hat, window)
        s_cons = moving_average(s_cons, window)
    half = norm.ppf(1.0 - alpha / 2.0) * s_cons / np.sqrt(n)
    return LossCurvePair(grid, delta_hat, s_cons, delta_hat - half, delta_hat + half,
                         n, alpha, smooth)


def conservative_variance(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """(1/N) sum delta_i(t)^2 / 4 with delta_i the Brier linear-equivalent gap."""
    delta = (brier(1, A) - brier(0, A)) - (brier(1, B) - brier(0, B))
    return np.mean(delta * delta, axis=0) / 4.0


def cons_kernel(a, b) -> np.ndarray:
    """Conservative covariance kernel sampled on the grid, shape (K, K)."""
    D = stack_values(a) - stack_values(b)
    return D.T @ D / D.shape[0]


@dataclass(frozen=True, eq=False)
class EigenDecomposition:
    eigenvalues: np.ndarray  # descending
    eigenvectors: np.ndarray  # (d, K), sum(w * phi^2) = 1


def eigen_top(kernel, grid: TimeGrid, d: int) -> EigenDecomposition:
    """Leading eigenpairs of the integral operator with kernel ``kernel``.

    Uses the symmetric Nystrom form W^1/2 C W^1/2 with trapezoid weights W.
    """
    C = np.asarray(kernel, dtype=float)
    k = len(grid)
    if C.shape != (k, k):
        raise ValueError(f"kernel shape {C.shape} does not match grid of {k} points")
    if not 1 <= d <= k:
        raise ValueError(f"d must be in [1, {k}], got {d}")
    sw = np.sqrt(grid.trapezoid_weights())
    S = sw[:, None] * C * sw[None, :]
    S = 0.5 * (S + S.T)
    vals, vecs = eigh(S, subset_by_index=[k - d, k - 1])
    vals, vecs = vals[::-1], vecs[:, ::-1]
    vals = np.where(vals < EIGEN_CLIP, 0.0, vals)
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.where(sw[:, None] > 0, vecs / sw[:, None], 0.0)
    return EigenDecomposition(vals, phi.T)


def _default_threads() -> int:
    return int(os.environ.get("FCAST_EVAL_THREADS", "1") or 1)


def sample_weighted_chi2(eigenvalues, draws: int, seed: int, threads: int | None = None) -> np.ndarray:
    """Draws of sum_i lambda_i chi2_i(1).

    Draws are produced in fixed chunks, each with its own stream spawned from
    ``seed``, so the sample does not depend on the number of threads.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    n_chunks = -(-draws // MC_CHUNK)
    seqs = np.random.SeedSequence(seed).spawn(n_chunks)
    sizes = [min(MC_CHUNK, draws - i * MC_CHUNK) for i in range(n_chunks)]

    def chunk(i):
        z = np.random.default_rng(seqs[i]).standard_normal((sizes[i], lam.size))
        return (z * z) @ lam

    threads = threads or _default_threads()
    if threads > 1 and n_chunks > 1:
        with ThreadPoolExecutor(threads) as ex:
            parts = list(ex.map(chunk, range(n_chunks)))
    else:
        parts = [chunk(i) for i in range(n_chunks)]
    return np.concatenate(parts) if parts else np.empty(0)


def mc_pvalue(statistic: float, sample: np.ndarray) -> float:
    """Add-one Monte Carlo upper-tail p-value."""
    r = int(np.count_nonzero(sample >= statistic))
    return (r + 1) / (sample.size + 1)


def weighted_chi2_pvalue(statistic: float, eigenvalues, mc_draws: int = 100_000,
                         seed: int = 0, threads: int | None = None) -> float:
    return mc_pvalue(statistic, sample_weighted_chi2(eigenvalues, mc_draws, seed, threads))


@dataclass(frozen=True, eq=False)
class SkillTestResult:
    statistic: float
    eigen: EigenDecomposition
    d: int
    mc_draws: int
    seed: int
    p_value: float
    degenerate: bool = False

    def to_json(self) -> dict:
        return {
            "statistic": self.statistic,
            "eigenvalues": self.eigen.eigenvalues.tolist(),
            "d": self.d,
            "mc_draws": self.mc_draws,
            "seed": self.seed,
            "p_value": self.p_value,
            "degenerate": self.degenerate,
        }


def functional_statistic(a, b, outcomes, grid: TimeGrid | None = None) -> float:
    """N times the trapezoid integral of the squared raw loss difference."""
    A, B, grid = _paired(a, b, grid)
    y = np.asarray(outcomes, dtype=float)
    delta_hat = np.mean(brier(y[:, None], A) - brier(y[:, None], B), axis=0)
    return float(y.size * grid.integrate(delta_hat ** 2))


def functional_test(a, b, outcomes, d: int = 10, mc_draws: int = 100_000, seed: int = 0,
                    grid: TimeGrid | None = None, threads: int | None = None) -> SkillTestResult:
    """Conservative test of equal aggregate Brier skill across the game."""
    A, B, grid = _paired(a, b, grid)
    n = len(outcomes)
    if n < 2:
        raise ValueError(f"need at least 2 games, got {n}")
    stat = functional_statistic(A, B, outcomes, grid)
    eig = eigen_top(cons_kernel(A, B), grid, min(d, len(grid)))
    if not np.any(eig.eigenvalues > 0):
        if stat > 0:
            raise DegenerateKernelError("degenerate kernel, nonzero statistic")
        return SkillTestResult(stat, eig, d, mc_draws, seed, 1.0, degenerate=True)
    sample = sample_weighted_chi2(eig.eigenvalues, mc_draws, seed, threads)
    return SkillTestResult(stat, eig, d, mc_draws, seed, mc_pvalue(stat, sample))
