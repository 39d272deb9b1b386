"""Adaptive-bin calibration plots, Wilson bounds and their U^min / L^max summaries."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.stats import norm

from fcast_eval.core import TimeGrid, moving_average, stack_values

EXTREME_THRESHOLD = 0.995


def wilson_interval(event_rate: float, n: int, kappa: float) -> tuple[float, float]:
    """Wilson score interval for a binomial proportion, clipped to [0, 1]."""
    if not 0.0 <= event_rate <= 1.0:
        raise ValueError(f"event_rate must be in [0, 1], got {event_rate}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not kappa > 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    lo, hi = wilson_bounds(np.asarray(event_rate, float), np.asarray(n, float), kappa)
    return float(lo), float(hi)


def wilson_bounds(event_rate: np.ndarray, n: np.ndarray, kappa: float):
    """Vectorized Wilson bounds; no argument checking."""
    k2 = kappa * kappa
    center = (n * event_rate + k2 / 2.0) / (n + k2)
    half = kappa * np.sqrt(n) / (n + k2) * np.sqrt(event_rate * (1.0 - event_rate) + k2 / (4.0 * n))
    lower = np.clip(center - half, 0.0, 1.0)
    upper = np.clip(center + half, 0.0, 1.0)
    # the two algebraic cancellations at 0 and 1 are exact, not approximate
    lower = np.where(event_rate == 0.0, 0.0, lower)
    upper = np.where(event_rate == 1.0, 1.0, upper)
    return lower, upper


def bonferroni_kappa(alpha: float, m: int) -> float:
    return float(norm.ppf(1.0 - alpha / (2.0 * m)))


def adaptive_bins(forecasts, m: int) -> np.ndarray:
    """Rank-based bin labels 0..m-1 for each forecast.

    Ranks are assigned by a stable sort; each bin holds floor(N/m) ranks and
    the last bin also takes the N mod m leftovers.
    """
    x = np.asarray(forecasts, dtype=float)
    n = x.size
    if m < 2:
        raise ValueError(f"need at least 2 bins, got {m}")
    if n < m:
        raise ValueError(f"need at least m={m} forecasts, got {n}")
    order = np.argsort(x, kind="stable")
    size = n // m
    by_rank = np.minimum(np.arange(n) // size, m - 1)
    labels = np.empty(n, dtype=int)
    labels[order] = by_rank
    return labels


@dataclass(frozen=True)
class CalibrationBin:
    index: int
    n: int
    reference: float
    event_rate: float
    lower: float
    upper: float


@dataclass(frozen=True)
class ExtremeReport:
    threshold: float
    # rows of (method, side, games, home_wins, proportion); side is ">" or "<"
    rows: tuple[tuple[str, str, int, int, float], ...]

    def get(self, method: str, side: str) -> tuple[int, int, float]:
        for m, s, games, wins, prop in self.rows:
            if m == method and s == side:
                return games, wins, prop
        raise KeyError((method, side))


@dataclass(frozen=True, eq=False)
class CalibrationResult:
    grid: TimeGrid
    m: int
    alpha: float
    kappa: float
    bins: tuple[tuple[CalibrationBin, ...], ...]  # empty tuple where t is missing
    u_min: np.ndarray
    l_max: np.ndarray
    u_min_raw: np.ndarray
    l_max_raw: np.ndarray
    extremes: ExtremeReport | None = None
    smoothed: bool = False

    @property
    def missing(self) -> np.ndarray:
        return np.isnan(self.u_min) | np.isnan(self.l_max)

    @property
    def verdict(self) -> np.ndarray:
        """True where the reference line sits inside every interval's band."""
        with np.errstate(invalid="ignore"):
            return (self.u_min > 0) & (self.l_max < 0) & ~self.missing

    def calibrated_fraction(self) -> float:
        """Share of non-missing grid points with a calibrated verdict."""
        ok = ~self.missing
        return float(self.verdict[ok].mean()) if ok.any() else float("nan")

    def surface(self, which: str, t, p) -> np.ndarray:
        """Bilinear interpolation of the upper or lower calibration surface."""
        key = {"upper": "upper", "lower": "lower"}[which]
        t = np.atleast_1d(np.asarray(t, dtype=float))
        p = np.atleast_1d(np.asarray(p, dtype=float))
        pts = self.grid.points
        rows = np.full((pts.size, p.size), np.nan)
        for i, bins in enumerate(self.bins):
            if bins:
                ref = np.array([b.reference for b in bins])
                val = np.array([getattr(b, key) for b in bins])
                rows[i] = np.interp(p, ref, val)
        out = np.empty((t.size, p.size))
        for j in range(p.size):
            col = rows[:, j]
            ok = ~np.isnan(col)
            out[:, j] = np.interp(t, pts[ok], col[ok]) if ok.any() else np.nan
        return out


def _calibrate_column(x: np.ndarray, y: np.ndarray, m: int, kappa: float):
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    size = x.size // m
    edges = [j * size for j in range(m)] + [x.size]
    counts = np.diff(edges)
    refs = np.array([np.median(xs[a:b]) for a, b in zip(edges[:-1], edges[1:])])
    rates = np.add.reduceat(ys, edges[:-1]) / counts
    lower, upper = wilson_bounds(rates, counts.astype(float), kappa)
    bins = tuple(
        CalibrationBin(j + 1, int(counts[j]), float(refs[j]), float(rates[j]),
                       float(lower[j]), float(upper[j]))
        for j in range(m)
    )
    return bins, float(np.min(upper - refs)), float(np.max(lower - refs))


def calibrate(
    forecasts,
    outcomes: Sequence[int],
    m: int = 10,
    alpha: float = 0.05,
    smooth: bool = False,
    window: float = 0.05,
    grid: TimeGrid | None = None,
    method: str = "forecast",
) -> CalibrationResult:
    """Calibration summary of one method's forecast curves.

    ``forecasts`` is a sequence of ForecastCurve (or an (N, K) array with
    ``grid`` given). At each t forecasts outside [0.005, 0.995] are set
    aside; a t with fewer than ``m`` remaining forecasts is reported missing.
    """
    if m < 2:
        raise ValueError(f"need at least 2 bins, got {m}")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    P = stack_values(forecasts)
    y = np.asarray(outcomes, dtype=float)
    if grid is None:
        grid = forecasts[0].grid
    if P.shape != (y.size, len(grid)):
        raise ValueError("forecasts and outcomes do not line up")
    kappa = bonferroni_kappa(alpha, m)
    lo_t, hi_t = 1.0 - EXTREME_THRESHOLD, EXTREME_THRESHOLD
    k = len(grid)
    u = np.full(k, np.nan)
    l = np.full(k, np.nan)
    all_bins = []
    for i in range(k):
        col = P[:, i]
        keep = (col >= lo_t) & (col <= hi_t)
        if keep.sum() < m:
            all_bins.append(())
            continue
        bins, u[i], l[i] = _calibrate_column(col[keep], y[keep], m, kappa)
        all_bins.append(bins)
    u_s, l_s = (moving_average(u, window), moving_average(l, window)) if smooth else (u, l)
    return CalibrationResult(
        grid, m, alpha, kappa, tuple(all_bins), u_s, l_s, u, l,
        extremes=extreme_report({method: P}, y), smoothed=smooth,
    )


def extreme_report(forecasts: Mapping[str, object], outcomes: Sequence[int],
                   threshold: float = EXTREME_THRESHOLD) -> ExtremeReport:
    """Games whose forecast ever crossed ``threshold`` (or ``1 - threshold``)."""
    y = np.asarray(outcomes, dtype=int)
    rows = []
    for method, curves in forecasts.items():
        P = stack_values(curves) if not isinstance(curves, np.ndarray) else curves
        for side, hit in ((">", np.any(P > threshold, axis=1)),
                          ("<", np.any(P < 1.0 - threshold, axis=1))):
            games = int(hit.sum())
            wins = int(y[hit].sum())
            rows.append((method, side, games, wins, wins / games if games else 0.0))
    return ExtremeReport(threshold, tuple(rows))
