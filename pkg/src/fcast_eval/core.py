"""Shared time grid, curve containers and the two curve primitives
(linear interpolation onto the grid, truncated-window moving average)."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

DEFAULT_GRID_POINTS = 201


def _frozen(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Normalized game times ``0 = t_0 < ... < t_{K-1} = 1``."""

    points: np.ndarray

    def __post_init__(self):
        pts = _frozen(self.points)
        if pts.ndim != 1 or pts.size < 3:
            raise ValueError("a time grid needs at least 3 points")
        if pts[0] != 0.0 or pts[-1] != 1.0:
            raise ValueError("a time grid must start at 0 and end at 1")
        if np.any(np.diff(pts) <= 0):
            raise ValueError("grid points must be strictly increasing")
        object.__setattr__(self, "points", pts)

    @classmethod
    def uniform(cls, k: int = DEFAULT_GRID_POINTS) -> "TimeGrid":
        if k < 3:
            raise ValueError(f"grid needs K >= 3 points, got {k}")
        return cls(np.linspace(0.0, 1.0, k))

    def __len__(self) -> int:
        return self.points.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, TimeGrid):
            return NotImplemented
        return self is other or (
            self.points.shape == other.points.shape
            and bool(np.all(self.points == other.points))
        )

    def __hash__(self) -> int:
        return hash(self.points.tobytes())

    def trapezoid_weights(self) -> np.ndarray:
        """Quadrature weights w with ``sum(w * f) ~ integral of f over [0, 1]``."""
        h = np.diff(self.points)
        w = np.zeros_like(self.points)
        w[:-1] += h / 2
        w[1:] += h / 2
        return w

    def integrate(self, values) -> float:
        return float(np.dot(self.trapezoid_weights(), np.asarray(values, dtype=float)))


@dataclass(frozen=True, eq=False)
class ForecastCurve:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (len(self.grid),):
            raise ValueError(
                f"curve has {vals.size} values, grid has {len(self.grid)} points"
            )
        if np.any(vals < 0.0) or np.any(vals > 1.0) or np.any(np.isnan(vals)):
            raise ValueError("forecast values must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ForecastCurve):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True, eq=False)
class ScoreCurve:
    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        vals = _frozen(self.values)
        if vals.shape != (len(self.grid),):
            raise ValueError(
                f"curve has {vals.size} values, grid has {len(self.grid)} points"
            )
        object.__setattr__(self, "values", vals)

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoreCurve):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class GameRecord:
    """One game on the shared grid.

    ``rs`` is the relative-strength covariate; for real data it is the
    pre-game forecast, for simulated games the drift of the score process.
    """

    id: str
    outcome: int
    rs: float
    scd: ScoreCurve
    forecasts: Mapping[str, ForecastCurve] = field(default_factory=dict)

    def __post_init__(self):
        if self.outcome not in (0, 1):
            raise ValueError(f"outcome must be 0 or 1, got {self.outcome!r}")
        for name, curve in self.forecasts.items():
            if curve.grid != self.scd.grid:
                raise ValueError(f"forecast {name!r} is on a different grid")
        object.__setattr__(self, "forecasts", dict(self.forecasts))

    @property
    def grid(self) -> TimeGrid:
        return self.scd.grid

    def with_forecast(self, name: str, curve: ForecastCurve) -> "GameRecord":
        forecasts = dict(self.forecasts)
        forecasts[name] = curve
        return GameRecord(self.id, self.outcome, self.rs, self.scd, forecasts)


def interpolate_to_grid(samples: Sequence[tuple[float, float]], grid: TimeGrid) -> np.ndarray:
    """Piecewise-linear interpolation of ``(time, value)`` samples onto ``grid``.

    Values before the first sample and after the last are held constant.
    """
    if len(samples) == 0:
        raise ValueError("no samples")
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    times, values = arr[:, 0], arr[:, 1]
    if np.any(np.diff(times) < 0):
        raise ValueError("unsorted input")
    if np.any(np.diff(times) == 0):
        # np.interp is undefined on repeated abscissae; keep the last value.
        keep = np.append(np.diff(times) > 0, True)
        times, values = times[keep], values[keep]
    return np.interp(grid.points, times, values)


def window_length(k: int, window_fraction: float) -> int:
    if not 0.0 < window_fraction <= 1.0:
        raise ValueError(f"window_fraction must be in (0, 1], got {window_fraction}")
    return max(1, int(round(window_fraction * k)))


def moving_average(curve, window_fraction: float = 0.05) -> np.ndarray:
    """Centered moving average over ``round(window_fraction * K)`` points.

    Windows are truncated at the ends rather than padded. NaN entries are
    ignored inside a window and stay NaN in the output.
    """
    x = np.asarray(curve, dtype=float)
    k = x.size
    w = window_length(k, window_fraction)
    if w == 1:
        return x.copy()
    left = (w - 1) // 2
    right = w - 1 - left
    valid = ~np.isnan(x)
    csum = np.concatenate([[0.0], np.cumsum(np.where(valid, x, 0.0))])
    ccnt = np.concatenate([[0], np.cumsum(valid)])
    idx = np.arange(k)
    lo = np.clip(idx - left, 0, k)
    hi = np.clip(idx + right + 1, 0, k)
    counts = ccnt[hi] - ccnt[lo]
    with np.errstate(invalid="ignore", divide="ignore"):
        out = (csum[hi] - csum[lo]) / counts
    out[~valid] = np.nan
    return out


def stack_values(curves: Sequence) -> np.ndarray:
    """Stack ForecastCurve / ScoreCurve objects (or raw arrays) into an (N, K) array."""
    rows = [c.values if hasattr(c, "values") else np.asarray(c, dtype=float) for c in curves]
    if not rows:
        return np.empty((0, 0))
    return np.vstack(rows).astype(float, copy=False)
