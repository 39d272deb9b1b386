"""Minimal SVG line/band/scatter plots written without a plotting runtime."""
from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

W, H = 640, 400
MARGIN = dict(left=60, right=20, top=40, bottom=50)


class _Axes:
    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.y1 <= self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y0 + 0.5

    def px(self, x):
        span = W - MARGIN["left"] - MARGIN["right"]
        return MARGIN["left"] + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * span

    def py(self, y):
        span = H - MARGIN["top"] - MARGIN["bottom"]
        return H - MARGIN["bottom"] - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * span


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _polyline(ax, x, y, color, width=1.5, dash=None) -> list[str]:
    # break the line at NaNs
    out = []
    ok = ~np.isnan(y)
    runs = np.split(np.arange(len(y)), np.flatnonzero(np.diff(ok.astype(int))) + 1)
    for run in runs:
        if not ok[run[0]] or run.size < 2:
            continue
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(ax.px(x[run]), ax.py(y[run])))
        extra = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{extra} points="{pts}"/>')
    return out


def _band(ax, x, lo, hi, color) -> list[str]:
    ok = ~(np.isnan(lo) | np.isnan(hi))
    if ok.sum() < 2:
        return []
    xs = x[ok]
    top = [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(ax.px(xs), ax.py(hi[ok]))]
    bot = [f"{_fmt(a)},{_fmt(b)}" for a, b in zip(ax.px(xs[::-1]), ax.py(lo[ok][::-1]))]
    return [f'<polygon fill="{color}" fill-opacity="0.3" stroke="none" points="{" ".join(top + bot)}"/>']


def _frame(ax, title, xlabel, ylabel) -> list[str]:
    x_left, x_right = MARGIN["left"], W - MARGIN["right"]
    y_top, y_bot = MARGIN["top"], H - MARGIN["bottom"]
    parts = [
        f'<rect x="{x_left}" y="{y_top}" width="{x_right - x_left}" height="{y_bot - y_top}" fill="none" stroke="black"/>',
        f'<text x="{W / 2}" y="24" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{W / 2}" y="{H - 12}" text-anchor="middle" font-size="13">{escape(xlabel)}</text>',
        f'<text x="16" y="{H / 2}" text-anchor="middle" font-size="13" transform="rotate(-90 16 {H / 2})">{escape(ylabel)}</text>',
    ]
    for v in np.linspace(ax.x0, ax.x1, 5):
        parts.append(f'<text x="{_fmt(ax.px(v))}" y="{y_bot + 16}" text-anchor="middle" font-size="11">{v:.2g}</text>')
    for v in np.linspace(ax.y0, ax.y1, 5):
        parts.append(f'<text x="{x_left - 6}" y="{_fmt(ax.py(v) + 4)}" text-anchor="end" font-size="11">{v:.3g}</text>')
    return parts


def _write(path, parts) -> None:
    body = "\n".join(parts)
    Path(path).write_text(
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
        f'viewBox="0 0 {W} {H}">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n',
        encoding="utf-8",
    )


def _limits(*arrays):
    vals = np.concatenate([np.asarray(a, float).ravel() for a in arrays])
    vals = vals[~np.isnan(vals)]
    if vals.size == 0:
        return (-1.0, 1.0)
    lo, hi = float(vals.min()), float(vals.max())
    pad = 0.05 * (hi - lo or 1.0)
    return lo - pad, hi + pad


def skill_plot(path, pair, p_value: float | None = None, title="Loss difference") -> None:
    t = pair.grid.points
    ax = _Axes((0.0, 1.0), _limits(pair.ci_lower, pair.ci_upper, [0.0]))
    parts = _frame(ax, title, "game time t", "mean Brier loss difference")
    parts += _band(ax, t, pair.ci_lower, pair.ci_upper, "#7fa7d9")
    parts += _polyline(ax, t, np.zeros_like(t), "gray", 1, "4 3")
    parts += _polyline(ax, t, pair.delta_hat, "#1f4e9c", 2)
    if p_value is not None:
        parts.append(f'<text x="{W - MARGIN["right"] - 8}" y="{MARGIN["top"] + 18}" '
                     f'text-anchor="end" font-size="13">p = {p_value:.4g}</text>')
    _write(path, parts)


def calibration_summary_plot(path, result, title="Calibration summary") -> None:
    t = result.grid.points
    ax = _Axes((0.0, 1.0), _limits(result.u_min, result.l_max, [0.0]))
    parts = _frame(ax, title, "game time t", "distance to reference")
    parts += _polyline(ax, t, np.zeros_like(t), "gray", 1, "4 3")
    parts += _polyline(ax, t, result.u_min, "#c0392b", 2)
    parts += _polyline(ax, t, result.l_max, "#2471a3", 2)
    _write(path, parts)


def calibration_scatter_plot(path, result, t: float, title=None) -> None:
    i = int(np.argmin(np.abs(result.grid.points - t)))
    bins = result.bins[i]
    ax = _Axes((0.0, 1.0), (0.0, 1.0))
    parts = _frame(ax, title or f"Calibration at t = {result.grid.points[i]:.3f}",
                   "bin reference forecast", "event rate")
    parts += _polyline(ax, np.array([0.0, 1.0]), np.array([0.0, 1.0]), "gray", 1, "4 3")
    for b in bins:
        x = ax.px(b.reference)
        parts.append(f'<line x1="{_fmt(x)}" x2="{_fmt(x)}" y1="{_fmt(ax.py(b.lower))}" '
                     f'y2="{_fmt(ax.py(b.upper))}" stroke="#1f4e9c" stroke-width="2"/>')
        parts.append(f'<circle cx="{_fmt(x)}" cy="{_fmt(ax.py(b.event_rate))}" r="3" fill="#1f4e9c"/>')
    _write(path, parts)
