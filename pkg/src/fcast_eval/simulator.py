"""Synthetic seasons: Brownian score differences with a random drift,
the exact win probability, noise-perturbed copies of it, and the
rejection-rate harness for the functional skill test."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr
from scipy.stats import norm

from fcast_eval import models, skill
from fcast_eval.core import ForecastCurve, GameRecord, ScoreCurve, TimeGrid
from fcast_eval.ingest import EventStream

log = logging.getLogger(__name__)

TARGET_HOME_WIN_RATE = 0.593
LEVELS = (0.10, 0.05, 0.01)
ORACLE_NAMES = ("Ora", "Oracle")
NOISE_KINDS = ("OraBM", "OraOU")


def expected_win_rate(a: float, c: float) -> float:
    """E[Phi(a U + c)] for U ~ Unif(-1, 1), via the antiderivative of Phi."""
    if a == 0:
        return float(ndtr(c))

    def anti(x):
        return x * ndtr(x) + norm.pdf(x)

    return float((anti(c + a) - anti(c - a)) / (2.0 * a))


def solve_drift_offset(a: float = 1.0, target: float = TARGET_HOME_WIN_RATE) -> float:
    """The c that makes the home win rate equal ``target`` for a given a."""
    return float(brentq(lambda c: expected_win_rate(a, c) - target, -50.0, 50.0, xtol=1e-14))


@dataclass(frozen=True)
class SimConfig:
    n_games: int
    grid: TimeGrid = field(default_factory=TimeGrid.uniform)
    a: float = 1.0
    c: float | None = None  # None: solved so the home win rate is 0.593
    seed: int = 0
    forecasters: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_games < 1:
            raise ValueError(f"n_games must be >= 1, got {self.n_games}")
        if self.a < 0:
            raise ValueError(f"a must be >= 0, got {self.a}")
        if self.c is None:
            object.__setattr__(self, "c", solve_drift_offset(self.a))
        for name in self.forecasters:
            _check_forecaster(name)


@dataclass(frozen=True, eq=False)
class Season:
    """Array form of a simulated season; rows are games, columns grid times."""

    grid: TimeGrid
    rs: np.ndarray
    home: np.ndarray
    away: np.ndarray
    forecasts: dict = field(default_factory=dict)

    @property
    def scd(self) -> np.ndarray:
        return self.home - self.away

    @property
    def outcomes(self) -> np.ndarray:
        return (self.scd[:, -1] > 0).astype(int)

    def ids(self) -> list[str]:
        width = len(str(self.rs.size))
        return [f"g{i:0{width}d}" for i in range(1, self.rs.size + 1)]

    def games(self) -> list[GameRecord]:
        scd, y = self.scd, self.outcomes
        out = []
        for i, gid in enumerate(self.ids()):
            fc = {name: ForecastCurve(self.grid, P[i]) for name, P in self.forecasts.items()}
            out.append(GameRecord(gid, int(y[i]), float(self.rs[i]), ScoreCurve(self.grid, scd[i]), fc))
        return out

    def event_streams(self, primary: str | None = None) -> list[EventStream]:
        """Streams with one event per grid time, for the ingest CSV format.

        ``primary`` names the forecast written to the ``forecast`` column; the
        rest become extra columns.
        """
        names = list(self.forecasts)
        if primary is None:
            primary = names[0] if names else None
        y = self.outcomes
        t = self.grid.points
        streams = []
        for i, gid in enumerate(self.ids()):
            main = self.forecasts[primary][i] if primary else np.full(t.size, 0.5)
            extra = {n: self.forecasts[n][i] for n in names if n != primary}
            streams.append(EventStream(gid, t, main, self.home[i], self.away[i], int(y[i]), 1.0, extra))
        return streams


def _brownian(rng, n: int, grid: TimeGrid) -> np.ndarray:
    dt = np.diff(grid.points)
    inc = rng.standard_normal((n, dt.size)) * np.sqrt(dt)
    return np.concatenate([np.zeros((n, 1)), np.cumsum(inc, axis=1)], axis=1)


def _ou(rng, n: int, grid: TimeGrid) -> np.ndarray:
    """Stationary OU with covariance exp(-|t - s| / 2), sampled exactly."""
    dt = np.diff(grid.points)
    rho = np.exp(-dt / 2.0)
    scale = np.sqrt(1.0 - rho * rho)
    z = rng.standard_normal((n, grid.points.size))
    x = np.empty_like(z)
    x[:, 0] = z[:, 0]
    for j in range(dt.size):
        x[:, j + 1] = rho[j] * x[:, j] + scale[j] * z[:, j + 1]
    return x


def noise_path(kind: str, rng, n: int, grid: TimeGrid) -> np.ndarray:
    if kind == "OraBM":
        return _brownian(rng, n, grid)
    if kind == "OraOU":
        return _ou(rng, n, grid)
    raise ValueError(f"unknown noise kind {kind!r}")


def oracle_matrix(rs: np.ndarray, scd: np.ndarray, grid: TimeGrid, noise: np.ndarray | None = None) -> np.ndarray:
    """Phi((ScD(t) + RS (1 - t) + noise(t)) / sqrt(1 - t)); at t = 1 the
    almost-sure limit, the indicator that the numerator is positive."""
    t = grid.points
    num = scd + np.asarray(rs, dtype=float)[:, None] * (1.0 - t)
    if noise is not None:
        num = num + noise
    out = np.empty_like(num)
    inner = t < 1.0
    out[:, inner] = ndtr(num[:, inner] / np.sqrt(1.0 - t[inner]))
    out[:, ~inner] = (num[:, ~inner] > 0).astype(float)
    return np.clip(out, 0.0, 1.0)


def _check_forecaster(name: str) -> None:
    base = name.rstrip("0123456789")
    if name in ORACLE_NAMES or base in NOISE_KINDS or name in models.MODEL_TERMS:
        return
    raise ValueError(f"unknown forecaster {name!r}")


def simulate_arrays(config: SimConfig, rng: np.random.Generator | None = None) -> Season:
    rng = np.random.default_rng(config.seed) if rng is None else rng
    n, grid = config.n_games, config.grid
    rs = config.a * rng.uniform(-1.0, 1.0, n) + config.c
    dt = np.diff(grid.points)
    inc = rs[:, None] * dt + rng.standard_normal((n, dt.size)) * np.sqrt(dt)
    zeros = np.zeros((n, 1))
    home = np.concatenate([zeros, np.cumsum(np.maximum(inc, 0.0), axis=1)], axis=1)
    away = np.concatenate([zeros, np.cumsum(np.maximum(-inc, 0.0), axis=1)], axis=1)
    season = Season(grid, rs, home, away)
    for name in config.forecasters:
        if name in models.MODEL_TERMS:
            continue  # model forecasters need a training season; see rejection_study
        season.forecasts[name] = _forecaster_matrix(name, season, rng)
    return season


def simulate_season(config: SimConfig) -> list[GameRecord]:
    """One season of games; identical for identical configs."""
    return simulate_arrays(config).games()


def _forecaster_matrix(name: str, season: Season, rng) -> np.ndarray:
    if name in ORACLE_NAMES:
        return oracle_matrix(season.rs, season.scd, season.grid)
    kind = name.rstrip("0123456789")
    noise = noise_path(kind, rng, season.rs.size, season.grid)
    return oracle_matrix(season.rs, season.scd, season.grid, noise)


def oracle_curve(game: GameRecord) -> ForecastCurve:
    return ForecastCurve(game.grid, oracle_matrix(np.array([game.rs]), game.scd.values[None, :], game.grid)[0])


def perturbed_curve(game: GameRecord, kind: str, seed=None, noise=None) -> ForecastCurve:
    """Oracle curve with a Brownian or OU path added inside Phi.

    ``noise`` overrides the sampled path (used to check the identity case).
    """
    if noise is None:
        noise = noise_path(kind, np.random.default_rng(seed), 1, game.grid)[0]
    P = oracle_matrix(np.array([game.rs]), game.scd.values[None, :], game.grid,
                      np.asarray(noise, dtype=float)[None, :])
    return ForecastCurve(game.grid, P[0])


# --- rejection study -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RejectionReport:
    pairing: str
    n: int
    replications: int
    seed: int
    rates: dict  # nominal level -> empirical rejection rate
    p_values: np.ndarray

    def rate(self, level: float) -> float:
        return self.rates[level]


def parse_pairing(pairing: str) -> tuple[str, str]:
    for sep in (":", ",", " vs "):
        if sep in pairing:
            a, b = (s.strip() for s in pairing.split(sep, 1))
            _check_forecaster(a)
            _check_forecaster(b)
            return a, b
    raise ValueError(f"pairing must look like 'A:B', got {pairing!r}")


def _replication_forecasts(names, n, grid, a, c, link, ss: np.random.SeedSequence):
    s_train, s_test, s_a, s_b = ss.spawn(4)
    test = simulate_arrays(SimConfig(n, grid, a, c), np.random.default_rng(s_test))
    need_train = any(nm in models.MODEL_TERMS for nm in names)
    train_games = None
    if need_train:
        train_games = simulate_arrays(SimConfig(n, grid, a, c), np.random.default_rng(s_train)).games()
    test_games = test.games() if need_train else None
    out = []
    for name, s in zip(names, (s_a, s_b)):
        if name in models.MODEL_TERMS:
            fitted = models.fit(models.ModelSpec(name, link), train_games)
            out.append(models.predict_many(fitted, test_games))
        else:
            out.append(_forecaster_matrix(name, test, np.random.default_rng(s)))
    return out[0], out[1], test.outcomes


def rejection_study(
    pairing: str,
    n: int,
    replications: int,
    seed: int = 0,
    d: int = 10,
    mc_draws: int = 100_000,
    grid: TimeGrid | None = None,
    a: float = 1.0,
    c: float | None = None,
    link: str = "probit",
    levels: Sequence[float] = LEVELS,
    threads: int = 1,
) -> RejectionReport:
    """Empirical rejection rates of the functional test for a forecaster pair.

    Each replication draws independent training and testing seasons from
    its own stream ``SeedSequence([seed, r])``; GLM forecasters are fit on
    the training season and all forecasts are compared on the testing one.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    grid = grid or TimeGrid.uniform()
    c = solve_drift_offset(a) if c is None else c
    names = parse_pairing(pairing)

    def one(r: int) -> float:
        ss = np.random.SeedSequence([seed, r])
        ss_data, ss_mc = ss.spawn(2)
        A, B, y = _replication_forecasts(names, n, grid, a, c, link, ss_data)
        mc_seed = int(ss_mc.generate_state(1)[0])
        res = skill.functional_test(A, B, y, d=d, mc_draws=mc_draws, seed=mc_seed, grid=grid, threads=1)
        return res.p_value

    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            pvals = np.array(list(ex.map(one, range(replications))))
    else:
        pvals = np.array([one(r) for r in range(replications)])
    rates = {lv: float(np.mean(pvals <= lv)) for lv in levels}
    log.info("%s n=%d R=%d rates=%s", pairing, n, replications, rates)
    return RejectionReport(f"{names[0]}:{names[1]}", n, replications, seed, rates, pvals)
