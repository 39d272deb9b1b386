import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate
from scipy.stats import norm

from fcast_eval import simulator as sim
from fcast_eval.core import GameRecord, ScoreCurve, TimeGrid

C_ORACLE = 0.27488743177858408  # mpmath quad + bisection on E[Phi(U + c)] = 0.593


def _c_by_quadrature(a, target=0.593):
    f = lambda c: integrate.quad(lambda u: norm.cdf(a * u + c) / 2, -1, 1, epsabs=1e-14)[0] - target
    lo, hi = -5.0, 5.0
    for _ in range(80):
        mid = (lo + hi) / 2
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    return (lo + hi) / 2


class TestDrift:
    def test_offset_matches_quadrature(self):
        assert sim.solve_drift_offset(1.0) == pytest.approx(_c_by_quadrature(1.0), abs=1e-10)
        assert sim.solve_drift_offset(1.0) == pytest.approx(C_ORACLE, abs=1e-12)

    @pytest.mark.parametrize("a", [0.0, 0.5, 2.0])
    def test_expected_rate(self, a):
        c = sim.solve_drift_offset(a)
        assert sim.expected_win_rate(a, c) == pytest.approx(0.593, abs=1e-12)

    def test_dominant_drift(self):
        s = sim.simulate_arrays(sim.SimConfig(10_000, TimeGrid.uniform(11), a=0.0, c=10.0, seed=1))
        assert s.outcomes.mean() > 0.99

    def test_win_rate(self):
        s = sim.simulate_arrays(sim.SimConfig(100_000, TimeGrid.uniform(21), seed=0))
        assert abs(s.outcomes.mean() - 0.593) <= 0.005

    def test_mean_final_margin(self):
        n = 40_000
        s = sim.simulate_arrays(sim.SimConfig(n, TimeGrid.uniform(21), seed=5))
        final = s.scd[:, -1]
        assert abs(final.mean() - sim.solve_drift_offset()) < 3 * final.std() / np.sqrt(n)


class TestSeason:
    def test_deterministic(self):
        cfg = sim.SimConfig(20, TimeGrid.uniform(51), seed=3, forecasters=("Ora", "OraBM1", "OraOU1"))
        a, b = sim.simulate_arrays(cfg), sim.simulate_arrays(cfg)
        assert np.array_equal(a.home, b.home) and np.array_equal(a.away, b.away)
        for k in a.forecasts:
            assert np.array_equal(a.forecasts[k], b.forecasts[k])

    def test_scores_nondecreasing_and_start_level(self):
        s = sim.simulate_arrays(sim.SimConfig(50, TimeGrid.uniform(41), seed=2))
        assert np.all(np.diff(s.home, axis=1) >= 0) and np.all(np.diff(s.away, axis=1) >= 0)
        assert np.all(s.scd[:, 0] == 0)

    def test_increment_variance(self):
        grid = TimeGrid.uniform(11)
        s = sim.simulate_arrays(sim.SimConfig(20_000, grid, seed=4))
        resid = np.diff(s.scd, axis=1) - s.rs[:, None] * 0.1
        assert resid.var() == pytest.approx(0.1, rel=0.03)

    def test_outcome_is_final_sign(self, season):
        assert np.array_equal(season.outcomes, (season.scd[:, -1] > 0).astype(int))
        assert np.array_equal(season.forecasts["Ora"][:, -1], season.outcomes.astype(float))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            sim.SimConfig(0)
        with pytest.raises(ValueError):
            sim.SimConfig(5, forecasters=("Nope",))


class TestOracle:
    def _game(self, grid, rs, scd):
        return GameRecord("g", 1, rs, ScoreCurve(grid, np.broadcast_to(scd, len(grid)).astype(float)))

    def test_zero_state_is_half(self, grid):
        v = sim.oracle_curve(self._game(grid, 0.0, 0.0)).values
        assert np.all(v[:-1] == 0.5)

    def test_lead_goes_to_one(self, grid):
        v = sim.oracle_curve(self._game(grid, 0.0, 2.0)).values
        assert np.all(np.diff(v) >= 0) and v[-2] > 0.999999 and v[-1] == 1.0

    def test_start_value(self, grid):
        assert sim.oracle_curve(self._game(grid, 1.0, 0.0)).values[0] == pytest.approx(norm.cdf(1.0), rel=1e-14)

    def test_matches_formula(self, grid, rng):
        scd = rng.normal(size=len(grid))
        v = sim.oracle_curve(self._game(grid, 0.4, scd)).values
        t = grid.points[:-1]
        assert_allclose(v[:-1], norm.cdf((scd[:-1] + 0.4 * (1 - t)) / np.sqrt(1 - t)), rtol=1e-12)

    def test_zero_noise_reproduces_oracle(self, games):
        g = games[0]
        for kind in ("OraBM", "OraOU"):
            p = sim.perturbed_curve(g, kind, noise=np.zeros(len(g.grid)))
            assert np.array_equal(p.values, sim.oracle_curve(g).values)

    def test_perturbed_seeded(self, games):
        g = games[1]
        a = sim.perturbed_curve(g, "OraBM", seed=7).values
        b = sim.perturbed_curve(g, "OraBM", seed=7).values
        c = sim.perturbed_curve(g, "OraBM", seed=8).values
        assert np.array_equal(a, b) and not np.array_equal(a, c)


class TestNoise:
    def test_ou_stationary(self):
        grid = TimeGrid.uniform(21)
        ou = sim.noise_path("OraOU", np.random.default_rng(0), 50_000, grid)
        assert_allclose(ou.var(axis=0), 1.0, atol=0.03)
        lag = 10  # 0.5 in game time
        r = np.corrcoef(ou[:, 0], ou[:, lag])[0, 1]
        assert r == pytest.approx(np.exp(-0.25), abs=0.01)
        assert np.exp(-0.25) == pytest.approx(0.77880, abs=5e-6)

    def test_bm_variance(self):
        grid = TimeGrid.uniform(21)
        bm = sim.noise_path("OraBM", np.random.default_rng(0), 50_000, grid)
        assert np.all(bm[:, 0] == 0)
        assert_allclose(bm.var(axis=0)[1:], grid.points[1:], rtol=0.04)


class TestRejection:
    def test_single_replication(self):
        rep = sim.rejection_study("OraBM1:OraBM2", 20, 1, seed=0, mc_draws=2000)
        assert set(rep.rates.values()) <= {0.0, 1.0}

    def test_rates_nested(self):
        rep = sim.rejection_study("OraBM1:OraBM2", 30, 20, seed=1, mc_draws=2000, grid=TimeGrid.uniform(51))
        assert rep.rate(0.10) >= rep.rate(0.05) >= rep.rate(0.01)

    def test_thread_count_irrelevant(self):
        kw = dict(seed=2, mc_draws=2000, grid=TimeGrid.uniform(51))
        a = sim.rejection_study("PgRS:OraBM1", 30, 6, threads=1, **kw)
        b = sim.rejection_study("PgRS:OraBM1", 30, 6, threads=3, **kw)
        assert np.array_equal(a.p_values, b.p_values)

    def test_strong_difference_rejected(self):
        rep = sim.rejection_study("Ora:OraBM", 100, 10, seed=3, mc_draws=5000)
        assert rep.rate(0.05) >= 0.9

    @pytest.mark.parametrize("bad", ["Ora", "Ora:Nope"])
    def test_bad_pairing(self, bad):
        with pytest.raises(ValueError):
            sim.parse_pairing(bad)
