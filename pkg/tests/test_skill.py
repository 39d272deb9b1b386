import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose
from scipy.integrate import trapezoid
from scipy.stats import chi2

from fcast_eval import skill
from fcast_eval.core import TimeGrid
from fcast_eval.simulator import SimConfig, simulate_arrays

CHI2_1_TAIL_3841 = 0.0500136837639567  # mpmath, 1 - P(chi2_1 <= 3.841)


def forecast_pair(n, k, seed):
    rng = np.random.default_rng(seed)
    A, B = rng.random((n, k)), rng.random((n, k))
    y = rng.integers(0, 2, n)
    return A, B, y


@pytest.mark.parametrize("y,p,want", [(1, 1.0, 0.0), (1, 0.5, 0.25), (0, 1.0, 1.0)])
def test_brier(y, p, want):
    assert skill.brier(y, p) == want


class TestLossDifference:
    def test_identical_sets(self):
        A, _, y = forecast_pair(30, 11, 0)
        lp = skill.loss_difference(A, A, y)
        assert np.all(lp.delta_hat == 0) and np.all(lp.s_cons == 0)
        assert np.array_equal(lp.ci_lower, lp.ci_upper)

    def test_single_game_values(self):
        # loss_difference needs two games; the per-game quantities are checked directly
        A, B = np.ones((1, 5)), np.zeros((1, 5))
        delta = skill.brier(1, A) - skill.brier(1, B)
        assert np.all(delta.mean(axis=0) == -1.0)
        assert np.all(skill.conservative_variance(A, B) == 1.0)

    def test_too_few_games(self):
        with pytest.raises(ValueError, match="at least 2"):
            skill.loss_difference(np.ones((1, 5)), np.zeros((1, 5)), [1])

    def test_grid_mismatch(self):
        A, B, y = forecast_pair(10, 11, 0)
        with pytest.raises(ValueError):
            skill.loss_difference(A, B[:, :9], y)

    def test_band_width(self):
        A, B, y = forecast_pair(50, 21, 3)
        lp = skill.loss_difference(A, B, y, alpha=0.05)
        half = 1.959963984540054 * lp.s_cons / np.sqrt(50)
        assert_allclose(lp.ci_upper - lp.delta_hat, half, rtol=1e-12)

    @given(st.integers(2, 40), st.integers(3, 30), st.integers(0, 2**32 - 1))
    def test_swap_negates(self, n, k, seed):
        A, B, y = forecast_pair(n, k, seed)
        ab, ba = skill.loss_difference(A, B, y), skill.loss_difference(B, A, y)
        assert_allclose(ab.delta_hat, -ba.delta_hat, atol=1e-15)
        assert_allclose(ab.s_cons, ba.s_cons, atol=1e-15)


@given(st.integers(1, 40), st.integers(2, 30), st.integers(0, 2**32 - 1))
def test_variance_equals_kernel_diagonal(n, k, seed):
    A, B, _ = forecast_pair(n, k, seed)
    assert_allclose(skill.conservative_variance(A, B), np.diag(skill.cons_kernel(A, B)), rtol=0, atol=1e-12)


class TestKernel:
    def test_identical_is_zero(self):
        A, _, _ = forecast_pair(5, 7, 0)
        assert np.all(skill.cons_kernel(A, A) == 0)

    def test_constant_gap_rank_one(self):
        K = skill.cons_kernel(np.full((1, 9), 0.7), np.full((1, 9), 0.2))
        assert_allclose(K, 0.25)

    @given(st.integers(1, 30), st.integers(2, 25), st.integers(0, 2**32 - 1))
    def test_symmetric_psd(self, n, k, seed):
        A, B, _ = forecast_pair(n, k, seed)
        C = skill.cons_kernel(A, B)
        assert np.array_equal(C, C.T)
        assert np.linalg.eigvalsh(C).min() > -1e-10


class TestEigen:
    def test_rank_one(self):
        grid = TimeGrid.uniform(51)
        C = skill.cons_kernel(np.full((1, 51), 0.5), np.zeros((1, 51)))
        eig = skill.eigen_top(C, grid, 10)
        assert eig.eigenvalues[0] == pytest.approx(0.25, rel=1e-12)
        assert np.all(eig.eigenvalues[1:] == 0)

    def test_zero_kernel(self):
        eig = skill.eigen_top(np.zeros((21, 21)), TimeGrid.uniform(21), 5)
        assert np.all(eig.eigenvalues == 0)

    def test_unit_norm_eigenfunctions(self):
        A, B, _ = forecast_pair(40, 31, 1)
        grid = TimeGrid.uniform(31)
        eig = skill.eigen_top(skill.cons_kernel(A, B), grid, 5)
        assert_allclose([grid.integrate(phi**2) for phi in eig.eigenvectors], 1.0, rtol=1e-10)
        assert np.all(np.diff(eig.eigenvalues) <= 0)

    def test_d_too_large(self):
        with pytest.raises(ValueError):
            skill.eigen_top(np.zeros((5, 5)), TimeGrid.uniform(5), 6)

    @given(st.integers(1, 30), st.integers(3, 25), st.integers(0, 2**32 - 1))
    def test_partial_trace_bound(self, n, k, seed):
        A, B, _ = forecast_pair(n, k, seed)
        grid = TimeGrid.uniform(k)
        C = skill.cons_kernel(A, B)
        eig = skill.eigen_top(C, grid, min(10, k))
        assert eig.eigenvalues.sum() <= grid.integrate(np.diag(C)) + 1e-12

    def test_refinement_in_k(self):
        coarse = TimeGrid.uniform(51)
        fine = TimeGrid.uniform(401)
        s = simulate_arrays(SimConfig(3, grid=coarse, seed=0, forecasters=("OraBM1", "OraBM2")))
        D = s.forecasts["OraBM1"] - s.forecasts["OraBM2"]
        lam_coarse = skill.eigen_top(D.T @ D / 3, coarse, 1).eigenvalues[0]
        # same piecewise-linear curves on the fine grid, dense non-symmetric eigensolve
        Df = np.array([np.interp(fine.points, coarse.points, row) for row in D])
        Cf = Df.T @ Df / 3
        lam_fine = np.max(np.linalg.eigvals(Cf * fine.trapezoid_weights()[None, :]).real)
        assert abs(lam_coarse - lam_fine) < 1e-3


class TestPValue:
    def test_chi2_oracle(self):
        p = skill.weighted_chi2_pvalue(3.841, [1.0], mc_draws=100_000, seed=0)
        assert p == pytest.approx(chi2.sf(3.841, 1), abs=0.005)
        assert chi2.sf(3.841, 1) == pytest.approx(CHI2_1_TAIL_3841, rel=1e-12)

    def test_add_one(self):
        assert skill.mc_pvalue(1e9, np.zeros(99)) == 0.01

    def test_monotone_in_statistic(self):
        lam = [0.3, 0.1, 0.05]
        ps = [skill.weighted_chi2_pvalue(s, lam, 20_000, seed=4) for s in np.linspace(0, 3, 25)]
        assert np.all(np.diff(ps) <= 0)

    def test_thread_count_irrelevant(self):
        a = skill.sample_weighted_chi2([0.5, 0.2], 35_000, seed=9, threads=1)
        b = skill.sample_weighted_chi2([0.5, 0.2], 35_000, seed=9, threads=4)
        assert np.array_equal(a, b)

    @settings(max_examples=10)
    @given(st.floats(0.005, 0.995))
    def test_seed_agreement(self, q):
        lam = np.array([0.4, 0.2, 0.1, 0.05])
        stat = float(np.quantile(skill.sample_weighted_chi2(lam, 100_000, seed=99), q))
        p1 = skill.weighted_chi2_pvalue(stat, lam, 100_000, seed=1)
        p2 = skill.weighted_chi2_pvalue(stat, lam, 100_000, seed=2)
        assert abs(p1 - p2) < 0.01


class TestFunctionalTest:
    def test_identical(self):
        A, _, y = forecast_pair(20, 11, 0)
        res = skill.functional_test(A, A, y, mc_draws=1000)
        assert res.statistic == 0 and res.p_value == 1.0 and res.degenerate

    def test_degenerate_nonzero_statistic(self, monkeypatch):
        A, B, y = forecast_pair(20, 11, 0)
        zero = skill.EigenDecomposition(np.zeros(10), np.zeros((10, 11)))
        monkeypatch.setattr(skill, "eigen_top", lambda *a, **k: zero)
        with pytest.raises(skill.DegenerateKernelError, match="degenerate kernel, nonzero statistic"):
            skill.functional_test(A, B, y)

    def test_swap_symmetric(self):
        A, B, y = forecast_pair(60, 21, 5)
        ab = skill.functional_test(A, B, y, mc_draws=20_000, seed=3)
        ba = skill.functional_test(B, A, y, mc_draws=20_000, seed=3)
        assert ab.statistic == pytest.approx(ba.statistic, rel=1e-12)
        assert ab.p_value == ba.p_value

    def test_statistic_definition(self):
        A, B, y = forecast_pair(30, 21, 7)
        grid = TimeGrid.uniform(21)
        d = np.mean((y[:, None] - A) ** 2 - (y[:, None] - B) ** 2, axis=0)
        assert skill.functional_statistic(A, B, y, grid) == pytest.approx(30 * trapezoid(d**2, grid.points))

    def test_oracle_beats_constant(self, season):
        y = season.outcomes
        res = skill.functional_test(season.forecasts["Ora"], np.full_like(season.forecasts["Ora"], 0.5), y,
                                    mc_draws=20_000)
        assert res.p_value < 0.01
