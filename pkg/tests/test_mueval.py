"""ZF precoding, rate accounting, and the proportional-error SINR model."""

import numpy as np
import pytest

from fddrecon import mueval


def random_channel(n_users, n_ant, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((n_users, n_ant)) + 1j * rng.standard_normal((n_users, n_ant))


class TestZfPrecoder:
    def test_single_user_is_matched_filter(self):
        h = random_channel(1, 8, seed=0)
        state = mueval.zf_precoder(h)
        expected = h.conj().T / np.linalg.norm(h)
        np.testing.assert_allclose(state.precoder, expected, rtol=1e-12)
        s = mueval.sinr(h, state, p_tx=4.0)
        assert s[0] == pytest.approx(4.0 * np.linalg.norm(h) ** 2, rel=1e-12)

    def test_unit_modulus_single_user_sinr(self):
        rng = np.random.default_rng(1)
        h = np.exp(1j * rng.uniform(0, 2 * np.pi, size=(1, 16)))
        s = mueval.sinr(h, mueval.zf_precoder(h), p_tx=2.0)
        assert s[0] == pytest.approx(2.0 * 16, rel=1e-12)

    def test_perfect_csi_zero_interference(self):
        h = random_channel(4, 12, seed=2)
        gains = h @ mueval.zf_precoder(h).precoder
        off = gains - np.diag(np.diag(gains))
        assert np.max(np.abs(off)) <= 1e-9 * np.min(np.abs(np.diag(gains)))

    def test_unit_total_power_split_evenly(self):
        h = random_channel(5, 20, seed=3)
        w = mueval.zf_precoder(h).precoder
        col_powers = np.sum(np.abs(w) ** 2, axis=0)
        np.testing.assert_allclose(col_powers, 1.0 / 5.0, rtol=1e-12)
        assert np.sum(col_powers) == pytest.approx(1.0, abs=1e-12)

    def test_input_validation(self):
        with pytest.raises(ValueError):
            mueval.zf_precoder(random_channel(5, 4, seed=4))  # K > M
        with pytest.raises(ValueError):
            mueval.zf_precoder(np.ones(8))  # not a matrix
        h = random_channel(3, 8, seed=5)
        h[2] = h[0]  # duplicate user
        with pytest.raises(np.linalg.LinAlgError):
            mueval.zf_precoder(h)


class TestSumRate:
    def test_zero_sinr_zero_rate(self):
        assert mueval.sum_rate(np.zeros((4, 3)), t_pilot=10, t_coherence=200) == 0.0

    def test_single_entry(self):
        assert mueval.sum_rate(np.array([[1.0]]), 0, 200) == pytest.approx(1.0)

    def test_prelog_discount(self):
        s = np.abs(random_channel(6, 2, seed=6)) ** 2
        full = mueval.sum_rate(s, 0, 200)
        assert mueval.sum_rate(s, 50, 200) == pytest.approx(0.75 * full)

    def test_subcarrier_average_user_sum(self):
        s = np.array([[3.0, 1.0], [7.0, 0.0]])
        expected = 0.5 * (np.log2(4.0) + np.log2(2.0) + np.log2(8.0))
        assert mueval.sum_rate(s, 0, 100) == pytest.approx(expected)

    def test_pilot_budget_validation(self):
        with pytest.raises(ValueError):
            mueval.sum_rate(np.ones((1, 1)), 200, 200)
        with pytest.raises(ValueError):
            mueval.sum_rate(np.ones((1, 1)), -1, 200)


class TestAnalyticSinr:
    def test_exact_at_zero_error(self):
        h = random_channel(4, 16, seed=7)
        state = mueval.zf_precoder(h)
        expected = 10.0 / (4 * np.sum(np.abs(state.pinv) ** 2, axis=0))
        got = mueval.analytic_sinr(h, 0.0, 10.0)
        np.testing.assert_allclose(got, expected, rtol=1e-12)
        np.testing.assert_allclose(got, mueval.sinr(h, state, 10.0), rtol=1e-9)

    def test_nonincreasing_in_error_power(self):
        for seed in range(10):
            h = random_channel(4, 16, seed=100 + seed)
            vals = [mueval.analytic_sinr(h, d, 10.0)
                    for d in (0.0, 1e-3, 1e-2, 1e-1)]
            for lo_d, hi_d in zip(vals, vals[1:]):
                assert np.all(hi_d <= lo_d + 1e-12)

    def test_rejects_negative_delta(self):
        with pytest.raises(ValueError):
            mueval.analytic_sinr(random_channel(2, 4, seed=8), -1e-3, 1.0)

    def test_matches_monte_carlo(self):
        h = random_channel(4, 16, seed=9)
        analytic = mueval.analytic_sinr(h, 1e-2, 10.0)
        mc = mueval.monte_carlo_sinr(h, 1e-2, 10.0, n_draws=2000, seed=10)
        np.testing.assert_allclose(analytic, mc, rtol=0.10)


class TestErrorModel:
    def test_draw_statistics(self):
        h = random_channel(2, 6, seed=11)
        rng = np.random.default_rng(12)
        delta = 0.04
        acc = np.zeros_like(h, dtype=np.float64)
        n = 4000
        for _ in range(n):
            acc += np.abs(mueval.draw_channel_error(h, delta, rng)) ** 2
        np.testing.assert_allclose(acc / n, delta * np.abs(h) ** 2, rtol=0.15)

    def test_zero_delta_zero_error(self):
        h = random_channel(2, 6, seed=13)
        rng = np.random.default_rng(14)
        np.testing.assert_array_equal(mueval.draw_channel_error(h, 0.0, rng), 0.0)


class TestTaylorPinv:
    def test_exact_at_zero_perturbation(self):
        h = random_channel(4, 16, seed=15)
        np.testing.assert_array_equal(
            mueval.taylor_pinv(h, np.zeros_like(h)), mueval.zf_precoder(h).pinv)

    def test_row_space_error_is_second_order(self):
        # The raw pseudo-inverse difference carries a first-order null-space
        # component; projecting through H isolates the row-space part, where
        # the expansion is accurate to second order.
        h = random_channel(4, 16, seed=16)
        e = random_channel(4, 16, seed=17)
        errs = []
        for t in (1e-2, 5e-3, 2.5e-3):
            exact = np.linalg.pinv(h + t * e)
            errs.append(np.linalg.norm(h @ (exact - mueval.taylor_pinv(h, t * e))))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.2)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.2)
