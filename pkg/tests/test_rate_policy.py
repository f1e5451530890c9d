"""Fixed-outage backtrack rates and the epsilon sweep."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lharq.analytic import lharq_throughput
from lharq.channel import FadingChannel
from lharq.dp import optimize_lharq
from lharq.per_model import SyntheticPer
from lharq.rate_policy import (
    DEFAULT_EPSILONS,
    FixedOutagePolicy,
    fixed_outage_index,
    fixed_outage_rate,
    fixed_outage_throughput,
    sweep_epsilon,
)
from lharq.policy import ActionSet

R = 3.75
GTH = 2**R - 1


@pytest.fixture(scope="module")
def model():
    return SyntheticPer(R, 4.0)


def scan_oracle(snr, eps, n_rates, a=4.0):
    """Smallest k * delta whose closed-form conditional backtrack error is <= eps."""
    delta = R / n_rates
    full = 1.0 if snr < GTH else math.exp(-a * (snr / GTH - 1))
    for k in range(1, n_rates + 1):
        rho = R if k == n_rates else k * delta
        if k == n_rates:
            return rho
        th = 2 ** (R - rho) - 1
        back = 1.0 if snr < th else math.exp(-a * (snr / th - 1))
        if back / full <= eps:
            return rho
    raise AssertionError


class TestRule:
    def test_above_truncation(self, model):
        A = ActionSet(R, 16)
        assert fixed_outage_rate(model, 2 * model.truncation_snr, 0.1, A) == A.delta

    def test_deep_fade(self, model):
        assert fixed_outage_rate(model, 0.01, 0.1, ActionSet(R, 16)) == R

    def test_scan(self, model):
        g = 1.5 * GTH
        assert fixed_outage_rate(model, g, 0.1, ActionSet(R, 16)) == pytest.approx(scan_oracle(g, 0.1, 16))

    @given(st.floats(0.0, 150.0), st.floats(1e-4, 0.9), st.sampled_from([2, 4, 16, 64]))
    def test_scan_everywhere(self, g, eps, n):
        if g > SyntheticPer(R).truncation_snr:
            return
        got = fixed_outage_rate(SyntheticPer(R), g, eps, ActionSet(R, n))
        assert got == pytest.approx(scan_oracle(g, eps, n), rel=1e-12)

    @given(st.floats(0.0, 200.0), st.floats(1e-4, 0.5), st.floats(1e-4, 0.5))
    def test_monotone_in_epsilon(self, g, e1, e2):
        lo, hi = sorted((e1, e2))
        A = ActionSet(R, 16)
        m = SyntheticPer(R)
        assert fixed_outage_rate(m, g, hi, A) <= fixed_outage_rate(m, g, lo, A)

    def test_vectorized_feasible(self, model):
        A = ActionSet(R, 16)
        g = np.linspace(0, 80, 200)
        idx = fixed_outage_index(model, g, 0.05, A)
        assert idx.shape == g.shape
        assert np.all((0 <= idx) & (idx < 16))

    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1])
    def test_invalid_epsilon(self, model, eps):
        with pytest.raises(ValueError):
            fixed_outage_index(model, 10.0, eps, ActionSet(R, 4))


class TestPolicy:
    def test_broadcast(self, model):
        quad = FadingChannel.from_db(15.0).quadrature(64)
        A = ActionSet(R, 16)
        fo = FixedOutagePolicy.build(model, quad, 0.1, A)
        pol = fo.to_policy(model, quad, 4, n_j=8)
        assert pol.scheme == "fixed_outage" and pol.accounting == "lharq"
        for k in (1, 2, 3):
            np.testing.assert_array_equal(pol.rates(k), np.repeat(fo.rates[:, None], pol.tables[k - 1].shape[1], 1))

    def test_j_grid_resolution_irrelevant(self, model):
        ch = FadingChannel.from_db(15.0)
        quad = ch.quadrature(128)
        A = ActionSet(R, 16)
        fo = FixedOutagePolicy.build(model, quad, 0.1, A)
        a = lharq_throughput(fo.to_policy(model, quad, 3, 2), model, ch, quad).eta
        b = lharq_throughput(fo.to_policy(model, quad, 3, 64), model, ch, quad).eta
        assert a == pytest.approx(b, rel=1e-12)


@pytest.fixture(scope="module")
def setting():
    ch = FadingChannel.from_db(15.0)
    return ch, ch.quadrature(256), ActionSet(R, 16)


class TestSweep:
    def test_single_epsilon(self, model, setting):
        ch, quad, A = setting
        sw = sweep_epsilon(model, ch, quad, 3, A, [0.2])
        assert sw.best_epsilon == 0.2
        assert sw.best_eta == fixed_outage_throughput(model, ch, quad, 3, A, 0.2).eta

    def test_argmax(self, model, setting):
        ch, quad, A = setting
        sw = sweep_epsilon(model, ch, quad, 3, A)
        assert sw.epsilons == DEFAULT_EPSILONS
        assert sw.best_eta == max(sw.etas)
        assert sw.etas[-1] <= sw.best_eta
        assert len(sw.pairs()) == 25

    def test_never_beats_dp(self, model, setting):
        ch, quad, A = setting
        sw = sweep_epsilon(model, ch, quad, 3, A)
        f1 = quad.expect(model.per_full)
        dp = optimize_lharq(model, quad, 3, A).reward / (1 + f1 + f1**2)
        assert sw.best_eta <= dp + 1e-12

    @pytest.mark.parametrize("db", [12.0, 14.0, 16.0, 18.0, 20.0])
    def test_fixed_tenth_near_best(self, model, db):
        ch = FadingChannel.from_db(db)
        quad = ch.quadrature(256)
        A = ActionSet(R, 16)
        sw = sweep_epsilon(model, ch, quad, 3, A)
        fixed = fixed_outage_throughput(model, ch, quad, 3, A, 0.1).eta
        assert fixed >= 0.98 * sw.best_eta

    def test_empty(self, model, setting):
        ch, quad, A = setting
        with pytest.raises(ValueError):
            sweep_epsilon(model, ch, quad, 3, A, [])

    def test_single_round(self, model, setting):
        ch, quad, A = setting
        f1 = quad.expect(model.per_full)
        assert fixed_outage_throughput(model, ch, quad, 1, A, 0.1).eta == pytest.approx(R * (1 - f1))
