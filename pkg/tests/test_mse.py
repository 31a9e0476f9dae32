import math
import pickle

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from coupled_superposition.mse import (Constellation, MseFunction, QuadratureError, awgn_capacity,
                                       area_from_capacity, biawgn_capacity_bounds,
                                       capacity_inverse, g2_bounds, g_mse, integral_gmse,
                                       sigma2_for_capacity)

mp.mp.dps = 30


def g2_oracle(snr):
    snr = mp.mpf(snr)
    phi = lambda x: mp.exp(-x * x / 2) / mp.sqrt(2 * mp.pi)
    return mp.quad(lambda x: phi(x) * (1 - mp.tanh(snr + mp.sqrt(snr) * x)) ** 2,
                   [-mp.inf, -mp.sqrt(snr), 0, mp.inf])


def pam_oracle(bits, snr):
    """(mse, capacity) of unit-power 2^B-PAM by direct mixture integration."""
    k = 2**bits
    raw = [mp.mpf(2 * i - (k - 1)) for i in range(k)]
    norm = mp.sqrt(sum(r * r for r in raw) / k)
    a = [r / norm for r in raw]
    snr = mp.mpf(snr)
    rs = mp.sqrt(snr)

    def lik(y, ai):
        return mp.exp(-(y - rs * ai) ** 2 / 2) / mp.sqrt(2 * mp.pi)

    def mse_int(y):
        ls = [lik(y, ai) for ai in a]
        tot = sum(ls)
        mean = sum(l * ai for l, ai in zip(ls, a)) / tot
        return sum(l * (ai - mean) ** 2 for l, ai in zip(ls, a)) / k

    def info_int(y):
        ls = [lik(y, ai) for ai in a]
        tot = sum(ls) / k
        return sum(l * mp.log(l / tot, 2) for l in ls if l > 0) / k

    pts = sorted(set([-mp.inf] + [rs * ai for ai in a] + [mp.inf]))
    return float(mp.quad(mse_int, pts)), float(mp.quad(info_int, pts))


@pytest.mark.parametrize("snr", [1e-4, 0.1, 0.5, 1.0, 3.0, 10.0, 40.0])
def test_g2_matches_high_precision_integral(f1, snr):
    ref = float(g2_oracle(snr))
    assert g_mse(f1, snr) == pytest.approx(ref, rel=1e-9, abs=1e-15)
    assert f1(snr) == pytest.approx(ref, rel=1e-8, abs=1e-14)


@pytest.mark.parametrize("bits,snr", [(2, 0.3), (2, 5.0), (3, 2.0), (3, 30.0)])
def test_pam_mse_and_capacity_match_mixture_integral(bits, snr):
    f = MseFunction(bits)
    mse, cap = pam_oracle(bits, snr)
    assert f.exact(snr) == pytest.approx(mse, rel=1e-8, abs=1e-14)
    assert f.capacity(snr) == pytest.approx(cap, rel=1e-8, abs=1e-13)


def test_g2_at_unit_snr_by_brute_force_sampling(f1):
    rng = np.random.default_rng(2024)
    n, acc = 10_000_000, 0.0
    for _ in range(10):
        v = rng.choice([-1.0, 1.0], n // 10)
        z = v + rng.standard_normal(n // 10)
        acc += np.sum((v - np.tanh(z)) ** 2)
    est = acc / n
    # standard error of the sample mean is about 2e-4
    assert abs(est - f1(1.0)) < 1e-3


def test_endpoints(f1, f2):
    assert f1(0.0) == pytest.approx(1.0)
    assert f2(0.0) == pytest.approx(1.0)
    assert f1(np.inf) == 0.0
    assert f1.capacity(np.inf) == 1.0
    assert f2.capacity(0.0) == pytest.approx(0.0, abs=1e-14)


def test_cache_agrees_with_quadrature(f1, f2):
    s = np.logspace(-5, 2.2, 400)
    for f in (f1, f2):
        assert np.max(np.abs(f(s) - f.exact(s))) < 1e-9


def test_derivative_matches_finite_differences(f1, f3):
    for f in (f1, f3):
        for s in (0.05, 0.7, 4.0, 20.0):
            h = 1e-5 * s
            fd = (f.exact(s + h) - f.exact(s - h)) / (2 * h)
            assert f.derivative(s) == pytest.approx(fd, rel=1e-6, abs=1e-12)


@pytest.mark.parametrize("bits", [1, 2, 3])
def test_immse_identity(bits):
    f = MseFunction(bits)
    for a, b in [(0.0, 0.5), (0.01, 3.0), (1.0, 40.0), (5.0, np.inf)]:
        area = integral_gmse(f, a, b)
        assert area == pytest.approx(float(area_from_capacity(f, a, b)), rel=1e-6)


def test_integral_flags_inconsistency(f1):
    class Broken(MseFunction):
        def capacity(self, snr):
            return 1.1 * super().capacity(snr)
    with pytest.raises(QuadratureError):
        integral_gmse(Broken(1), 0.1, 2.0)


def test_g2_bounds_and_capacity_bounds(f1):
    s = np.logspace(-3, 1.5, 200)
    lower, upper_q, upper_r = g2_bounds(s)
    g = f1(s)
    assert np.all(lower <= g + 1e-12)
    assert np.all(g <= upper_q + 1e-12)
    assert np.all(g <= upper_r + 1e-12)
    lo, hi = biawgn_capacity_bounds(s)
    c = f1.capacity(s)
    assert np.all(lo <= c + 1e-12) and np.all(c <= hi)


def test_awgn_capacity_helpers():
    assert awgn_capacity(1.0) == pytest.approx(0.5)
    for cap in (0.3, 4.26, 12.0):
        assert awgn_capacity(sigma2_for_capacity(cap)) == pytest.approx(cap, rel=1e-12)
    with pytest.raises(ValueError):
        awgn_capacity(0.0)


def test_capacity_inverse(f2):
    s = capacity_inverse(f2, 1.3)
    assert f2.capacity(s) == pytest.approx(1.3, abs=1e-10)
    with pytest.raises(ValueError):
        capacity_inverse(f2, 2.0)


def test_constellation_unit_energy_and_conditional_mean():
    for b in (1, 2, 3, 4):
        c = Constellation.pam(b)
        assert c.energy() == pytest.approx(1.0)
        assert np.all(c.index_of(c.points) == np.arange(c.size))
    c1 = Constellation.pam(1)
    assert c1.conditional_mean(0.3, 2.0) == pytest.approx(math.tanh(0.6))
    with pytest.raises(ValueError):
        Constellation.pam(0)


def test_refinement_check_and_pickle():
    f = MseFunction(2, check=True, tol=1e-10)
    assert 0 < f.exact(2.0) < 1
    g = pickle.loads(pickle.dumps(MseFunction(1)))
    assert g(1.0) == pytest.approx(MseFunction(1).exact(1.0), rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(1e-4, 80.0), st.floats(1e-4, 80.0))
def test_mse_decreasing_capacity_increasing(a, b):
    f = MseFunction(1)
    lo, hi = min(a, b), max(a, b)
    assert f(hi) <= f(lo) + 1e-13
    assert f.capacity(hi) >= f.capacity(lo) - 1e-13
    assert 0.0 <= f(lo) <= 1.0
