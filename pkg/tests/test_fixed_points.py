import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import optimize

from coupled_superposition.fixed_points import (Classification, NoTransition, alpha_s,
                                                block_fixed_points, check_fixed_point_bounds, count_roots,
                                                critical_point, sigma_s, tangency_curve)
from coupled_superposition.mse import MseFunction, awgn_capacity


def dense_roots(f, alpha, sigma2, n=1_000_000):
    """Sign changes of x - sigma2 - g(1/(alpha x)) on a dense uniform grid."""
    lo = sigma2 if sigma2 > 0 else 1e-9
    x = np.linspace(lo, 1 + sigma2, n)
    h = x - sigma2 - f(1.0 / (alpha * x))
    idx = np.nonzero(np.sign(h[:-1]) * np.sign(h[1:]) < 0)[0]
    roots = list(0.5 * (x[idx] + x[idx + 1]))
    # a root within rounding of sigma2 sits below the grid resolution
    eps = sigma2 * 1e-9
    if sigma2 > 0 and h[0] <= 0 and (sigma2 + eps) - sigma2 - f(1 / (alpha * (sigma2 + eps))) > 0:
        roots.insert(0, sigma2)
    return np.array(roots)


def tangency_alphas(f, sigma2):
    """Both double-root loads at ``sigma2`` from the parametric locus."""
    s_c = critical_point(f)[0]

    def gap(logs):
        return float(tangency_curve(f, math.exp(logs))[1]) - sigma2

    c = math.log(s_c)
    out = []
    for a, b in ((math.log(1e-3), c), (c, math.log(1e6))):
        ls = optimize.brentq(gap, a, b, xtol=1e-14)
        out.append(float(tangency_curve(f, math.exp(ls))[0]))
    return sorted(out)


def test_anchor_largest_root_at_zero_noise(f1):
    pts = block_fixed_points(f1, 4.0, 0.0)
    assert pts.n_roots == 3
    assert pts.smallest == 0.0
    assert pts.largest == pytest.approx(0.7396, abs=5e-4)
    assert pts.largest == pytest.approx(0.7395798, abs=1e-6)


@pytest.mark.parametrize("alpha,sigma2", [(2.5, 0.0254), (3.0, 0.0129), (2.95, 0.0129),
                                          (1.0, 0.2), (6.0, 0.001)])
def test_roots_match_dense_scan(f1, alpha, sigma2):
    pts = block_fixed_points(f1, alpha, sigma2)
    ref = dense_roots(f1, alpha, sigma2)
    assert pts.n_roots == len(ref)
    assert np.allclose(pts.roots, ref, atol=2e-6)
    assert np.max(np.abs(pts.residuals(f1))) < 1e-10


def test_classification_and_xs(f1):
    one = block_fixed_points(f1, 1.0, 0.2)
    assert one.classification is Classification.SINGLE
    assert one.x_s == one.roots[0]
    three = block_fixed_points(f1, 3.0, 0.0129)
    assert three.classification is Classification.TRIPLE
    with pytest.raises(ValueError):
        three.x_s


def test_tangency_detected_as_double_root(f1):
    s = 2.0
    a, s2, x = tangency_curve(f1, s)
    pts = block_fixed_points(f1, float(a), float(s2))
    assert np.min(np.abs(np.asarray(pts.roots) - float(x))) < 1e-5
    assert pts.n_roots in (2, 3)


@pytest.mark.parametrize("sigma2", [1e-6, 1e-3, 0.0129, 0.05])
def test_alpha_s_matches_tangency_locus(f1, sigma2):
    ref = tangency_alphas(f1, sigma2)[0]
    assert alpha_s(f1, sigma2) == pytest.approx(ref, rel=2e-6)


def test_alpha_s_saturation_value(f1):
    assert alpha_s(f1, 1e-6) == pytest.approx(2.07, rel=0.02)


def test_alpha_s_narrow_window_near_cusp(f1):
    lo, hi = tangency_alphas(f1, 0.1)
    assert hi - lo < 0.01
    assert alpha_s(f1, 0.1) == pytest.approx(lo, rel=2e-6)


def test_no_transition_above_sigma_s(f1):
    s2 = sigma_s(f1)
    assert s2 == pytest.approx(0.10163, abs=2e-5)
    with pytest.raises(NoTransition):
        alpha_s(f1, 1.01 * s2)
    # just below the cusp a three-root load exists
    lo, hi = tangency_alphas(f1, 0.995 * s2)
    assert count_roots(f1, 0.5 * (lo + hi), 0.995 * s2) == 3


def test_sigma_s_higher_order_decreases():
    vals = [sigma_s(MseFunction(b)) for b in (1, 2, 3)]
    assert vals[0] > vals[1] > vals[2]
    assert 10 * math.log10(1 / vals[1]) == pytest.approx(15.15, abs=0.05)


def test_fixed_point_bounds_holds_where_applicable(f1):
    for a, s2 in [(1.0, 0.01), (4.0, 1e-3), (6.0, 1e-4), (8.0, 1e-5)]:
        checks = check_fixed_point_bounds(f1, a, s2)
        assert all(c.status in ("pass", "n/a") for c in checks)
        assert any(c.status == "pass" for c in checks)


def test_fixed_point_bounds_tight_bound_counterexample(f1):
    # inside the preconditions (alpha' <= C) yet above (1 + e^(-1/sigma')) sigma'^2
    alpha, sigma2 = 1.3, 0.0886
    assert alpha <= awgn_capacity(sigma2)
    x1 = dense_roots(f1, alpha, sigma2)[0]
    assert x1 - sigma2 == pytest.approx(0.0069, abs=2e-4)
    assert x1 > (1 + math.exp(-1 / math.sqrt(sigma2))) * sigma2
    assert x1 <= 2 * sigma2
    status = {c.inequality: c.status for c in check_fixed_point_bounds(f1, alpha, sigma2)}
    assert status["x1 <= (1 + e^(-1/sigma')) sigma'^2"] == "fail"
    assert status["sigma'^2 <= x1"] == "pass"


def test_fixed_point_bounds_not_applicable_outside_preconditions(f1):
    checks = check_fixed_point_bounds(f1, 3.0, 0.1)  # alpha above C(0.1) = 1.73
    assert all(c.status == "n/a" for c in checks)
    checks = check_fixed_point_bounds(f1, 2.0, 0.01)  # (a) applies, (b)/(c) need alpha >= 4
    assert {c.part for c in checks if c.status == "pass"} == {"a"}


def test_fixed_point_bounds_rejects_higher_order(f2):
    with pytest.raises(ValueError):
        check_fixed_point_bounds(f2, 1.0, 0.01)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.2, 8.0), st.floats(1e-4, 0.5))
def test_roots_are_fixed_points_and_ordered(alpha, sigma2):
    f = MseFunction(1)
    pts = block_fixed_points(f, alpha, sigma2)
    r = np.asarray(pts.roots)
    assert np.all(np.diff(r) > 0)
    assert np.all(r >= sigma2) and np.all(r <= 1 + sigma2)
    assert np.max(np.abs(pts.residuals(f))) < 1e-9 or pts.tangencies
    assert pts.n_roots % 2 == 1 or pts.tangencies
