"""Fixed points of the scalar recursion x = g_mse(1/(alpha' x)) + sigma'^2.

Roots are located by a sign-change scan of

    h(x) = x - sigma'^2 - g_mse(1 / (alpha' x))

over ``[sigma'^2, 1 + sigma'^2]`` followed by bracketed refinement.  Interior
extrema of ``h`` that come close to zero without a sign change on the grid are
refined as well, so tangencies between grid points are not missed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .mse import MseFunction, awgn_capacity

MERGE_TOL = 1e-8


class NoTransition(ValueError):
    """No load produces three fixed points at this noise power."""


class RootFindingError(ArithmeticError):
    pass


class Classification(enum.Enum):
    SINGLE = "single"
    DOUBLE = "double"
    TRIPLE = "triple"
    MULTIPLE = "multiple"


@dataclass(frozen=True)
class FixedPointSet:
    roots: tuple
    alpha: float
    sigma2: float
    tangencies: tuple = field(default=())

    @property
    def n_roots(self) -> int:
        return len(self.roots)

    @property
    def classification(self) -> Classification:
        return {1: Classification.SINGLE, 2: Classification.DOUBLE,
                3: Classification.TRIPLE}.get(self.n_roots, Classification.MULTIPLE)

    @property
    def smallest(self) -> float:
        return self.roots[0]

    @property
    def largest(self) -> float:
        return self.roots[-1]

    @property
    def x_s(self) -> float:
        if self.n_roots != 1:
            raise ValueError(f"{self.n_roots} fixed points; x_s is only defined for one")
        return self.roots[0]

    def residuals(self, f: MseFunction) -> np.ndarray:
        r = np.asarray(self.roots)
        with np.errstate(divide="ignore"):
            snr = np.where(r > 0, 1.0 / (self.alpha * np.maximum(r, 1e-300)), np.inf)
        return r - f(snr) - self.sigma2


def _residual(f, alpha, sigma2):
    def h(x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            snr = np.where(x > 0, 1.0 / (alpha * np.where(x > 0, x, 1.0)), np.inf)
        val = x - sigma2 - f(snr)
        return val if val.ndim else float(val)
    return h


def _scan_grid(sigma2, n_scan):
    top = 1.0 + sigma2
    lo = sigma2 if sigma2 > 0 else 1e-12 * top
    # log spacing resolves the small root, a linear part resolves the upper ones
    return np.unique(np.concatenate([
        np.geomspace(lo, top, n_scan // 2),
        np.linspace(lo, top, n_scan - n_scan // 2),
    ]))


def block_fixed_points(f: MseFunction, alpha: float, sigma2: float, n_scan: int = 10_000,
                       xtol: float = 1e-12, rtol: float = 1e-10) -> FixedPointSet:
    """All roots of ``x = g_mse(1/(alpha x)) + sigma2`` in ``[sigma2, 1 + sigma2]``.

    ``sigma2 = 0`` is accepted, in which case ``x = 0`` is reported as the
    smallest root (saturated SNR).
    """
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if not sigma2 >= 0:
        raise ValueError("sigma2 must be non-negative")
    h = _residual(f, alpha, sigma2)
    xs = _scan_grid(sigma2, n_scan)
    hv = h(xs)
    roots = []
    tangencies = []
    if sigma2 == 0:
        roots.append(0.0)
    elif hv[0] >= 0:
        roots.append(float(xs[0]))

    def refine(a, b):
        return optimize.brentq(h, a, b, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=500)

    sign = np.sign(hv)
    for k in range(len(xs) - 1):
        if sign[k] < 0 < sign[k + 1] or sign[k] > 0 > sign[k + 1]:
            roots.append(refine(xs[k], xs[k + 1]))
        elif sign[k + 1] == 0 and k + 1 < len(xs) - 1:
            roots.append(float(xs[k + 1]))

    # near-zero interior extrema that the grid did not resolve
    d = np.diff(hv)
    for k in range(1, len(xs) - 1):
        if d[k - 1] * d[k] >= 0 or sign[k - 1] != sign[k + 1] or sign[k] != sign[k + 1]:
            continue
        lo_x, hi_x = xs[k - 1], xs[k + 1]
        s = sign[k]
        res = optimize.minimize_scalar(lambda x: s * h(x), bounds=(lo_x, hi_x),
                                       method="bounded", options={"xatol": 1e-14})
        xm, hm = res.x, h(res.x)
        if s * hm <= 0:
            tangencies.append(float(xm))
            if abs(hm) <= rtol:
                roots.append(float(xm))
            else:
                roots.append(refine(lo_x, xm))
                roots.append(refine(xm, hi_x))

    roots.sort()
    merged = []
    for r in roots:
        if merged and r - merged[-1] < MERGE_TOL:
            continue
        merged.append(r)
    out = FixedPointSet(tuple(merged), alpha, sigma2, tuple(tangencies))
    worst = np.max(np.abs(out.residuals(f)), initial=0.0)
    if worst > rtol and not tangencies:
        raise RootFindingError(f"fixed-point residual {worst:.3g} exceeds {rtol:g}")
    return out


def count_roots(f: MseFunction, alpha: float, sigma2: float, n_scan: int = 10_000) -> int:
    return block_fixed_points(f, alpha, sigma2, n_scan=n_scan).n_roots


def tangency_curve(f: MseFunction, snr):
    """Parametric double-root locus, indexed by the SNR ``s`` at the double root.

    A double root satisfies both the fixed-point equation and unit slope, which
    gives ``sigma2 = -s g'(s) - g(s)`` and ``alpha = -1/(s^2 g'(s))``.
    Returns ``(alpha, sigma2, x)`` arrays.
    """
    s = np.asarray(snr, dtype=float)
    g = f.exact(s)
    dg = f.derivative(s)
    sigma2 = -s * dg - g
    with np.errstate(divide="ignore", over="ignore"):
        alpha = -1.0 / (s * s * dg)
    x = -s * dg
    return alpha, sigma2, x


def critical_point(f: MseFunction):
    """Cusp of the double-root locus: ``(s, sigma_s^2, alpha)`` maximizing sigma'^2."""
    def neg(logs):
        _, s2, _ = tangency_curve(f, np.exp(logs))
        return -float(s2)
    grid = np.linspace(np.log(1e-2), np.log(1e3), 400)
    vals = np.array([neg(v) for v in grid])
    k = int(np.argmin(vals))
    res = optimize.minimize_scalar(neg, bounds=(grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]),
                                   method="bounded", options={"xatol": 1e-12})
    s = float(np.exp(res.x))
    a, s2, _ = tangency_curve(f, s)
    return s, float(s2), float(a)


def sigma_s(f: MseFunction) -> float:
    """Largest sigma'^2 at which some load gives three fixed points."""
    return critical_point(f)[1]


def _window_midpoint(f, sigma2):
    """Load halfway between the two double-root loads at ``sigma2``, if both exist."""
    s_c, s2_c, _ = critical_point(f)
    if not 0 < sigma2 < s2_c:
        return None

    def gap(logs):
        return float(tangency_curve(f, math.exp(logs))[1]) - sigma2

    c = math.log(s_c)
    try:
        left = optimize.brentq(gap, math.log(1e-3), c, xtol=1e-13)
        right = optimize.brentq(gap, c, math.log(1e4), xtol=1e-13)
    except ValueError:
        return None
    a_l = float(tangency_curve(f, math.exp(left))[0])
    a_r = float(tangency_curve(f, math.exp(right))[0])
    return 0.5 * (a_l + a_r)


def alpha_s(f: MseFunction, sigma2: float, rtol: float = 1e-6, n_scan: int = 4000) -> float:
    """Load where the root count of the block recursion jumps from one to three.

    Bisection on the root count.  The upper bracket is found by a geometric
    scan in alpha; close to the cusp, where the three-root window is too
    narrow for the scan, the midpoint between the two double-root loads is
    tried instead.  Raises
    :class:`NoTransition` when no load gives more than one root.
    """
    if not sigma2 >= 0:
        raise ValueError("sigma2 must be non-negative")
    lo = 0.5
    if count_roots(f, lo, sigma2, n_scan) > 1:
        raise RootFindingError("three fixed points already at alpha = 0.5")
    top = 10.0 / max(sigma2, 1e-12)
    grid = np.geomspace(lo, min(top, 1e6), 200)
    hi = None
    for a in grid[1:]:
        if count_roots(f, a, sigma2, n_scan) > 1:
            hi = a
            break
        lo = a
    if hi is None:
        a_mid = _window_midpoint(f, sigma2)
        if a_mid is not None and count_roots(f, a_mid, sigma2, n_scan) > 1:
            hi = a_mid
            lo = max([0.5] + [a for a in grid if a < a_mid])
    if hi is None:
        raise NoTransition(f"no three-root load at sigma'^2 = {sigma2:g}")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if count_roots(f, mid, sigma2, n_scan) > 1:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


@dataclass
class BoundCheck:
    part: str
    inequality: str
    lhs: float
    rhs: float
    status: str  # "pass", "fail" or "n/a"

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs


def check_fixed_point_bounds(f: MseFunction, alpha: float, sigma2: float, tol: float = 1e-12,
                 points: FixedPointSet | None = None) -> list[BoundCheck]:
    """Evaluate the 2-PAM fixed-point bounds at ``(alpha', sigma'^2)``.

    Part (a) bounds the smallest root, parts (b) and (c) the largest.  An
    inequality whose preconditions fail is reported with status ``"n/a"``.
    """
    if f.bits != 1:
        raise ValueError("the bounds hold for 2-PAM only")
    checks: list[BoundCheck] = []
    cap = awgn_capacity(sigma2) if sigma2 > 0 else math.inf
    ok_a = sigma2 <= 1 and 0 <= alpha <= cap
    ok_bc = sigma2 <= 1 and 4 <= alpha <= cap
    if (ok_a or ok_bc) and points is None:
        points = block_fixed_points(f, alpha, sigma2)

    def add(part, text, lhs, rhs, applicable):
        if not applicable:
            checks.append(BoundCheck(part, text, math.nan, math.nan, "n/a"))
            return
        checks.append(BoundCheck(part, text, lhs, rhs, "pass" if lhs <= rhs + tol else "fail"))

    s = math.sqrt(sigma2)
    x1 = points.smallest if ok_a else math.nan
    x3 = points.largest if ok_bc else math.nan
    tight = (1.0 + math.exp(-1.0 / s)) * sigma2 if s > 0 else 0.0
    add("a", "sigma'^2 <= x1", sigma2, x1, ok_a)
    add("a", "x1 <= (1 + e^(-1/sigma')) sigma'^2", x1, tight, ok_a)
    add("a", "(1 + e^(-1/sigma')) sigma'^2 <= 2 sigma'^2", tight, 2 * sigma2, ok_a)
    top = 1.0 + sigma2
    add("b", "(1 + sigma'^2)^2 - 3/alpha' <= x3^2", top**2 - 3.0 / alpha if ok_bc else 0, x3**2,
        ok_bc)
    add("b", "x3^2 <= (1 + sigma'^2)^2", x3**2, top**2, ok_bc)
    inner = top - 1.0 / (alpha * top) - 2.0 / (alpha**2 * top**3) if ok_bc else math.nan
    add("c", "(1 + sigma'^2)/2 <= 1 + sigma'^2 - 1/(alpha' (1+sigma'^2)) - 2/(alpha'^2 (1+sigma'^2)^3)",
        0.5 * top, inner, ok_bc)
    add("c", "1 + sigma'^2 - 1/(alpha' (1+sigma'^2)) - 2/(alpha'^2 (1+sigma'^2)^3) <= x3",
        inner, x3, ok_bc)
    add("c", "x3 <= 1 + sigma'^2", x3, top, ok_bc)
    return checks
