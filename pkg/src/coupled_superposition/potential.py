"""Potential function of the block recursion and the coupled threshold load.

For the recursion shifted so that its smallest fixed point sits at zero,

    U(x) = ln((x + x1)/x1) - sigma'^2 x / (x1 (x + x1))
           - alpha' * integral_{1/(alpha'(x + x1))}^{1/(alpha' x1)} g_mse(y) dy

where ``x1`` is the smallest root.  The integral is evaluated through the
I-MMSE identity (twice ln 2 times a constrained-capacity difference).  The
coupled chain reaches the small fixed point whenever ``min_x U >= 0``.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import optimize

from .fixed_points import FixedPointSet, NoTransition, alpha_s, block_fixed_points
from .mse import LN2, MseFunction, area_from_capacity, integral_gmse

N_GRID = 2000


__all__ = ["NoTransition", "SingleRootRegime", "alpha_star", "alpha_star_ecc", "min_potential",
           "potential", "potential_derivative", "u_value"]


class SingleRootRegime(ValueError):
    """Only one fixed point exists; the potential has no second minimum."""


def _snr(alpha, x):
    with np.errstate(divide="ignore"):
        return np.where(x > 0, 1.0 / (alpha * np.where(x > 0, x, 1.0)), np.inf)


def potential(f: MseFunction, alpha: float, sigma2: float, x, x1: float | None = None,
              ecc_threshold: float | None = None, check: bool = False):
    """U(x, alpha') on ``x`` in ``[0, 1 + sigma'^2]``.

    ``ecc_threshold`` replaces g_mse by the hard-feedback curve, which is zero
    at SNR >= threshold; the shift ``x1`` then defaults to ``sigma'^2``.
    ``check`` recomputes the integral by adaptive quadrature for scalar ``x``.
    """
    x = np.asarray(x, dtype=float)
    top = 1.0 + sigma2
    if np.any(x < 0) or np.any(x > top * (1 + 1e-12)):
        raise ValueError(f"x must lie in [0, {top}]")
    if x1 is None:
        x1 = sigma2 if ecc_threshold is not None else block_fixed_points(f, alpha, sigma2).smallest
    if x1 <= 0:
        raise ValueError("potential needs a positive smallest fixed point")
    lo = _snr(alpha, x + x1)
    hi = 1.0 / (alpha * x1)
    if ecc_threshold is not None:
        hi = np.minimum(hi, ecc_threshold)
        lo = np.minimum(lo, hi)
    area = area_from_capacity(f, lo, hi)
    u = np.log1p(x / x1) - sigma2 * x / (x1 * (x + x1)) - alpha * area
    if check and x.ndim == 0:
        direct = integral_gmse(f, float(lo), float(hi))
        if not math.isclose(direct, float(area), rel_tol=1e-6, abs_tol=1e-12):
            raise ArithmeticError("capacity-based area disagrees with direct quadrature")
    return u if u.ndim else float(u)


def potential_derivative(f: MseFunction, alpha: float, sigma2: float, x, x1: float):
    """Closed-form dU/dx."""
    x = np.asarray(x, dtype=float)
    y = x + x1
    return 1.0 / y - sigma2 / y**2 - f(_snr(alpha, y)) / y**2


def u_value(f: MseFunction, alpha: float, sigma2: float,
            points: FixedPointSet | None = None) -> float:
    """Potential at its second stationary point ``x3 - x1``, written via capacities."""
    points = points or block_fixed_points(f, alpha, sigma2)
    if points.n_roots < 2:
        raise SingleRootRegime(f"single fixed point at alpha'={alpha:g}, sigma'^2={sigma2:g}")
    x1, x3 = points.smallest, points.largest
    if x1 <= 0:
        raise ValueError("u_value needs sigma'^2 > 0")
    c1 = f.capacity(1.0 / (alpha * x1))
    c3 = f.capacity(1.0 / (alpha * x3))
    return (math.log(x3 / x1) - sigma2 / x1 + sigma2 / x3
            - 2 * LN2 * alpha * c1 + 2 * LN2 * alpha * c3)


def min_potential(f: MseFunction, alpha: float, sigma2: float, n_grid: int = N_GRID,
                  points: FixedPointSet | None = None, ecc_threshold: float | None = None):
    """Minimum of U over ``[0, 1 + sigma'^2]``; returns ``(x_min, U_min)``.

    Grid search on a mixed log/linear grid, refined by bounded scalar
    minimization around the best grid point; the known stationary point
    ``x3 - x1`` is always included.
    """
    top = 1.0 + sigma2
    if ecc_threshold is None:
        points = points or block_fixed_points(f, alpha, sigma2)
        x1 = points.smallest
        candidates = [points.largest - x1]
    else:
        x1 = sigma2
        candidates = []
    span = top - x1
    grid = np.unique(np.concatenate([[0.0], np.geomspace(1e-9 * span, span, n_grid // 2),
                                     np.linspace(0.0, span, n_grid - n_grid // 2)]))
    vals = potential(f, alpha, sigma2, grid, x1=x1, ecc_threshold=ecc_threshold)
    k = int(np.argmin(vals))
    best_x, best_u = float(grid[k]), float(vals[k])
    if 0 < k < len(grid) - 1:
        res = optimize.minimize_scalar(
            lambda v: potential(f, alpha, sigma2, v, x1=x1, ecc_threshold=ecc_threshold),
            bounds=(grid[k - 1], grid[k + 1]), method="bounded", options={"xatol": 1e-13})
        if res.fun < best_u:
            best_x, best_u = float(res.x), float(res.fun)
    for c in candidates:
        if 0 <= c <= span:
            uc = potential(f, alpha, sigma2, c, x1=x1, ecc_threshold=ecc_threshold)
            if uc < best_u:
                best_x, best_u = c, uc
    return best_x, best_u


def alpha_star(f: MseFunction, sigma2: float, rtol: float = 1e-10, tol: float = 1e-13,
               lo: float | None = None, hi: float | None = None) -> float:
    """Largest load with ``min_x U(x, alpha') >= 0`` (bisection on alpha').

    The search starts at the block saturation load ``alpha_s``: below it the
    single fixed point is the small one and no potential condition is needed.
    Above it a load qualifies when the small fixed point exists and the
    potential minimum is non-negative; minima within ``tol`` below zero count
    as non-negative.  Raises :class:`NoTransition` when ``sigma2`` admits no
    three-root regime.
    """
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    a_s = alpha_s(f, sigma2)

    def ok(a):
        points = block_fixed_points(f, a, sigma2)
        if points.n_roots == 1:
            return a <= a_s
        return min_potential(f, a, sigma2, points=points)[1] >= -tol

    lo = a_s if lo is None else lo
    if not ok(lo):
        raise ArithmeticError(f"potential already negative at alpha' = {lo}")
    hi = hi if hi is not None else 1.5 * lo
    while ok(hi):
        lo, hi = hi, 1.5 * hi
        if hi > 1e6:
            raise ArithmeticError("no upper bracket for alpha*")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


def alpha_star_ecc(f: MseFunction, sigma2: float, theta: float, rtol: float = 1e-9,
                   tol: float = 1e-13) -> float:
    """Hard-feedback analogue of :func:`alpha_star` for code threshold ``theta``."""
    def ok(a):
        if 1.0 / (a * sigma2) < theta:
            return False
        return min_potential(f, a, sigma2, ecc_threshold=theta)[1] >= -tol

    lo, hi = 1e-3, 1.0 / (sigma2 * theta)
    if not ok(lo):
        raise ArithmeticError("hard-feedback potential negative at the smallest load")
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo
