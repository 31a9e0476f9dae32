"""Achievable sum-rates, optimal loads and gap-to-capacity bounds.

Rates are in bits per real channel use.  With ``L=None`` the large-system
limit is taken (``alpha' = alpha``, ``sigma'^2 = sigma^2``); otherwise the
finite-size mapping of :func:`~coupled_superposition.params.effective_load`
is used inside the SINR while ``alpha`` stays the rate multiplier.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .density_evolution import Schedule, ScheduleKind, run_block_de, run_coupled_de
from .fixed_points import block_fixed_points
from .mse import LN2, MseFunction, awgn_capacity
from .params import effective_load
from .potential import alpha_star, min_potential

log = logging.getLogger(__name__)

GAP_CONSTANT = 1.081
GAP_MIN_CAPACITY = 4.26
POTENTIAL_TOL = 1e-13
COLLAPSE_RTOL = 1e-9


class Branch(enum.Enum):
    BLOCK = "block"                    # block system, largest fixed point
    COUPLED_SINGLE = "coupled-single"  # one fixed point, same as block
    COUPLED_LOW = "coupled-low"        # coupled chain reaches x1
    COUPLED_HIGH = "coupled-high"      # load above the threshold, stuck at x3
    DECODED = "decoded"                # hard feedback cancels every stream
    STALLED = "stalled"                # hard feedback never reaches theta


@dataclass(frozen=True)
class RateResult:
    """Sum-rate at one operating point.

    ``x`` is the interference-plus-noise power the rate is evaluated at and
    ``sinr = 1/(alpha' x)``; for a decoded hard-feedback point ``sinr`` is the
    code threshold instead.
    """

    rate: float
    alpha: float
    sigma2: float
    alpha_eff: float
    sigma2_eff: float
    x: float
    sinr: float
    branch: Branch
    schedule: Schedule
    coupled: bool
    W: int | None = None
    extra: dict = field(default_factory=dict)

    @property
    def capacity(self) -> float:
        return awgn_capacity(self.sigma2)

    @property
    def gap(self) -> float:
        return self.capacity - self.rate

    @property
    def per_stream(self) -> float:
        return self.rate / self.alpha


def _chain_reaches(x_final, target, W, rtol=1e-3):
    """True when the chain interior, away from the clamped right end, is at ``target``."""
    interior = np.asarray(x_final)[: len(x_final) - 4 * W]
    return bool(np.all(interior <= target * (1 + rtol)))


def _ecc_potential_ok(f, alpha, sigma2, theta, tol=POTENTIAL_TOL):
    if theta > 1.0 / (alpha * sigma2):
        return False
    return min_potential(f, alpha, sigma2, ecc_threshold=theta)[1] >= -tol


def hard_feedback_collapses(f: MseFunction, alpha: float, sigma2: float, theta: float,
                            W: int | None = None, T_max: int | None = None) -> bool:
    """Whether the hard-feedback recursion cancels every stream at threshold ``theta``.

    ``W=None`` uses the potential criterion of the infinitely wide coupled
    chain; an integer ``W`` iterates the coupled recursion itself and checks
    the chain away from the clamped right end.
    """
    if W is None:
        return _ecc_potential_ok(f, alpha, sigma2, theta)
    T_max = T_max or 12 * (2 * W + 1)
    tr = run_coupled_de(f, alpha, sigma2, W, T_max, Schedule.hard_feedback(theta),
                        record_every=10**9, max_iters=400_000)
    return _chain_reaches(tr.final, sigma2, W, rtol=COLLAPSE_RTOL)


def theta_star(f: MseFunction, alpha: float, sigma2: float, W: int | None = None,
               coupled: bool = True, rtol: float = 1e-9, T_max: int | None = None) -> float:
    """Largest code threshold at which hard feedback still cancels every stream.

    For the block system this is the limiting SINR of the two-stage
    recursion.  For the coupled system it is found by bisection on
    :func:`hard_feedback_collapses`.
    """
    if not coupled:
        x_top = block_fixed_points(f, alpha, sigma2).largest
        return 1.0 / (alpha * x_top)
    lo, hi = 0.0, 1.0 / (alpha * sigma2)
    if hard_feedback_collapses(f, alpha, sigma2, hi, W, T_max):
        return hi
    while hi - lo > rtol * hi:
        mid = 0.5 * (lo + hi)
        if hard_feedback_collapses(f, alpha, sigma2, mid, W, T_max):
            lo = mid
        else:
            hi = mid
    return lo


def _two_stage(f, alpha, sigma2, a_eff, s_eff, coupled, W, T_max, schedule):
    points = block_fixed_points(f, a_eff, s_eff)
    x_top = points.largest
    if not coupled:
        x, branch = x_top, Branch.BLOCK
    elif points.n_roots == 1:
        x, branch = x_top, Branch.COUPLED_SINGLE
    else:
        x1 = points.smallest
        if W is None:
            low = min_potential(f, a_eff, s_eff, points=points)[1] >= -POTENTIAL_TOL
        else:
            tr = run_coupled_de(f, a_eff, s_eff, W, T_max, schedule, record_every=10**9)
            low = _chain_reaches(tr.final, x1, W)
        x, branch = (x1, Branch.COUPLED_LOW) if low else (x_top, Branch.COUPLED_HIGH)
    sinr = 1.0 / (a_eff * x)
    return RateResult(alpha * float(f.capacity(sinr)), alpha, sigma2, a_eff, s_eff, x, sinr,
                      branch, schedule, coupled, W, {"n_roots": points.n_roots})


def achievable_rate(f: MseFunction, alpha: float, sigma2: float,
                    schedule: Schedule | None = None, coupled: bool = False,
                    W: int | None = None, L: int | None = None,
                    T_max: int | None = None) -> RateResult:
    """Sum-rate of a block or coupled system.

    Two-stage: ``alpha * C_A(1/(alpha' x))`` with ``x`` the largest fixed
    point (block), or the smallest one when the coupled chain reaches it.
    With ``W=None`` the coupled decision uses the potential (infinitely wide
    window), otherwise the coupled recursion is run at that ``W``.

    Hard feedback: codes of rate ``C_A(theta)`` per stream.  A given
    ``schedule.theta`` is tested for full cancellation (see
    :func:`hard_feedback_rate` for a matched threshold).  A threshold that is never reached
    falls back to two-stage decoding at the limiting SINR (``Branch.STALLED``).
    """
    if not alpha > 0 or not sigma2 > 0:
        raise ValueError("alpha and sigma2 must be positive")
    schedule = schedule or Schedule.two_stage()
    if coupled and W is not None and T_max is None:
        T_max = 12 * (2 * W + 1)
    a_eff, s_eff = effective_load(alpha, sigma2, L)
    if schedule.kind is ScheduleKind.TWO_STAGE:
        return _two_stage(f, alpha, sigma2, a_eff, s_eff, coupled, W, T_max, schedule)

    theta = schedule.theta
    if not coupled:
        tr = run_block_de(f, a_eff, s_eff, schedule)
        done = bool(tr.final <= s_eff * (1 + COLLAPSE_RTOL))
    else:
        done = hard_feedback_collapses(f, a_eff, s_eff, theta, W, T_max)
    if done:
        return RateResult(alpha * float(f.capacity(theta)), alpha, sigma2, a_eff, s_eff, s_eff,
                          theta, Branch.DECODED, schedule, coupled, W, {"theta": theta})
    fallback = _two_stage(f, alpha, sigma2, a_eff, s_eff, coupled, W, T_max,
                          Schedule.two_stage())
    return RateResult(fallback.rate, alpha, sigma2, a_eff, s_eff, fallback.x, fallback.sinr,
                      Branch.STALLED, schedule, coupled, W, {"theta": theta})


def hard_feedback_rate(f: MseFunction, alpha: float, sigma2: float, coupled: bool = True,
                       W: int | None = None, L: int | None = None) -> RateResult:
    """Hard-feedback rate with the code threshold matched to the system."""
    a_eff, s_eff = effective_load(alpha, sigma2, L)
    theta = theta_star(f, a_eff, s_eff, W=W, coupled=coupled)
    return achievable_rate(f, alpha, sigma2, Schedule.hard_feedback(theta), coupled, W, L)


def optimal_load(f: MseFunction, sigma2: float, coupled: bool = False,
                 schedule: Schedule | None = None, L: int | None = None,
                 bounds: tuple | None = None, n_grid: int = 48, xtol: float = 1e-6):
    """Load maximizing :func:`achievable_rate`; returns ``(alpha_opt, RateResult)``.

    A log-spaced grid locates the best cell, then a bounded Brent search
    refines inside it.  The rate can drop abruptly where the fixed point
    jumps, so the best point evaluated is returned.
    """
    cap = awgn_capacity(sigma2)
    lo, hi = bounds or (0.05, 3.0 * cap + 3.0)
    seen: dict[float, RateResult] = {}

    def rate(a):
        a = float(a)
        if a not in seen:
            seen[a] = achievable_rate(f, a, sigma2, schedule, coupled, L=L)
        return seen[a].rate

    grid = np.geomspace(lo, hi, n_grid)
    vals = [rate(a) for a in grid]
    k = int(np.argmax(vals))
    a_lo, a_hi = grid[max(k - 1, 0)], grid[min(k + 1, n_grid - 1)]
    optimize.minimize_scalar(lambda a: -rate(a), bounds=(a_lo, a_hi), method="bounded",
                             options={"xatol": xtol * a_hi})
    best = max(seen, key=lambda a: seen[a].rate)
    return best, seen[best]


@dataclass(frozen=True)
class GapBounds:
    """Gap-to-capacity bounds at one noise level.

    Entries whose preconditions fail are ``nan`` and listed in
    ``not_applicable``.
    """

    sigma2: float
    capacity: float
    coupled_upper: float
    coupled_upper_asymptotic: float
    finite_size: float
    coupled_asymptote: float
    lower_2pam: float
    hard_feedback_upper: float
    alpha_guaranteed: float
    not_applicable: tuple = ()

    def applicable(self, name: str) -> bool:
        return name not in self.not_applicable

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "not_applicable"}


def finite_size_gap(sigma2: float, L: int | None, M: int | None) -> float:
    """Excess gap of a finite (L, M) system; zero in the large-system limit."""
    if L is None or M is None:
        return 0.0
    cap = awgn_capacity(sigma2)
    return (0.5 * math.log2((sigma2 + 1.0) / (sigma2 + 1.0 - 1.0 / L))
            + (cap - 1.0) / (M - 1))


def gap_lower_bound(f: MseFunction, alpha: float, sigma2: float) -> float:
    """Area lower bound on the coupled gap for a general constellation."""
    top = 1.0 + sigma2
    g = float(f(1.0 / (alpha * top)))
    return (0.5 - 0.5 * g - sigma2 / alpha) / (2.0 * LN2 * top)


def gap_lower_bound_2pam(alpha: float, sigma2: float) -> float:
    """2-PAM specialization of :func:`gap_lower_bound` via g2(s) <= 1/(1+s)."""
    top = 1.0 + sigma2
    return (0.5 / (1.0 + alpha * top) - sigma2 / alpha) / (2.0 * LN2 * top)


def gap_bounds(sigma2: float, L: int | None = None, M: int | None = None,
               alpha: float | None = None,
               gap_constant: float = GAP_CONSTANT) -> GapBounds:
    """Bounds on ``C(sigma^2) - R`` for 2-PAM signalling.

    ``alpha`` is only used by the hard-feedback bound ``1/(2 ln2 alpha)``,
    which needs ``sigma^2 <= 0.1`` and ``alpha > 4``.  The two-stage upper
    bound needs ``C >= 4.26``.
    """
    cap = awgn_capacity(sigma2)
    skip = []
    fin = finite_size_gap(sigma2, L, M)
    upper_asym = gap_constant / cap
    upper = upper_asym + fin
    if cap < GAP_MIN_CAPACITY:
        skip.append("coupled_upper")
        upper = upper_asym = math.nan
    hard = math.nan
    if alpha is None or not (sigma2 <= 0.1 and alpha > 4):
        skip.append("hard_feedback_upper")
    else:
        hard = 1.0 / (2.0 * LN2 * alpha)
    return GapBounds(
        sigma2=sigma2, capacity=cap, coupled_upper=upper, coupled_upper_asymptotic=upper_asym,
        finite_size=fin,
        coupled_asymptote=1.0 / (4 * LN2 * cap) + 1.0 / (12 * LN2 * cap * cap),
        lower_2pam=gap_lower_bound_2pam(cap, sigma2), hard_feedback_upper=hard,
        alpha_guaranteed=cap - 1.08 / cap, not_applicable=tuple(skip))


def coupled_gap(f: MseFunction, sigma2: float, rtol: float = 1e-12):
    """``C - R_coup(alpha*)`` in the large-system limit; returns ``(gap, alpha*, RateResult)``."""
    a = alpha_star(f, sigma2, rtol=rtol)
    res = achievable_rate(f, a, sigma2, coupled=True)
    return awgn_capacity(sigma2) - res.rate, a, res


@dataclass(frozen=True)
class MapComparison:
    eta: float
    c_joint: float
    c_sep: float
    joint_sep_gap: float
    etas: tuple


def map_comparison(f: MseFunction, alpha: float, sigma2: float) -> MapComparison:
    """Joint versus separate MAP decoding for 2-PAM in the large-system limit.

    Roots of ``1/eta = 1 + g2(eta/(alpha sigma2))/sigma2`` map one to one onto
    the block fixed points through ``eta = sigma2/x``; the root with the
    smallest joint rate is selected.
    """
    if not alpha > 0 or not sigma2 > 0:
        raise ValueError("alpha and sigma2 must be positive")
    if f.bits != 1:
        raise ValueError("map_comparison is defined for 2-PAM")
    points = block_fixed_points(f, alpha, sigma2)
    etas = sorted(sigma2 / x for x in points.roots)

    def joint(eta):
        return (eta - 1.0 - math.log(eta)) / sigma2 + alpha * float(f.capacity(eta / (alpha * sigma2)))

    eta = min(etas, key=joint)
    c_sep = alpha * float(f.capacity(eta / (alpha * sigma2)))
    penalty = (eta - 1.0 - math.log(eta)) / sigma2
    return MapComparison(eta, c_sep + penalty, c_sep, penalty, tuple(etas))
