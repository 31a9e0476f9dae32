"""Acceptance checks for the analysis and simulation stack.

Each check is a pure function of its tolerances and returns a
:class:`CheckResult`.  Results are memoized per process, so a run that only
changes one tolerance recomputes only the affected check.
"""

from __future__ import annotations

import functools
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .density_evolution import run_block_de, run_coupled_de
from .fixed_points import alpha_s, block_fixed_points, check_fixed_point_bounds
from .mse import MseFunction, QuadratureError, awgn_capacity, integral_gmse, sigma2_for_capacity
from .params import SystemParams
from .potential import alpha_star, u_value
from .rates import GAP_CONSTANT, achievable_rate, coupled_gap, gap_bounds, hard_feedback_rate


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    elapsed: float
    budget: float
    detail: dict = field(default_factory=dict, compare=False, hash=False)

    @property
    def in_budget(self) -> bool:
        return self.elapsed <= self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.in_budget

    def line(self) -> str:
        status = "PASS" if self.ok else "FAIL"
        extra = "" if self.in_budget else f" (over budget {self.budget:g} s)"
        return f"[{status}] {self.name}: {self.elapsed:.2f} s{extra}"


DEFAULT_TOLERANCES = {
    "x3_anchor": 5e-4,
    "alpha_star": 0.02,
    "u_anchor": 1e-2,
    "alpha_s": 0.02,
    "asymptote_ratio": 0.1,
    "identity": 1e-6,
    "de_converge": 1e-3,
    "de_stall": 1e-2,
    "mc_db": 0.5,
}


@functools.lru_cache(maxsize=None)
def _f(bits: int) -> MseFunction:
    return MseFunction(bits)


def _timed(name, budget, fn):
    t = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, bool(passed), time.perf_counter() - t, budget, detail)


@functools.lru_cache(maxsize=None)
def check_fixed_point_anchor(tol: float = DEFAULT_TOLERANCES["x3_anchor"]) -> CheckResult:
    def run():
        x3 = block_fixed_points(_f(1), 4.0, 0.0).largest
        return abs(x3 - 0.7396) <= tol, {"x3": x3, "target": 0.7396}
    return _timed("fixed_point_anchor", 1.0, run)


@functools.lru_cache(maxsize=None)
def check_potential_anchors(tol: float = DEFAULT_TOLERANCES["alpha_star"],
                            u_tol: float = DEFAULT_TOLERANCES["u_anchor"]) -> CheckResult:
    def run():
        f = _f(1)
        stars = {}
        ok = True
        for s2, target in ((0.0129, 3.0), (0.003347, 4.0), (0.000855, 5.0)):
            a = alpha_star(f, s2, rtol=1e-7)
            stars[s2] = a
            ok &= abs(a - target) <= tol * target
        u = u_value(f, 2.5, 0.0254)
        ok &= abs(u) <= u_tol
        return ok, {"alpha_star": stars, "u(2.5, 0.0254)": u}
    return _timed("potential_anchors", 60.0, run)


@functools.lru_cache(maxsize=None)
def check_block_saturation(tol: float = DEFAULT_TOLERANCES["alpha_s"]) -> CheckResult:
    def run():
        a = alpha_s(_f(1), 1e-6)
        return abs(a - 2.07) <= tol * 2.07, {"alpha_s": a, "target": 2.07}
    return _timed("block_saturation", 10.0, run)


@functools.lru_cache(maxsize=None)
def _coupled_gap(capacity: float):
    return coupled_gap(_f(1), sigma2_for_capacity(capacity))


@functools.lru_cache(maxsize=None)
def check_gap_sandwich(constant: float = GAP_CONSTANT) -> CheckResult:
    def run():
        rows = []
        ok = True
        for cap in (5, 6, 8, 10, 12):
            s2 = sigma2_for_capacity(cap)
            gap, a, _ = _coupled_gap(cap)
            b = gap_bounds(s2, gap_constant=constant)
            row_ok = b.lower_2pam <= gap <= constant / cap
            ok &= row_ok
            rows.append({"C": cap, "alpha_star": a, "gap": gap, "lower_2pam": b.lower_2pam,
                         "upper": constant / cap, "ok": row_ok})
        return ok, {"constant": constant, "rows": rows}
    return _timed("gap_sandwich", 120.0, run)


@functools.lru_cache(maxsize=None)
def check_gap_asymptotics(tol: float = DEFAULT_TOLERANCES["asymptote_ratio"]) -> CheckResult:
    def run():
        ratio = {}
        for cap in (20, 30):
            gap, _, _ = _coupled_gap(cap)
            ratio[cap] = gap / gap_bounds(sigma2_for_capacity(cap)).coupled_asymptote
        ok = abs(ratio[20] - 1) <= tol and abs(ratio[30] - 1) < abs(ratio[20] - 1)
        return ok, {"ratio": ratio}
    return _timed("gap_asymptotics", 120.0, run)


@functools.lru_cache(maxsize=None)
def check_hard_feedback_gap() -> CheckResult:
    def run():
        s2 = 0.05
        gaps, bounds = [], []
        for a in (5, 8, 16):
            res = hard_feedback_rate(_f(1), a, s2)
            gaps.append(res.gap)
            bounds.append(gap_bounds(s2, alpha=a).hard_feedback_upper)
        ok = all(g <= b for g, b in zip(gaps, bounds)) and gaps[0] > gaps[1] > gaps[2]
        return ok, {"gaps": gaps, "bounds": bounds}
    return _timed("hard_feedback_gap", 60.0, run)


@functools.lru_cache(maxsize=None)
def check_fixed_point_bounds_grid(n: int = 20) -> CheckResult:
    def run():
        f = _f(1)
        violations, applicable = [], 0
        for s2 in np.geomspace(1e-4, 1.0, n):
            cap = awgn_capacity(s2)
            for a in np.linspace(0.05, max(cap, 4.0), n):
                for c in check_fixed_point_bounds(f, float(a), float(s2)):
                    if c.status == "n/a":
                        continue
                    applicable += 1
                    if c.status == "fail":
                        violations.append((float(a), float(s2), c.part, c.inequality))
        return not violations and applicable > 0, {"applicable": applicable,
                                                   "violations": violations}
    return _timed("fixed_point_bounds_grid", 120.0, run)


@functools.lru_cache(maxsize=None)
def check_mmse_identity(tol: float = DEFAULT_TOLERANCES["identity"], n: int = 50,
                        seed: int = 7) -> CheckResult:
    def run():
        rng = np.random.default_rng(seed)
        worst = 0.0
        failures = 0
        for bits in (1, 2, 3):
            f = _f(bits)
            for _ in range(n):
                a, b = np.sort(10.0 ** rng.uniform(-3, 2, size=2))
                ref = 2 * math.log(2) * (f.capacity(b) - f.capacity(a))
                try:
                    area = integral_gmse(f, float(a), float(b), rtol=tol)
                except QuadratureError:
                    failures += 1
                    continue
                worst = max(worst, abs(area - ref) / max(abs(ref), 1e-300))
        return failures == 0 and worst <= tol, {"worst_rel": worst, "failures": failures}
    return _timed("mmse_capacity_identity", 120.0, run)


@functools.lru_cache(maxsize=None)
def check_de_structure(conv_tol: float = DEFAULT_TOLERANCES["de_converge"],
                       stall_tol: float = DEFAULT_TOLERANCES["de_stall"]) -> CheckResult:
    def run():
        f = _f(1)
        s2, W, T = 0.0129, 40, 400
        stop = 1e-12
        blk = run_block_de(f, 2.95, s2, stop_tol=stop)
        cpl = run_coupled_de(f, 2.95, s2, 0, T_max=10, stop_tol=stop)
        n = min(len(blk.x), len(cpl.x))
        w0 = float(np.max(np.abs(cpl.x[:n] - blk.x[:n, None])))
        x1 = block_fixed_points(f, 2.95, s2).smallest
        good = run_coupled_de(f, 2.95, s2, W, T_max=T, record_every=10**9)
        decoded = good.final[: T - 4 * W]
        conv = float(np.max(decoded / x1 - 1))
        x3 = block_fixed_points(f, 3.2, s2).largest
        # the stalled profile keeps boundary layers about 5W deep at both ends
        T_bad = 15 * W
        bad = run_coupled_de(f, 3.2, s2, W, T_max=T_bad, record_every=10**9)
        mid = bad.final[5 * W: T_bad - 5 * W]
        stall = float(np.max(np.abs(mid / x3 - 1)))
        ok = w0 <= stop and conv <= conv_tol and stall <= stall_tol
        return ok, {"w0_max_diff": w0, "converged_rel": conv, "stall_rel": stall,
                    "checked_positions": T - 4 * W,
                    "stall_window": (5 * W + 1, T_bad - 5 * W)}
    return _timed("de_structure", 120.0, run)


@functools.lru_cache(maxsize=None)
def check_mc_vs_de(tol_db: float = DEFAULT_TOLERANCES["mc_db"], seeds: int = 20,
                   iters: int = 20, coupled_seeds: int = 2) -> CheckResult:
    def run():
        from .mc_sim import run_trials

        f = _f(1)
        p = SystemParams(L=100, M1=50, M2=1, N=200, sigma2=0.1)
        ts = run_trials(p, range(seeds), iters, expurgate=True)
        de = run_block_de(f, p.alpha_eff, p.sigma2_eff, max_iters=iters, stop_tol=0.0)
        g_de = 1.0 / (p.alpha_eff * de.x[:iters])
        diff = float(np.max(np.abs(10 * np.log10(ts.mean_sinr() / g_de))))
        # coupled desk-scale run; 2W+1 must divide L and MN
        pc = SystemParams(L=120, M1=60, M2=1, N=42, sigma2=0.02, W=7)
        tc = run_trials(pc, range(coupled_seeds), 60)
        rates = [r.extra["sum_rate"] for r in tc.results]
        block = achievable_rate(f, pc.alpha, pc.sigma2, L=pc.L).rate
        ok = diff <= tol_db and min(rates) > block
        return ok, {"max_db_diff": diff, "coupled_rates": rates, "block_de_rate": block,
                    "coupled_rates_terminated": [r.extra["sum_rate_terminated"]
                                                 for r in tc.results]}
    return _timed("mc_vs_de", 600.0, run)


CHECKS = {
    "fixed_point_anchor": lambda tol: check_fixed_point_anchor(tol["x3_anchor"]),
    "potential_anchors": lambda tol: check_potential_anchors(tol["alpha_star"], tol["u_anchor"]),
    "block_saturation": lambda tol: check_block_saturation(tol["alpha_s"]),
    "gap_sandwich": lambda tol: check_gap_sandwich(tol["gap_constant"]),
    "gap_asymptotics": lambda tol: check_gap_asymptotics(tol["asymptote_ratio"]),
    "hard_feedback_gap": lambda tol: check_hard_feedback_gap(),
    "fixed_point_bounds_grid": lambda tol: check_fixed_point_bounds_grid(),
    "mmse_capacity_identity": lambda tol: check_mmse_identity(tol["identity"]),
    "de_structure": lambda tol: check_de_structure(tol["de_converge"], tol["de_stall"]),
    "mc_vs_de": lambda tol: check_mc_vs_de(tol["mc_db"]),
}


def run_checks(names=None, gap_constant: float = GAP_CONSTANT,
               tolerances: dict | None = None) -> list[CheckResult]:
    """Run the named checks (all by default) in a fixed order."""
    tol = dict(DEFAULT_TOLERANCES, **(tolerances or {}))
    tol["gap_constant"] = gap_constant
    names = list(CHECKS) if names is None else list(names)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {unknown}")
    return [CHECKS[n](tol) for n in CHECKS if n in names]
