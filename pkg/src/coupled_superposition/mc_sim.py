"""Chip-level Monte-Carlo simulation of the superposition channel and its
iterative interference-cancellation demodulator.

Each stream carries ``N`` symbols of a unit-energy PAM alphabet.  Every symbol
is copied ``M1`` times, the ``M1*N`` replicas are permuted, and each permuted
replica is spread over ``M2`` chips by a random +-1 signature, so every symbol
occupies ``M = M1*M2`` chips.  Chips are scaled by ``sqrt(1/L)`` and the
streams are superposed with their delays:

    y_c = sum_l sqrt(1/L) s_{l,c-tau_l} v_{l, j(l, c-tau_l)} + n_c

Block systems use zero delays.  Coupled systems launch groups of
``L_w = L/(2W+1)`` streams every ``N_w = MN/(2W+1)`` chips.

The demodulator exchanges extrinsic messages: the estimate a symbol sends to
one of its chips is built from its other ``M-1`` chips only.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .density_evolution import Schedule, ScheduleKind
from .mse import Constellation, MseFunction
from .params import SystemParams

log = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-6  # relative to sigma^2
SINR_CAP = 1e12


def _rng(seed, stream: int) -> np.random.Generator:
    """Counter-based generator for one (trial seed, purpose) pair."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


@dataclass
class McSystem:
    """Graph of one simulated system.

    ``pos[l, k]``, ``sym[l, k]`` and ``sign[l, k]`` give, for chip ``k`` of
    stream ``l``, its channel position, the symbol it carries and its
    signature sign.  ``n_groups`` groups of ``L_w`` streams are launched; a
    block system is a single group of ``L`` streams.
    """

    params: SystemParams
    seed: int
    n_groups: int
    delays: np.ndarray
    pos: np.ndarray
    sym: np.ndarray
    sign: np.ndarray
    n_chips: int
    four_cycles: int | None = None
    expurgated: bool = False

    @property
    def n_streams(self) -> int:
        return self.pos.shape[0]

    @property
    def group_size(self) -> int:
        return self.params.L_w if self.params.coupled else self.params.L

    @property
    def group(self) -> np.ndarray:
        return np.arange(self.n_streams) // self.group_size

    @property
    def subsection_length(self) -> int:
        return self.params.N_w if self.params.coupled else self.params.M * self.params.N

    @property
    def n_subsections(self) -> int:
        return self.n_chips // self.subsection_length

    @property
    def amplitude(self) -> float:
        return math.sqrt(1.0 / self.params.L)

    def replica_sets(self, stream: int):
        """Channel positions T(j, l) for every symbol of ``stream`` (shape ``(N, M)``)."""
        order = np.argsort(self.sym[stream], kind="stable")
        return self.pos[stream][order].reshape(self.params.N, self.params.M)

    def occupancy(self) -> np.ndarray:
        """|J(t)|: number of symbols sharing each channel position."""
        return np.bincount(self.pos.ravel(), minlength=self.n_chips)


def _slot_symbols(rng, M1, N):
    """Symbol index carried by each permuted replica slot."""
    return rng.permutation(M1 * N) % N


def _pair_cycles(a: np.ndarray, b: np.ndarray, N: int) -> int:
    """4-cycles between two aligned streams: repeated (symbol, symbol) slot pairs."""
    counts = np.bincount(a * N + b, minlength=N * N)
    return int(np.sum(counts * (counts - 1) // 2))


def _cycles_against(prev: np.ndarray, cand: np.ndarray, N: int) -> int:
    """4-cycles between ``cand`` and every row of ``prev`` (all aligned)."""
    if prev.shape[0] == 0:
        return 0
    keys = (np.arange(prev.shape[0])[:, None] * N + prev) * N + cand[None, :]
    counts = np.bincount(keys.ravel(), minlength=prev.shape[0] * N * N)
    return int(np.sum(counts * (counts - 1) // 2))


def count_four_cycles(system: McSystem) -> int:
    """Number of 4-cycles between symbols and replica slots.

    Two symbols of different streams close a 4-cycle when they share two
    slots.  The ``M2`` chips of one slot are counted as a single node.
    """
    p = system.params
    M2 = p.M2
    slots = system.pos[:, ::M2] // M2
    syms = system.sym[:, ::M2]
    total = 0
    S = system.n_streams
    for l in range(S):
        for m in range(l + 1, S):
            common, ia, ib = np.intersect1d(slots[l], slots[m], assume_unique=True,
                                            return_indices=True)
            if len(common) > 1:
                total += _pair_cycles(syms[l][ia], syms[m][ib], p.N)
    return total


def build_system(params: SystemParams, seed: int, expurgate: bool = False,
                 n_groups: int | None = None, retries: int = 4) -> McSystem:
    """Draw permutations, signatures and delays for one trial.

    ``expurgate`` draws up to ``retries`` permutations per stream and keeps
    the one closing the fewest 4-cycles with streams that overlap it fully.
    Removing every cycle is impossible when ``M**2`` is large compared with
    ``N``; the remaining count is stored in ``four_cycles``.
    """
    L, M1, M2, N, M = params.L, params.M1, params.M2, params.N, params.M
    rng = _rng(seed, 0)
    if params.coupled:
        span = params.span
        n_groups = n_groups or 4 * span
        if n_groups < 1:
            raise ValueError("need at least one group")
        n_streams = n_groups * params.L_w
        delays = (np.arange(n_streams) // params.L_w) * params.N_w
        n_chips = (n_groups - 1) * params.N_w + M * N
        if expurgate and params.N_w % M2:
            raise ValueError("expurgation needs N_w to be a multiple of M2")
    else:
        n_groups = 1
        n_streams = L
        delays = np.zeros(L, dtype=np.int64)
        n_chips = M * N

    slot_sym = np.empty((n_streams, M1 * N), dtype=np.int64)
    cycles = 0
    for l in range(n_streams):
        if expurgate:
            # streams with the same delay are aligned slot by slot
            same = slot_sym[:l][delays[:l] == delays[l]]
            best, best_c = None, None
            for _ in range(max(retries, 1)):
                cand = _slot_symbols(rng, M1, N)
                c = _cycles_against(same, cand, N)
                if best_c is None or c < best_c:
                    best, best_c = cand, c
                if c == 0:
                    break
            slot_sym[l] = best
            cycles += best_c
        else:
            slot_sym[l] = _slot_symbols(rng, M1, N)
    sign = rng.choice(np.array([-1, 1], dtype=np.int8), size=(n_streams, M * N))
    sym = np.repeat(slot_sym, M2, axis=1)
    pos = delays[:, None] + np.arange(M * N)[None, :]
    system = McSystem(params, int(seed), n_groups, delays, pos, sym, sign, n_chips,
                      expurgated=expurgate)
    if expurgate:
        system.four_cycles = count_four_cycles(system) if params.coupled else cycles
        if system.four_cycles:
            log.info("expurgation left %d 4-cycles (M=%d, N=%d)", system.four_cycles, M, N)
    return system


def draw_data(system: McSystem, seed: int | None = None) -> np.ndarray:
    """Uniform symbols, shape ``(n_streams, N)``."""
    const = Constellation.pam(system.params.B)
    rng = _rng(system.seed if seed is None else seed, 1)
    idx = rng.integers(0, const.size, size=(system.n_streams, system.params.N))
    return const.points[idx]


def transmit(system: McSystem, data: np.ndarray, sigma2: float | None = None,
             noise_seed: int | None = None) -> np.ndarray:
    """Superpose all streams and add real Gaussian noise of power ``sigma2``."""
    data = np.asarray(data, dtype=float)
    if data.shape != (system.n_streams, system.params.N):
        raise ValueError(f"data must have shape {(system.n_streams, system.params.N)}")
    sigma2 = system.params.sigma2 if sigma2 is None else sigma2
    chips = system.amplitude * system.sign * np.take_along_axis(data, system.sym, axis=1)
    y = np.bincount(system.pos.ravel(), weights=chips.ravel(), minlength=system.n_chips)
    if sigma2 > 0:
        rng = _rng(system.seed if noise_seed is None else noise_seed, 2)
        y = y + math.sqrt(sigma2) * rng.standard_normal(system.n_chips)
    return y


@dataclass
class McResult:
    """Per-iteration measurements of one trial.

    ``sinr`` and ``mse`` are pooled over all messages; ``sinr_stream`` and
    ``sinr_sub`` resolve them per stream and per channel subsection.
    ``residual_power`` is the true interference-plus-noise power seen by a
    message, averaged over positions.  ``decoded`` flags streams cancelled by
    hard feedback.
    """

    seed: int
    sinr: np.ndarray
    mse: np.ndarray
    mse_post: np.ndarray
    sinr_stream: np.ndarray
    sinr_sub: np.ndarray
    residual_power: np.ndarray
    variance_est: np.ndarray
    decoded: np.ndarray | None = None
    floor_hits: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def n_iter(self) -> int:
        return len(self.sinr)

    def sinr_db(self):
        return 10 * np.log10(self.sinr)

    def rows(self, trial: int = 0):
        """CSV rows ``(trial, iter, t_or_stream, mse, sinr_db)``; ``t=0`` is the pooled value."""
        for i in range(self.n_iter):
            yield trial, i + 1, 0, float(self.mse[i]), float(10 * np.log10(self.sinr[i]))
            if self.sinr_sub.shape[1] > 1:
                for t, g in enumerate(self.sinr_sub[i], start=1):
                    yield trial, i + 1, t, math.nan, float(10 * np.log10(g))


def _sinr(err_power):
    with np.errstate(divide="ignore"):
        return np.minimum(1.0 / np.asarray(err_power), SINR_CAP)


def demodulate(system: McSystem, y: np.ndarray, iters: int, schedule: Schedule | None = None,
               truth: np.ndarray | None = None, variance: str = "empirical",
               sigma2: float | None = None) -> McResult:
    """Iterative soft interference cancellation with extrinsic messages.

    Per iteration: cancel the previous messages of all other streams from
    every chip, estimate the noise-plus-interference power of each channel
    subsection, combine the other ``M-1`` chips of each symbol by
    maximal-ratio weights and apply the conditional-mean estimator.

    ``variance="empirical"`` estimates each subsection's power from the
    residuals (their mean square minus the known own-signal power);
    ``"genie"`` uses the true residual power.  ``truth`` (shape
    ``(n_streams, N)``) is needed for measurements and hard feedback.
    """
    if iters < 1:
        raise ValueError("iters must be at least 1")
    if variance not in ("empirical", "genie"):
        raise ValueError("variance must be 'empirical' or 'genie'")
    schedule = schedule or Schedule.two_stage()
    p = system.params
    sigma2 = p.sigma2 if sigma2 is None else sigma2
    const = Constellation.pam(p.B)
    S, N = system.n_streams, p.N
    a = system.amplitude
    pos, sign = system.pos, system.sign.astype(float)
    flat = (np.arange(S)[:, None] * N + system.sym).ravel()
    sub = pos // system.subsection_length
    n_sub = system.n_subsections
    sub_count = np.bincount(sub.ravel(), minlength=n_sub)
    if truth is None and (schedule.kind is ScheduleKind.HARD_FEEDBACK or variance == "genie"):
        raise ValueError("truth is required for hard feedback and genie variances")
    v_chip = None if truth is None else np.take_along_axis(truth, system.sym, axis=1)
    floor = sigma2 * VARIANCE_FLOOR if sigma2 > 0 else 1e-12

    msg = np.zeros((S, p.M * N))         # message each chip receives from its symbol
    decoded = np.zeros(S, dtype=bool)
    out = {k: [] for k in ("sinr", "mse", "mse_post", "sinr_stream", "sinr_sub", "res", "var",
                           "dec")}
    floor_hits = 0
    for _ in range(iters):
        est = np.bincount(pos.ravel(), weights=(a * sign * msg).ravel(), minlength=system.n_chips)
        # residual for chip k of stream l: own contribution added back
        r = (y - est)[pos] + a * sign * msg
        if v_chip is not None:
            interf = r - a * sign * v_chip
            res_sub = np.bincount(sub.ravel(), weights=(interf**2).ravel(), minlength=n_sub)
            res_sub = res_sub / np.maximum(sub_count, 1)
        if variance == "genie":
            var_sub = res_sub
        else:
            var_sub = np.bincount(sub.ravel(), weights=(r**2).ravel(), minlength=n_sub)
            var_sub = var_sub / np.maximum(sub_count, 1) - a * a * const.energy()
        low = var_sub < floor
        floor_hits += int(np.sum(low & (sub_count > 0)))
        var_sub = np.where(low, floor, var_sub)

        w = (a * a) / var_sub[sub]           # per-chip SNR contribution
        u = w * sign * r / a                 # weighted matched-filter output
        U = np.bincount(flat, weights=u.ravel(), minlength=S * N).reshape(S, N)
        G = np.bincount(flat, weights=w.ravel(), minlength=S * N).reshape(S, N)
        U_chip = np.take_along_axis(U, system.sym, axis=1)
        G_chip = np.take_along_axis(G, system.sym, axis=1)
        g_ext = G_chip - w
        z_ext = (U_chip - u) / g_ext
        msg = const.conditional_mean(z_ext, g_ext)
        if decoded.any():
            msg[decoded] = v_chip[decoded]

        if v_chip is not None:
            err_z = (z_ext - v_chip) ** 2
            err_v = (msg - v_chip) ** 2
            z_post = U / G
            v_post = const.conditional_mean(z_post, G)
            stream_err = np.mean((z_post - truth) ** 2, axis=1)
            sub_err = np.bincount(sub.ravel(), weights=err_z.ravel(), minlength=n_sub)
            out["sinr"].append(_sinr(np.mean(err_z)))
            out["mse"].append(float(np.mean(err_v)))
            out["mse_post"].append(float(np.mean((np.where(decoded[:, None], truth, v_post)
                                                  - truth) ** 2)))
            out["sinr_stream"].append(np.where(decoded, SINR_CAP, _sinr(stream_err)))
            out["sinr_sub"].append(_sinr(sub_err / np.maximum(sub_count, 1)))
            out["res"].append(float(np.sum(res_sub * sub_count) / np.sum(sub_count)))
            if schedule.kind is ScheduleKind.HARD_FEEDBACK:
                decoded |= out["sinr_stream"][-1] >= schedule.theta
                msg[decoded] = v_chip[decoded]
            out["dec"].append(decoded.copy())
        out["var"].append(var_sub.copy())

    if v_chip is None:
        empty = np.full(iters, np.nan)
        return McResult(system.seed, empty, empty, empty, np.full((iters, S), np.nan),
                        np.full((iters, n_sub), np.nan), empty, np.asarray(out["var"]),
                        None, floor_hits, {"messages": msg})
    return McResult(system.seed, np.asarray(out["sinr"]), np.asarray(out["mse"]),
                    np.asarray(out["mse_post"]), np.asarray(out["sinr_stream"]),
                    np.asarray(out["sinr_sub"]), np.asarray(out["res"]),
                    np.asarray(out["var"]),
                    np.asarray(out["dec"]) if schedule.kind is ScheduleKind.HARD_FEEDBACK else None,
                    floor_hits, {"messages": msg})


def measure_sinr(system: McSystem, truth: np.ndarray, estimates: np.ndarray) -> np.ndarray:
    """Per-stream SINR ``E v^2 / mean (estimate - v)^2`` of combined statistics.

    Perfect estimates give the saturation cap.
    """
    truth = np.asarray(truth, dtype=float)
    err = np.mean((np.asarray(estimates, dtype=float) - truth) ** 2, axis=1)
    power = np.mean(truth**2, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(err > 0, np.minimum(power / err, SINR_CAP), SINR_CAP)


def group_sum_rate(system: McSystem, sinr_stream: np.ndarray, f: MseFunction | None = None):
    """Sum-rate ``alpha * mean_g C_A(SINR_g)`` over stream groups.

    A group's SINR pools the error power of its streams.  Returns
    ``(rate, rate_terminated)``; the second charges the ramp-down chips of a
    terminated chain, ``n_groups/(n_groups + 2W)``.
    """
    f = f or MseFunction(system.params.B)
    g = system.group
    n = system.n_groups
    inv = np.bincount(g, weights=1.0 / np.asarray(sinr_stream, dtype=float), minlength=n)
    per_group = 1.0 / (inv / np.bincount(g, minlength=n))
    rate = system.params.alpha * float(np.mean(f.capacity(np.minimum(per_group, SINR_CAP))))
    W = system.params.W or 0
    return rate, rate * n / (n + 2 * W)


@dataclass
class TrialSet:
    """Trials over several seeds with identical parameters."""

    params: SystemParams
    seeds: list
    results: list
    systems_info: list
    config: dict = field(default_factory=dict)

    def mean_sinr(self) -> np.ndarray:
        """Per-iteration SINR from the error power averaged over trials."""
        return 1.0 / np.mean([1.0 / r.sinr for r in self.results], axis=0)

    def sinr_db_std(self) -> np.ndarray:
        return np.std([10 * np.log10(r.sinr) for r in self.results], axis=0, ddof=1)

    def mean_mse(self) -> np.ndarray:
        return np.mean([r.mse for r in self.results], axis=0)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trial", "iter", "t_or_stream", "mse", "sinr_db"])
            for k, r in enumerate(self.results):
                for row in r.rows(k):
                    w.writerow([row[0], row[1], row[2], repr(row[3]), repr(row[4])])

    def manifest(self) -> dict:
        return {"params": self.params.to_dict(), "seeds": list(self.seeds),
                "config": self.config, "systems": self.systems_info}

    def write_manifest(self, path):
        Path(path).write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")


def run_trials(params: SystemParams, seeds, iters: int, schedule: Schedule | None = None,
               expurgate: bool = False, n_groups: int | None = None,
               variance: str = "empirical", retries: int = 2) -> TrialSet:
    """Build, transmit and demodulate one system per seed."""
    results, info = [], []
    for seed in seeds:
        system = build_system(params, seed, expurgate=expurgate, n_groups=n_groups,
                              retries=retries)
        data = draw_data(system)
        y = transmit(system, data)
        res = demodulate(system, y, iters, schedule, truth=data, variance=variance)
        rate, rate_term = group_sum_rate(system, res.sinr_stream[-1])
        res.extra.pop("messages", None)
        res.extra.update(sum_rate=rate, sum_rate_terminated=rate_term)
        results.append(res)
        info.append({"seed": int(seed), "n_groups": system.n_groups, "n_chips": system.n_chips,
                     "four_cycles": system.four_cycles, "floor_hits": res.floor_hits})
    left = [i["four_cycles"] for i in info if i["four_cycles"]]
    if left:
        log.warning("expurgation left 4-cycles in %d of %d systems (at most %d)",
                    len(left), len(info), max(left))
    config = {"iters": iters, "expurgate": expurgate, "n_groups": n_groups,
              "variance": variance, "retries": retries,
              "schedule": (schedule or Schedule.two_stage()).kind.value,
              "theta": (schedule or Schedule.two_stage()).theta}
    return TrialSet(params, list(seeds), results, info, config)
