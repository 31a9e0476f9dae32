"""Command-line front end.

    csup <command> [--config FILE] [--key value ...] --out DIR

Commands: fixed-points, de, rates, simulate, verify.  Exit status is 0 on
success, 1 when a check fails and 2 on a configuration error.  Every run
writes its CSV files, a replayable ``run.cfg`` and ``manifest.json`` to DIR.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .density_evolution import Schedule, ScheduleKind, run_block_de, run_coupled_de
from .fixed_points import NoTransition, alpha_s, count_roots, sigma_s
from .mse import MseFunction, awgn_capacity
from .params import SystemParams, effective_load
from .rates import coupled_gap, gap_bounds, hard_feedback_rate, optimal_load
from .reports import ConfigError, finish_run, read_config_file, resolve_config, write_csv
from .verify import DEFAULT_TOLERANCES, run_checks

log = logging.getLogger("coupled_superposition")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG = 0, 1, 2

SCHEMAS = {
    "fixed-points": {
        "B": ("ints", "1,2,3"),
        "snr_db": ("floats", "0:30:2.5"),
        "n_scan": ("int", "4000"),
        "workers": ("int", "1"),
    },
    "de": {
        "alpha": ("float", "2.95"),
        "sigma2": ("float?", "0.0129"),
        "snr_db": ("float?", "none"),
        "B": ("int", "1"),
        "L": ("int?", "none"),
        "W": ("int?", "none"),
        "T_max": ("int?", "none"),
        "schedule": ("str", "two-stage"),
        "theta": ("float?", "none"),
        "max_iters": ("int", "200000"),
        "stop_tol": ("float", "1e-12"),
        "every": ("int", "1"),
    },
    "rates": {
        "B": ("ints", "1,2,3"),
        "snr_db": ("floats", "0:30:5"),
        "L": ("int?", "none"),
        "n_grid": ("int", "48"),
        "gaps": ("bool", "true"),
        "alpha_hard": ("floats", ""),
        "workers": ("int", "1"),
    },
    "simulate": {
        "L": ("int", "100"),
        "M1": ("int", "50"),
        "M2": ("int", "1"),
        "N": ("int", "200"),
        "B": ("int", "1"),
        "sigma2": ("float?", "0.1"),
        "snr_db": ("float?", "none"),
        "W": ("int?", "none"),
        "groups": ("int?", "none"),
        "iters": ("int", "20"),
        "seeds": ("ints", "0:3:1"),
        "expurgate": ("bool", "false"),
        "retries": ("int", "2"),
        "schedule": ("str", "two-stage"),
        "theta": ("float?", "none"),
        "variance": ("str", "empirical"),
    },
    "verify": {
        "checks": ("str", "all"),
        "gap_constant": ("float", "1.081"),
        **{f"tol_{k}": ("float", repr(v)) for k, v in DEFAULT_TOLERANCES.items()},
    },
}


def _pool_map(fn, items, workers):
    """Map preserving input order, optionally over a process pool."""
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def _sigma2(cfg) -> float:
    s2, db = cfg.get("sigma2"), cfg.get("snr_db")
    if db is not None:
        return 10.0 ** (-db / 10.0)
    if s2 is None or not s2 > 0:
        raise ConfigError("give a positive sigma2 or an snr_db")
    return s2


def _schedule(cfg) -> Schedule:
    kind = cfg["schedule"]
    if kind == ScheduleKind.TWO_STAGE.value:
        return Schedule.two_stage(cfg.get("theta"))
    if kind == ScheduleKind.HARD_FEEDBACK.value:
        if cfg.get("theta") is None or not cfg["theta"] > 0:
            raise ConfigError("hard-feedback schedule needs theta > 0")
        return Schedule.hard_feedback(cfg["theta"])
    raise ConfigError(f"unknown schedule {kind!r}")


def _db(v):
    return 10.0 * math.log10(v) if v > 0 else -math.inf


# fixed-points ---------------------------------------------------------------

def _fp_point(args):
    bits, db, n_scan = args
    f = MseFunction(bits)
    s2 = 10.0 ** (-db / 10.0)
    try:
        a = alpha_s(f, s2, n_scan=n_scan)
        n = count_roots(f, a * (1 + 1e-3), s2, n_scan)
    except NoTransition:
        a, n = math.nan, 1
    return bits, db, s2, a, n


def cmd_fixed_points(cfg):
    items = [(b, db, cfg["n_scan"]) for b in cfg["B"] for db in cfg["snr_db"]]
    rows = sorted(_pool_map(_fp_point, items, cfg["workers"]))
    meta = {"command": "fixed-points",
            "sigma_s2": {b: sigma_s(MseFunction(b)) for b in cfg["B"]},
            "note": "n_roots evaluated at 1.001 * alpha_s"}
    out = write_csv(cfg.out / "fixed_points.csv", ["B", "snr_db", "sigma2", "alpha_s", "n_roots"],
                    rows, meta)
    return [out], EXIT_OK


# de ---------------------------------------------------------------------------

def cmd_de(cfg):
    s2 = _sigma2(cfg)
    schedule = _schedule(cfg)
    f = MseFunction(cfg["B"])
    a_eff, s_eff = effective_load(cfg["alpha"], s2, cfg["L"])
    if cfg["W"] is None:
        tr = run_block_de(f, a_eff, s_eff, schedule, max_iters=cfg["max_iters"],
                          stop_tol=cfg["stop_tol"])
    else:
        tr = run_coupled_de(f, a_eff, s_eff, cfg["W"], cfg["T_max"], schedule,
                            max_iters=cfg["max_iters"], stop_tol=cfg["stop_tol"],
                            record_every=cfg["every"])
    every = cfg["every"] if cfg["W"] is None else 1
    meta = {"command": "de", "alpha_eff": a_eff, "sigma2_eff": s_eff,
            "schedule": schedule.kind.value, "converged": tr.converged,
            "iterations": tr.n_iter, "last_delta": tr.last_delta}
    out = write_csv(cfg.out / "de.csv", ["iter", "t", "x", "gamma"],
                    (row for _, row in tr.rows(every)), meta)
    return [out], EXIT_OK


# rates ------------------------------------------------------------------------

def _rate_point(args):
    bits, db, L, n_grid = args
    f = MseFunction(bits)
    s2 = 10.0 ** (-db / 10.0)
    a_b, r_b = optimal_load(f, s2, coupled=False, L=L, n_grid=n_grid)
    a_c, r_c = optimal_load(f, s2, coupled=True, L=L, n_grid=n_grid)
    return (bits, db, s2, awgn_capacity(s2), a_b, r_b.rate, _db(1 / (2 * r_b.rate * s2)),
            a_c, r_c.rate, _db(1 / (2 * r_c.rate * s2)), r_c.branch.value)


def _gap_point(db):
    s2 = 10.0 ** (-db / 10.0)
    gap, a, _ = coupled_gap(MseFunction(1), s2)
    b = gap_bounds(s2)
    ok = b.lower_2pam <= gap and (not b.applicable("coupled_upper") or gap <= b.coupled_upper)
    return (db, s2, b.capacity, a, gap, b.coupled_upper, b.coupled_asymptote, b.lower_2pam,
            gap / b.coupled_asymptote, int(ok))


def cmd_rates(cfg):
    workers, L = cfg["workers"], cfg["L"]
    items = [(b, db, L, cfg["n_grid"]) for b in cfg["B"] for db in cfg["snr_db"]]
    rows = sorted(_pool_map(_rate_point, items, workers), key=lambda r: (r[0], r[1]))
    outs = [write_csv(cfg.out / "rates.csv",
                      ["B", "snr_db", "sigma2", "capacity", "alpha_block", "rate_block",
                       "ebn0_db_block", "alpha_coupled", "rate_coupled", "ebn0_db_coupled",
                       "branch_coupled"], rows,
                      {"command": "rates", "L": L if L is not None else "large-system"})]
    if cfg["gaps"]:
        # gaps are meaningful where a three-root regime exists
        dbs = [db for db in cfg["snr_db"] if 10.0 ** (-db / 10.0) < sigma_s(MseFunction(1))]
        grow = sorted(_pool_map(_gap_point, dbs, workers))
        outs.append(write_csv(cfg.out / "gaps.csv",
                              ["snr_db", "sigma2", "capacity", "alpha_star", "gap", "coupled_upper",
                               "asymptote", "lower_2pam", "asymptote_ratio", "sandwich_ok"], grow,
                              {"command": "rates", "B": 1}))
    if cfg["alpha_hard"]:
        hrows = []
        for db in cfg["snr_db"]:
            s2 = 10.0 ** (-db / 10.0)
            for a in cfg["alpha_hard"]:
                r = hard_feedback_rate(MseFunction(1), a, s2, L=L)
                hrows.append((db, s2, a, r.sinr, r.rate, r.gap,
                              gap_bounds(s2, alpha=a).hard_feedback_upper, r.branch.value))
        outs.append(write_csv(cfg.out / "hard_feedback.csv",
                              ["snr_db", "sigma2", "alpha", "theta", "rate", "gap",
                               "upper", "branch"], hrows, {"command": "rates", "B": 1}))
    return outs, EXIT_OK


# simulate ---------------------------------------------------------------------

def cmd_simulate(cfg):
    from .mc_sim import run_trials

    s2 = _sigma2(cfg)
    try:
        params = SystemParams(L=cfg["L"], M1=cfg["M1"], M2=cfg["M2"], N=cfg["N"], B=cfg["B"],
                              sigma2=s2, W=cfg["W"], theta=cfg.get("theta"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if cfg["variance"] not in ("empirical", "genie"):
        raise ConfigError("variance must be empirical or genie")
    if not cfg["seeds"]:
        raise ConfigError("seeds must be non-empty")
    schedule = _schedule(cfg)
    ts = run_trials(params, cfg["seeds"], cfg["iters"], schedule, expurgate=cfg["expurgate"],
                    n_groups=cfg["groups"], variance=cfg["variance"], retries=cfg["retries"])
    meta = {"command": "simulate", "alpha": params.alpha, "sigma2": s2,
            "coupled": params.coupled}
    rows = (row for k, r in enumerate(ts.results) for row in r.rows(k))
    outs = [write_csv(cfg.out / "simulate.csv", ["trial", "iter", "t_or_stream", "mse",
                                                 "sinr_db"], rows, meta)]
    sinr = ts.mean_sinr()
    std = ts.sinr_db_std() if len(ts.results) > 1 else np.full(len(sinr), math.nan)
    ref = np.full(len(sinr), math.nan)
    if not params.coupled and params.L >= 2:
        de = run_block_de(MseFunction(params.B), params.alpha_eff, params.sigma2_eff,
                          max_iters=cfg["iters"], stop_tol=0.0)
        ref = 10 * np.log10(1.0 / (params.alpha_eff * de.x[: cfg["iters"]]))
    srows = [(i + 1, _db(sinr[i]), std[i], ts.mean_mse()[i], ref[i]) for i in range(len(sinr))]
    outs.append(write_csv(cfg.out / "summary.csv",
                          ["iter", "sinr_db_mean", "sinr_db_std", "mse_mean", "sinr_db_de"],
                          srows, meta))
    rrows = [(k, info["seed"], r.extra["sum_rate"], r.extra["sum_rate_terminated"],
              -1 if info["four_cycles"] is None else info["four_cycles"])
             for k, (r, info) in enumerate(zip(ts.results, ts.systems_info))]
    outs.append(write_csv(cfg.out / "sum_rates.csv",
                          ["trial", "seed", "sum_rate", "sum_rate_terminated", "four_cycles"],
                          rrows, meta))
    return outs, EXIT_OK


# verify -----------------------------------------------------------------------

def cmd_verify(cfg):
    names = None if cfg["checks"] == "all" else [c.strip() for c in cfg["checks"].split(",")]
    tol = {k[4:]: cfg[k] for k in cfg.values if k.startswith("tol_")}
    try:
        results = run_checks(names, gap_constant=cfg["gap_constant"], tolerances=tol)
    except KeyError as exc:
        raise ConfigError(str(exc)) from exc
    for r in results:
        print(r.line())
    rows = [(r.name, int(r.ok), r.passed, r.elapsed, r.budget,
             json.dumps(r.detail, sort_keys=True, default=str)) for r in results]
    out = write_csv(cfg.out / "verify.csv",
                    ["check", "ok", "passed", "elapsed_s", "budget_s", "detail"], rows,
                    {"command": "verify", "gap_constant": cfg["gap_constant"]})
    summary = {"ok": all(r.ok for r in results),
               "failed": [r.name for r in results if not r.ok],
               "checks": {r.name: r.ok for r in results}}
    js = cfg.out / "verify.json"
    js.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return [out, js], EXIT_OK if summary["ok"] else EXIT_CHECK


COMMANDS = {
    "fixed-points": cmd_fixed_points,
    "de": cmd_de,
    "rates": cmd_rates,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
}


def _parse_overrides(tokens) -> dict:
    out = {}
    it = iter(tokens)
    for tok in it:
        if not tok.startswith("--") or len(tok) == 2:
            raise ConfigError(f"expected --key value, got {tok!r}")
        key = tok[2:]
        if "=" in key:
            key, value = key.split("=", 1)
        else:
            value = next(it, None)
            if value is None:
                raise ConfigError(f"missing value for --{key}")
        out[key.replace("-", "_")] = value
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="csup", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", type=Path, help="key = value file")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args, rest = parser.parse_known_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        overrides = _parse_overrides(rest)
        file_values = read_config_file(args.config) if args.config else {}
        cfg = resolve_config(args.command, SCHEMAS[args.command], file_values, overrides,
                             args.out)
        cfg.out.mkdir(parents=True, exist_ok=True)
        outputs, status = COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finish_run(cfg, outputs, {"exit_status": status})
    return status


if __name__ == "__main__":
    sys.exit(main())
