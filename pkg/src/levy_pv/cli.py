"""Command-line interface: ``levy-pv {simulate,powervar,estimate,limits,verify}``.

Every run echoes its resolved configuration as one JSON line on stderr.
Precedence: built-in defaults < ``--config`` file < explicit flags.
Exit codes: 0 success, 1 failed verification, 2 usage or parameter error.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from contextlib import contextmanager

from . import estimators as est
from . import kernel_bank as kb
from . import limit_laws as ll
from . import mc_harness as mc
from . import path_simulator as ps
from . import power_variation as pv
from .errors import LevyPVError
from .levy_driver import LevySpec, RngStream

SIMULATE_DEFAULTS = {"kernel": "pure_power", "alpha": 0.2, "lam": 1.0, "c0": 1.0, "g0_equals_g": None,
                     "driver": "stable", "beta": 1.5, "sigma": 1.0, "intensity": 5.0, "jump_law": "unit",
                     "jump_param": 1.0, "cutoff": 1.0, "n": 1024, "seed": 0, "stream_id": 0,
                     "refinement_r": 8, "truncation_M": None, "out": None}
POWERVAR_DEFAULTS = {"input": None, "p": [1.0], "k": 1, "alpha": None, "beta": None, "out": None}
ESTIMATE_DEFAULTS = {"input": None, "ratio_p": 0.5, "p_min": 1.05, "p_max": 1.95, "p_points": 33, "out": None}
LIMITS_DEFAULTS = {"alpha": None, "beta": None, "p": None, "k": 1, "c0": 1.0, "sigma": 1.0, "out": None}
VERIFY_DEFAULTS = {"seed": None, "reps": None, "out": None, "workers": None}


class UsageError(Exception):
    pass


def _parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="levy-pv", allow_abbrev=False,
                                  description="Power variations of Levy-driven moving averages.")
    sub = top.add_subparsers(dest="command", metavar="COMMAND", required=True)

    s = sub.add_parser("simulate", allow_abbrev=False, help="simulate a path (CSV i,t,X)",
                       description="Simulate X on the grid i/n and write the path CSV.")
    s.add_argument("--config", help="JSON file with default values for the flags below")
    s.add_argument("--kernel", choices=["pure_power", "gamma_damped"], help="kernel family")
    s.add_argument("--alpha", type=float, help="kernel exponent")
    s.add_argument("--lam", type=float, help="damping rate (gamma_damped)")
    s.add_argument("--c0", type=float, help="kernel constant")
    s.add_argument("--g0-equals-g", dest="g0_equals_g", choices=["true", "false"],
                   help="use g0 = g (default: true for pure_power, false otherwise)")
    s.add_argument("--driver", choices=["stable", "compound_poisson", "tempered"], help="Levy driver")
    s.add_argument("--beta", type=float, help="stability index")
    s.add_argument("--sigma", type=float, help="stable scale")
    s.add_argument("--intensity", type=float, help="compound Poisson jump rate")
    s.add_argument("--jump-law", dest="jump_law", choices=["unit", "normal", "uniform", "pareto"],
                   help="compound Poisson jump law")
    s.add_argument("--jump-param", dest="jump_param", type=float, help="jump law parameter")
    s.add_argument("--cutoff", type=float, help="tempered stable truncation level")
    s.add_argument("--n", type=int, help="number of grid intervals")
    s.add_argument("--seed", type=int, help="random seed")
    s.add_argument("--stream-id", dest="stream_id", type=int, help="random stream index")
    s.add_argument("--refinement-r", dest="refinement_r", type=int, help="sub-grid refinement")
    s.add_argument("--truncation-m", dest="truncation_M", type=float, help="near-field depth (time units)")
    s.add_argument("--out", help="output CSV path (default: stdout)")

    p = sub.add_parser("powervar", allow_abbrev=False, help="power variation statistics of a path",
                       description="Power variations of a path CSV; normalized when --alpha and --beta are given.")
    p.add_argument("--config", help="JSON file with default values for the flags below")
    p.add_argument("--input", help="path CSV (i,t,X)")
    p.add_argument("--p", type=float, nargs="+", help="power(s)")
    p.add_argument("--k", type=int, help="increment order")
    p.add_argument("--alpha", type=float, help="kernel exponent for the normalization")
    p.add_argument("--beta", type=float, help="driver index for the normalization")
    p.add_argument("--out", help="output CSV path (default: stdout)")

    e = sub.add_parser("estimate", allow_abbrev=False, help="estimate H, alpha and beta from a path",
                       description="Ratio estimate of H and scale-function fit of (alpha, beta).")
    e.add_argument("--config", help="JSON file with default values for the flags below")
    e.add_argument("--input", help="path CSV (i,t,X)")
    e.add_argument("--ratio-p", dest="ratio_p", type=float, help="power of the ratio statistic")
    e.add_argument("--p-min", dest="p_min", type=float, help="smallest power of the fit grid")
    e.add_argument("--p-max", dest="p_max", type=float, help="largest power of the fit grid")
    e.add_argument("--p-points", dest="p_points", type=int, help="number of fit powers")
    e.add_argument("--out", help="output JSON path (default: stdout)")

    lm = sub.add_parser("limits", allow_abbrev=False, help="limit constants for (alpha, beta, p, k)",
                        description="Regime and limit constants as JSON.")
    lm.add_argument("--config", help="JSON file with default values for the flags below")
    lm.add_argument("--alpha", type=float, help="kernel exponent")
    lm.add_argument("--beta", type=float, help="driver index")
    lm.add_argument("--p", type=float, help="power")
    lm.add_argument("--k", type=int, help="increment order")
    lm.add_argument("--c0", type=float, help="kernel constant")
    lm.add_argument("--sigma", type=float, help="stable scale")
    lm.add_argument("--out", help="output JSON path (default: stdout)")

    v = sub.add_parser("verify", allow_abbrev=False, help="run a Monte Carlo experiment",
                       description="Run an experiment config; exit 0 iff every criterion passes.")
    v.add_argument("--config", required=True, help="experiment JSON file")
    v.add_argument("--seed", type=int, help="override the config seed")
    v.add_argument("--reps", type=int, help="override the replication count")
    v.add_argument("--workers", type=int, help="worker processes (default: logical cores)")
    v.add_argument("--out", help="summary JSON path (CSV written alongside)")
    return top


def _resolve(args: argparse.Namespace, defaults: dict, use_file: bool = True) -> dict:
    cfg = dict(defaults)
    if use_file and getattr(args, "config", None):
        with open(args.config) as fh:
            file_vals = json.load(fh)
        unknown = set(file_vals) - set(defaults)
        if unknown:
            raise UsageError(f"unknown keys in {args.config}: {sorted(unknown)}")
        cfg.update(file_vals)
    for key in defaults:
        val = getattr(args, key, None)
        if val is not None:
            cfg[key] = val
    return cfg


def _echo(command: str, cfg: dict) -> None:
    sys.stderr.write("# resolved " + json.dumps({"command": command, **cfg}, sort_keys=True) + "\n")


@contextmanager
def _sink(path):
    if path is None:
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _read_path(path):
    if path is None:
        raise UsageError("--input is required")
    with open(path) as fh:
        x, _ = ps.read_path_csv(fh)
    return x


def cmd_simulate(cfg: dict) -> int:
    if cfg["kernel"] == "pure_power":
        g0 = True if cfg["g0_equals_g"] is None else cfg["g0_equals_g"] == "true"
        kernel = kb.KernelSpec.pure_power(cfg["alpha"], cfg["c0"], g0_equals_g=g0)
    else:
        g0 = False if cfg["g0_equals_g"] is None else cfg["g0_equals_g"] == "true"
        kernel = kb.KernelSpec.gamma_damped(cfg["alpha"], cfg["lam"], cfg["c0"], g0_equals_g=g0)
    if cfg["driver"] == "stable":
        levy = LevySpec.stable(cfg["beta"], cfg["sigma"])
    elif cfg["driver"] == "tempered":
        levy = LevySpec.tempered(cfg["beta"], cfg["sigma"], cfg["cutoff"])
    else:
        levy = LevySpec.compound_poisson(cfg["intensity"], cfg["jump_law"], cfg["jump_param"])
    sim = ps.SimConfig(cfg["n"], truncation_M=cfg["truncation_M"], refinement_r=cfg["refinement_r"],
                       stream=RngStream(cfg["seed"], cfg["stream_id"]))
    path = ps.simulate_moving_average(kernel, levy, sim)
    with _sink(cfg["out"]) as fh:
        path.to_csv(fh)
    return 0


def cmd_powervar(cfg: dict) -> int:
    x = _read_path(cfg["input"])
    rows = []
    powers = cfg["p"] if isinstance(cfg["p"], list) else [cfg["p"]]
    for p in powers:
        res = pv.power_variation(x, p, cfg["k"])
        if cfg["alpha"] is not None and cfg["beta"] is not None:
            rep = ll.classify_regime(cfg["alpha"], cfg["beta"], p, cfg["k"])
            res = pv.normalize(res, rep, cfg["alpha"], cfg["beta"])
        rows.append([res.n, repr(res.p), res.k, res.regime or "none", repr(res.raw),
                     repr(res.normalization_exponent), repr(res.normalized)])
    with _sink(cfg["out"]) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "p", "k", "regime", "raw", "exponent", "normalized"])
        w.writerows(rows)
    return 0


def cmd_estimate(cfg: dict) -> int:
    x = _read_path(cfg["input"])
    grid = est.default_p_grid(cfg["p_points"], cfg["p_min"], cfg["p_max"])
    res = est.scale_function_fit(x, grid)
    res.diagnostics["H_fit"] = res.H_hat
    res.H_hat = est.estimate_H_ratio(x, cfg["ratio_p"])
    with _sink(cfg["out"]) as fh:
        fh.write(res.to_json() + "\n")
    return 0


def cmd_limits(cfg: dict) -> int:
    for key in ("alpha", "beta", "p"):
        if cfg[key] is None:
            raise UsageError(f"--{key} is required")
    lc = ll.limit_constants(cfg["alpha"], cfg["beta"], cfg["p"], cfg["k"], cfg["c0"], cfg["sigma"])
    with _sink(cfg["out"]) as fh:
        fh.write(lc.to_json() + "\n")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    cfg = _resolve(args, VERIFY_DEFAULTS, use_file=False)
    with open(args.config) as fh:
        exp = json.load(fh)
    if cfg["seed"] is not None:
        exp["seed"] = cfg["seed"]
    if cfg["reps"] is not None:
        exp["replications"] = cfg["reps"]
    workers = cfg["workers"] or os.cpu_count() or 1
    config = mc.ExperimentConfig.from_dict(exp)
    _echo("verify", {"experiment": config.to_dict(), "workers": workers, "out": cfg["out"]})
    summary = mc.run_experiment(config, workers=workers)
    if cfg["out"]:
        mc.persist(summary, cfg["out"])
    else:
        sys.stdout.write(summary.to_json() + "\n")
    for c in summary.criteria:
        sys.stderr.write(f"{'PASS' if c.passed else 'FAIL'} {c.name} = {c.value!r} "
                         f"(reference {c.reference}, tolerance {c.tolerance})\n")
    return 0 if summary.passed else 1


_COMMANDS = {"simulate": (SIMULATE_DEFAULTS, cmd_simulate), "powervar": (POWERVAR_DEFAULTS, cmd_powervar),
             "estimate": (ESTIMATE_DEFAULTS, cmd_estimate), "limits": (LIMITS_DEFAULTS, cmd_limits)}


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "verify":
            return cmd_verify(args)
        defaults, fn = _COMMANDS[args.command]
        cfg = _resolve(args, defaults)
        _echo(args.command, cfg)
        return fn(cfg)
    except (UsageError, LevyPVError, ValueError, OSError) as exc:
        sys.stderr.write(f"levy-pv {args.command}: error: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
