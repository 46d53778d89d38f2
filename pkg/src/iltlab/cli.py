"""Command line entry point: ``iltlab <subcommand> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 numerical non-convergence.
"""
from __future__ import annotations

import argparse
import json
import sys

from .analytic_bounds import bounds_report
from .deviation_lab import (
    ExperimentConfig,
    ResultTable,
    emit,
    moment_rows,
    run_lil_trace,
    run_mc_moments,
    run_simulate,
    run_tail_curve,
)
from .errors import ConfigError, NumericalError
from .exact_moments import MomentEntry, moment_exact
from .ground_state import (
    check_condition,
    kappa_from_ground_state,
    rate_constants,
    solve_ground_state,
)


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _shared(parser):
    parser.add_argument("--d", type=int)
    parser.add_argument("--p", type=int, default=2)
    parser.add_argument("--law", default="srw2", help="srw2, srw3 or a JSON step-law file")
    parser.add_argument("--n", type=int, default=64)
    parser.add_argument("--replicas", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out")
    parser.add_argument("--format", dest="fmt", choices=("csv", "json"), default="csv")
    parser.add_argument("--config", help="JSON file; its keys override the flags")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iltlab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="per-replica I_n and J_n")
    _shared(p)
    p.add_argument("--epsilon", type=float, help="also report the smoothed I_n")

    p = sub.add_parser("moments", help="Monte Carlo (and optionally exact) E I_n^m")
    _shared(p)
    p.add_argument("--m", type=_ints, default=[1, 2])
    p.add_argument("--exact", action="store_true", help="add exact rows (small n only)")

    p = sub.add_parser("kappa", help="ground state and rate constants")
    _shared(p)
    p.add_argument("--tol", type=float, default=5e-2)
    p.add_argument("--rmax", type=float, default=20.0)
    p.add_argument("--grid", type=float, default=0.005, help="radial step h")

    p = sub.add_parser("bounds", help="resolvent integral and the bounds built on it")
    _shared(p)
    p.add_argument("--tol", type=float, default=1e-10)

    p = sub.add_parser("tail", help="exceedance frequencies on a lambda grid")
    _shared(p)
    p.add_argument("--lambdas", type=_floats, default=[0.05, 0.1, 0.2, 0.4])
    p.add_argument("--bn-rule", dest="b_n_rule", default="loglog")

    p = sub.add_parser("lil", help="normalised I along a geometric schedule")
    _shared(p)
    p.add_argument("--n-max", dest="n_max", type=int)
    p.add_argument("--rho", type=float, default=1.5)
    p.add_argument("--start", type=int, default=16)
    return ap


CONFIG_KEYS = ("law", "d", "p", "n", "replicas", "seed", "out", "fmt", "epsilon",
               "lambdas", "b_n_rule", "n_max", "rho", "start")


def _config(args) -> ExperimentConfig:
    data = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from None
        if not isinstance(data, dict):
            raise ConfigError("config file must hold a JSON object")
        if "format" in data:
            data["fmt"] = data.pop("format")
    flags = {k: getattr(args, k, None) for k in CONFIG_KEYS}
    return ExperimentConfig.from_mapping(data, **flags)


def _write_text(text: str, path: str | None):
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)


def _write_json(obj, path):
    _write_text(json.dumps(obj, indent=1, sort_keys=False) + "\n", path)


def _emit(table: ResultTable, cfg: ExperimentConfig):
    text = emit(table, cfg.fmt)
    _write_text(text, cfg.out)


def cmd_simulate(args):
    cfg = _config(args)
    if args.epsilon is not None and cfg.epsilon is None:
        cfg = ExperimentConfig.from_mapping({}, **{**cfg.to_dict(), "epsilon": args.epsilon})
    _emit(run_simulate(cfg), cfg)


def cmd_moments(args):
    cfg = _config(args)
    table = run_mc_moments(cfg, args.m)
    if args.exact:
        law = cfg.step_law
        for m in args.m:
            table.add(MomentEntry(cfg.n, m, cfg.p, law.name,
                                  moment_exact(law, cfg.n, m, cfg.p), "exact-formula"))
    _emit(moment_rows(table), cfg)


def _dp(args):
    d = args.d
    if d is None:
        d = ExperimentConfig(law=args.law, p=args.p, replicas=1).d if args.law else 2
    check_condition(d, args.p)
    return d, args.p


def cmd_kappa(args):
    d, p = _dp(args)
    gs = solve_ground_state(d, p, tol=args.tol, r_max=args.rmax, h=args.grid, cross_check=True)
    kappa = kappa_from_ground_state(gs)
    rc = rate_constants(d, p, kappa=kappa)
    diag = {k: v for k, v in gs.diagnostics.items()}
    diag.update({"h": gs.h, "r_max": gs.r_max, "r_cut": gs.r_cut, "amplitude": gs.amplitude})
    _write_json({"d": d, "p": p, "kappa": kappa, "M": rc.M, "gamma_alpha": rc.gamma_alpha,
                 "lil_brownian": rc.lil_brownian, "norms": gs.norms(),
                 "residual": gs.residual, "solver_diagnostics": diag}, args.out)


def cmd_bounds(args):
    d, p = _dp(args)
    _write_json(bounds_report(d, p, args.tol), args.out)


def cmd_tail(args):
    cfg = _config(args)
    _emit(run_tail_curve(cfg), cfg)


def cmd_lil(args):
    cfg = _config(args)
    _emit(run_lil_trace(cfg), cfg)


COMMANDS = {"simulate": cmd_simulate, "moments": cmd_moments, "kappa": cmd_kappa,
            "bounds": cmd_bounds, "tail": cmd_tail, "lil": cmd_lil}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"iltlab: configuration error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"iltlab: numerical failure: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
