"""Command-line entry point: ``params``, ``solve``, ``run``, ``sweep`` and ``report``."""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

from . import harness
from .harness import ConfigError, ExperimentConfig, MethodConfig
from .mdp import ChainSpec, FiniteMdp, make_chain, validate
from .params import (check_hyperparams, derive_params, known_set_bound, mistake_bound,
                     optimism_rho_floor, q_prime_ceiling)
from .solver import ConvergenceError, value_iteration


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _float_list(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def cmd_params(args) -> int:
    p = derive_params(args.epsilon, args.delta, args.gamma, args.gamma_e, args.S, args.A,
                      args.r_max)
    successes, attempts, escapes = known_set_bound(p, args.S, args.A)
    rho_floor = optimism_rho_floor(p, args.S, args.A)
    doc = {
        "hyperparams": p.to_dict(),
        "bounds": {
            "max_successful_updates": successes,
            "max_attempted_updates": attempts,
            "max_escape_steps": escapes,
            "q_prime_ceiling": q_prime_ceiling(p),
            "optimism_rho_floor": rho_floor,
            "rho_meets_optimism_floor": p.rho >= rho_floor,
            "mistake_bound_leading_order": mistake_bound(p, args.S, args.A),
        },
        "invariant_violations": check_hyperparams(p),
    }
    if args.format == "json":
        text = json.dumps(doc, indent=2) + "\n"
    else:
        rows = list(doc["hyperparams"].items()) + list(doc["bounds"].items())
        width = max(len(k) for k, _ in rows)
        text = "".join(f"{k:<{width}} = {v}\n" for k, v in rows)
    _write(text, args.out)
    return 0


def _mdp_from_args(args) -> FiniteMdp:
    if args.mdp:
        mdp = FiniteMdp.load(args.mdp)
        if args.gamma is not None:
            mdp = mdp.with_discount(args.gamma)
    else:
        gamma = 0.99 if args.gamma is None else args.gamma
        mdp = make_chain(ChainSpec(args.chain, slip_prob=args.slip), discount=gamma)
    problems = validate(mdp)
    if problems:
        raise ConfigError("mdp: " + "; ".join(problems))
    return mdp


def cmd_solve(args) -> int:
    mdp = _mdp_from_args(args)
    result = value_iteration(mdp, tol=args.tol, max_iter=args.max_iter)
    if args.format == "json":
        doc = {
            "v_star": result.v_star.tolist(),
            "q_star": result.q_star.tolist(),
            "residual": result.residual,
            "iterations": result.iterations,
        }
        text = json.dumps(doc, indent=2) + "\n"
    else:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        A = mdp.num_actions
        writer.writerow(["state", "v_star"] + [f"q_star_{a}" for a in range(A)]
                        + ["residual", "iterations"])
        for s in range(mdp.num_states):
            writer.writerow([s, repr(float(result.v_star[s]))]
                            + [repr(float(x)) for x in result.q_star[s]]
                            + [repr(result.residual), result.iterations])
        text = buf.getvalue()
    _write(text, args.out)
    return 0


def _config_from_args(args, sweep: bool = False) -> ExperimentConfig:
    data = {}
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config: {path} is not valid JSON ({exc})") from exc
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
    # flags > file > defaults
    if args.chain is not None:
        data["mdp"] = {"chain": {"length": args.chain}}
    if args.mdp is not None:
        data["mdp"] = {"file": args.mdp}
    for flag, key in (("gamma", "gamma"), ("runs", "num_runs"), ("horizon", "horizon"),
                      ("seed", "base_seed"), ("workers", "workers")):
        value = getattr(args, flag)
        if value is not None:
            data[key] = value
    if args.format is not None:
        data.setdefault("output", {})["format"] = args.format
    if args.out is not None:
        data.setdefault("output", {})["path"] = args.out
    config = harness.config_from_dict(data)
    if sweep:
        config.methods = _sweep_methods(config, args.gamma_e, explicit="methods" in data)
    return config


def _sweep_methods(config: ExperimentConfig, gamma_es, explicit: bool) -> list[MethodConfig]:
    directed = [m for m in config.methods if m.kind == "directed"] if explicit else []
    template = dict(directed[0].options) if directed else {}
    template.pop("gamma_e", None)
    methods = [MethodConfig("directed", {**template, "gamma_e": g}) for g in gamma_es]
    others = [m for m in config.methods if m.kind != "directed"] if explicit else []
    return methods + (others or [MethodConfig("delayed"), MethodConfig("eps_greedy")])


def _execute(config: ExperimentConfig, args) -> int:
    trace_fh = None
    trace_sink = None
    if args.trace:
        trace_fh = open(args.trace, "w")
        header_written = False

        def trace_sink(method, gamma_e, seed, line):
            nonlocal header_written
            if line.startswith("t,"):
                if not header_written:
                    trace_fh.write("method,gamma_e,seed," + line + "\n")
                    header_written = True
                return
            ge = "" if gamma_e is None else f"{gamma_e:g}"
            trace_fh.write(f"{method},{ge},{seed},{line}\n")
    try:
        records = harness.run_experiment(config, trace_sink=trace_sink)
    finally:
        if trace_fh is not None:
            trace_fh.close()
    if args.per_run:
        harness.write_per_run_csv(records, args.per_run)
    fmt = config.output.get("format", "table")
    _write(harness.emit_table(harness.aggregate(records), fmt), config.output.get("path"))
    return 0


def cmd_run(args) -> int:
    return _execute(_config_from_args(args), args)


def cmd_sweep(args) -> int:
    return _execute(_config_from_args(args, sweep=True), args)


def cmd_report(args) -> int:
    path = Path(args.per_run_csv)
    if not path.exists():
        raise FileNotFoundError(f"per-run CSV not found: {path}")
    records = harness.read_per_run_csv(path)
    if not records:
        raise ConfigError(f"{path}: no runs recorded")
    _write(harness.emit_table(harness.aggregate(records), args.format), args.out)
    return 0


def _add_experiment_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment config (JSON)")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--chain", type=int, help="use a chain MDP of this length")
    src.add_argument("--mdp", help="use a serialized MDP (JSON)")
    p.add_argument("--gamma", type=float, help="discount factor")
    p.add_argument("--runs", type=int, help="independent runs per method")
    p.add_argument("--horizon", type=int, help="steps per run")
    p.add_argument("--seed", type=int, help="base seed for every random stream (default 0)")
    p.add_argument("--workers", type=int, help="parallel worker processes")
    p.add_argument("--format", choices=harness.RENDER_FORMATS, help="summary format")
    p.add_argument("--out", help="write the summary here instead of stdout")
    p.add_argument("--per-run", help="also write per-run results to this CSV")
    p.add_argument("--trace", help="write per-step CSV records of every run (slow; use few runs)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddql", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("params", help="derive PAC hyperparameters and bounds")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--delta", type=float, required=True)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--gamma-e", type=float, default=0.99)
    p.add_argument("--S", type=int, required=True, help="number of states")
    p.add_argument("--A", type=int, required=True, help="number of actions")
    p.add_argument("--r-max", type=float, default=1.0)
    p.add_argument("--format", choices=("json", "table"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_params)

    p = sub.add_parser("solve", help="value iteration on a chain or MDP file")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--chain", type=int)
    src.add_argument("--mdp")
    p.add_argument("--gamma", type=float)
    p.add_argument("--slip", type=float, default=0.2)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=1_000_000)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("run", help="run one experiment config")
    _add_experiment_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="directed agent over a list of gamma_E plus both baselines")
    _add_experiment_flags(p)
    p.add_argument("--gamma-e", type=_float_list, default=list(harness.DEFAULT_GAMMA_ES),
                   help="comma-separated E-value discounts")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="summarize a per-run CSV")
    p.add_argument("per_run_csv")
    p.add_argument("--format", choices=harness.RENDER_FORMATS, default="table")
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, ConvergenceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
