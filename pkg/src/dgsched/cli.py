"""Command line entry point: run, sweep, oracle and validate."""

from __future__ import annotations

import argparse
import csv
import itertools
import logging
import sys
from dataclasses import replace
from pathlib import Path

import tomli

from .engine import Algorithm, TraceWriter, run
from .metrics import config_hash, emit_report
from .model import ModelError, load_model, scenario_path, validate
from .oracle import (
    CapacityInfeasible,
    OracleSizeError,
    certify,
    compute_constants,
    scheduler_gamma,
    solve_capacity_lp,
)
from .queues import InvariantViolation

log = logging.getLogger("dgsched")

EXIT_INVARIANT = 3
EXIT_INPUT = 2


def _resolve_model(name: str) -> Path:
    path = Path(name)
    if path.exists():
        return path
    try:
        return scenario_path(name)
    except ModelError:
        raise ModelError(f"{name}: no such model file or packaged scenario") from None


def _flow_overrides(model, params: dict):
    """Apply ``delay_threshold`` / ``min_rate`` overrides (scalar or ``q_max`` multiple) to every flow."""
    changes = {}
    if "delay_threshold" in params:
        changes["delay_threshold"] = float(params.pop("delay_threshold"))
    if "delay_per_q" in params:
        changes["delay_threshold"] = float(params.pop("delay_per_q")) * params.get("q_max", 0)
    if "min_rate" in params:
        changes["min_rate"] = float(params.pop("min_rate"))
    if not changes:
        return model
    return replace(model, flows=tuple(replace(f, **changes) for f in model.flows))


def _execute(model, config, algo, horizon, out, trace_path=None):
    writer = TraceWriter(trace_path, model) if trace_path else None
    try:
        report = run(model, config, algorithm=algo, horizon=horizon, trace=writer)
    finally:
        if writer is not None:
            writer.close()
    emit_report(report, out, model)
    return report


def cmd_run(args) -> int:
    model, config = load_model(_resolve_model(args.model))
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    horizon = args.horizon if args.horizon is not None else config.horizon
    report = _execute(model, config, args.algo, horizon, args.out, args.trace)
    print(f"throughput={report.throughput():.6f} mean_delay={report.mean_delay():.3f} "
          f"max_backlog={report.max_backlog} -> {args.out}")
    return 0


def load_grid(path) -> dict:
    """Sweep grid: ``model``, ``algo``, ``seeds``, ``horizon`` and a ``[params]`` table of value lists."""
    path = Path(path)
    try:
        with path.open("rb") as fh:
            grid = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ModelError(f"{path}: {exc}") from exc
    if "model" not in grid:
        raise ModelError(f"{path}: missing 'model'")
    base = path.parent
    model_path = Path(grid["model"])
    if not model_path.is_absolute() and (base / model_path).exists():
        model_path = base / model_path
    grid["model"] = str(model_path)
    return grid


def expand_grid(grid: dict) -> list[dict]:
    algos = grid.get("algo", ["alg"])
    algos = [algos] if isinstance(algos, str) else list(algos)
    seeds = grid.get("seeds", [0])
    params = grid.get("params", {})
    keys = sorted(params)
    values = [v if isinstance(v, list) else [v] for v in (params[k] for k in keys)]
    runs = []
    for algo, seed, combo in itertools.product(algos, seeds, itertools.product(*values)):
        entry = {"model": grid["model"], "algo": algo, "seed": seed,
                 "horizon": grid.get("horizon")}
        entry.update(zip(keys, combo))
        runs.append(entry)
    return runs


def cmd_sweep(args) -> int:
    grid = load_grid(args.grid)
    model0, config0 = load_model(_resolve_model(grid["model"]))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, entry in enumerate(expand_grid(grid)):
        params = {k: v for k, v in entry.items() if k not in ("model", "algo", "seed", "horizon")}
        model = _flow_overrides(model0, params)
        config = config0.replace(seed=entry["seed"], **params)
        horizon = entry["horizon"] if entry["horizon"] is not None else config.horizon
        digest = config_hash(entry)
        name = f"run{i:03d}_{digest}.csv"
        report = _execute(model, config, entry["algo"], horizon, out / name)
        rows.append({"run": i, "file": name, "config_hash": digest, **entry,
                     "throughput": report.throughput(), "mean_delay": report.mean_delay(),
                     "max_backlog": report.max_backlog})
        log.info("run %d %s throughput=%.4f", i, digest, report.throughput())
    fields = list(dict.fromkeys(k for r in rows for k in r))
    with (out / "index.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fields)
        writer.writeheader()
        writer.writerows(rows)
    print(f"{len(rows)} runs -> {out}")
    return 0


def cmd_oracle(args) -> int:
    model, config = load_model(_resolve_model(args.model))
    gamma = args.gamma if args.gamma is not None else scheduler_gamma(model, config)
    mins = [f.min_rate for f in model.flows]
    try:
        lp = solve_capacity_lp(model, mins, args.epsilon, config.mu_max, balanced=True)
    except CapacityInfeasible as exc:
        print(f"infeasible: {exc}")
        lp = None
    if lp is not None:
        print(f"{'flow':<6}{'source':<10}{'dest':<10}{'r*':>12}")
        for c, f in enumerate(model.flows):
            print(f"{c:<6}{model.nodes[f.source]:<10}{model.nodes[f.destination]:<10}{lp.rates[c]:>12.6f}")
        print(f"{'sum':<26}{lp.total:>12.6f}")
    consts = compute_constants(model, config, lp, gamma)
    print()
    for key, val in vars(consts).items():
        if key == "note":
            continue
        print(f"{key:<18}{'n/a' if val is None else f'{val:.6g}'}")
    if consts.note:
        print(f"note: {consts.note}")
    return 0


def cmd_validate(args) -> int:
    model, config = load_model(_resolve_model(args.model), check=False)
    report = validate(model, config)
    for v in report.violations:
        print(f"violation: {v}")
    if not report.valid:
        return 1
    found = certify(model, config)
    if found is None:
        print("valid; theorem conditions not met at any candidate epsilon")
    else:
        eps, lp, rep = found
        print(f"valid; theorem conditions hold at epsilon={eps} (rates {lp.rates.round(6).tolist()})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dgsched", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one model")
    p.add_argument("--model", required=True, help="model TOML file or packaged scenario name")
    p.add_argument("--algo", default=None, choices=[a.value for a in Algorithm])
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", default=None)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run a parameter grid")
    p.add_argument("--grid", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", help="capacity optimum and bound constants")
    p.add_argument("--model", required=True)
    p.add_argument("--epsilon", type=float, default=0.0)
    p.add_argument("--gamma", type=float, default=None)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("validate", help="check a model and its theorem conditions")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InvariantViolation as exc:
        print(f"invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (ModelError, OracleSizeError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
