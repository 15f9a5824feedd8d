"""Command line: ``branchmpc plan|run|sweep``.

Outputs go to ``--out``:

* ``plan``: ``plan.csv`` with columns ``branch, probability, step, t, av_s,
  av_v, av_u, hv_s, hv_v, hv_u`` and ``plan.json`` metadata
* ``run``: ``trace.csv`` with columns ``step, t, av_s, av_v, av_u, hv_s,
  hv_v, hv_u, stage_cost`` and ``events.json``
* ``sweep``: ``sweep.csv`` with columns ``probability, planner, mean_cost,
  std, n`` and ``sweep.json``

Every JSON file carries the config hash and the seed.  Exit status is 0 on
success, 2 for a bad configuration and 3 when any plan fell back to
emergency braking (outputs are still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import DEFAULTS_NOTE, ConfigError, ScenarioConfig, bundled, bundled_names, load_config
from .planner import MODES, Knowledge, Planner
from .sim import draw_truth, run_closed_loop, run_sweep

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_FALLBACK = 3

PLAN_COLUMNS = ["branch", "probability", "step", "t", "av_s", "av_v", "av_u", "hv_s", "hv_v",
                "hv_u"]
TRACE_COLUMNS = ["step", "t", "av_s", "av_v", "av_u", "hv_s", "hv_v", "hv_u", "stage_cost"]
SWEEP_COLUMNS = ["probability", "planner", "mean_cost", "std", "n"]


def _resolve_config(arg: str) -> ScenarioConfig:
    path = Path(arg)
    if not path.exists() and arg in bundled_names():
        return bundled(arg)
    return load_config(path)


def _metadata(config: ScenarioConfig, args, **extra) -> dict:
    return {"command": args.command, "config_name": config.name,
            "config_hash": config.digest(), "seed": args.seed, "planner": args.planner,
            "version": __version__, "defaults": DEFAULTS_NOTE, **extra}


def _num(x: float):
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else repr(float(x))


def _write_csv(path: Path, columns, rows) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        w.writerows(rows)


def _write_json(path: Path, data: dict) -> None:
    path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def cmd_plan(config: ScenarioConfig, args) -> int:
    knowledge = Knowledge()
    if args.planner == "prescient":
        knowledge.truth = draw_truth(config.truth_distribution, args.seed, 0) + 1
    plan = Planner(config, args.planner).plan(config.av, config.hv, 0, knowledge)
    dt = config.grid.dt
    rows = []
    for j, name in enumerate(plan.leg_names):
        for k in range(plan.s_a.shape[1]):
            last = k == plan.inputs.shape[1]
            rows.append([name, _num(plan.probabilities[j]), k, _num(k * dt),
                         _num(plan.s_a[j, k]), _num(plan.v_a[j, k]),
                         "" if last else _num(plan.inputs[j, k]),
                         _num(plan.s_h[j, k]) if config.hv else "",
                         _num(plan.v_h[j, k]) if config.hv else "",
                         "" if last or config.hv is None else _num(plan.u_h[j, k])])
    _write_csv(args.out / "plan.csv", PLAN_COLUMNS, rows)
    _write_json(args.out / "plan.json", _metadata(
        config, args, t_br=plan.tree.t_br, obs_steps=plan.tree.dt_obs_steps,
        branches=plan.leg_names, probabilities=[float(p) for p in plan.probabilities],
        cost=plan.cost, feasible=plan.feasible, fallback=plan.fallback,
        av_leads=list(plan.ordering), fixed_point_rounds=plan.rounds,
        fixed_point_converged=plan.converged, report=plan.report))
    return EXIT_FALLBACK if plan.fallback else EXIT_OK


def cmd_run(config: ScenarioConfig, args) -> int:
    res = run_closed_loop(config, args.planner, args.seed, 0)
    rows = []
    n = len(res.av_s)
    for k in range(n):
        last = k == n - 1
        rows.append([k, _num(res.t[k]), _num(res.av_s[k]), _num(res.av_v[k]),
                     "" if last else _num(res.av_u[k]), _num(res.hv_s[k]), _num(res.hv_v[k]),
                     "" if last else _num(res.hv_u[k]),
                     "" if last else _num(res.stage_costs[k])])
    _write_csv(args.out / "trace.csv", TRACE_COLUMNS, rows)
    _write_json(args.out / "events.json", _metadata(
        config, args, truth=res.truth, total_cost=res.total_cost, steps=n - 1,
        collision=res.collision, min_margin=None if math.isinf(res.min_margin) else res.min_margin,
        fallbacks=res.fallbacks, max_hv_braking=res.max_hv_braking,
        events=[{"step": e.step, "t": e.step * config.grid.dt, "kind": e.kind,
                 "detail": e.detail} for e in res.events]))
    return EXIT_FALLBACK if res.fallbacks else EXIT_OK


def cmd_sweep(config: ScenarioConfig, args) -> int:
    planners = [args.planner] if args.planner_given else list(MODES)
    grid = args.grid if args.grid is not None else [i / 10 for i in range(11)]
    res = run_sweep(config, grid, args.trials, args.seed, planners)
    rows = [[_num(r["probability"]), r["planner"], _num(r["mean_cost"]), _num(r["std"]), r["n"]]
            for r in res.rows]
    _write_csv(args.out / "sweep.csv", SWEEP_COLUMNS, rows)
    _write_json(args.out / "sweep.json", _metadata(
        config, args, grid=grid, planners=planners, trials=args.trials,
        swept_outcome=config.outcome_names[-1], collisions=res.collisions,
        fallbacks=res.fallbacks))
    return EXIT_FALLBACK if res.fallbacks else EXIT_OK


def _grid(text: str) -> list[float]:
    try:
        values = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of numbers: {text!r}")
    if not values or any(not 0.0 <= v <= 1.0 for v in values):
        raise argparse.ArgumentTypeError("grid needs probabilities in [0, 1]")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="branchmpc", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=("plan", "run", "sweep"))
    parser.add_argument("--config", required=True,
                        help="scenario JSON file, or the name of a bundled scenario "
                             f"({', '.join(bundled_names())})")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", type=Path, default=Path("out"))
    parser.add_argument("--planner", choices=MODES, default=None)
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--grid", type=_grid, default=None,
                        help="comma-separated probabilities of the last outcome (sweep only)")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    args.planner_given = args.planner is not None
    args.planner = args.planner or "branch"
    if not 0 <= args.seed < 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_CONFIG
    if args.trials < 1:
        print("error: --trials must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = _resolve_config(args.config)
        if args.command == "sweep" and config.decision.mode != "fixed":
            raise ConfigError("decision.mode", "sweeps need fixed branch probabilities")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    args.out.mkdir(parents=True, exist_ok=True)
    handler = {"plan": cmd_plan, "run": cmd_run, "sweep": cmd_sweep}[args.command]
    return handler(config, args)


if __name__ == "__main__":
    sys.exit(main())
