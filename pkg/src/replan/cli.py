"""Command-line entry point covering the full planning workflow.

Exit codes: 0 success, 1 usage error, 2 validation error, 3 advisor or
transport error.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import baselines, report, trainer
from .advisor import (
    Advisor,
    AdvisorError,
    AdvisorSchemaError,
    AdvisorTransportError,
    MockAdvisor,
    RegionSummary,
    RemoteAdvisor,
    RemoteConfig,
)
from .domain import PlanningConfig, RegionError
from .geometry import GeometryError
from .policy import load_checkpoint
from .rewards import Demands, RewardError, satisfaction_score, score_scheme, summarize_scheme
from .scenario_io import (
    AdvisorSettings,
    RegionFileError,
    RunConfig,
    ScenarioSpec,
    load_run_config,
    parse_region,
    render_svg,
    write_region,
    write_scenario,
)
from .trainer import TrainSettings

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_ADVISOR = 3

VALIDATION_ERRORS = (
    RegionFileError,
    RegionError,
    GeometryError,
    RewardError,
    ValueError,
    FileNotFoundError,
    json.JSONDecodeError,
)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _build_parser() -> _Parser:
    parser = _Parser(prog="replan", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--seed", type=int, default=None, help="override the run seed")
        p.add_argument("--json-errors", action="store_true", help="emit errors as JSON on stderr")
        return p

    p = add("gen-scenario", "generate a synthetic region file from a scenario spec")
    p.add_argument("--spec", required=True, help="scenario spec JSON")
    p.add_argument("--out", required=True, help="output region file")

    p = add("objectives", "formulate planning demands from demographics and style")
    p.add_argument("--region", required=True)
    p.add_argument("--config", default=None, help="run config (TOML or JSON)")
    p.add_argument("--advisor", choices=["mock", "remote"], default=None)
    p.add_argument("--out", required=True, help="output demands JSON")

    p = add("train", "train the planning policy on a region")
    p.add_argument("--region", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--demands", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-enhance", action="store_true", help="disable advisor enhancement")
    p.add_argument("--live-satisfaction", action="store_true",
                   help="score satisfaction with the configured advisor during training")
    p.add_argument("--advisor", choices=["mock", "remote"], default=None)
    p.add_argument("--order", default=None, help="vacant order: file, area-desc or shuffle:<seed>")
    p.add_argument("--timings", action="store_true", help="log per-episode wall time")

    p = add("plan", "greedy rollout of a trained policy")
    p.add_argument("--region", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--demands", required=True)
    p.add_argument("--out", required=True, help="output scheme file")
    p.add_argument("--no-enhance", action="store_true")
    p.add_argument("--advisor", choices=["mock", "remote"], default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--order", default=None)

    p = add("baseline", "run a comparison method")
    p.add_argument("--method", choices=["random", "ga", "sa", "llm"], required=True)
    p.add_argument("--region", required=True)
    p.add_argument("--demands", required=True)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--out", default="baseline_results.jsonl", help="results JSONL (appended)")
    p.add_argument("--figure", default=None, help="optional box-plot PNG of this batch")
    p.add_argument("--config", default=None)
    p.add_argument("--advisor", choices=["mock", "remote"], default=None)
    p.add_argument("--order", default=None)
    p.add_argument("--budget-seconds", type=float, default=None,
                   help="wall-clock cap per GA/SA run")

    p = add("evaluate", "score a completed scheme")
    p.add_argument("--scheme", required=True)
    p.add_argument("--demands", required=True)
    p.add_argument("--advisor", choices=["mock", "remote"], default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default=None, help="write the report JSON here as well")
    p.add_argument("--figure", default=None, help="optional metric bar chart PNG")

    p = add("render", "render a region/scheme to SVG")
    p.add_argument("--scheme", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--no-legend", action="store_true")
    return parser


def _load_config(args) -> RunConfig:
    if getattr(args, "config", None):
        cfg = load_run_config(args.config)
    else:
        cfg = RunConfig(planning=PlanningConfig(), advisor=AdvisorSettings())
    if args.seed is not None:
        cfg.planning.seed = args.seed
    return cfg


def _make_advisor(cfg: RunConfig, override: str = None) -> Advisor:
    mode = override or cfg.advisor.mode
    if mode == "mock":
        return MockAdvisor(seed=cfg.planning.seed)
    if not cfg.advisor.endpoint:
        raise AdvisorTransportError("remote advisor needs an endpoint in the config")
    return RemoteAdvisor(
        RemoteConfig(
            endpoint=cfg.advisor.endpoint,
            model=cfg.advisor.model,
            prompt_dir=cfg.advisor.prompt_dir,
            cache_path=cfg.advisor.cache_path,
        )
    )


def _load_demands(path) -> Demands:
    return Demands.from_json(Path(path).read_text(encoding="utf-8"))


def _train_settings(cfg: RunConfig, args) -> TrainSettings:
    doc = dict(cfg.training or {})
    known = set(TrainSettings.__dataclass_fields__)
    unknown = set(doc) - known
    if unknown:
        raise RegionFileError(f"unknown [training] keys: {sorted(unknown)}")
    settings = TrainSettings(**doc)
    if getattr(args, "no_enhance", False):
        settings.enhance = False
    if getattr(args, "timings", False):
        settings.log_timings = True
    return settings


def _cmd_gen_scenario(args) -> int:
    spec = ScenarioSpec.from_json(Path(args.spec).read_text(encoding="utf-8"))
    if args.seed is not None:
        spec.seed = args.seed
    write_scenario(spec, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_objectives(args) -> int:
    cfg = _load_config(args)
    region = parse_region(
        args.region,
        config=cfg.planning,
        demographics=cfg.demographics or None,
        style=cfg.style or None,
    )
    advisor = _make_advisor(cfg, args.advisor)
    demands = advisor.formulate_objectives(
        region.demographics, region.style, RegionSummary.from_region(region)
    )
    Path(args.out).write_text(demands.to_json() + "\n", encoding="utf-8")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    demands = _load_demands(args.demands)
    region = parse_region(
        args.region, config=cfg.planning, demands=demands, vacant_order=args.order
    )
    advisor = _make_advisor(cfg, args.advisor)
    settings = _train_settings(cfg, args)
    sat_advisor = advisor if args.live_satisfaction else MockAdvisor(cfg.planning.seed)

    result = trainer.train(region, advisor, settings=settings, sat_advisor=sat_advisor,
                           out_dir=args.out_dir)
    curve = Path(args.out_dir) / "training_curve.png"
    report.training_curve(result.log.records, curve)
    print(
        f"trained {cfg.planning.episodes} episodes; "
        f"eval obj_score {result.eval_obj_score:.4f}, total {result.eval_total:.4f}"
    )
    print(f"checkpoint: {result.checkpoint_path}")
    print(f"figure: {curve}")
    return EXIT_OK


def _cmd_plan(args) -> int:
    cfg = _load_config(args)
    demands = _load_demands(args.demands)
    bundle, _ = load_checkpoint(args.checkpoint)
    if args.seed is not None:
        bundle.config.seed = args.seed
    region = parse_region(
        args.region, config=bundle.config, demands=demands, vacant_order=args.order
    )
    advisor = _make_advisor(cfg, args.advisor)
    rng = np.random.default_rng(bundle.config.seed)
    traj = trainer.rollout_episode(
        region, bundle, advisor, rng,
        sat_advisor=MockAdvisor(bundle.config.seed),
        enhance_on=not args.no_enhance, greedy=True,
    )
    write_region(traj.region, args.out)
    print(f"planned scheme: obj_score {traj.report.obj_score:.4f}, total {traj.report.total:.4f}")
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_baseline(args) -> int:
    cfg = _load_config(args)
    demands = _load_demands(args.demands)
    region = parse_region(
        args.region, config=cfg.planning, demands=demands, vacant_order=args.order
    )
    sat_advisor = MockAdvisor(cfg.planning.seed)
    search = baselines.SearchConfig()

    rows = []
    for run in range(args.runs):
        seed = cfg.planning.seed + run
        rng = np.random.default_rng(seed)
        if args.method == "random":
            _, rep = baselines.random_scheme(region, rng, sat_advisor=sat_advisor)
        elif args.method == "ga":
            _, rep, _ = baselines.ga_optimize(region, demands, search, rng,
                                              sat_advisor=sat_advisor)
        elif args.method == "sa":
            _, rep, _ = baselines.sa_optimize(region, demands, search, rng,
                                              sat_advisor=sat_advisor)
        else:
            advisor = _make_advisor(cfg, args.advisor)
            _, rep, _ = baselines.llm_only_plan(region, demands, advisor, rng,
                                                sat_advisor=sat_advisor)
        rows.append(
            {
                "method": args.method,
                "run": run,
                "seed": seed,
                "obj_score": rep.obj_score,
                "satisfaction": rep.satisfaction,
                "total": rep.total,
            }
        )
    with Path(args.out).open("a", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")
    if args.figure:
        report.baseline_box(rows, args.figure)
    mean_total = sum(r["total"] for r in rows) / len(rows)
    print(f"{args.method}: {args.runs} run(s), mean total {mean_total:.4f}; appended to {args.out}")
    return EXIT_OK


def _cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    demands = _load_demands(args.demands)
    region = parse_region(args.scheme, config=cfg.planning, demands=demands)
    advisor = _make_advisor(cfg, args.advisor)
    summary = summarize_scheme(region, demands)
    stakeholders = advisor.score_satisfaction(summary)
    rep = score_scheme(region, demands, satisfaction_score(stakeholders), stakeholders)
    text = rep.to_json()
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    if args.figure:
        report.metric_bars(rep, args.figure)
    return EXIT_OK


def _cmd_render(args) -> int:
    region = parse_region(args.scheme)
    render_svg(region, args.out, legend=not args.no_legend)
    print(f"wrote {args.out}")
    return EXIT_OK


_COMMANDS = {
    "gen-scenario": _cmd_gen_scenario,
    "objectives": _cmd_objectives,
    "train": _cmd_train,
    "plan": _cmd_plan,
    "baseline": _cmd_baseline,
    "evaluate": _cmd_evaluate,
    "render": _cmd_render,
}


def _emit_error(kind: str, message: str, json_errors: bool) -> None:
    if json_errors:
        print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    else:
        print(f"replan: {kind} error: {message}", file=sys.stderr)


def dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        _emit_error("usage", str(exc), "--json-errors" in (argv or sys.argv))
        return EXIT_USAGE
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    try:
        return _COMMANDS[args.command](args)
    except (AdvisorTransportError, AdvisorSchemaError, AdvisorError) as exc:
        _emit_error("advisor", str(exc), args.json_errors)
        return EXIT_ADVISOR
    except VALIDATION_ERRORS as exc:
        _emit_error("validation", str(exc), args.json_errors)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
