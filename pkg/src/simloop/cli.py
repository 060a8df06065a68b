"""Command-line front end.

Subcommands: simulate (scenarios -> rollout files + run summary), evaluate
(rollout files -> report JSON + CSV), oracle-check (greedy selection vs the
exhaustive oracle on random graphs), export (rollout -> per-agent CSVs and
an SVG overview plot).

Exit codes: 0 success, 1 validation error, 2 predictor failure, 3 internal
error. Flags override values from an optional --manifest JSON file.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .bridge import BridgePredictor, TcpTransport
from .collision import (
    SelectionSearchStats,
    brute_force_selection,
    count_colliding_pairs,
    find_selection,
    random_collision_graph,
    subgraph_density,
    top1_selection,
)
from .engine import (
    ConfigError,
    RolloutConfig,
    Rollout,
    StepError,
    load_rollouts,
    run_ensemble,
    write_rollouts,
)
from .heading import HeadingParams
from .metrics import EvaluationReport, evaluate
from .predictor import (
    ConstantVelocityPredictor,
    NoisyConstantVelocityPredictor,
    PredictorError,
    ReplayPredictor,
)
from .scenario import (
    AgentKind,
    Scenario,
    ScenarioFormatError,
    ScenarioValidationError,
    load_scenario,
)

log = logging.getLogger("simloop")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_PREDICTOR = 2
EXIT_INTERNAL = 3

ORACLE_EDGE_PROBABILITIES = (0.3, 0.43, 0.56, 0.69, 0.82, 0.95)

SVG_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


class _Parser(argparse.ArgumentParser):
    # usage mistakes are validation errors under the exit-code contract
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def _setup_logging() -> None:
    level = os.environ.get("SIM_HARNESS_LOG", "error").lower()
    levels = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}
    logging.basicConfig(
        level=levels.get(level, logging.ERROR),
        format="%(levelname)s %(name)s: %(message)s",
    )


def _atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def _atomic_write_json(path: Path, doc: object) -> None:
    _atomic_write_text(path, json.dumps(doc, indent=1, allow_nan=False) + "\n")


# ---------------------------------------------------------------------------
# manifest / flag merging


@dataclass
class SimulateOptions:
    scenarios: list[str]
    predictor: str
    endpoints: list[str]
    seed: int
    rollouts: int
    branching: tuple[int, ...]
    update_period: float
    horizon_frames: int
    collision_policy: bool
    density_threshold: float
    branch_filter_collisions: bool
    jobs: int
    out: str
    heading_params: HeadingParams
    heading_overrides: dict[AgentKind, HeadingParams]


def _heading_from_dict(doc: dict) -> HeadingParams:
    return HeadingParams(
        stop_distance_threshold=float(
            doc.get("stop_distance_threshold", HeadingParams.stop_distance_threshold)
        ),
        max_step_delta=float(doc.get("max_step_delta", HeadingParams.max_step_delta)),
        horizon=float(doc.get("horizon", HeadingParams.horizon)),
    )


def _resolve_simulate(args: argparse.Namespace) -> SimulateOptions:
    manifest: dict = {}
    if args.manifest:
        with open(args.manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
        if not isinstance(manifest, dict):
            raise ConfigError("manifest must be a JSON object")

    def pick(flag_value, key, default):
        if flag_value is not None:
            return flag_value
        return manifest.get(key, default)

    scenarios = args.scenario or manifest.get("scenario") or []
    if isinstance(scenarios, str):
        scenarios = [scenarios]
    if not scenarios:
        raise ConfigError("at least one --scenario is required")

    branching_raw = pick(args.branching, "branching", None)
    update_hz = pick(args.update_hz, "update_hz", None)
    horizon = pick(args.horizon_frames, "horizon_frames", None)
    # the executed plan length defines the cadence; an explicit horizon wins
    # over --update-hz (their combination is how the high-frequency mode is
    # requested) and both default to the 0.5 Hz / 2 s plan
    if horizon is not None:
        horizon = int(horizon)
        update_period = horizon * 0.1
        if update_hz is not None and abs(1.0 / float(update_hz) - update_period) > 1e-9:
            log.info(
                "horizon-frames %d overrides update-hz %s (plan cadence %.1fs)",
                horizon, update_hz, update_period,
            )
    elif update_hz is not None:
        update_period = 1.0 / float(update_hz)
        horizon = round(update_period * 10)
    else:
        update_period = 2.0
        horizon = 20

    n_steps = round(8.0 / update_period)
    if branching_raw is None:
        branching = (1,) * n_steps
    elif isinstance(branching_raw, str):
        branching = tuple(int(x) for x in branching_raw.split(","))
    else:
        branching = tuple(int(x) for x in branching_raw)

    collision_policy = pick(args.collision_policy, "collision_policy", True)
    heading_doc = manifest.get("heading", {})
    heading_params = _heading_from_dict(heading_doc.get("default", {}))
    overrides = {
        AgentKind(kind): _heading_from_dict(sub)
        for kind, sub in heading_doc.get("overrides", {}).items()
    }

    return SimulateOptions(
        scenarios=[str(s) for s in scenarios],
        predictor=str(pick(args.predictor, "predictor", "cv")),
        endpoints=list(args.endpoint or manifest.get("endpoints", [])),
        seed=int(pick(args.seed, "seed", 0)),
        rollouts=int(pick(args.rollouts, "rollouts", 32)),
        branching=branching,
        update_period=update_period,
        horizon_frames=horizon,
        collision_policy=bool(collision_policy),
        density_threshold=float(pick(args.density_threshold, "density_threshold", 0.95)),
        branch_filter_collisions=bool(
            pick(args.branch_filter_collisions, "branch_filter_collisions", False)
        ),
        jobs=int(pick(args.jobs, "jobs", 1)),
        out=str(pick(args.out, "out", "simloop-out")),
        heading_params=heading_params,
        heading_overrides=overrides,
    )


def _build_variants(opts: SimulateOptions, scenario: Scenario, n_variants: int):
    kind = opts.predictor
    if kind == "cv":
        return [ConstantVelocityPredictor() for _ in range(n_variants)]
    if kind == "noisy-cv":
        return [
            NoisyConstantVelocityPredictor(opts.seed + i) for i in range(n_variants)
        ]
    if kind == "replay":
        return [ReplayPredictor(scenario) for _ in range(n_variants)]
    if kind == "bridge":
        if len(opts.endpoints) != n_variants:
            raise ConfigError(
                f"bridge predictor needs {n_variants} --endpoint values "
                f"(one per variant), got {len(opts.endpoints)}"
            )
        predictors = []
        for i, ep in enumerate(opts.endpoints):
            host, _, port = ep.rpartition(":")
            if not host or not port.isdigit():
                raise ConfigError(f"endpoint {ep!r} is not HOST:PORT")
            predictors.append(
                BridgePredictor(TcpTransport(host, int(port)), name=f"bridge-{i}:{ep}")
            )
        return predictors
    raise ConfigError(f"unknown predictor {kind!r}")


def _simulate_one(
    opts: SimulateOptions, config: RolloutConfig, path: str, out_dir: Path
) -> dict:
    t0 = time.monotonic()
    scenario = load_scenario(path)
    predictors = _build_variants(opts, scenario, config.n_variants())
    rollouts = run_ensemble(scenario, predictors, config)
    rollout_path = out_dir / f"{scenario.scenario_id}.rollouts.json"
    write_rollouts(rollout_path, scenario.scenario_id, rollouts)
    for p in predictors:
        if isinstance(p, BridgePredictor):
            p.close()
    provenance = [
        {
            "variant_id": r.variant_id,
            "branch_path": list(r.branch_path),
            "steps": [
                {
                    "step": rec.step_index,
                    "branch_rank": rec.branch_rank,
                    "method": rec.method,
                    "selection": list(rec.selection),
                }
                for rec in r.steps
            ],
        }
        for r in rollouts
    ]
    method_counts: dict[str, int] = {}
    for entry in provenance:
        for step in entry["steps"]:
            method_counts[step["method"]] = method_counts.get(step["method"], 0) + 1
    return {
        "scenario_id": scenario.scenario_id,
        "scenario_path": str(path),
        "rollout_file": rollout_path.name,
        "rollout_count": len(rollouts),
        "wall_time_s": round(time.monotonic() - t0, 6),
        "selection_method_counts": method_counts,
        "selection_provenance": provenance,
    }


def cmd_simulate(args: argparse.Namespace) -> int:
    opts = _resolve_simulate(args)
    config = RolloutConfig(
        update_period=opts.update_period,
        total_duration=8.0,
        horizon_frames=opts.horizon_frames,
        collision_policy_enabled=opts.collision_policy,
        density_threshold=opts.density_threshold,
        branching=opts.branching,
        rollouts_required=opts.rollouts,
        branch_filter_collisions=opts.branch_filter_collisions,
        heading_params=opts.heading_params,
        heading_overrides=opts.heading_overrides,
    )
    config.n_variants()  # arity check before any work
    out_dir = Path(opts.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.monotonic()
    if opts.jobs > 1:
        with ThreadPoolExecutor(max_workers=opts.jobs) as pool:
            entries = list(
                pool.map(
                    lambda p: _simulate_one(opts, config, p, out_dir), opts.scenarios
                )
            )
    else:
        entries = [_simulate_one(opts, config, p, out_dir) for p in opts.scenarios]
    summary = {
        "version": __version__,
        "config": {
            "predictor": opts.predictor,
            "seed": opts.seed,
            "rollouts": opts.rollouts,
            "branching": list(opts.branching),
            "update_period_s": opts.update_period,
            "horizon_frames": opts.horizon_frames,
            "collision_policy": opts.collision_policy,
            "density_threshold": opts.density_threshold,
            "branch_filter_collisions": opts.branch_filter_collisions,
            "jobs": opts.jobs,
        },
        "discouraged_mode": config.discouraged_mode(),
        "wall_time_s": round(time.monotonic() - t0, 6),
        "scenarios": entries,
    }
    _atomic_write_json(out_dir / "run_summary.json", summary)
    for entry in entries:
        print(
            f"{entry['scenario_id']}: {entry['rollout_count']} rollouts "
            f"-> {entry['rollout_file']}"
        )
    if config.discouraged_mode():
        print(f"note: {config.discouraged_mode()}")
    return EXIT_OK


def _report_to_dict(report: EvaluationReport) -> dict:
    return {
        "scenario_id": report.scenario_id,
        "min_ade": report.min_ade,
        "rollout_count": report.rollout_count,
        "collision_pairs_total": sum(r.collision_pairs for r in report.rows),
        "feature_means": report.feature_means,
        "feature_maxes": report.feature_maxes,
        "rollouts": [
            {
                "variant_id": r.variant_id,
                "branch_path": list(r.branch_path),
                "ade": r.ade,
                "collision_pairs": r.collision_pairs,
            }
            for r in report.rows
        ],
    }


def cmd_evaluate(args: argparse.Namespace) -> int:
    scenario = load_scenario(args.scenario)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rollout_file in args.rollout_file:
        scenario_id, rollouts = load_rollouts(rollout_file)
        if scenario_id != scenario.scenario_id:
            raise ScenarioValidationError(
                f"rollout file {rollout_file} is for scenario {scenario_id!r}, "
                f"not {scenario.scenario_id!r}"
            )
        report = evaluate(scenario, rollouts)
        stem = Path(rollout_file).stem.replace(".rollouts", "")
        _atomic_write_json(out_dir / f"{stem}.report.json", _report_to_dict(report))
        lines = ["variant_id,branch_path,ade,collision_pairs"]
        for row in report.rows:
            path_str = "-".join(str(b) for b in row.branch_path)
            lines.append(
                f"{row.variant_id},{path_str},{row.ade!r},{row.collision_pairs}"
            )
        _atomic_write_text(out_dir / f"{stem}.report.csv", "\n".join(lines) + "\n")
        print(
            f"{scenario_id}: min_ade={report.min_ade:.6f} over "
            f"{report.rollout_count} rollouts"
        )
    return EXIT_OK


def cmd_oracle_check(args: argparse.Namespace) -> int:
    """Compare the greedy selection against the exhaustive oracle.

    Random graphs sweep edge probabilities 0.3..0.95; the soundness bound
    (accepted selections have at most floor(0.05 * N(N-1)/2) colliding
    pairs) must hold on every trial.
    """
    n = args.agents
    if n > 7:
        raise ConfigError("oracle check limited to 7 agents (6^N enumeration)")
    rng = np.random.default_rng(args.seed)
    successes = 0
    heuristic_counts = []
    oracle_counts = []
    max_shortfall = 0.0
    violations = 0
    for trial in range(args.trials):
        p = ORACLE_EDGE_PROBABILITIES[trial % len(ORACLE_EDGE_PROBABILITIES)]
        graph = random_collision_graph(n, p, rng)
        stats = SelectionSearchStats()
        sel = find_selection(graph, args.density_threshold, stats)
        _, oracle_count = brute_force_selection(graph)
        oracle_counts.append(oracle_count)
        if sel is not None:
            successes += 1
            count = count_colliding_pairs(graph, sel)
            heuristic_counts.append(count)
            density = subgraph_density(graph, sel.vertex_indices)
            max_shortfall = max(max_shortfall, 1.0 - density)
            bound = _missing_pairs_allowed(args.density_threshold, n)
            if density < args.density_threshold or count > bound:
                violations += 1
        else:
            heuristic_counts.append(count_colliding_pairs(graph, top1_selection(n)))
    success_rate = successes / args.trials
    print(f"trials:                {args.trials} (N={n}, seed={args.seed})")
    print(f"edge probabilities:    {ORACLE_EDGE_PROBABILITIES}")
    print(f"heuristic success:     {success_rate:.3f}")
    print(f"mean collisions:       heuristic={np.mean(heuristic_counts):.4f} "
          f"oracle={np.mean(oracle_counts):.4f}")
    print(f"max density shortfall: {max_shortfall:.4f}")
    if violations:
        print(f"SOUNDNESS VIOLATIONS:  {violations}")
        return EXIT_VALIDATION
    print("soundness bound:       ok")
    return EXIT_OK


def _missing_pairs_allowed(threshold: float, n: int) -> int:
    return math.floor((1.0 - threshold) * n * (n - 1) / 2)


def cmd_export(args: argparse.Namespace) -> int:
    scenario_id, rollouts = load_rollouts(args.rollout_file)
    if not (0 <= args.rollout_index < len(rollouts)):
        raise ConfigError(
            f"rollout index {args.rollout_index} outside [0, {len(rollouts)})"
        )
    rollout = rollouts[args.rollout_index]
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, agent_id in enumerate(rollout.agent_ids):
        csv_path = out_dir / f"{scenario_id}_{agent_id}.csv"
        tmp = csv_path.with_suffix(".csv.tmp")
        with open(tmp, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["frame", "cx", "cy", "heading", "vx", "vy"])
            for t, f in enumerate(rollout.frames[i]):
                writer.writerow([t, repr(f.cx), repr(f.cy), repr(f.heading),
                                 repr(f.vx), repr(f.vy)])
        os.replace(tmp, csv_path)
    svg_path = out_dir / f"{scenario_id}.svg"
    _atomic_write_text(svg_path, render_svg(rollout))
    print(f"exported {len(rollout.agent_ids)} CSVs and {svg_path.name}")
    return EXIT_OK


def render_svg(rollout: Rollout, box_frames: Sequence[int] | None = None) -> str:
    """Static overview: trajectory polylines plus boxes at sampled frames."""
    t = rollout.n_frames
    if box_frames is None:
        box_frames = sorted({0, t // 4, t // 2, (3 * t) // 4, t - 1})
    xs = [f.cx for frames in rollout.frames for f in frames]
    ys = [f.cy for frames in rollout.frames for f in frames]
    pad = 5.0
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    width, height = 800, 800
    span = max(x1 - x0, y1 - y0, 1e-9)
    scale = (width - 20) / span

    def sx(x: float) -> float:
        return 10 + (x - x0) * scale

    def sy(y: float) -> float:
        return height - 10 - (y - y0) * scale  # y up

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f"<title>{rollout.scenario_id} / {rollout.variant_id} "
        f"branch {list(rollout.branch_path)}</title>",
    ]
    for i, agent_id in enumerate(rollout.agent_ids):
        color = SVG_PALETTE[i % len(SVG_PALETTE)]
        pts = " ".join(
            f"{sx(f.cx):.2f},{sy(f.cy):.2f}" for f in rollout.frames[i]
        )
        parts.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"/>'
        )
        for bf in box_frames:
            f = rollout.frames[i][bf]
            w = f.dx * scale
            h = f.dy * scale
            angle = -math.degrees(f.heading)  # svg y is flipped
            parts.append(
                f'<rect x="{-w / 2:.2f}" y="{-h / 2:.2f}" width="{w:.2f}" '
                f'height="{h:.2f}" fill="{color}" fill-opacity="0.25" '
                f'stroke="{color}" transform="translate({sx(f.cx):.2f} '
                f'{sy(f.cy):.2f}) rotate({angle:.2f})"/>'
            )
        first = rollout.frames[i][0]
        parts.append(
            f'<text x="{sx(first.cx):.2f}" y="{sy(first.cy) - 6:.2f}" '
            f'font-size="11" fill="{color}">{agent_id}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="simloop", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="roll out scenarios")
    sim.add_argument("--scenario", action="append", help="scenario file (repeatable)")
    sim.add_argument("--manifest", help="JSON config file; flags override it")
    sim.add_argument(
        "--predictor", choices=("cv", "noisy-cv", "replay", "bridge"), default=None
    )
    sim.add_argument(
        "--endpoint", action="append",
        help="bridge HOST:PORT, one per variant (repeatable)",
    )
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--rollouts", type=int, default=None, help="total rollouts")
    sim.add_argument("--branching", default=None, help="per-step counts, e.g. 1,2,4,4")
    sim.add_argument(
        "--update-hz", type=float, choices=(0.5, 10.0), default=None,
        help="replanning frequency",
    )
    sim.add_argument("--horizon-frames", type=int, default=None)
    sim.add_argument(
        "--no-collision-policy", dest="collision_policy",
        action="store_const", const=False, default=None,
    )
    sim.add_argument("--density-threshold", type=float, default=None)
    sim.add_argument(
        "--branch-filter-collisions", action="store_const", const=True, default=None,
        help="drop colliding combinations from the branch ranking",
    )
    sim.add_argument("--jobs", type=int, default=None)
    sim.add_argument("--out", default=None)
    sim.set_defaults(func=cmd_simulate)

    ev = sub.add_parser("evaluate", help="score rollout files against ground truth")
    ev.add_argument("--scenario", required=True)
    ev.add_argument(
        "--rollout-file", action="append", required=True, help="repeatable"
    )
    ev.add_argument("--out", default="simloop-out")
    ev.set_defaults(func=cmd_evaluate)

    oc = sub.add_parser(
        "oracle-check", help="greedy selection vs exhaustive oracle on random graphs"
    )
    oc.add_argument("--agents", type=int, default=4)
    oc.add_argument("--trials", type=int, default=500)
    oc.add_argument("--seed", type=int, default=0)
    oc.add_argument("--density-threshold", type=float, default=0.95)
    oc.set_defaults(func=cmd_oracle_check)

    ex = sub.add_parser("export", help="per-agent CSVs and an SVG overview")
    ex.add_argument("rollout_file")
    ex.add_argument("--rollout-index", type=int, default=0)
    ex.add_argument("--out", default="simloop-out")
    ex.set_defaults(func=cmd_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse handles --help and usage errors
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (
        ScenarioFormatError,
        ScenarioValidationError,
        ConfigError,
        FileNotFoundError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except PredictorError as exc:
        print(f"predictor error: {exc}", file=sys.stderr)
        return EXIT_PREDICTOR
    except StepError as exc:
        if isinstance(exc.__cause__, PredictorError):
            print(f"predictor error: {exc}", file=sys.stderr)
            return EXIT_PREDICTOR
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as exc:  # noqa: BLE001 - the exit-code contract needs a catch-all
        log.exception("internal error")
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
