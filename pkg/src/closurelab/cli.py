"""Command-line interface: solve, generate, features, evaluate, report.

Exit codes: 0 success, 1 error (bad input, fingerprint mismatch), 2 solver
did not converge, 3 infeasible closure (disconnected OD pairs listed).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import CONFIG_VERSION, load_config
from .errors import ClosureLabError, ConfigError, DatasetError
from .evaluation import EvalReport, emit_report, format_averages_table, run_online_eval
from .features import (
    BaselineStats,
    FeatureSpec,
    build_feature_matrix,
    pearson_screen,
    selected_union,
    sequential_select,
)
from .network import ClosureConfig, apply_closures, bundled_sioux_falls, connectivity_check, load_tntp
from .scenarios import generate_dataset, load_dataset, save_dataset
from .tap import SolverOptions, solve_ue


def _load_network(net_path, trips_path):
    if net_path is None:
        return bundled_sioux_falls()
    for p in (net_path, trips_path):
        if not Path(p).exists():
            raise ClosureLabError(f"file not found: {p}")
    return load_tntp(net_path, trips_path)


def _parse_closures(text) -> ClosureConfig:
    if not text:
        return ClosureConfig.of([])
    try:
        return ClosureConfig.of(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise ClosureLabError(f"bad closure list {text!r}; expected comma-separated link ids")


def cmd_solve(args) -> int:
    network, demand = _load_network(args.net, args.trips)
    config = _parse_closures(args.close)
    closed = apply_closures(network, config)
    missing = connectivity_check(closed, demand)
    if missing:
        print("infeasible closure; disconnected OD pairs:", file=sys.stderr)
        for origin, dest in missing:
            print(f"  {origin} -> {dest}", file=sys.stderr)
        return 3
    opts = SolverOptions(
        gap_tolerance=args.gap_tolerance,
        max_iterations=args.max_iterations,
    )
    eq = solve_ue(closed, demand, opts)
    print(f"ttt {eq.ttt!r}")
    print(f"relative_gap {eq.relative_gap:.3e}")
    print(f"iterations {eq.iterations}")
    print(f"converged {str(eq.converged).lower()}")
    if args.json:
        Path(args.json).write_text(
            json.dumps(eq.to_json_dict(closed), sort_keys=True), encoding="utf-8"
        )
    return 0 if eq.converged else 2


def cmd_generate(args) -> int:
    config = load_config(args.config)
    if args.dataset:
        config.dataset_path = Path(args.dataset)
    if args.workers:
        config.workers = args.workers
    if args.count:
        config.sample_count = args.count
    network, demand = _load_network(config.net_path, config.trips_path)

    def progress(done, total):
        print(f"labeled {done}/{total} scenarios", file=sys.stderr)

    dataset = generate_dataset(
        network,
        demand,
        config.sample_count,
        config.sampler,
        config.solver,
        workers=config.workers,
        max_attempts=config.max_attempts,
        progress=progress,
    )
    config.dataset_path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(dataset, config.dataset_path)
    print(f"wrote {len(dataset)} scenarios to {config.dataset_path}")
    return 0


def cmd_features(args) -> int:
    config = load_config(args.config)
    if args.dataset:
        config.dataset_path = Path(args.dataset)
    if args.out_dir:
        config.out_dir = Path(args.out_dir)
    network, demand = _load_network(config.net_path, config.trips_path)
    dataset = load_dataset(config.dataset_path, network=network)
    stats = BaselineStats.compute(network, demand, config.solver)

    engineered = build_feature_matrix(
        dataset, FeatureSpec(representation="engineered"), stats
    )
    targets = dataset.targets()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    engineered.to_csv(out_dir / "features.csv")
    with open(out_dir / "correlations.csv", "w", encoding="utf-8") as fh:
        fh.write("feature,pearson_r_log_ttt,degenerate\n")
        screen = pearson_screen(engineered, targets, transform="log")
        for name, r, degenerate in sorted(screen, key=lambda rec: -abs(rec[1])):
            fh.write(f"{name},{r!r},{str(degenerate).lower()}\n")

    k = min(config.select_k, len(engineered.names))
    forward = sequential_select(engineered, targets, "forward", k, config.select_folds)
    backward = sequential_select(engineered, targets, "backward", k, config.select_folds)
    union = selected_union(engineered, targets, k, config.select_folds)
    (out_dir / "selection.json").write_text(
        json.dumps(
            {"k": k, "forward": forward, "backward": backward, "union": union},
            indent=1,
            sort_keys=True,
        ),
        encoding="utf-8",
    )
    print(f"wrote features.csv, correlations.csv, selection.json to {out_dir}")
    print(f"selected union ({len(union)}): {', '.join(union)}")
    return 0


def cmd_evaluate(args) -> int:
    config = load_config(args.config)
    if args.dataset:
        config.dataset_path = Path(args.dataset)
    if args.out_dir:
        config.out_dir = Path(args.out_dir)
    network, demand = _load_network(config.net_path, config.trips_path)
    dataset = load_dataset(config.dataset_path, network=network)
    stats = BaselineStats.compute(network, demand, config.solver)
    report = run_online_eval(
        dataset, config.models, config.eval_config, stats, config.feature_spec
    )
    report.provenance["config_version"] = CONFIG_VERSION
    out_dir = Path(config.out_dir)
    emit_report(report, out_dir)
    report.save(out_dir / "report.json")
    print(format_averages_table(report))
    print(f"report written to {out_dir}")
    return 0


def cmd_report(args) -> int:
    report = EvalReport.load(args.report)
    emit_report(report, args.out_dir)
    print(format_averages_table(report))
    print(f"re-rendered report in {args.out_dir}")
    return 0


_CONFIG_HELP = """\
run configuration keys (JSON, schema version 1; unknown keys rejected):
  version                required, must be 1
  network.net/.trips     TNTP file pair (default: bundled Sioux Falls)
  solver.gap_tolerance   relative-gap stopping rule        (default 1e-4)
  solver.max_iterations  Frank-Wolfe iteration cap         (default 20000)
  solver.line_search_tolerance / .line_search_max_halvings (1e-8 / 64)
  sampler.count          scenarios to label                (default 1000)
  sampler.size_min/.size_max  closure-size range           (default 1..10)
  sampler.seed           sampling seed                     (default 0)
  sampler.max_attempts   draw budget (default 100*count + 1000)
  workers                labeling worker threads           (default 1)
  dataset                dataset path                      (default dataset.jsonl)
  features.representation one_hot|pairwise|engineered|combined
  features.selected      engineered-feature subset (null = all 22)
  features.include_csh   append costliest-subset column    (default true)
  features.select_k/.select_folds  sequential-selection size and CV folds (9 / 5)
  models                 list of heuristics (csh|cash|csuph) and model specs
                         {"kind", "tau", "hyperparameters"}
  eval.batch_size/.iterations/.tau  online protocol        (200 / 20 / 0.05)
  eval.time_cap_seconds/.time_cap_window  per-model cut-off (600 / 10)
  eval.seed              protocol seed                     (default 0)
  out_dir                report directory                  (default report)
"""


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="closurelab",
        description="Traffic assignment under road closures with surrogate benchmarking.",
        epilog=_CONFIG_HELP,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one closure scenario to user equilibrium")
    solve.add_argument("--net", help="TNTP network file (default: bundled Sioux Falls)")
    solve.add_argument("--trips", help="TNTP trips file")
    solve.add_argument("--close", default="", help="comma-separated link ids to close")
    solve.add_argument("--gap-tolerance", type=float, default=1e-4)
    solve.add_argument("--max-iterations", type=int, default=20000)
    solve.add_argument("--json", help="write the equilibrium record to this path")
    solve.set_defaults(func=cmd_solve)

    generate = sub.add_parser("generate", help="sample and label a closure dataset")
    generate.add_argument("--config", required=True, help="JSON run configuration")
    generate.add_argument("--dataset", help="override config dataset path")
    generate.add_argument("--workers", type=int, help="override config worker count")
    generate.add_argument("--count", type=int, help="override sampler.count")
    generate.set_defaults(func=cmd_generate)

    features = sub.add_parser("features", help="emit feature matrix, correlations, selection")
    features.add_argument("--config", required=True)
    features.add_argument("--dataset", help="override config dataset path")
    features.add_argument("--out-dir", help="override config output directory")
    features.set_defaults(func=cmd_features)

    evaluate = sub.add_parser("evaluate", help="run the online benchmark and write reports")
    evaluate.add_argument("--config", required=True)
    evaluate.add_argument("--dataset", help="override config dataset path")
    evaluate.add_argument("--out-dir", help="override config output directory")
    evaluate.set_defaults(func=cmd_evaluate)

    report = sub.add_parser("report", help="re-render CSVs and chart from a saved report")
    report.add_argument("--report", required=True, help="path to report.json")
    report.add_argument("--out-dir", required=True)
    report.set_defaults(func=cmd_report)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ClosureLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"error: file not found: {exc.filename}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
