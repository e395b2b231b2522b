"""Command-line front door.

Verbs: run, grid, report, compare, preprocess, import-dirs.
Exit codes: 0 success, 2 config error, 3 runtime error.
"""

from __future__ import annotations

import argparse
import sys

from . import reporting, runner
from .catalog import import_directory_tree, load_manifest, write_manifest
from .config import load_experiment_config
from .errors import ConfigError, HarnessError
from .preprocessing import GrahamParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retinabench",
        description="Transfer-learning evaluation harness for retinal imaging tasks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a single experiment config")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", help="override the config's output_dir")
    p_run.add_argument("--seed", type=int, help="override the config's seed")

    p_grid = sub.add_parser("grid", help="execute the Cartesian grid of a config")
    p_grid.add_argument("--config", required=True)
    p_grid.add_argument("--out", help="override the config's output_dir")
    p_grid.add_argument("--seed", type=int)
    p_grid.add_argument("--max-parallel", type=int, default=None)

    p_report = sub.add_parser("report", help="render tables and figures for finished runs")
    p_report.add_argument("runs", nargs="+", help="run directories")
    p_report.add_argument("--out", required=True)

    p_cmp = sub.add_parser("compare", help="two-group statistical comparison")
    p_cmp.add_argument("--test", required=True,
                       choices=("wilcoxon_signed_rank", "mann_whitney_u"))
    p_cmp.add_argument("--a", required=True,
                       help="csv_path#column or comma-separated run dirs")
    p_cmp.add_argument("--b", required=True)
    p_cmp.add_argument("--metric", help="run metric selector for run-dir groups")
    p_cmp.add_argument("--out", default="comparisons.csv")

    p_prep = sub.add_parser("preprocess", help="batch fundus normalization to a cache dir")
    p_prep.add_argument("--manifest", required=True)
    p_prep.add_argument("--out", required=True)
    p_prep.add_argument("--image-root")
    p_prep.add_argument("--target-radius", type=int, default=500)
    p_prep.add_argument("--target-gray", type=float, default=0.5)
    p_prep.add_argument("--clip-fraction", type=float, default=0.9)
    p_prep.add_argument("--blur-scale", type=float, default=0.1)

    p_imp = sub.add_parser("import-dirs", help="directory-per-class layout to a manifest")
    p_imp.add_argument("--root", required=True)
    p_imp.add_argument("--task", required=True)
    p_imp.add_argument("--out", required=True)
    p_imp.add_argument("--split", default="train",
                       help="split for flat layouts without split directories")

    return parser


def _cmd_run(args) -> int:
    config = load_experiment_config(args.config, seed_override=args.seed)
    if args.out:
        from dataclasses import replace
        config = replace(config, output_dir=args.out)
    artifacts = runner.run(config)
    print(f"run {artifacts.run_id} -> {artifacts.run_dir}")
    return EXIT_OK


def _cmd_grid(args) -> int:
    from dataclasses import replace
    config = load_experiment_config(args.config, seed_override=args.seed)
    if args.out:
        config = replace(config, output_dir=args.out)
    if args.max_parallel:
        config = replace(config, max_parallel=args.max_parallel)
    rows = runner.grid(config)
    failed = sum(1 for r in rows if r["status"] == "failed")
    print(f"grid: {len(rows)} runs, {failed} failed -> {config.output_dir}/grid_summary.csv")
    return EXIT_OK


def _cmd_report(args) -> int:
    written = reporting.render_report(args.runs, args.out)
    print(f"report: {len(written)} files -> {args.out}")
    return EXIT_OK


def _cmd_compare(args) -> int:
    a = reporting.resolve_group(args.a, args.metric)
    b = reporting.resolve_group(args.b, args.metric)
    result = reporting.compare_groups(
        a, b, args.test, label_a=args.a, label_b=args.b, comparisons_csv=args.out
    )
    flag = "significant" if result.significant else "not significant"
    print(f"{result.test}: statistic={result.statistic:.6g} "
          f"p={result.p_value:.6g} ({flag})")
    return EXIT_OK


def _cmd_preprocess(args) -> int:
    manifest = load_manifest(args.manifest)
    params = GrahamParams(
        target_radius=args.target_radius,
        target_gray=args.target_gray,
        clip_fraction=args.clip_fraction,
        blur_scale=args.blur_scale,
    )
    cached = runner.preprocess_manifest(manifest, params, args.out, args.image_root)
    print(f"preprocess: {len(cached.samples)} images -> {args.out}")
    return EXIT_OK


def _cmd_import_dirs(args) -> int:
    manifest = import_directory_tree(args.root, task_name=args.task,
                                     default_split=args.split)
    write_manifest(manifest, args.out)
    print(f"import-dirs: {len(manifest.samples)} samples, "
          f"{manifest.num_classes} classes -> {args.out}")
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "grid": _cmd_grid,
    "report": _cmd_report,
    "compare": _cmd_compare,
    "preprocess": _cmd_preprocess,
    "import-dirs": _cmd_import_dirs,
}


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # anything else is still a runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
