"""
cli.py

Command-line surface with three subcommands:

  run      run one experiment from a YAML config (plus overrides)
  eval     coverage curves and the entropy report for a container snapshot
  compare  per-seed total coverage of many runs on one task, plus median
           and IQR coverage per minimum performance for each variant

Exit codes: 0 success, 1 configuration or input error, 2 encoder divergence.
"""

from __future__ import annotations

import argparse
import glob
import logging
import sys
from pathlib import Path

import numpy as np
import pandas as pd

from aurora_qd import __version__
from aurora_qd.container import FLOAT_FORMAT, load_snapshot
from aurora_qd.core import (AuroraError, ConfigError, DivergenceError, EncoderFitError, ExperimentConfig,
                            SnapshotError, Task, Variant, load_config, override_config)
from aurora_qd.dimred import load_model
from aurora_qd.loop import ENCODER_FILE, ENTROPY_FILE, MANIFEST_FILE, RunManifest, run, verify_manifest
from aurora_qd.metrics import SNAPSHOT_GRID, TASK_GRID, projection_curve, snapshot_entropy_report

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGENCE = 2
LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


def _fail(message: str, code: int = EXIT_INPUT) -> int:
    print(f"ERROR: {message}", file=sys.stderr)
    return code


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


# --- RUN ---

def cmd_run(config_path: str | Path | None = None, *, seed: int | None = None, variant: str | None = None,
            threads: int | None = None, out_dir: str | None = None, iterations: int | None = None,
            plot: bool = False, quiet: bool = False) -> int:
    try:
        config = load_config(config_path) if config_path is not None else ExperimentConfig().validate()
        config = override_config(config, seed=seed, variant=variant, threads=threads,
                                 out_dir=out_dir, n_iterations=iterations)
    except ConfigError as err:
        return _fail(str(err))

    print(f"--- Starting {config.variant.value} run (seed {config.seed}) ---")
    print(f"1. Bootstrapping {config.bootstrap_size} random policies...")
    print(f"2. Running {config.n_iterations} QD iterations (batch {config.batch_size}, "
          f"target size {config.target_size}, {config.threads} thread(s))...")
    try:
        state, directory = run(config, plot=plot, progress_bar=not quiet)
    except DivergenceError as err:
        return _fail(f"{err} (step {err.step}, last finite loss {err.last_loss:.6g})", EXIT_DIVERGENCE)
    except AuroraError as err:
        return _fail(str(err))

    manifest = RunManifest.read(directory / MANIFEST_FILE)
    print(f"3. Wrote artifacts to {directory}/")
    for name in sorted(manifest.files):
        print(f"   - {name}")
    print(f"--- Done: {manifest.final_container_size} policies, {manifest.evaluations} evaluations, "
          f"hash {manifest.content_hash[:12]} ---")
    return EXIT_OK


# --- EVAL ---

def cmd_eval(snapshot_path: str | Path, tasks: list[str] | None = None, out_dir: str | Path | None = None,
             plot: bool = False, grid: str = TASK_GRID, entropy: bool = True) -> int:
    snapshot_path = Path(snapshot_path)
    try:
        selected = [Task(t) for t in (tasks or [t.value for t in Task])]
    except ValueError as err:
        return _fail(str(err))
    if grid not in (TASK_GRID, SNAPSHOT_GRID):
        return _fail(f"unknown threshold grid {grid!r}")
    try:
        snapshot = load_snapshot(snapshot_path)
    except SnapshotError as err:
        return _fail(f"{snapshot_path}: {err}")
    if snapshot.empty:
        return _fail(f"{snapshot_path} holds no policies")

    variant = Variant(snapshot["variant"].iloc[0])
    target = Path(out_dir) if out_dir is not None else snapshot_path.parent / "eval"
    print(f"--- Evaluating {snapshot_path} ({variant.value}, {len(snapshot)} policies) ---")
    step = 0
    for step, task in enumerate(selected, start=1):
        curve = projection_curve(snapshot, task, variant, grid=grid)
        path = _write_csv(curve.to_frame(variant=variant.value), target / f"coverage_{task.value}.csv")
        print(f"{step}. {task.value}: total coverage {curve.total} -> {path}")
        if plot:
            from aurora_qd.plotting import plot_snapshot

            plot_snapshot(snapshot, task, target / f"container_{task.value}.svg")
    if not entropy:
        return EXIT_OK

    encoder = None
    if variant is Variant.AURORA:
        encoder_path = snapshot_path.parent / ENCODER_FILE
        if not encoder_path.exists():
            logger.warning("No %s beside %s; skipping the entropy report", ENCODER_FILE, snapshot_path)
            return EXIT_OK
        try:
            encoder = load_model(encoder_path)
        except EncoderFitError as err:
            return _fail(str(err))
    report = snapshot_entropy_report(snapshot, variant, encoder)
    path = _write_csv(report.to_frame(variant=variant.value), target / ENTROPY_FILE)
    verdict = "holds" if report.holds else "VIOLATED"
    print(f"{step + 1}. entropy: H_s {report.h_trajectory:.4f}, H_b {report.h_descriptor:.4f} ({verdict}) -> {path}")
    return EXIT_OK


# --- COMPARE ---

def _completed_runs(manifest_paths: list[Path], task: Task) -> list[tuple[RunManifest, pd.DataFrame]]:
    runs = []
    for path in manifest_paths:
        manifest = RunManifest.read(path)
        if manifest.status != "ok":
            logger.warning("Skipping %s: run status %s", path, manifest.status)
            continue
        if not verify_manifest(path):
            logger.warning("%s: artifacts no longer match their recorded hashes", path)
        coverage_file = path.parent / f"coverage_{task.value}.csv"
        if not coverage_file.exists():
            raise SnapshotError(f"{path.parent} has no coverage for task {task.value}")
        runs.append((manifest, pd.read_csv(coverage_file)))
    if not runs:
        raise SnapshotError("no completed runs to compare")
    return runs


def _quartiles(values) -> pd.DataFrame:
    return values.agg(median="median", q25=lambda s: s.quantile(0.25), q75=lambda s: s.quantile(0.75),
                      n_seeds="count")


def compare_table(manifest_paths: list[Path], task: Task) -> pd.DataFrame:
    """Raw per-run total coverage rows followed by one median/IQR row per variant."""
    task = Task(task)
    raw = [{"row_type": "raw", "variant": manifest.variant, "seed": manifest.seed,
            "total_coverage": int(frame["coverage"].iloc[0])}
           for manifest, frame in _completed_runs(manifest_paths, task)]

    table = pd.DataFrame(raw).sort_values(["variant", "seed"], kind="stable")
    summary = _quartiles(table.groupby("variant")["total_coverage"]).reset_index().assign(row_type="summary")
    columns = ["row_type", "variant", "seed", "total_coverage", "median", "q25", "q75", "n_seeds"]
    merged = pd.concat([table, summary], ignore_index=True).reindex(columns=columns)
    merged.insert(2, "task", task.value)
    return merged


def compare_curves(manifest_paths: list[Path], task: Task) -> pd.DataFrame:
    """
    Median and IQR of coverage per minimum performance, per variant. Runs
    that only report total coverage (foreign projections) are left out; an
    empty frame is returned when the runs do not share one threshold grid.
    """
    task = Task(task)
    columns = ["variant", "task", "threshold", "median", "q25", "q75", "n_seeds"]
    curves, reference = [], None
    for manifest, frame in _completed_runs(manifest_paths, task):
        finite = frame[np.isfinite(frame["threshold"].to_numpy(dtype=float))]
        if finite.empty:
            continue
        thresholds = finite["threshold"].to_numpy(dtype=float)
        if reference is None:
            reference = thresholds
        elif thresholds.shape != reference.shape or not np.array_equal(thresholds, reference):
            logger.warning("Runs use different threshold grids on %s; rerun them with coverage_grid: task "
                           "to compare curves", task.value)
            return pd.DataFrame(columns=columns)
        curves.append(finite.assign(variant=manifest.variant, seed=manifest.seed))
    if not curves:
        return pd.DataFrame(columns=columns)

    merged = pd.concat(curves, ignore_index=True)
    summary = _quartiles(merged.groupby(["variant", "threshold"])["coverage"]).reset_index()
    summary.insert(1, "task", task.value)
    return summary.reindex(columns=columns)


def cmd_compare(pattern: str, task: str = Task.NAV.value, out_dir: str | Path | None = None,
                plot: bool = False) -> int:
    try:
        task = Task(task)
    except ValueError as err:
        return _fail(str(err))
    paths = sorted(Path(p) for p in glob.glob(pattern))
    if len(paths) < 2:
        return _fail(f"need at least 2 manifests, '{pattern}' matched {len(paths)}")

    print(f"--- Comparing {len(paths)} runs on {task.value} ---")
    try:
        table = compare_table(paths, task)
        curves = compare_curves(paths, task)
    except SnapshotError as err:
        return _fail(str(err))
    target = Path(out_dir) if out_dir is not None else Path(".")
    path = _write_csv(table, target / f"compare_{task.value}.csv")

    summary = table[table["row_type"] == "summary"]
    for _, row in summary.iterrows():
        print(f"   {row['variant']:<8} median {row['median']:g}  IQR [{row['q25']:g}, {row['q75']:g}]  "
              f"({int(row['n_seeds'])} seeds)")
    print(f"--- Wrote {path} ---")
    if not curves.empty:
        curve_path = _write_csv(curves, target / f"compare_{task.value}_curves.csv")
        print(f"--- Wrote {curve_path} ---")
        if plot:
            from aurora_qd.plotting import plot_compare_curves

            plot_compare_curves(curves, task, target / f"compare_{task.value}_curves.svg")
    return EXIT_OK


# --- ENTRY POINT ---

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aurora-qd", description="Quality-diversity runs on a planar unicycle.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment")
    p_run.add_argument("--config", help="YAML configuration file (defaults apply when omitted)")
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--variant", choices=[v.value for v in Variant])
    p_run.add_argument("--threads", type=int)
    p_run.add_argument("--out-dir")
    p_run.add_argument("--iterations", type=int)
    p_run.add_argument("--plot", action="store_true", help="also write SVG scatters per task")
    p_run.add_argument("--quiet", action="store_true", help="hide the progress bar")

    p_eval = sub.add_parser("eval", help="coverage curves and entropy report for a container snapshot")
    p_eval.add_argument("snapshot")
    p_eval.add_argument("--tasks", nargs="+", choices=[t.value for t in Task])
    p_eval.add_argument("--out-dir")
    p_eval.add_argument("--plot", action="store_true")
    p_eval.add_argument("--grid", default=TASK_GRID, choices=[TASK_GRID, SNAPSHOT_GRID],
                        help="thresholds over the task's score range (shared by all runs) or the snapshot's")
    p_eval.add_argument("--no-entropy", action="store_true", help="skip re-simulating genotypes for entropy.csv")

    p_cmp = sub.add_parser("compare", help="per-seed coverage table across runs")
    p_cmp.add_argument("manifests", help="glob matching manifest.json files, e.g. 'runs/*/manifest.json'")
    p_cmp.add_argument("--task", default=Task.NAV.value, choices=[t.value for t in Task])
    p_cmp.add_argument("--out-dir")
    p_cmp.add_argument("--plot", action="store_true", help="also draw median/IQR coverage curves")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT, stream=sys.stderr, force=True)
    if args.command == "run":
        return cmd_run(args.config, seed=args.seed, variant=args.variant, threads=args.threads,
                       out_dir=args.out_dir, iterations=args.iterations, plot=args.plot, quiet=args.quiet)
    if args.command == "eval":
        return cmd_eval(args.snapshot, tasks=args.tasks, out_dir=args.out_dir, plot=args.plot, grid=args.grid,
                        entropy=not args.no_entropy)
    return cmd_compare(args.manifests, task=args.task, out_dir=args.out_dir, plot=args.plot)
