"""Execution of experiment configs: single runs, grids, and their artifacts.

Each run owns a private directory named by its run id and leaves behind
run.json, prediction files, metrics.csv, and the loss/accuracy curves.
Grid runs execute every combination, record failures without aborting the
rest, and write a one-row-per-run summary CSV.
"""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from . import metrics as met
from . import models, reporting
from .catalog import DatasetManifest, load_manifest, write_manifest
from .config import ExperimentConfig
from .errors import ConfigError, HarnessError
from .preprocessing import (
    GrahamParams,
    eval_transform,
    graham_preprocess,
    load_image,
    save_image,
    train_transform,
)
from .stats import train_val_ratio
from .training import DataSplit, RunRecord, evaluate, train


@dataclass(frozen=True)
class RunArtifacts:
    run_id: str
    run_dir: Path
    run_record: RunRecord

    @property
    def metrics_csv(self) -> Path:
        return self.run_dir / "metrics.csv"


def preprocess_manifest(
    manifest: DatasetManifest,
    params: GrahamParams,
    cache_dir: str | Path,
    image_root: str | None = None,
) -> DatasetManifest:
    """Fundus-normalize every image into cache_dir; returns the rewritten
    manifest pointing at the cached files."""
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    rewritten = []
    for rec in manifest.samples:
        src = Path(image_root) / rec.image_path if image_root else Path(rec.image_path)
        dst = cache_dir / (Path(rec.image_path).stem + ".png")
        if not dst.exists():
            save_image(str(dst), graham_preprocess(load_image(str(src)), params))
        rewritten.append(
            type(rec)(
                image_path=str(dst), label=rec.label, split=rec.split,
                patient_id=rec.patient_id, eye=rec.eye,
            )
        )
    cached = DatasetManifest(manifest.task_name, manifest.class_names, tuple(rewritten))
    write_manifest(cached, cache_dir / "manifest.tsv")
    return cached


def _metric_rows(
    run_id: str,
    record: RunRecord,
    test_record,
    predictions,
    manifest: DatasetManifest,
    schemes: tuple[str, ...],
) -> list[tuple[str, str, str, str]]:
    """(run_id, metric, scheme, value) rows; every value recomputable from
    run.json and the prediction files."""
    rows = []

    def add(metric: str, value, scheme: str = ""):
        rows.append((run_id, metric, scheme, f"{value:.10g}" if isinstance(value, float) else str(value)))

    last_train = [r for r in record.records if r.phase == "train"][-1]
    last_val = [r for r in record.records if r.phase == "validation"][-1]
    add("last_train_loss", last_train.loss)
    add("last_train_acc", last_train.accuracy)
    add("last_val_loss", last_val.loss)
    add("last_val_acc", last_val.accuracy)
    add("best_val_acc", record.best_validation_accuracy)
    ratio = train_val_ratio(record)
    add("ratio_mean", ratio.mean)
    add("ratio_std", ratio.std)
    add("overfit_flag", ratio.overfit_flag)

    if predictions is not None:
        cm = met.confusion_matrix(predictions, manifest.num_classes)
        add("test_loss", test_record.loss)
        add("test_accuracy", met.accuracy(cm))
        try:
            breakdown = met.quadratic_weighted_kappa(cm)
            add("test_kappa", breakdown.kappa)
            add("test_kappa_category", met.kappa_category(breakdown.kappa))
        except HarnessError:
            add("test_kappa", "undefined")
        for scheme_name in schemes:
            scheme = met.SCHEME_BUILDERS[scheme_name](manifest.num_classes)
            bc = met.binarize(cm, scheme)
            try:
                add("test_sensitivity", met.sensitivity(bc), scheme_name)
            except HarnessError:
                add("test_sensitivity", "undefined", scheme_name)
            try:
                add("test_specificity", met.specificity(bc), scheme_name)
            except HarnessError:
                add("test_specificity", "undefined", scheme_name)
    return rows


def run(config: ExperimentConfig) -> RunArtifacts:
    """Train, evaluate, and persist every artifact of one expanded config."""
    if not config.is_single:
        raise ConfigError("model", "run requires single-valued architecture/pretrained/mode")
    arch = config.architectures[0]
    pretrained = config.pretrained[0]
    mode = config.modes[0]

    run_id = config.run_id()
    run_dir = Path(config.output_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)

    manifest = load_manifest(config.manifest_path)
    image_root = config.image_root
    if config.preprocess is not None:
        cache = config.preprocess_cache or str(Path(config.output_dir) / "preprocess_cache")
        manifest = preprocess_manifest(manifest, config.preprocess, cache, image_root)
        image_root = None

    handle = models.build_model(
        arch, manifest.num_classes, pretrained=pretrained, mode=mode,
        seed=config.train.seed,
    )
    crop = config.crop_edge or handle.architecture.input_edge
    train_split = DataSplit(manifest, "train", train_transform(crop), image_root)
    val_split = DataSplit(manifest, "validation", eval_transform(crop), image_root)

    record = train(handle, train_split, val_split, config.train, checkpoint_dir=run_dir)
    record.save(run_dir / "run.json")

    predictions = None
    test_record = None
    if manifest.split_sizes().get("test"):
        test_split = DataSplit(manifest, "test", eval_transform(crop), image_root)
        predictions, test_record = evaluate(
            handle, test_split, class_weights=config.train.class_weights
        )
        met.write_predictions(predictions, run_dir / "predictions_test.tsv")

    rows = _metric_rows(run_id, record, test_record, predictions, manifest,
                        config.binarization)
    with open(run_dir / "metrics.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("run_id", "metric", "scheme", "value"))
        writer.writerows(rows)

    reporting.plot_run_curves(record, run_dir)
    return RunArtifacts(run_id=run_id, run_dir=run_dir, run_record=record)


def _grid_worker(config: ExperimentConfig) -> tuple[str, str, str]:
    try:
        artifacts = run(config)
        return artifacts.run_id, "ok", ""
    except Exception as exc:  # failures recorded, grid continues
        return config.run_id(), "failed", f"{type(exc).__name__}: {exc}"


def plan(config: ExperimentConfig) -> list[dict]:
    """One planned-summary row per grid combination, before any execution."""
    return [
        {
            "run_id": combo.run_id(),
            "architecture": combo.architectures[0],
            "pretrained": str(combo.pretrained[0]).lower(),
            "mode": combo.modes[0],
            "status": "planned",
            "error": "",
        }
        for combo in config.combinations()
    ]


def _write_summary(out_dir: Path, rows: list[dict]) -> None:
    with open(out_dir / "grid_summary.csv", "w", newline="") as fh:
        writer = csv.DictWriter(
            fh, fieldnames=("run_id", "architecture", "pretrained", "mode", "status", "error")
        )
        writer.writeheader()
        writer.writerows(rows)


def grid(config: ExperimentConfig) -> list[dict]:
    """Run every combination; failures are recorded and the grid continues.

    The summary is written up front with every planned run and rewritten by
    the single parent process as results arrive.
    """
    combos = config.combinations()
    if len(combos) < 2:
        raise ConfigError("model", "grid requires at least one list-valued axis")
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = plan(config)
    _write_summary(out_dir, rows)

    if config.max_parallel > 1:
        with ProcessPoolExecutor(max_workers=config.max_parallel) as pool:
            results = list(pool.map(_grid_worker, combos))
        for row, (_, status, error) in zip(rows, results):
            row["status"], row["error"] = status, error
    else:
        for row, combo in zip(rows, combos):
            _, row["status"], row["error"] = _grid_worker(combo)
            _write_summary(out_dir, rows)

    _write_summary(out_dir, rows)
    return rows
