"""Report rendering: curves, boxplots, heatmaps, and pivot CSV tables.

Everything here is recomputed from run.json and prediction files; reports
hold no state of their own.  Plot styling is fixed and deterministic so
rerendering the same runs yields the same figures.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import metrics as met
from .errors import LengthMismatch, MissingArtifacts, MissingMetric
from .stats import ComparisonResult, mann_whitney_u, train_val_ratio, wilcoxon_signed_rank
from .training import RunRecord, load_run_record

RUN_METRICS = ("last_train_loss", "last_val_loss", "last_train_acc",
               "last_val_acc", "best_val_acc")


def _series(record: RunRecord, phase: str, field: str) -> list[float]:
    return [getattr(r, field) for r in record.records if r.phase == phase]


def plot_run_curves(record: RunRecord, out_dir: str | Path, run_id: str = "") -> None:
    """Write loss_curve.png and acc_curve.png (train + validation, one axis
    each)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    epochs = np.arange(1, record.config.epochs + 1)
    title_base = f"{record.architecture} {record.mode} " \
                 f"{'pretrained' if record.pretrained else 'not-pretrained'}"
    if run_id:
        title_base += f" [{run_id}]"
    for field, label, fname in (
        ("loss", "loss", "loss_curve.png"),
        ("accuracy", "accuracy", "acc_curve.png"),
    ):
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(epochs, _series(record, "train", field), marker="o", label="train")
        ax.plot(epochs, _series(record, "validation", field), marker="s", label="validation")
        ax.set_xlabel("epoch")
        ax.set_ylabel(label)
        ax.set_title(title_base)
        ax.legend()
        fig.tight_layout()
        fig.savefig(out_dir / fname, dpi=100)
        plt.close(fig)


def plot_ratio(record: RunRecord, out_path: str | Path) -> None:
    series = train_val_ratio(record)
    epochs = np.arange(1, len(series.per_epoch_ratios) + 1)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(epochs, series.per_epoch_ratios, marker="o")
    ax.axhline(1.0, color="gray", linestyle="--", linewidth=1)
    ax.set_xlabel("epoch")
    ax.set_ylabel("train / validation loss")
    ax.set_title(f"mean {series.mean:.3f} (std {series.std:.3f})")
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)


def plot_group_boxplot(groups: dict[str, Sequence[float]], ylabel: str,
                       out_path: str | Path) -> None:
    """One box per group, annotated with its sample count."""
    labels = list(groups)
    data = [list(groups[k]) for k in labels]
    fig, ax = plt.subplots(figsize=(max(6, 1.5 * len(labels)), 4))
    ax.boxplot(data, tick_labels=[f"{k}\n(n={len(v)})" for k, v in zip(labels, data)])
    ax.set_ylabel(ylabel)
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)


def plot_confusion_heatmap(cm: met.ConfusionMatrix, class_names: Sequence[str],
                           out_path: str | Path) -> None:
    """Heatmap with the integer count annotated in every cell."""
    counts = cm.counts
    fig, ax = plt.subplots(figsize=(5, 4))
    im = ax.imshow(counts, cmap="Blues")
    ax.set_xticks(range(cm.num_classes), class_names, rotation=45, ha="right")
    ax.set_yticks(range(cm.num_classes), class_names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("ground truth")
    threshold = counts.max() / 2 if counts.max() else 0
    for i in range(cm.num_classes):
        for j in range(cm.num_classes):
            ax.text(j, i, str(int(counts[i, j])), ha="center", va="center",
                    color="white" if counts[i, j] > threshold else "black")
    fig.colorbar(im)
    fig.tight_layout()
    fig.savefig(out_path, dpi=100)
    plt.close(fig)


def _load_runs(run_dirs: Sequence[str | Path]) -> list[tuple[Path, RunRecord]]:
    loaded = []
    for d in run_dirs:
        d = Path(d)
        record_path = d / "run.json"
        if not record_path.is_file():
            raise MissingArtifacts(f"{d} has no run.json")
        loaded.append((d, load_run_record(record_path)))
    return loaded


def run_metric(record: RunRecord, metric: str) -> float:
    """Scalar selector over a finished run (last-epoch and best-epoch views)."""
    train_records = [r for r in record.records if r.phase == "train"]
    val_records = [r for r in record.records if r.phase == "validation"]
    selectors = {
        "last_train_loss": lambda: train_records[-1].loss,
        "last_val_loss": lambda: val_records[-1].loss,
        "last_train_acc": lambda: train_records[-1].accuracy,
        "last_val_acc": lambda: val_records[-1].accuracy,
        "best_val_acc": lambda: record.best_validation_accuracy,
    }
    if metric not in selectors:
        raise MissingMetric(f"unknown metric {metric!r}; choose from {RUN_METRICS}")
    return selectors[metric]()


def _group_key(record: RunRecord) -> str:
    return f"{'pretrained' if record.pretrained else 'not_pretrained'}/{record.mode}"


def render_report(run_dirs: Sequence[str | Path], out_dir: str | Path) -> list[Path]:
    """Render tables and figures for a set of finished runs."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runs = _load_runs(run_dirs)
    written: list[Path] = []

    # per-run curves and ratio plots
    for run_dir, record in runs:
        sub = out_dir / run_dir.name
        plot_run_curves(record, sub, run_id=run_dir.name)
        plot_ratio(record, sub / "ratio.png")
        written += [sub / "loss_curve.png", sub / "acc_curve.png", sub / "ratio.png"]

    # pivot tables mirroring the benchmark layout: one row per architecture,
    # one column per pretrained/mode combination
    combos = ("not_pretrained/fine_tune", "not_pretrained/feature_extract",
              "pretrained/fine_tune", "pretrained/feature_extract")
    for metric_pair, fname in (
        (("last_train_loss", "last_val_loss"), "loss_table.csv"),
        (("last_train_acc", "best_val_acc"), "accuracy_table.csv"),
    ):
        by_arch: dict[str, dict[str, str]] = {}
        for _, record in runs:
            row = by_arch.setdefault(record.architecture, {})
            for metric, phase in zip(metric_pair, ("train", "validation")):
                row[f"{_group_key(record)}/{phase}"] = f"{run_metric(record, metric):.6g}"
        path = out_dir / fname
        cols = [f"{c}/{p}" for c in combos for p in ("train", "validation")]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["architecture"] + cols)
            for arch in sorted(by_arch):
                writer.writerow([arch] + [by_arch[arch].get(c, "") for c in cols])
        written.append(path)

    # ratio mean(std) table
    path = out_dir / "ratio_table.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["architecture"] + list(combos))
        by_arch = {}
        for _, record in runs:
            series = train_val_ratio(record)
            by_arch.setdefault(record.architecture, {})[_group_key(record)] = \
                f"{series.mean:.3f}({series.std:.3f})"
        for arch in sorted(by_arch):
            writer.writerow([arch] + [by_arch[arch].get(c, "") for c in combos])
    written.append(path)

    # group boxplots across runs
    for metric in ("last_train_loss", "last_val_loss", "last_train_acc", "best_val_acc"):
        groups: dict[str, list[float]] = {}
        for _, record in runs:
            groups.setdefault(_group_key(record), []).append(run_metric(record, metric))
        path = out_dir / f"boxplot_{metric}.png"
        plot_group_boxplot(groups, metric, path)
        written.append(path)

    # confusion heatmaps + test metric table from prediction files
    test_rows = []
    for run_dir, record in runs:
        pred_path = Path(run_dir) / "predictions_test.tsv"
        if not pred_path.is_file():
            continue
        predictions = met.read_predictions(pred_path)
        if predictions and predictions[0].probabilities:
            k = len(predictions[0].probabilities)
        else:
            labels = {r.true_label for r in predictions} | {r.predicted_label for r in predictions}
            k = max(labels) + 1 if labels else 2
        cm = met.confusion_matrix(predictions, k)
        heatmap = out_dir / run_dir.name / "confusion_matrix.png"
        plot_confusion_heatmap(cm, [str(i) for i in range(k)], heatmap)
        written.append(heatmap)
        row = {
            "run_id": run_dir.name,
            "architecture": record.architecture,
            "pretrained": str(record.pretrained).lower(),
            "mode": record.mode,
            "accuracy": f"{met.accuracy(cm):.6g}",
        }
        try:
            kappa = met.quadratic_weighted_kappa(cm).kappa
            row["kappa"] = f"{kappa:.6g}"
            row["kappa_category"] = met.kappa_category(max(-1.0, min(1.0, kappa)))
        except Exception:
            row["kappa"] = ""
            row["kappa_category"] = ""
        for scheme_name in ("any_disease", "referable"):
            bc = met.binarize(cm, met.SCHEME_BUILDERS[scheme_name](k))
            try:
                row[f"sensitivity_{scheme_name}"] = f"{met.sensitivity(bc):.6g}"
                row[f"specificity_{scheme_name}"] = f"{met.specificity(bc):.6g}"
            except Exception:
                row[f"sensitivity_{scheme_name}"] = ""
                row[f"specificity_{scheme_name}"] = ""
        test_rows.append(row)
    if test_rows:
        path = out_dir / "test_metrics.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(test_rows[0]))
            writer.writeheader()
            writer.writerows(test_rows)
        written.append(path)

    return written


def _read_csv_column(path: str | Path, column: str) -> list[float]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or column not in reader.fieldnames:
            raise MissingMetric(f"{path} has no column {column!r}")
        return [float(row[column]) for row in reader if row[column].strip() != ""]


def resolve_group(selector: str, metric: str | None) -> list[float]:
    """A comparison group: either '<csv_path>#<column>' or a comma list of
    run directories read through a metric selector."""
    if "#" in selector:
        path, column = selector.rsplit("#", 1)
        return _read_csv_column(path, column)
    if metric is None:
        raise MissingMetric("run-directory groups need --metric")
    dirs = [d for d in selector.split(",") if d]
    return [run_metric(record, metric) for _, record in _load_runs(dirs)]


def compare_groups(
    a: Sequence[float], b: Sequence[float], test: str,
    label_a: str = "a", label_b: str = "b",
    comparisons_csv: str | Path | None = None,
) -> ComparisonResult:
    """Run the named test and append the result row to comparisons.csv."""
    if test == "wilcoxon_signed_rank":
        if len(a) != len(b):
            raise LengthMismatch(f"paired test needs equal sizes, got {len(a)} vs {len(b)}")
        result = wilcoxon_signed_rank(a, b)
    elif test == "mann_whitney_u":
        result = mann_whitney_u(a, b)
    else:
        raise MissingMetric(f"unknown test {test!r}")
    if comparisons_csv is not None:
        path = Path(comparisons_csv)
        new = not path.exists()
        with open(path, "a", newline="") as fh:
            writer = csv.writer(fh)
            if new:
                writer.writerow(("test", "group_a", "group_b", "statistic", "p_value", "significant"))
            writer.writerow((result.test, label_a, label_b,
                             f"{result.statistic:.10g}", f"{result.p_value:.10g}",
                             str(result.significant).lower()))
    return result
