"""Shared fixtures: synthetic image corpora and reference result tables."""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest

from retinabench.catalog import DatasetManifest, SampleRecord, write_manifest
from retinabench.preprocessing import save_image

DATA_DIR = Path(__file__).parent / "data"

# reference last-epoch results of the published 64-run benchmark; column
# names encode pretrained state / transfer mode / phase
LOSS_COLUMNS = "dr_last_epoch_loss.csv"
ACC_COLUMNS = "dr_accuracy.csv"


def load_reference_columns(filename: str) -> dict[str, list[float]]:
    with open(DATA_DIR / filename, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    return {
        col: [float(r[col]) for r in rows]
        for col in reader.fieldnames
        if col != "network"
    }


@pytest.fixture(scope="session")
def reference_loss() -> dict[str, list[float]]:
    return load_reference_columns(LOSS_COLUMNS)


@pytest.fixture(scope="session")
def reference_accuracy() -> dict[str, list[float]]:
    return load_reference_columns(ACC_COLUMNS)


def make_class_image(label: int, rng: np.random.Generator, edge: int = 64) -> np.ndarray:
    """Linearly separable class imagery: class k lights up channel k."""
    image = rng.integers(0, 40, size=(edge, edge, 3), dtype=np.uint8)
    yy, xx = np.ogrid[:edge, :edge]
    cy = edge // 2 + int(rng.integers(-edge // 8, edge // 8 + 1))
    cx = edge // 2 + int(rng.integers(-edge // 8, edge // 8 + 1))
    disk = (yy - cy) ** 2 + (xx - cx) ** 2 <= (edge // 3) ** 2
    image[disk, label % 3] = 200 + int(rng.integers(0, 56))
    return image


def build_disk_corpus(
    root: Path,
    n_train: int,
    n_val: int,
    n_test: int = 0,
    num_classes: int = 3,
    edge: int = 64,
    seed: int = 1234,
    with_patients: bool = False,
) -> Path:
    """Write a synthetic corpus + manifest under root; returns manifest path."""
    rng = np.random.default_rng(seed)
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)
    samples = []
    counters = {"train": n_train, "validation": n_val, "test": n_test}
    serial = 0
    for split, count in counters.items():
        for i in range(count):
            label = i % num_classes
            name = f"{split}_{i:04d}.png"
            save_image(str(images / name), make_class_image(label, rng, edge))
            patient = eye = None
            if with_patients:
                patient = f"pat{serial // 2:05d}"
                eye = "left" if serial % 2 == 0 else "right"
            samples.append(
                SampleRecord(
                    image_path=str(Path("images") / name),
                    label=label,
                    split=split,
                    patient_id=patient,
                    eye=eye,
                )
            )
            serial += 1
    manifest = DatasetManifest(
        task_name="synthetic_disks",
        class_names=tuple(f"class{i}" for i in range(num_classes)),
        samples=tuple(samples),
    )
    path = root / "manifest.tsv"
    write_manifest(manifest, path)
    return path


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory) -> dict:
    """72-image 3-class corpus at 64 px for trainer and CLI tests."""
    root = tmp_path_factory.mktemp("small_corpus")
    manifest_path = build_disk_corpus(root, n_train=36, n_val=18, n_test=18)
    return {"root": root, "manifest": manifest_path}


@pytest.fixture(autouse=True)
def offline_model_provider(tmp_path, monkeypatch):
    """Keep every test offline: an empty provider dir means any pretrained
    fetch raises ProviderUnavailable instead of downloading."""
    provider = tmp_path / "provider"
    provider.mkdir(exist_ok=True)
    monkeypatch.setenv("MODEL_PROVIDER_DIR", str(provider))
    yield
