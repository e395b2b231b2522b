"""Labeled image manifests: loading, validation, summaries, and splits.

A manifest is a UTF-8 text file.  The first line declares the class list,
an optional second header line carries the task name, and every following
line is one sample:

    #classes=<name0>,<name1>,...
    #task=<task_name>
    image_path<TAB>label<TAB>split<TAB>patient_id<TAB>eye

Optional fields (patient_id, eye) are stored as empty strings.  Manifests
are immutable after construction; split operations return new manifests.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .errors import (
    EmptySplit,
    FractionOutOfRange,
    InvalidLabel,
    MalformedRow,
    MissingFile,
)

SPLITS = ("train", "validation", "test", "unassigned")
EYES = ("left", "right")

# Kaggle-style fundus filenames: "<patientid>_<left|right>.<ext>".
# The patient/eye encoding is an importer assumption, not a dataset guarantee.
_STEM_PATTERN = re.compile(r"^(?P<patient>.+)_(?P<eye>left|right)$")

_IMAGE_EXTS = {".jpg", ".jpeg", ".png", ".bmp", ".tif", ".tiff"}


@dataclass(frozen=True)
class SampleRecord:
    """One labeled image with its split assignment and optional identity."""

    image_path: str
    label: int
    split: str
    patient_id: str | None = None
    eye: str | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")
        if self.eye is not None and self.eye not in EYES:
            raise ValueError(f"unknown eye {self.eye!r}")
        if self.eye is not None and self.patient_id is None:
            raise ValueError("eye given without patient_id")


@dataclass(frozen=True)
class DatasetManifest:
    task_name: str
    class_names: tuple[str, ...]
    samples: tuple[SampleRecord, ...]

    def __post_init__(self):
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "samples", tuple(self.samples))
        k = len(self.class_names)
        seen: set[tuple[str, str, str]] = set()
        for s in self.samples:
            if not 0 <= s.label < k:
                raise ValueError(f"label {s.label} outside [0, {k})")
            if s.patient_id is not None and s.eye is not None:
                key = (s.patient_id, s.eye, s.split)
                if key in seen:
                    raise ValueError(f"duplicate (patient_id, eye, split): {key}")
                seen.add(key)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def split_samples(self, split: str) -> tuple[SampleRecord, ...]:
        return tuple(s for s in self.samples if s.split == split)

    def split_sizes(self) -> dict[str, int]:
        sizes = {name: 0 for name in SPLITS}
        for s in self.samples:
            sizes[s.split] += 1
        return {k: v for k, v in sizes.items() if v}


@dataclass(frozen=True)
class ClassDistribution:
    split: str
    counts: tuple[int, ...]
    fractions: tuple[float, ...] = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        total = sum(self.counts)
        if total <= 0:
            raise EmptySplit(f"split {self.split!r} has no samples")
        object.__setattr__(
            self, "fractions", tuple(c / total for c in self.counts)
        )

    @property
    def total(self) -> int:
        return sum(self.counts)


def load_manifest(path: str | Path) -> DatasetManifest:
    """Parse and validate a manifest file."""
    path = Path(path)
    if not path.is_file():
        raise MissingFile(str(path))
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("#classes="):
        raise MalformedRow(1, "first line must be '#classes=<name0>,<name1>,...'")
    class_names = tuple(n.strip() for n in lines[0][len("#classes="):].split(","))
    if any(not n for n in class_names):
        raise MalformedRow(1, "empty class name in header")

    task_name = path.stem
    samples: list[SampleRecord] = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#task="):
                task_name = line[len("#task="):].strip()
            continue
        parts = line.split("\t")
        if len(parts) != 5:
            raise MalformedRow(lineno, f"expected 5 tab-separated fields, got {len(parts)}")
        image_path, label_s, split, patient_id, eye = (p.strip() for p in parts)
        try:
            label = int(label_s)
        except ValueError:
            raise MalformedRow(lineno, f"label {label_s!r} is not an integer") from None
        if not 0 <= label < len(class_names):
            raise InvalidLabel(lineno, label, len(class_names))
        if split not in SPLITS:
            raise MalformedRow(lineno, f"unknown split {split!r}")
        if eye and eye not in EYES:
            raise MalformedRow(lineno, f"unknown eye {eye!r}")
        if eye and not patient_id:
            raise MalformedRow(lineno, "eye given without patient_id")
        samples.append(
            SampleRecord(
                image_path=image_path,
                label=label,
                split=split,
                patient_id=patient_id or None,
                eye=eye or None,
            )
        )
    try:
        return DatasetManifest(task_name, class_names, tuple(samples))
    except ValueError as exc:
        raise MalformedRow(0, str(exc)) from None


def write_manifest(manifest: DatasetManifest, path: str | Path) -> None:
    """Serialize a manifest so that load_manifest round-trips it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["#classes=" + ",".join(manifest.class_names)]
    lines.append("#task=" + manifest.task_name)
    for s in manifest.samples:
        lines.append(
            "\t".join(
                (s.image_path, str(s.label), s.split, s.patient_id or "", s.eye or "")
            )
        )
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def class_distribution(manifest: DatasetManifest, split: str) -> ClassDistribution:
    """Per-class counts and fractions for one split."""
    counts = [0] * manifest.num_classes
    for s in manifest.samples:
        if s.split == split:
            counts[s.label] += 1
    if sum(counts) == 0:
        raise EmptySplit(f"split {split!r} has no samples")
    return ClassDistribution(split=split, counts=tuple(counts))


def _largest_remainder_allocation(
    class_sizes: dict[int, int], fraction: float
) -> dict[int, int]:
    """Per-class validation quotas whose total is round(fraction * n)."""
    n = sum(class_sizes.values())
    target = int(math.floor(fraction * n + 0.5))
    quotas = {k: fraction * c for k, c in class_sizes.items()}
    alloc = {k: int(math.floor(q)) for k, q in quotas.items()}
    leftover = target - sum(alloc.values())
    by_remainder = sorted(class_sizes, key=lambda k: (-(quotas[k] - alloc[k]), k))
    for k in by_remainder[:leftover]:
        alloc[k] += 1
    # a quota can exceed the class size only through the leftover pass
    for k in alloc:
        alloc[k] = min(alloc[k], class_sizes[k])
    return alloc


def stratified_split(
    manifest: DatasetManifest,
    source_split: str,
    fraction: float,
    seed: int,
) -> DatasetManifest:
    """Move a class-stratified fraction of one split into the validation split.

    Allocation is largest-remainder per class, so each class contributes its
    share of the target within one sample and the totals match
    round(fraction * n) exactly.  Sample selection is deterministic for a
    fixed seed.
    """
    if not 0.0 < fraction < 1.0:
        raise FractionOutOfRange(f"fraction {fraction} not in (0, 1)")
    source_idx = [i for i, s in enumerate(manifest.samples) if s.split == source_split]
    if not source_idx:
        raise EmptySplit(f"split {source_split!r} has no samples")
    if fraction * len(source_idx) < manifest.num_classes:
        raise FractionOutOfRange(
            f"fraction {fraction} selects fewer samples than classes "
            f"({manifest.num_classes}) from a pool of {len(source_idx)}"
        )

    by_class: dict[int, list[int]] = {}
    for i in source_idx:
        by_class.setdefault(manifest.samples[i].label, []).append(i)
    alloc = _largest_remainder_allocation(
        {k: len(v) for k, v in by_class.items()}, fraction
    )

    rng = np.random.default_rng(seed)
    moved: set[int] = set()
    for k in sorted(by_class):
        idx = np.array(by_class[k])
        rng.shuffle(idx)
        moved.update(int(i) for i in idx[: alloc[k]])

    samples = tuple(
        replace(s, split="validation") if i in moved else s
        for i, s in enumerate(manifest.samples)
    )
    return DatasetManifest(manifest.task_name, manifest.class_names, samples)


def _stem_identity(stem: str) -> tuple[str | None, str | None]:
    m = _STEM_PATTERN.match(stem)
    if m:
        return m.group("patient"), m.group("eye")
    return None, None


def import_directory_tree(
    root: str | Path,
    task_name: str,
    default_split: str = "train",
    class_names: Iterable[str] | None = None,
) -> DatasetManifest:
    """Build a manifest from a directory-per-class image layout.

    Accepts either ``root/<split>/<class>/*.jpg`` or ``root/<class>/*.jpg``;
    in the flat form every sample lands in ``default_split``.  Class indices
    follow the sorted class directory names unless ``class_names`` pins an
    explicit order.  Patient/eye identity is recovered from filename stems
    of the form ``<patientid>_<left|right>`` where present.
    """
    root = Path(root)
    if not root.is_dir():
        raise MissingFile(str(root))

    split_dirs = [d for d in root.iterdir() if d.is_dir() and d.name in SPLITS]
    layouts: list[tuple[str, Path]]
    if split_dirs:
        layouts = [(d.name, d) for d in sorted(split_dirs)]
    else:
        layouts = [(default_split, root)]

    discovered: set[str] = set()
    for _, base in layouts:
        discovered.update(d.name for d in base.iterdir() if d.is_dir())
    names = tuple(class_names) if class_names is not None else tuple(sorted(discovered))
    index = {name: i for i, name in enumerate(names)}

    samples: list[SampleRecord] = []
    for split, base in layouts:
        for cls_dir in sorted(d for d in base.iterdir() if d.is_dir()):
            if cls_dir.name not in index:
                continue
            for img in sorted(cls_dir.rglob("*")):
                if img.suffix.lower() not in _IMAGE_EXTS:
                    continue
                patient, eye = _stem_identity(img.stem)
                samples.append(
                    SampleRecord(
                        image_path=str(img),
                        label=index[cls_dir.name],
                        split=split,
                        patient_id=patient,
                        eye=eye,
                    )
                )
    return DatasetManifest(task_name, names, tuple(samples))
