"""Training protocol: momentum SGD, stepped lr decay, weighted cross-entropy.

One call to ``train`` runs the full schedule for a single model: every epoch
does one optimization pass over the training split followed by one
evaluation-only pass over the validation split, and both phases are logged
as EpochRecords.  Gradient computation and the parameter update itself are
delegated to torch; this module fixes the hyperparameters, the loss, and
the bookkeeping.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np
import torch

from . import models
from .catalog import DatasetManifest
from .errors import ClassCountMismatch, EmptySplit, LabelOutOfRange
from .metrics import PredictionRecord, PredictionSet
from .preprocessing import TransformSpec, apply_transform, load_image
from .seeding import per_sample_seed, shuffle_rng


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    momentum: float = 0.9
    lr_step: int = 7
    lr_gamma: float = 0.1
    epochs: int = 10
    class_weights: tuple[float, ...] | None = None  # None means all 1.0
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be > 0")
        if not 0.0 < self.lr_gamma <= 1.0:
            raise ValueError("lr_gamma must be in (0, 1]")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.lr_step < 1:
            raise ValueError("lr_step must be >= 1")
        if self.class_weights is not None:
            weights = tuple(float(w) for w in self.class_weights)
            if any(w < 0 for w in weights) or not any(w > 0 for w in weights):
                raise ValueError("class_weights must be >= 0 with at least one > 0")
            object.__setattr__(self, "class_weights", weights)

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "momentum": self.momentum,
            "lr_step": self.lr_step,
            "lr_gamma": self.lr_gamma,
            "epochs": self.epochs,
            "class_weights": list(self.class_weights) if self.class_weights else None,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }


@dataclass(frozen=True)
class EpochRecord:
    epoch: int  # 1-based
    phase: str  # "train" or "validation"
    loss: float
    accuracy: float


@dataclass(frozen=True)
class RunRecord:
    architecture: str
    mode: str
    pretrained: bool
    config: TrainConfig
    records: tuple[EpochRecord, ...]
    best_validation_accuracy: float
    wall_time: float
    checkpoint_path: str | None = None
    best_checkpoint_path: str | None = None

    def to_dict(self) -> dict:
        return {
            "architecture": self.architecture,
            "mode": self.mode,
            "pretrained": self.pretrained,
            "config": self.config.to_dict(),
            "records": [
                {"epoch": r.epoch, "phase": r.phase, "loss": r.loss, "accuracy": r.accuracy}
                for r in self.records
            ],
            "best_validation_accuracy": self.best_validation_accuracy,
            "wall_time": self.wall_time,
            "checkpoint_path": self.checkpoint_path,
            "best_checkpoint_path": self.best_checkpoint_path,
        }

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def load_run_record(path: str | Path) -> RunRecord:
    data = json.loads(Path(path).read_text())
    cfg = data["config"]
    config = TrainConfig(
        learning_rate=cfg["learning_rate"],
        momentum=cfg["momentum"],
        lr_step=cfg["lr_step"],
        lr_gamma=cfg["lr_gamma"],
        epochs=cfg["epochs"],
        class_weights=tuple(cfg["class_weights"]) if cfg["class_weights"] else None,
        batch_size=cfg["batch_size"],
        seed=cfg["seed"],
    )
    return RunRecord(
        architecture=data["architecture"],
        mode=data["mode"],
        pretrained=data["pretrained"],
        config=config,
        records=tuple(
            EpochRecord(r["epoch"], r["phase"], r["loss"], r["accuracy"])
            for r in data["records"]
        ),
        best_validation_accuracy=data["best_validation_accuracy"],
        wall_time=data["wall_time"],
        checkpoint_path=data.get("checkpoint_path"),
        best_checkpoint_path=data.get("best_checkpoint_path"),
    )


def lr_at_epoch(config: TrainConfig, epoch: int) -> float:
    """Stepped decay: learning_rate * lr_gamma ** (epoch // lr_step).

    Computed through Decimal so the schedule values stay exactly the
    decimals a config file spells out (0.001 -> 0.0001 -> 0.00001), instead
    of accumulating binary float drift.
    """
    steps = epoch // config.lr_step
    value = Decimal(repr(config.learning_rate)) * Decimal(repr(config.lr_gamma)) ** steps
    return float(value)


def weighted_cross_entropy(
    scores: torch.Tensor | np.ndarray,
    labels: torch.Tensor | np.ndarray,
    weights: torch.Tensor | np.ndarray | None = None,
) -> torch.Tensor:
    """Weighted-mean cross-entropy over a batch.

    Per-sample losses w[y_i] * (-log softmax(scores_i)[y_i]) are divided by
    the sum of the applied weights, so equal weights reproduce the plain
    mean.  Differentiable when given torch tensors.
    """
    scores = torch.as_tensor(scores, dtype=torch.float32) \
        if not torch.is_tensor(scores) else scores
    labels = torch.as_tensor(labels, dtype=torch.long)
    k = scores.shape[1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    if weights is None:
        w = torch.ones(k, dtype=scores.dtype)
    else:
        w = torch.as_tensor(weights, dtype=scores.dtype)
        if w.shape != (k,):
            raise ValueError(f"expected {k} class weights, got {tuple(w.shape)}")
    log_probs = torch.log_softmax(scores, dim=1)
    nll = -log_probs.gather(1, labels.unsqueeze(1)).squeeze(1)
    applied = w[labels]
    return (applied * nll).sum() / applied.sum()


@dataclass(frozen=True)
class DataSplit:
    """One manifest split paired with the transform that feeds the model."""

    manifest: DatasetManifest
    split: str
    transform: TransformSpec
    image_root: str | None = None
    samples: tuple = field(init=False)

    def __post_init__(self):
        chosen = self.manifest.split_samples(self.split)
        if not chosen:
            raise EmptySplit(f"split {self.split!r} has no samples")
        object.__setattr__(self, "samples", chosen)

    def __len__(self) -> int:
        return len(self.samples)

    def resolve_path(self, image_path: str) -> str:
        if self.image_root:
            return str(Path(self.image_root) / image_path)
        return image_path


def _load_batch(split: DataSplit, indices, epoch: int, base_seed: int) -> tuple[torch.Tensor, torch.Tensor]:
    arrays = []
    labels = []
    for i in indices:
        rec = split.samples[i]
        image = load_image(split.resolve_path(rec.image_path))
        arrays.append(
            apply_transform(image, split.transform, seed=per_sample_seed(base_seed, epoch, i))
        )
        labels.append(rec.label)
    return (
        torch.from_numpy(np.stack(arrays)),
        torch.tensor(labels, dtype=torch.long),
    )


def _run_epoch(
    handle: models.ModelHandle,
    split: DataSplit,
    config: TrainConfig,
    epoch: int,
    optimizer: torch.optim.Optimizer | None,
) -> tuple[float, float]:
    """One pass over a split; optimizes when an optimizer is given."""
    training = optimizer is not None
    handle.module.train(training)
    weights = None
    if config.class_weights is not None:
        weights = torch.tensor(config.class_weights, dtype=torch.float32)

    n = len(split)
    if training:
        order = np.arange(n)
        shuffle_rng(config.seed, epoch).shuffle(order)
    else:
        order = np.arange(n)

    loss_num = 0.0
    weight_den = 0.0
    correct = 0
    for start in range(0, n, config.batch_size):
        indices = order[start:start + config.batch_size]
        inputs, labels = _load_batch(split, indices, epoch, config.seed)
        if training:
            optimizer.zero_grad()
            outputs = handle.module(inputs)
            if handle.uses_aux_logits and hasattr(outputs, "logits"):
                loss = weighted_cross_entropy(outputs.logits, labels, weights)
                loss = loss + models.INCEPTION_AUX_LOSS_WEIGHT * weighted_cross_entropy(
                    outputs.aux_logits, labels, weights
                )
                scores = outputs.logits
            else:
                loss = weighted_cross_entropy(outputs, labels, weights)
                scores = outputs
            loss.backward()
            optimizer.step()
        else:
            with torch.no_grad():
                scores = handle.module(inputs)
                loss = weighted_cross_entropy(scores, labels, weights)

        applied = (weights[labels] if weights is not None
                   else torch.ones(len(indices))).sum().item()
        loss_num += loss.item() * applied
        weight_den += applied
        correct += int((scores.argmax(dim=1) == labels).sum().item())

    return loss_num / weight_den, correct / n


def train(
    handle: models.ModelHandle,
    train_split: DataSplit,
    val_split: DataSplit,
    config: TrainConfig,
    checkpoint_dir: str | Path | None = None,
) -> RunRecord:
    """Run the full schedule and record both phases of every epoch.

    Writes a final-epoch checkpoint and a best-validation checkpoint when
    ``checkpoint_dir`` is given.
    """
    for split in (train_split, val_split):
        if split.manifest.num_classes != handle.num_classes:
            raise ClassCountMismatch(
                f"model outputs {handle.num_classes} classes, manifest has "
                f"{split.manifest.num_classes}"
            )

    torch.manual_seed(config.seed)
    optimizer = torch.optim.SGD(
        handle.trainable_parameters(),
        lr=config.learning_rate,
        momentum=config.momentum,
    )

    started = time.time()
    records: list[EpochRecord] = []
    best_acc = 0.0
    best_path: Path | None = None
    last_path: Path | None = None
    if checkpoint_dir is not None:
        checkpoint_dir = Path(checkpoint_dir)
        checkpoint_dir.mkdir(parents=True, exist_ok=True)
        best_path = checkpoint_dir / "checkpoint_best.ckpt"
        last_path = checkpoint_dir / "checkpoint_last.ckpt"

    for epoch in range(config.epochs):
        lr = lr_at_epoch(config, epoch)
        for group in optimizer.param_groups:
            group["lr"] = lr

        train_loss, train_acc = _run_epoch(handle, train_split, config, epoch, optimizer)
        records.append(EpochRecord(epoch + 1, "train", train_loss, train_acc))

        val_loss, val_acc = _run_epoch(handle, val_split, config, epoch, None)
        records.append(EpochRecord(epoch + 1, "validation", val_loss, val_acc))

        if val_acc > best_acc or epoch == 0:
            best_acc = max(best_acc, val_acc)
            if best_path is not None:
                models.save_checkpoint(handle, best_path)

    if last_path is not None:
        models.save_checkpoint(handle, last_path)

    return RunRecord(
        architecture=handle.architecture.name,
        mode=handle.mode,
        pretrained=handle.pretrained,
        config=config,
        records=tuple(records),
        best_validation_accuracy=best_acc,
        wall_time=time.time() - started,
        checkpoint_path=str(last_path) if last_path else None,
        best_checkpoint_path=str(best_path) if best_path else None,
    )


def evaluate(
    handle: models.ModelHandle,
    split: DataSplit,
    class_weights: tuple[float, ...] | None = None,
    batch_size: int = 32,
    phase: str = "validation",
) -> tuple[PredictionSet, EpochRecord]:
    """Score a split without touching any parameter."""
    if split.manifest.num_classes != handle.num_classes:
        raise ClassCountMismatch(
            f"model outputs {handle.num_classes} classes, manifest has "
            f"{split.manifest.num_classes}"
        )
    handle.module.eval()
    weights = None
    if class_weights is not None:
        weights = torch.tensor(class_weights, dtype=torch.float32)

    n = len(split)
    predictions: list[PredictionRecord] = []
    loss_num = 0.0
    weight_den = 0.0
    correct = 0
    for start in range(0, n, batch_size):
        indices = range(start, min(start + batch_size, n))
        inputs, labels = _load_batch(split, indices, epoch=0, base_seed=0)
        with torch.no_grad():
            scores = handle.module(inputs)
            loss = weighted_cross_entropy(scores, labels, weights)
        probs = models.softmax(scores.numpy())
        argmax = scores.argmax(dim=1)
        applied = (weights[labels] if weights is not None
                   else torch.ones(len(labels))).sum().item()
        loss_num += loss.item() * applied
        weight_den += applied
        correct += int((argmax == labels).sum().item())
        for j, i in enumerate(indices):
            rec = split.samples[i]
            predictions.append(
                PredictionRecord(
                    sample_path=rec.image_path,
                    true_label=rec.label,
                    predicted_label=int(argmax[j].item()),
                    probabilities=tuple(float(p) for p in probs[j]),
                    patient_id=rec.patient_id,
                    eye=rec.eye,
                )
            )

    record = EpochRecord(0, phase, loss_num / weight_den, correct / n)
    return tuple(predictions), record
