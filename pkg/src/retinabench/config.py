"""Experiment config files: flat key = value text with [section] headers.

List-valued fields (comma separated) in the [model] section span the grid
axes; ``expand_grid`` takes their Cartesian product.  An expanded, single-
valued config hashes to a stable run id.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, replace
from itertools import product
from pathlib import Path

from . import models
from .errors import ConfigError
from .preprocessing import GrahamParams
from .training import TrainConfig

_BOOL = {"true": True, "yes": True, "on": True, "1": True,
         "false": False, "no": False, "off": False, "0": False}


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    manifest_path: str
    output_dir: str
    architectures: tuple[str, ...]
    pretrained: tuple[bool, ...]
    modes: tuple[str, ...]
    train: TrainConfig
    image_root: str | None = None
    binarization: tuple[str, ...] = ("any_disease", "referable")
    preprocess: GrahamParams | None = None  # None means preprocess=off
    preprocess_cache: str | None = None
    crop_edge: int | None = None  # None means the architecture's input edge
    max_parallel: int = 1

    @property
    def is_single(self) -> bool:
        return (len(self.architectures), len(self.pretrained), len(self.modes)) == (1, 1, 1)

    def combinations(self) -> list["ExperimentConfig"]:
        return [
            replace(self, architectures=(a,), pretrained=(p,), modes=(m,))
            for a, p, m in product(self.architectures, self.pretrained, self.modes)
        ]

    def run_id(self) -> str:
        if not self.is_single:
            raise ConfigError("model", "run_id is defined for expanded configs only")
        payload = {
            "architecture": self.architectures[0],
            "pretrained": self.pretrained[0],
            "mode": self.modes[0],
            "train": self.train.to_dict(),
            "manifest": Path(self.manifest_path).name,
            "preprocess": self.preprocess.to_dict() if self.preprocess else None,
            "crop_edge": self.crop_edge,
            "binarization": list(self.binarization),
        }
        digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode())
        return digest.hexdigest()[:12]


def _get(section, key, default=None):
    if section is None:
        return default
    value = section.get(key, None)
    if value is None or value.strip() == "":
        return default
    return value.strip()


def _parse_bool(raw: str, field: str) -> bool:
    try:
        return _BOOL[raw.strip().lower()]
    except KeyError:
        raise ConfigError(field, f"expected a boolean, got {raw!r}") from None


def _parse_list(raw: str) -> list[str]:
    return [item.strip() for item in raw.split(",") if item.strip()]


def _parse_number(raw: str, field: str, cast, positive: bool = False):
    try:
        value = cast(raw)
    except ValueError:
        raise ConfigError(field, f"expected a {cast.__name__}, got {raw!r}") from None
    if positive and value <= 0:
        raise ConfigError(field, f"must be > 0, got {value}")
    return value


def load_experiment_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("config", f"file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError("config", str(exc)) from exc

    exp = parser["experiment"] if parser.has_section("experiment") else None
    model = parser["model"] if parser.has_section("model") else None
    train_s = parser["train"] if parser.has_section("train") else None
    prep = parser["preprocess"] if parser.has_section("preprocess") else None

    manifest_path = _get(exp, "manifest")
    if manifest_path is None:
        raise ConfigError("experiment.manifest", "required")
    arch_raw = _get(model, "architecture")
    if arch_raw is None:
        raise ConfigError("model.architecture", "required")
    architectures = tuple(_parse_list(arch_raw))
    for name in architectures:
        try:
            models.canonical_name(name)
        except Exception:
            raise ConfigError("model.architecture", f"unknown architecture {name!r}") from None
    architectures = tuple(models.canonical_name(n) for n in architectures)

    pretrained = tuple(
        _parse_bool(v, "model.pretrained")
        for v in _parse_list(_get(model, "pretrained", "false"))
    )
    modes = tuple(_parse_list(_get(model, "mode", "fine_tune")))
    for m in modes:
        if m not in models.TRANSFER_MODES:
            raise ConfigError("model.mode", f"unknown mode {m!r}")

    weights_raw = _get(train_s, "class_weights")
    class_weights = None
    if weights_raw:
        class_weights = tuple(
            _parse_number(w, "train.class_weights", float) for w in _parse_list(weights_raw)
        )
    seed = seed_override if seed_override is not None else \
        _parse_number(_get(train_s, "seed", "0"), "train.seed", int)
    try:
        train = TrainConfig(
            learning_rate=_parse_number(_get(train_s, "learning_rate", "0.001"),
                                        "train.learning_rate", float, positive=True),
            momentum=_parse_number(_get(train_s, "momentum", "0.9"), "train.momentum", float),
            lr_step=_parse_number(_get(train_s, "lr_step", "7"), "train.lr_step", int, positive=True),
            lr_gamma=_parse_number(_get(train_s, "lr_gamma", "0.1"), "train.lr_gamma", float, positive=True),
            epochs=_parse_number(_get(train_s, "epochs", "10"), "train.epochs", int, positive=True),
            class_weights=class_weights,
            batch_size=_parse_number(_get(train_s, "batch_size", "32"), "train.batch_size", int, positive=True),
            seed=seed,
        )
    except ValueError as exc:
        raise ConfigError("train", str(exc)) from exc

    graham = None
    cache = None
    if prep is not None and _parse_bool(_get(prep, "enabled", "off"), "preprocess.enabled"):
        try:
            graham = GrahamParams(
                target_radius=_parse_number(_get(prep, "target_radius", "500"),
                                            "preprocess.target_radius", int, positive=True),
                target_gray=_parse_number(_get(prep, "target_gray", "0.5"),
                                          "preprocess.target_gray", float),
                clip_fraction=_parse_number(_get(prep, "clip_fraction", "0.9"),
                                            "preprocess.clip_fraction", float, positive=True),
                blur_scale=_parse_number(_get(prep, "blur_scale", "0.1"),
                                         "preprocess.blur_scale", float, positive=True),
            )
        except ValueError as exc:
            raise ConfigError("preprocess", str(exc)) from exc
        cache = _get(prep, "cache_dir")

    binarization = tuple(_parse_list(_get(exp, "binarization", "any_disease, referable")))
    for scheme in binarization:
        if scheme not in ("any_disease", "referable"):
            raise ConfigError("experiment.binarization", f"unknown scheme {scheme!r}")

    crop_raw = _get(exp, "crop_edge")
    return ExperimentConfig(
        name=_get(exp, "name", path.stem),
        manifest_path=manifest_path,
        output_dir=_get(exp, "output_dir", "runs"),
        architectures=architectures,
        pretrained=pretrained,
        modes=modes,
        train=train,
        image_root=_get(exp, "image_root"),
        binarization=binarization,
        preprocess=graham,
        preprocess_cache=cache,
        crop_edge=_parse_number(crop_raw, "experiment.crop_edge", int, positive=True)
        if crop_raw else None,
        max_parallel=_parse_number(_get(exp, "max_parallel", "1"),
                                   "experiment.max_parallel", int, positive=True),
    )
