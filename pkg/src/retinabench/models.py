"""Registry of the 16 evaluated backbones and transfer-mode model handles.

Architectures come from torchvision; this module owns the registry, the
K-way head replacement, the backbone/head parameter partition, the
trainable flags for the two transfer modes, and checkpoint persistence.

Pretrained weights are resolved through the MODEL_PROVIDER_DIR environment
variable: a local directory holding the weight files (looked up by the
basename of the provider URL) or an URL root to fetch them from.  When it
is unset, torchvision's default download path is used.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np
import torch
import torch.nn as nn
import torchvision.models as tvm

from .errors import ProviderUnavailable, ShapeMismatch, UnknownArchitecture

PROVIDER_ENV = "MODEL_PROVIDER_DIR"
CHECKPOINT_MAGIC = b"RBNCKPT1"

FINE_TUNE = "fine_tune"
FEATURE_EXTRACT = "feature_extract"
TRANSFER_MODES = (FINE_TUNE, FEATURE_EXTRACT)

# weight applied to the auxiliary classifier loss of Inception-v3 during
# fine-tuning (its reference training recipe); ignored in feature_extract
INCEPTION_AUX_LOSS_WEIGHT = 0.4


@dataclass(frozen=True)
class ArchitectureSpec:
    """One registry entry with its published ImageNet 1-crop error rates."""

    name: str
    input_edge: int
    reported_top1_error: float
    reported_top5_error: float


# name, input edge, top-1 error, top-5 error, torchvision id
_REGISTRY_ROWS = (
    ("AlexNet", 224, 43.45, 20.91, "alexnet"),
    ("VGG-11", 224, 30.98, 11.37, "vgg11"),
    ("VGG-13", 224, 30.07, 10.75, "vgg13"),
    ("VGG-16", 224, 28.41, 9.62, "vgg16"),
    ("VGG-19", 224, 27.62, 9.12, "vgg19"),
    ("VGG-11-BN", 224, 29.62, 10.19, "vgg11_bn"),
    ("ResNet-18", 224, 30.24, 10.92, "resnet18"),
    ("ResNet-34", 224, 26.70, 8.58, "resnet34"),
    ("ResNet-50", 224, 23.85, 7.13, "resnet50"),
    ("ResNet-101", 224, 22.63, 6.44, "resnet101"),
    ("ResNet-152", 224, 21.69, 5.94, "resnet152"),
    ("DenseNet-121", 224, 25.35, 7.83, "densenet121"),
    ("DenseNet-169", 224, 24.00, 7.00, "densenet169"),
    ("DenseNet-201", 224, 22.80, 6.43, "densenet201"),
    ("DenseNet-161", 224, 22.35, 6.20, "densenet161"),
    ("Inception-v3", 299, 22.55, 6.44, "inception_v3"),
)


def _normalize(name: str) -> str:
    return "".join(ch for ch in name.lower() if ch.isalnum())


_SPECS = {row[0]: ArchitectureSpec(row[0], row[1], row[2], row[3]) for row in _REGISTRY_ROWS}
_TV_IDS = {row[0]: row[4] for row in _REGISTRY_ROWS}
_BY_NORMALIZED = {_normalize(row[0]): row[0] for row in _REGISTRY_ROWS}
# accept the torchvision spellings too (e.g. "inception_v3")
_BY_NORMALIZED.update({_normalize(row[4]): row[0] for row in _REGISTRY_ROWS})


def canonical_name(name: str) -> str:
    try:
        return _BY_NORMALIZED[_normalize(name)]
    except KeyError:
        raise UnknownArchitecture(name) from None


def list_architectures() -> list[ArchitectureSpec]:
    return [_SPECS[row[0]] for row in _REGISTRY_ROWS]


def input_edge(name: str) -> int:
    return _SPECS[canonical_name(name)].input_edge


class ModelHandle:
    """A torchvision model plus the bookkeeping the harness needs.

    Parameters are partitioned into the replaced classification head and
    the backbone (everything else); trainable flags are fixed at
    construction from the transfer mode.
    """

    def __init__(
        self,
        architecture: ArchitectureSpec,
        module: nn.Module,
        num_classes: int,
        mode: str,
        pretrained: bool,
        head_prefixes: tuple[str, ...],
    ):
        self.architecture = architecture
        self.module = module
        self.num_classes = num_classes
        self.mode = mode
        self.pretrained = pretrained
        self._head_prefixes = head_prefixes

    def _is_head(self, param_name: str) -> bool:
        return any(param_name.startswith(p) for p in self._head_prefixes)

    def head_parameters(self) -> Iterator[tuple[str, nn.Parameter]]:
        for name, p in self.module.named_parameters():
            if self._is_head(name):
                yield name, p

    def backbone_parameters(self) -> Iterator[tuple[str, nn.Parameter]]:
        for name, p in self.module.named_parameters():
            if not self._is_head(name):
                yield name, p

    def trainable_parameters(self) -> list[nn.Parameter]:
        return [p for p in self.module.parameters() if p.requires_grad]

    def backbone_fingerprint(self) -> bytes:
        """Byte-exact serialization of the backbone parameters."""
        buf = io.BytesIO()
        for name, p in sorted(self.backbone_parameters()):
            buf.write(name.encode())
            buf.write(p.detach().numpy().tobytes())
        return buf.getvalue()

    @property
    def uses_aux_logits(self) -> bool:
        return bool(getattr(self.module, "aux_logits", False))


def _resolve_pretrained_state(name: str) -> dict:
    tv_id = _TV_IDS[name]
    weights = tvm.get_model_weights(tv_id).DEFAULT
    url = weights.url
    provider = os.environ.get(PROVIDER_ENV, "")
    try:
        if provider.startswith(("http://", "https://")):
            return torch.hub.load_state_dict_from_url(
                provider.rstrip("/") + "/" + url.rsplit("/", 1)[1], progress=False
            )
        if provider:
            blob = Path(provider) / url.rsplit("/", 1)[1]
            if not blob.is_file():
                raise FileNotFoundError(f"{blob} not found under {PROVIDER_ENV}")
            return torch.load(blob, map_location="cpu", weights_only=True)
        return weights.get_state_dict(progress=False)
    except Exception as exc:
        raise ProviderUnavailable(f"pretrained weights for {name}: {exc}") from exc


def _replace_head(module: nn.Module, name: str, num_classes: int) -> tuple[str, ...]:
    """Swap the final fully connected layer for a fresh K-way one."""
    if name == "AlexNet" or name.startswith("VGG"):
        module.classifier[6] = nn.Linear(module.classifier[6].in_features, num_classes)
        return ("classifier.6.",)
    if name.startswith("ResNet"):
        module.fc = nn.Linear(module.fc.in_features, num_classes)
        return ("fc.",)
    if name.startswith("DenseNet"):
        module.classifier = nn.Linear(module.classifier.in_features, num_classes)
        return ("classifier.",)
    if name == "Inception-v3":
        module.fc = nn.Linear(module.fc.in_features, num_classes)
        prefixes = ["fc."]
        if module.aux_logits and module.AuxLogits is not None:
            module.AuxLogits.fc = nn.Linear(module.AuxLogits.fc.in_features, num_classes)
            prefixes.append("AuxLogits.fc.")
        return tuple(prefixes)
    raise UnknownArchitecture(name)


def build_model(
    name: str,
    num_classes: int,
    pretrained: bool,
    mode: str,
    seed: int = 0,
) -> ModelHandle:
    """Construct a registry architecture configured for one transfer mode."""
    canonical = canonical_name(name)
    if num_classes < 2:
        raise ValueError("num_classes must be >= 2")
    if mode not in TRANSFER_MODES:
        raise ValueError(f"unknown transfer mode {mode!r}")

    tv_id = _TV_IDS[canonical]
    torch.manual_seed(seed)
    if canonical == "Inception-v3":
        # aux classifier participates in fine-tuning only
        module = tvm.inception_v3(
            weights=None, aux_logits=True, init_weights=True
        )
    else:
        module = getattr(tvm, tv_id)(weights=None)

    if pretrained:
        module.load_state_dict(_resolve_pretrained_state(canonical))

    if canonical == "Inception-v3" and mode == FEATURE_EXTRACT:
        module.aux_logits = False
        module.AuxLogits = None

    if mode == FEATURE_EXTRACT:
        for p in module.parameters():
            p.requires_grad = False

    torch.manual_seed(seed)  # fresh head init, independent of backbone draws
    head_prefixes = _replace_head(module, canonical, num_classes)

    handle = ModelHandle(
        architecture=_SPECS[canonical],
        module=module,
        num_classes=num_classes,
        mode=mode,
        pretrained=pretrained,
        head_prefixes=head_prefixes,
    )
    for _, p in handle.head_parameters():
        p.requires_grad = True
    return handle


def predict(handle: ModelHandle, batch: np.ndarray | torch.Tensor) -> np.ndarray:
    """Raw scores (logits) for a batch; callers softmax when they need
    probabilities."""
    tensor = torch.as_tensor(batch, dtype=torch.float32)
    if tensor.ndim != 4 or tensor.shape[1] != 3 or tensor.shape[2] != tensor.shape[3]:
        raise ShapeMismatch(f"expected N x 3 x E x E batch, got {tuple(tensor.shape)}")
    handle.module.eval()
    try:
        with torch.no_grad():
            scores = handle.module(tensor)
    except RuntimeError as exc:
        raise ShapeMismatch(str(exc)) from exc
    return scores.numpy()


def softmax(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


def save_checkpoint(handle: ModelHandle, path: str | Path) -> None:
    """Single-file checkpoint: magic, JSON header line, then the state dict."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = {
        "architecture": handle.architecture.name,
        "num_classes": handle.num_classes,
        "mode": handle.mode,
        "pretrained": handle.pretrained,
    }
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        torch.save(handle.module.state_dict(), fh)


def load_checkpoint(path: str | Path) -> ModelHandle:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not a {CHECKPOINT_MAGIC.decode()} checkpoint")
        header = json.loads(fh.readline().decode())
        state = torch.load(fh, map_location="cpu", weights_only=True)
    handle = build_model(
        header["architecture"],
        header["num_classes"],
        pretrained=False,
        mode=header["mode"],
        seed=0,
    )
    handle.module.load_state_dict(state)
    handle.pretrained = header["pretrained"]
    return handle
