"""Fundus photo normalization and the train/eval tensor transforms.

The fundus step follows the screening-competition recipe: rescale the photo
so the retina disk has a fixed radius, subtract the Gaussian-blurred local
average (mapping it to 50% gray), and clip to a 90% circle to drop boundary
artifacts.  OCT images skip this step entirely and are only resized.

All randomness is seed-parameterized; nothing touches global RNG state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import cv2
import numpy as np

from .errors import EmptyImage, NoFundusDetected

# ImageNet channel statistics used to normalize every phase.
IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)

# Dimensionless contrast gain applied to the local-average residual.
_RESIDUAL_GAIN = 4.0


@dataclass(frozen=True)
class GrahamParams:
    """Knobs of the fundus normalization step."""

    target_radius: int = 500
    target_gray: float = 0.5
    clip_fraction: float = 0.9
    blur_scale: float = 0.1

    def __post_init__(self):
        if self.target_radius < 16:
            raise ValueError("target_radius must be >= 16")
        if not 0.0 < self.clip_fraction <= 1.0:
            raise ValueError("clip_fraction must be in (0, 1]")
        if not 0.0 <= self.target_gray <= 1.0:
            raise ValueError("target_gray must be in [0, 1]")
        if self.blur_scale <= 0.0:
            raise ValueError("blur_scale must be > 0")

    def to_dict(self) -> dict:
        return {
            "target_radius": self.target_radius,
            "target_gray": self.target_gray,
            "clip_fraction": self.clip_fraction,
            "blur_scale": self.blur_scale,
        }


@dataclass(frozen=True)
class TransformSpec:
    """Geometry and normalization of the tensor fed to a model."""

    phase: str  # "train" or "eval"
    crop_edge: int = 224
    resize_edge: int = 256
    horizontal_flip: bool = True
    channel_mean: tuple[float, float, float] = IMAGENET_MEAN
    channel_std: tuple[float, float, float] = IMAGENET_STD

    def __post_init__(self):
        if self.phase not in ("train", "eval"):
            raise ValueError(f"unknown phase {self.phase!r}")
        if self.phase == "eval" and self.crop_edge > self.resize_edge:
            raise ValueError("eval crop_edge must be <= resize_edge")
        if any(s <= 0 for s in self.channel_std):
            raise ValueError("channel_std components must be > 0")


def train_transform(crop_edge: int = 224) -> TransformSpec:
    return TransformSpec(phase="train", crop_edge=crop_edge)


def eval_transform(crop_edge: int = 224) -> TransformSpec:
    # keep the usual 256:224 resize-to-crop proportion for larger inputs
    resize = int(round(crop_edge * 256 / 224))
    return TransformSpec(phase="eval", crop_edge=crop_edge, resize_edge=resize,
                         horizontal_flip=False)


def _as_rgb(image: np.ndarray) -> np.ndarray:
    """Promote grayscale inputs to 3 identical channels."""
    if image.ndim == 2:
        return np.repeat(image[:, :, None], 3, axis=2)
    if image.ndim == 3 and image.shape[2] == 1:
        return np.repeat(image, 3, axis=2)
    if image.ndim == 3 and image.shape[2] == 3:
        return image
    raise EmptyImage(f"expected HxW or HxWx3 array, got shape {image.shape}")


def estimate_fundus_radius(image: np.ndarray) -> float:
    """Estimate the retina disk radius from the central horizontal band.

    The band's channel-summed intensity is thresholded at 10% of its
    maximum; half the count of bright pixels is the radius.  Disks cropped
    by the frame clamp to half the shorter image dimension.
    """
    if image.size == 0:
        raise EmptyImage("empty image")
    rgb = _as_rgb(image)
    h, w = rgb.shape[:2]
    band = rgb[h // 2, :, :].astype(np.float64).sum(axis=1)
    peak = band.max()
    if peak <= 0:
        raise NoFundusDetected("central band is uniformly dark")
    count = int((band > 0.1 * peak).sum())
    if count == 0:
        raise NoFundusDetected("no pixels above threshold in central band")
    return min(count / 2.0, min(h, w) / 2.0)


def graham_preprocess(image: np.ndarray, params: GrahamParams | None = None) -> np.ndarray:
    """Radius-normalize, subtract the blurred local average, clip to a circle.

    Returns a square frame of edge round(2 * clip_fraction * target_radius)
    with the exterior of the clip circle zeroed.  uint8 in, uint8 out;
    float input is treated as intensities in [0, 1].
    """
    params = params or GrahamParams()
    rgb = _as_rgb(image)
    radius = estimate_fundus_radius(rgb)

    is_uint8 = rgb.dtype == np.uint8
    max_intensity = 255.0 if is_uint8 else 1.0

    scale = params.target_radius / radius
    scaled = cv2.resize(
        rgb.astype(np.float32), (0, 0), fx=scale, fy=scale,
        interpolation=cv2.INTER_AREA if scale < 1 else cv2.INTER_LINEAR,
    )
    sigma = params.blur_scale * params.target_radius
    blurred = cv2.GaussianBlur(scaled, (0, 0), sigmaX=sigma)
    out = _RESIDUAL_GAIN * (scaled - blurred) + params.target_gray * max_intensity
    np.clip(out, 0.0, max_intensity, out=out)

    clip_radius = params.clip_fraction * params.target_radius
    h, w = out.shape[:2]
    cy, cx = h / 2.0, w / 2.0
    yy, xx = np.ogrid[:h, :w]
    mask = (yy + 0.5 - cy) ** 2 + (xx + 0.5 - cx) ** 2 <= clip_radius**2
    out *= mask[:, :, None]

    edge = int(round(2 * params.clip_fraction * params.target_radius))
    frame = np.zeros((edge, edge, 3), dtype=np.float32)
    # paste the mask's bounding box into the fixed-size frame, center-aligned
    top = int(round(cy - edge / 2.0))
    left = int(round(cx - edge / 2.0))
    src_t, src_l = max(top, 0), max(left, 0)
    src_b, src_r = min(top + edge, h), min(left + edge, w)
    dst_t, dst_l = src_t - top, src_l - left
    frame[dst_t:dst_t + (src_b - src_t), dst_l:dst_l + (src_r - src_l)] = \
        out[src_t:src_b, src_l:src_r]

    if is_uint8:
        return np.rint(frame).astype(np.uint8)
    return frame


def _to_unit_float(image: np.ndarray) -> np.ndarray:
    rgb = _as_rgb(image)
    if rgb.dtype == np.uint8:
        return rgb.astype(np.float32) / 255.0
    return rgb.astype(np.float32)


def _resize(image: np.ndarray, width: int, height: int) -> np.ndarray:
    return cv2.resize(image, (width, height), interpolation=cv2.INTER_LINEAR)


def _random_resized_crop(
    image: np.ndarray, edge: int, rng: np.random.Generator,
    scale: tuple[float, float] = (0.08, 1.0),
    ratio: tuple[float, float] = (3 / 4, 4 / 3),
) -> np.ndarray:
    """Sample a crop of random area/aspect and resize it to edge x edge."""
    h, w = image.shape[:2]
    area = h * w
    log_ratio = (math.log(ratio[0]), math.log(ratio[1]))
    for _ in range(10):
        target_area = area * rng.uniform(scale[0], scale[1])
        aspect = math.exp(rng.uniform(log_ratio[0], log_ratio[1]))
        cw = int(round(math.sqrt(target_area * aspect)))
        ch = int(round(math.sqrt(target_area / aspect)))
        if 0 < cw <= w and 0 < ch <= h:
            top = int(rng.integers(0, h - ch + 1))
            left = int(rng.integers(0, w - cw + 1))
            return _resize(image[top:top + ch, left:left + cw], edge, edge)
    # fallback: central crop at the nearest in-range aspect
    in_ratio = w / h
    if in_ratio < ratio[0]:
        cw, ch = w, min(h, int(round(w / ratio[0])))
    elif in_ratio > ratio[1]:
        cw, ch = min(w, int(round(h * ratio[1]))), h
    else:
        cw, ch = w, h
    top, left = (h - ch) // 2, (w - cw) // 2
    return _resize(image[top:top + ch, left:left + cw], edge, edge)


def _center_crop(image: np.ndarray, edge: int) -> np.ndarray:
    h, w = image.shape[:2]
    top, left = (h - edge) // 2, (w - edge) // 2
    return image[top:top + edge, left:left + edge]


def apply_transform(image: np.ndarray, spec: TransformSpec, seed: int = 0) -> np.ndarray:
    """Turn an image into a normalized channels-first float32 tensor.

    Train phase: random resized crop + random horizontal flip, both driven
    by ``seed``.  Eval phase: resize the shorter edge then center crop.
    """
    if image.size == 0:
        raise EmptyImage("empty image")
    unit = _to_unit_float(image)

    if spec.phase == "train":
        rng = np.random.default_rng(seed)
        out = _random_resized_crop(unit, spec.crop_edge, rng)
        if spec.horizontal_flip and rng.random() < 0.5:
            out = out[:, ::-1]
    else:
        h, w = unit.shape[:2]
        scale = spec.resize_edge / min(h, w)
        out = _resize(unit, max(spec.crop_edge, int(round(w * scale))),
                      max(spec.crop_edge, int(round(h * scale))))
        out = _center_crop(out, spec.crop_edge)

    mean = np.asarray(spec.channel_mean, dtype=np.float32)
    std = np.asarray(spec.channel_std, dtype=np.float32)
    out = (out - mean) / std
    return np.ascontiguousarray(out.transpose(2, 0, 1), dtype=np.float32)


def load_image(path: str) -> np.ndarray:
    """Read a JPEG/PNG file as an RGB uint8 array."""
    bgr = cv2.imread(str(path), cv2.IMREAD_COLOR)
    if bgr is None:
        raise EmptyImage(f"cannot read image: {path}")
    return cv2.cvtColor(bgr, cv2.COLOR_BGR2RGB)


def save_image(path: str, image: np.ndarray) -> None:
    rgb = _as_rgb(image)
    if rgb.dtype != np.uint8:
        rgb = np.rint(np.clip(rgb, 0.0, 1.0) * 255.0).astype(np.uint8)
    if not cv2.imwrite(str(path), cv2.cvtColor(rgb, cv2.COLOR_RGB2BGR)):
        raise OSError(f"cannot write image: {path}")
