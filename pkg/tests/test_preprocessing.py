"""Fundus radius estimation, local-average normalization, and transforms."""

import numpy as np
import pytest

from retinabench.errors import EmptyImage, NoFundusDetected
from retinabench.preprocessing import (
    GrahamParams,
    TransformSpec,
    apply_transform,
    estimate_fundus_radius,
    eval_transform,
    graham_preprocess,
    train_transform,
)

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


def disk_image(edge: int, radius: int, value=(180, 120, 90), center=None) -> np.ndarray:
    image = np.zeros((edge, edge, 3), dtype=np.uint8)
    cy, cx = center or (edge // 2, edge // 2)
    yy, xx = np.ogrid[:edge, :edge]
    mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= radius**2
    image[mask] = value
    return image


class TestRadiusEstimate:
    def test_centered_disk(self):
        image = disk_image(1000, 200)
        assert estimate_fundus_radius(image) == pytest.approx(200, abs=2)

    def test_all_black(self):
        with pytest.raises(NoFundusDetected):
            estimate_fundus_radius(np.zeros((100, 100, 3), dtype=np.uint8))

    def test_border_clipped_disk_clamps_to_half_width(self):
        image = disk_image(1000, 600)
        assert estimate_fundus_radius(image) == pytest.approx(500, abs=2)

    def test_empty_image(self):
        with pytest.raises(EmptyImage):
            estimate_fundus_radius(np.zeros((0, 0, 3), dtype=np.uint8))

    @pytest.mark.parametrize("radius", [100, 250, 400])
    def test_various_radii(self, radius):
        image = disk_image(1000, radius)
        assert estimate_fundus_radius(image) == pytest.approx(radius, abs=2)


@pytest.fixture(scope="module")
def default_output():
    return graham_preprocess(disk_image(1000, 200))


class TestGrahamPreprocess:
    def test_output_dimensions_default_params(self, default_output):
        assert default_output.shape == (900, 900, 3)

    def test_uniform_disk_interior_is_mid_gray(self):
        out = graham_preprocess(disk_image(1000, 300, value=(140, 140, 140)))
        h, w = out.shape[:2]
        # interior: central region well inside the clip circle, away from
        # the boundary band where the blurred average departs from the pixel
        interior = out[h // 2 - 100: h // 2 + 100, w // 2 - 100: w // 2 + 100]
        assert np.abs(interior.astype(float) - 0.5 * 255).max() <= 0.02 * 255

    def test_default_target_radius_is_500(self):
        assert GrahamParams().target_radius == 500

    def test_radius_idempotence_pre_crop(self):
        # rescaling the output's disk again should be a no-op in radius
        params = GrahamParams(target_radius=120, clip_fraction=1.0)
        out = graham_preprocess(disk_image(400, 80), params)
        assert estimate_fundus_radius(out) == pytest.approx(120, abs=2)

    def test_exterior_zeroed(self, default_output):
        assert default_output[0, 0].tolist() == [0, 0, 0]
        assert default_output[-1, -1].tolist() == [0, 0, 0]

    def test_propagates_no_fundus(self):
        with pytest.raises(NoFundusDetected):
            graham_preprocess(np.zeros((300, 300, 3), dtype=np.uint8))

    def test_custom_clip_fraction(self):
        params = GrahamParams(target_radius=100, clip_fraction=0.5)
        out = graham_preprocess(disk_image(400, 80), params)
        assert out.shape == (100, 100, 3)

    def test_param_validation(self):
        with pytest.raises(ValueError):
            GrahamParams(target_radius=8)
        with pytest.raises(ValueError):
            GrahamParams(clip_fraction=0.0)
        with pytest.raises(ValueError):
            GrahamParams(blur_scale=-1.0)


class TestApplyTransform:
    def test_eval_output_shape(self):
        rng = np.random.default_rng(0)
        image = rng.integers(0, 255, size=(384, 512, 3), dtype=np.uint8)
        out = apply_transform(image, eval_transform(224), seed=0)
        assert out.shape == (3, 224, 224)
        assert out.dtype == np.float32

    def test_constant_image_normalizes_to_zero(self):
        image = np.zeros((64, 64, 3), dtype=np.float32)
        image[:, :, 0] = 0.485
        image[:, :, 1] = 0.456
        image[:, :, 2] = 0.406
        out = apply_transform(image, eval_transform(32), seed=0)
        assert np.abs(out).max() < 1e-6

    def test_train_determinism(self):
        rng = np.random.default_rng(1)
        image = rng.integers(0, 255, size=(100, 140, 3), dtype=np.uint8)
        spec = train_transform(64)
        a = apply_transform(image, spec, seed=99)
        b = apply_transform(image, spec, seed=99)
        np.testing.assert_array_equal(a, b)

    def test_train_seed_variation(self):
        rng = np.random.default_rng(1)
        image = rng.integers(0, 255, size=(100, 140, 3), dtype=np.uint8)
        spec = train_transform(64)
        a = apply_transform(image, spec, seed=1)
        b = apply_transform(image, spec, seed=2)
        assert not np.array_equal(a, b)

    def test_normalization_invertible(self):
        rng = np.random.default_rng(2)
        image = rng.random((80, 80, 3), dtype=np.float32)
        spec = eval_transform(64)
        out = apply_transform(image, spec, seed=0)
        mean = np.asarray(IMAGENET_MEAN, dtype=np.float32).reshape(3, 1, 1)
        std = np.asarray(IMAGENET_STD, dtype=np.float32).reshape(3, 1, 1)
        recovered = out * std + mean
        # compare against the same resize+crop without normalization
        raw = apply_transform(
            image,
            TransformSpec(phase="eval", crop_edge=64, resize_edge=spec.resize_edge,
                          horizontal_flip=False,
                          channel_mean=(0.0, 0.0, 0.0), channel_std=(1.0, 1.0, 1.0)),
            seed=0,
        )
        assert np.abs(recovered - raw).max() < 1e-6

    def test_grayscale_replication(self):
        rng = np.random.default_rng(3)
        gray = rng.integers(0, 255, size=(96, 96), dtype=np.uint8)
        spec = TransformSpec(phase="eval", crop_edge=64, resize_edge=73,
                             horizontal_flip=False,
                             channel_mean=(0.0, 0.0, 0.0), channel_std=(1.0, 1.0, 1.0))
        out = apply_transform(gray, spec, seed=0)
        np.testing.assert_array_equal(out[0], out[1])
        np.testing.assert_array_equal(out[1], out[2])

    def test_empty_image(self):
        with pytest.raises(EmptyImage):
            apply_transform(np.zeros((0, 0, 3), dtype=np.uint8), eval_transform(32))

    def test_eval_invariant_crop_le_resize(self):
        with pytest.raises(ValueError):
            TransformSpec(phase="eval", crop_edge=300, resize_edge=256)

    def test_inception_eval_transform_proportion(self):
        spec = eval_transform(299)
        assert spec.resize_edge == 342


class TestImageIO:
    def test_grayscale_file_loads_as_replicated_rgb(self, tmp_path):
        import cv2

        from retinabench.preprocessing import load_image

        gray = np.random.default_rng(4).integers(0, 255, size=(50, 60), dtype=np.uint8)
        path = tmp_path / "scan.png"
        cv2.imwrite(str(path), gray)
        loaded = load_image(str(path))
        assert loaded.shape == (50, 60, 3)
        np.testing.assert_array_equal(loaded[:, :, 0], loaded[:, :, 1])
        np.testing.assert_array_equal(loaded[:, :, 1], loaded[:, :, 2])

    def test_save_load_round_trip(self, tmp_path):
        from retinabench.preprocessing import load_image, save_image

        image = np.random.default_rng(5).integers(0, 255, size=(32, 32, 3), dtype=np.uint8)
        path = tmp_path / "img.png"
        save_image(str(path), image)
        np.testing.assert_array_equal(load_image(str(path)), image)
