"""Architecture registry, transfer modes, prediction, checkpoints."""

import numpy as np
import pytest
import torch

from retinabench.errors import ProviderUnavailable, ShapeMismatch, UnknownArchitecture
from retinabench.models import (
    FEATURE_EXTRACT,
    FINE_TUNE,
    build_model,
    canonical_name,
    input_edge,
    list_architectures,
    load_checkpoint,
    predict,
    save_checkpoint,
    softmax,
)


class TestRegistry:
    def test_exactly_sixteen_entries(self):
        assert len(list_architectures()) == 16

    def test_names_unique(self):
        names = [a.name for a in list_architectures()]
        assert len(set(names)) == 16

    def test_alexnet_error_rates(self):
        spec = {a.name: a for a in list_architectures()}["AlexNet"]
        assert (spec.reported_top1_error, spec.reported_top5_error) == (43.45, 20.91)

    def test_resnet18_error_rates(self):
        spec = {a.name: a for a in list_architectures()}["ResNet-18"]
        assert (spec.reported_top1_error, spec.reported_top5_error) == (30.24, 10.92)

    @pytest.mark.parametrize("name,edge", [
        ("AlexNet", 224),
        ("VGG-19", 224),
        ("Inception v3", 299),
    ])
    def test_input_edges(self, name, edge):
        assert input_edge(name) == edge

    def test_name_normalization(self):
        assert canonical_name("inception_v3") == "Inception-v3"
        assert canonical_name("vgg11_bn") == "VGG-11-BN"
        assert canonical_name("resnet-18") == "ResNet-18"

    def test_unknown_architecture(self):
        with pytest.raises(UnknownArchitecture):
            input_edge("ResNet-999")


class TestBuildModel:
    def test_feature_extract_freezes_backbone(self):
        handle = build_model("ResNet-18", 5, pretrained=False, mode=FEATURE_EXTRACT, seed=0)
        assert all(not p.requires_grad for _, p in handle.backbone_parameters())
        assert all(p.requires_grad for _, p in handle.head_parameters())
        head = dict(handle.head_parameters())
        assert head["fc.weight"].shape[0] == 5

    def test_fine_tune_everything_trainable(self):
        handle = build_model("AlexNet", 4, pretrained=False, mode=FINE_TUNE, seed=0)
        assert all(p.requires_grad for p in handle.module.parameters())
        head = dict(handle.head_parameters())
        assert head["classifier.6.weight"].shape[0] == 4

    def test_unknown_name(self):
        with pytest.raises(UnknownArchitecture):
            build_model("ResNet-999", 5, pretrained=False, mode=FINE_TUNE, seed=0)

    def test_seed_reproducibility(self):
        a = build_model("ResNet-18", 3, pretrained=False, mode=FINE_TUNE, seed=7)
        b = build_model("ResNet-18", 3, pretrained=False, mode=FINE_TUNE, seed=7)
        assert a.backbone_fingerprint() == b.backbone_fingerprint()
        for (_, pa), (_, pb) in zip(a.head_parameters(), b.head_parameters()):
            assert torch.equal(pa, pb)

    def test_seed_changes_weights(self):
        a = build_model("ResNet-18", 3, pretrained=False, mode=FINE_TUNE, seed=7)
        b = build_model("ResNet-18", 3, pretrained=False, mode=FINE_TUNE, seed=8)
        assert a.backbone_fingerprint() != b.backbone_fingerprint()

    def test_provider_unavailable_offline(self):
        # conftest points MODEL_PROVIDER_DIR at an empty directory
        with pytest.raises(ProviderUnavailable):
            build_model("ResNet-18", 5, pretrained=True, mode=FEATURE_EXTRACT, seed=0)

    def test_provider_directory_serves_weights(self, tmp_path, monkeypatch):
        import os

        import torchvision.models as tvm

        # stage a state dict under the provider dir with the published
        # blob's file name; build_model must pick it up instead of fetching
        url = tvm.get_model_weights("resnet18").DEFAULT.url
        blob = tmp_path / url.rsplit("/", 1)[1]
        torch.manual_seed(1234)
        staged = tvm.resnet18(weights=None)
        torch.save(staged.state_dict(), blob)
        monkeypatch.setenv("MODEL_PROVIDER_DIR", str(tmp_path))

        handle = build_model("ResNet-18", 5, pretrained=True,
                             mode=FEATURE_EXTRACT, seed=0)
        assert handle.pretrained
        assert torch.equal(handle.module.conv1.weight, staged.conv1.weight)
        # head is fresh, not the staged 1000-way classifier
        assert dict(handle.head_parameters())["fc.weight"].shape == (5, 512)

    def test_num_classes_validation(self):
        with pytest.raises(ValueError):
            build_model("ResNet-18", 1, pretrained=False, mode=FINE_TUNE, seed=0)

    def test_densenet_head(self):
        handle = build_model("DenseNet-121", 4, pretrained=False, mode=FEATURE_EXTRACT, seed=0)
        head = dict(handle.head_parameters())
        assert head["classifier.weight"].shape[0] == 4

    def test_inception_feature_extract_drops_aux(self):
        handle = build_model("Inception-v3", 4, pretrained=False,
                             mode=FEATURE_EXTRACT, seed=0)
        assert not handle.uses_aux_logits
        assert handle.module.AuxLogits is None

    def test_inception_fine_tune_keeps_aux_head(self):
        handle = build_model("Inception-v3", 4, pretrained=False, mode=FINE_TUNE, seed=0)
        assert handle.uses_aux_logits
        head = dict(handle.head_parameters())
        assert head["AuxLogits.fc.weight"].shape[0] == 4


@pytest.fixture(scope="module")
def resnet_handle():
    return build_model("ResNet-18", 5, pretrained=False, mode=FINE_TUNE, seed=0)


class TestPredict:
    def test_score_shape(self, resnet_handle):
        batch = np.random.default_rng(0).normal(size=(2, 3, 64, 64)).astype(np.float32)
        scores = predict(resnet_handle, batch)
        assert scores.shape == (2, 5)

    def test_softmax_rows_sum_to_one(self, resnet_handle):
        batch = np.random.default_rng(1).normal(size=(3, 3, 64, 64)).astype(np.float32)
        probs = softmax(predict(resnet_handle, batch))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-6)

    def test_argmax_invariant_under_softmax(self, resnet_handle):
        batch = np.random.default_rng(2).normal(size=(4, 3, 64, 64)).astype(np.float32)
        scores = predict(resnet_handle, batch)
        np.testing.assert_array_equal(
            scores.argmax(axis=1), softmax(scores).argmax(axis=1)
        )

    def test_shape_mismatch(self, resnet_handle):
        with pytest.raises(ShapeMismatch):
            predict(resnet_handle, np.zeros((2, 1, 64, 64), dtype=np.float32))
        with pytest.raises(ShapeMismatch):
            predict(resnet_handle, np.zeros((2, 3, 64), dtype=np.float32))


class TestCheckpoints:
    def test_round_trip(self, tmp_path):
        handle = build_model("ResNet-18", 3, pretrained=False, mode=FEATURE_EXTRACT, seed=5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(handle, path)
        loaded = load_checkpoint(path)
        assert loaded.architecture.name == "ResNet-18"
        assert loaded.num_classes == 3
        assert loaded.mode == FEATURE_EXTRACT
        assert loaded.backbone_fingerprint() == handle.backbone_fingerprint()

    def test_magic_header(self, tmp_path):
        handle = build_model("ResNet-18", 3, pretrained=False, mode=FINE_TUNE, seed=5)
        path = tmp_path / "model.ckpt"
        save_checkpoint(handle, path)
        assert path.read_bytes()[:8] == b"RBNCKPT1"

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "bogus.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
        with pytest.raises(ValueError):
            load_checkpoint(path)
