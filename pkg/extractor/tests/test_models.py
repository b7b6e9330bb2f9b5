"""Backbone registry: naming, normalization families, determinism,
checkpoint loading, and offline behavior.

Pretrained-weight downloads are deliberately not exercised; the
no-public-weights entries raise without touching the network, which is
the only offline-safe part of that path.
"""
import numpy as np
import pytest
import torch

from volextract import ModelUnavailable, load_model, normalization_for
from volextract.models import (
    HALF_MEAN,
    HALF_STD,
    IMAGENET_MEAN,
    IMAGENET_STD,
    MODEL_NAMES,
)

from conftest import CHEAP_MODEL


def probe_batch(n=2):
    g = torch.Generator().manual_seed(123)
    return torch.randn(n, 3, 224, 224, generator=g)


def test_registry_lists_six_backbones():
    assert MODEL_NAMES == (
        "dinov1",
        "dinov2",
        "dreamsim",
        "resnet50-fractaldb",
        "resnet50-radimagenet",
        "swin-radimagenet",
    )


@pytest.mark.parametrize(
    "name", ["dinov1", "dinov2", "dreamsim", "resnet50-fractaldb"]
)
def test_imagenet_normalization_family(name):
    mean, std = normalization_for(name)
    assert mean == IMAGENET_MEAN
    assert std == IMAGENET_STD


@pytest.mark.parametrize("name", ["swin-radimagenet", "resnet50-radimagenet"])
def test_half_normalization_family(name):
    mean, std = normalization_for(name)
    assert mean == HALF_MEAN
    assert std == HALF_STD


def test_unknown_model_rejected():
    with pytest.raises(ModelUnavailable):
        normalization_for("clip-vit")
    with pytest.raises(ModelUnavailable):
        load_model("clip-vit", pretrained=False)


@pytest.mark.parametrize(
    "name",
    ["dreamsim", "swin-radimagenet", "resnet50-radimagenet", "resnet50-fractaldb"],
)
def test_unfetchable_pretrained_weights_raise(name):
    # these loaders fail fast with a pointer at checkpoint=, no network I/O
    with pytest.raises(ModelUnavailable):
        load_model(name, pretrained=True)


def test_same_seed_reproduces_random_init(model):
    again = load_model(CHEAP_MODEL, pretrained=False, seed=1)
    x = probe_batch()
    np.testing.assert_array_equal(model.embed(x), again.embed(x))


def test_different_seed_changes_random_init(model):
    other = load_model(CHEAP_MODEL, pretrained=False, seed=2)
    x = probe_batch()
    assert not np.array_equal(model.embed(x), other.embed(x))


def test_checkpoint_restores_exact_weights(model, tmp_path):
    path = tmp_path / "weights.pt"
    torch.save(model.module.state_dict(), path)
    # checkpoint wins over both the seed and the pretrained flag
    restored = load_model(CHEAP_MODEL, pretrained=True, checkpoint=str(path), seed=99)
    x = probe_batch()
    np.testing.assert_array_equal(model.embed(x), restored.embed(x))


def test_unreadable_checkpoint_rejected(tmp_path):
    path = tmp_path / "weights.pt"
    path.write_bytes(b"not a state dict")
    with pytest.raises(ModelUnavailable):
        load_model(CHEAP_MODEL, pretrained=False, checkpoint=str(path))


def test_resnet_feature_width(model):
    assert model.dim == 2048


def test_vit_feature_width():
    vit = load_model("dinov2", pretrained=False, seed=0)
    assert vit.dim == 768
    assert vit.mean == IMAGENET_MEAN


def test_embed_shape_and_dtype(model):
    out = model.embed(probe_batch(3))
    assert out.shape == (3, model.dim)
    assert out.dtype == np.float32


def test_embed_is_deterministic_in_eval_mode(model):
    x = probe_batch()
    np.testing.assert_array_equal(model.embed(x), model.embed(x))
