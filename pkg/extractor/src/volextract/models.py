"""Backbone registry with per-family preprocessing constants.

Six embedding extractors are supported. The self-supervised ViT family
(dinov1, dinov2, dreamsim) and the fractal-pretrained ResNet50 use
ImageNet normalization; the RadImageNet-supervised SwinTransformer and
ResNet50 use mean 0.5 / std 0.5. The constants are tied to the model
name here so callers cannot mismatch them.

Pretrained weights are fetched from their upstream hubs, which needs
network access (or a local checkpoint). With pretrained=False the same
architecture is built with seeded random initialization - embeddings are
meaningless for retrieval quality but every shape, normalization, and
determinism property still holds, which is what the tests exercise.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .errors import ModelUnavailable

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)
HALF_MEAN = (0.5, 0.5, 0.5)
HALF_STD = (0.5, 0.5, 0.5)

INPUT_SIZE = 224


def _headless_vit():
    from torchvision.models import vit_b_16

    model = vit_b_16(weights=None)
    model.heads = nn.Identity()
    return model


def _headless_swin():
    from torchvision.models import swin_t

    model = swin_t(weights=None)
    model.head = nn.Identity()
    return model


def _headless_resnet50():
    from torchvision.models import resnet50

    model = resnet50(weights=None)
    model.fc = nn.Identity()
    return model


def _hub_loader(repo: str, entry: str):
    def load():
        return torch.hub.load(repo, entry, trust_repo=True)

    return load


def _no_public_weights(name: str, source: str):
    def load():
        raise ModelUnavailable(
            f"{name}: {source} weights are not downloadable from a public hub; "
            "pass checkpoint= to load a local state dict"
        )

    return load


# name -> (random-init architecture, pretrained loader, (mean, std))
_REGISTRY = {
    "dinov1": (
        _headless_vit,
        _hub_loader("facebookresearch/dino:main", "dino_vits16"),
        (IMAGENET_MEAN, IMAGENET_STD),
    ),
    "dinov2": (
        _headless_vit,
        _hub_loader("facebookresearch/dinov2", "dinov2_vits14"),
        (IMAGENET_MEAN, IMAGENET_STD),
    ),
    "dreamsim": (
        _headless_vit,
        _no_public_weights("dreamsim", "the dreamsim package distributes its"),
        (IMAGENET_MEAN, IMAGENET_STD),
    ),
    "swin-radimagenet": (
        _headless_swin,
        _no_public_weights("swin-radimagenet", "RadImageNet"),
        (HALF_MEAN, HALF_STD),
    ),
    "resnet50-radimagenet": (
        _headless_resnet50,
        _no_public_weights("resnet50-radimagenet", "RadImageNet"),
        (HALF_MEAN, HALF_STD),
    ),
    "resnet50-fractaldb": (
        _headless_resnet50,
        _no_public_weights("resnet50-fractaldb", "FractalDB"),
        (IMAGENET_MEAN, IMAGENET_STD),
    ),
}

MODEL_NAMES = tuple(sorted(_REGISTRY))


@dataclass(frozen=True)
class LoadedModel:
    name: str
    module: torch.nn.Module
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    dim: int

    @torch.no_grad()
    def embed(self, batch: torch.Tensor) -> np.ndarray:
        """Raw (unnormalized) embeddings for a [N, 3, H, W] batch."""
        out = self.module(batch)
        return out.detach().cpu().numpy().astype(np.float32)


def normalization_for(name: str) -> tuple[tuple[float, ...], tuple[float, ...]]:
    if name not in _REGISTRY:
        raise ModelUnavailable(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    return _REGISTRY[name][2]


def load_model(
    name: str,
    pretrained: bool = True,
    device: str = "cpu",
    seed: int = 0,
    checkpoint: str | None = None,
) -> LoadedModel:
    """Build one registry backbone, strip its classification head, and
    probe its output width. Raises ModelUnavailable when pretrained
    weights cannot be fetched in this environment."""
    if name not in _REGISTRY:
        raise ModelUnavailable(f"unknown model {name!r}; choose from {', '.join(MODEL_NAMES)}")
    build_random, load_pretrained, (mean, std) = _REGISTRY[name]
    if pretrained and checkpoint is None:
        try:
            module = load_pretrained()
        except ModelUnavailable:
            raise
        except Exception as err:
            raise ModelUnavailable(f"{name}: pretrained weights unavailable ({err})") from err
    else:
        torch.manual_seed(seed)
        module = build_random()
        if checkpoint is not None:
            try:
                state = torch.load(checkpoint, map_location="cpu", weights_only=True)
            except Exception as err:
                raise ModelUnavailable(f"{name}: cannot read checkpoint ({err})") from err
            module.load_state_dict(state)
    module = module.to(device)
    module.eval()
    with torch.no_grad():
        probe = module(torch.zeros(1, 3, INPUT_SIZE, INPUT_SIZE, device=device))
    if probe.ndim != 2:
        raise ModelUnavailable(f"{name}: expected [N, dim] features, got shape {tuple(probe.shape)}")
    return LoadedModel(name, module, tuple(mean), tuple(std), int(probe.shape[1]))
