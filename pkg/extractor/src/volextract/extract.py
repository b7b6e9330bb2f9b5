"""Volume-to-store extraction pipeline.

Each axial slice of a CT volume becomes one embedding row: rescale the
volume's intensities to [0, 1] with its own min/max, resize every slice
to the backbone's 224x224 input, replicate to three channels, normalize
with the model family's constants, run the backbone in batches, and
L2-normalize the outputs. Rows are written in slice order so the
resulting store satisfies the search engine's layout contract.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F

from volsearch import (
    EmbeddingStore,
    SliceEmbedding,
    SliceLabelTable,
    normalize,
    save_slice_labels,
    store_from_rows,
    write_store,
)

from .errors import UnreadableVolume, VolextractError
from .models import INPUT_SIZE, LoadedModel, load_model
from .nifti import read_nifti

_INTERP_MODES = ("nearest", "bilinear", "bicubic")


@dataclass(frozen=True)
class ExtractorConfig:
    model: str = "dinov2"
    pretrained: bool = True
    checkpoint: str | None = None
    device: str = "cpu"
    batch_size: int = 16
    axial_axis: int = 2
    interp: str = "bilinear"
    seed: int = 0
    split: str = "database"

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise VolextractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.axial_axis not in (0, 1, 2):
            raise VolextractError(f"axial_axis must be 0, 1, or 2, got {self.axial_axis}")
        if self.interp not in _INTERP_MODES:
            raise VolextractError(f"interp must be one of {_INTERP_MODES}, got {self.interp!r}")


def volume_id_for(path: str | Path) -> str:
    name = Path(path).name
    for suffix in (".gz", ".nii"):
        name = name.removesuffix(suffix)
    return name


def axial_slices(volume: np.ndarray, axis: int = 2) -> np.ndarray:
    """Stack of 2D slices, shape [n, H, W], slice index first."""
    volume = np.asarray(volume)
    if volume.ndim != 3:
        raise UnreadableVolume(f"need a 3D volume, got shape {volume.shape}")
    return np.moveaxis(volume, axis, 0)


def preprocess(slices: np.ndarray, model: LoadedModel, interp: str = "bilinear") -> torch.Tensor:
    """[n, H, W] raw slices -> [n, 3, 224, 224] normalized model input.

    Intensity rescale uses the whole volume's min/max so slice brightness
    stays comparable within a volume; a constant volume maps to zeros.
    """
    slices = np.asarray(slices, dtype=np.float32)
    lo = float(slices.min())
    span = float(slices.max()) - lo
    scaled = (slices - lo) / span if span > 0.0 else np.zeros_like(slices)

    x = torch.from_numpy(scaled).unsqueeze(1)  # [n, 1, H, W]
    if x.shape[-2:] != (INPUT_SIZE, INPUT_SIZE):
        kwargs = {} if interp == "nearest" else {"align_corners": False}
        x = F.interpolate(x, size=(INPUT_SIZE, INPUT_SIZE), mode=interp, **kwargs)
    x = x.repeat(1, 3, 1, 1)
    mean = torch.tensor(model.mean).view(1, 3, 1, 1)
    std = torch.tensor(model.std).view(1, 3, 1, 1)
    return (x - mean) / std


def extract(
    volume: np.ndarray,
    model: LoadedModel,
    config: ExtractorConfig,
    volume_id: str = "volume",
) -> list[SliceEmbedding]:
    """One L2-normalized embedding per axial slice, in slice order."""
    slices = axial_slices(volume, config.axial_axis)
    batch = preprocess(slices, model, config.interp).to(config.device)
    rows: list[SliceEmbedding] = []
    for start in range(0, batch.shape[0], config.batch_size):
        features = model.embed(batch[start : start + config.batch_size])
        for offset, vector in enumerate(features):
            rows.append(SliceEmbedding(volume_id, start + offset, normalize(vector)))
    return rows


def extract_file(
    path: str | Path,
    model: LoadedModel,
    config: ExtractorConfig,
    volume_id: str | None = None,
) -> list[SliceEmbedding]:
    return extract(read_nifti(path), model, config, volume_id or volume_id_for(path))


def mask_labels(mask: np.ndarray, volume_id: str, axis: int = 2) -> dict[tuple[str, int], list[int]]:
    """Per-slice label presence from an integer mask on the same grid:
    every nonzero value in a slice is one present label id."""
    rows = {}
    for index, plane in enumerate(axial_slices(mask, axis)):
        present = np.unique(plane.astype(np.int64))
        rows[(volume_id, index)] = [int(v) for v in present if v != 0]
    return rows


def extract_to_store(
    volume_paths: list[str | Path],
    config: ExtractorConfig,
    out_path: str | Path | None = None,
    mask_paths: list[str | Path] | None = None,
    labels_out: str | Path | None = None,
) -> EmbeddingStore:
    """Extract several volumes into one store (and optionally one label
    CSV computed from segmentation masks, one mask file per volume)."""
    if not volume_paths:
        raise VolextractError("no input volumes")
    if mask_paths is not None and len(mask_paths) != len(volume_paths):
        raise VolextractError(
            f"{len(mask_paths)} masks for {len(volume_paths)} volumes; need one each"
        )
    model = load_model(
        config.model,
        pretrained=config.pretrained,
        device=config.device,
        seed=config.seed,
        checkpoint=config.checkpoint,
    )
    rows: list[SliceEmbedding] = []
    label_rows: dict[tuple[str, int], list[int]] = {}
    for i, path in enumerate(volume_paths):
        volume_id = volume_id_for(path)
        volume = read_nifti(path)
        extracted = extract(volume, model, config, volume_id)
        rows.extend(extracted)
        if mask_paths is not None:
            mask = read_nifti(mask_paths[i])
            if mask.shape != volume.shape:
                raise UnreadableVolume(
                    f"mask {mask_paths[i]} shape {mask.shape} != volume shape {volume.shape}"
                )
            label_rows.update(mask_labels(mask, volume_id, config.axial_axis))
    store = store_from_rows(model.dim, rows, split=config.split)
    if out_path is not None:
        write_store(store, out_path)
    if labels_out is not None and mask_paths is not None:
        save_slice_labels(SliceLabelTable(label_rows), labels_out)
    return store
