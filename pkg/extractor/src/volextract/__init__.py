"""volextract: CT volumes -> slice-embedding stores for volsearch."""
from .errors import ModelUnavailable, UnreadableVolume, VolextractError
from .extract import (
    ExtractorConfig,
    axial_slices,
    extract,
    extract_file,
    extract_to_store,
    mask_labels,
    preprocess,
    volume_id_for,
)
from .models import (
    HALF_MEAN,
    HALF_STD,
    IMAGENET_MEAN,
    IMAGENET_STD,
    INPUT_SIZE,
    MODEL_NAMES,
    LoadedModel,
    load_model,
    normalization_for,
)
from .nifti import read_nifti, write_nifti

__all__ = [
    "ExtractorConfig",
    "HALF_MEAN",
    "HALF_STD",
    "IMAGENET_MEAN",
    "IMAGENET_STD",
    "INPUT_SIZE",
    "LoadedModel",
    "MODEL_NAMES",
    "ModelUnavailable",
    "UnreadableVolume",
    "VolextractError",
    "axial_slices",
    "extract",
    "extract_file",
    "extract_to_store",
    "load_model",
    "mask_labels",
    "normalization_for",
    "preprocess",
    "read_nifti",
    "volume_id_for",
    "write_nifti",
]

__version__ = "0.1.0"
