"""Shared domain vocabulary: embeddings, volume records, region queries.

All types here are immutable after construction and safe to share across
threads. Embedding vectors are numpy float32 arrays of a fixed width
(the store's embedding dimension); stored vectors always carry unit L2
norm, which lets cosine similarity reduce to a plain dot product.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ZeroVectorError

NORM_TOLERANCE = 1e-5
ZERO_NORM_FLOOR = 1e-12


def normalize(vector: np.ndarray) -> np.ndarray:
    """Scale ``vector`` to unit L2 norm, preserving direction.

    Raises:
        ZeroVectorError: if the norm is at or below 1e-12.
    """
    v = np.asarray(vector, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= ZERO_NORM_FLOOR:
        raise ZeroVectorError(f"cannot normalize vector with norm {norm!r}")
    return (v / norm).astype(np.float32)


def is_normalized(vector: np.ndarray, tolerance: float = NORM_TOLERANCE) -> bool:
    """True when ``vector`` has unit L2 norm within ``tolerance``."""
    return abs(float(np.linalg.norm(np.asarray(vector, dtype=np.float64))) - 1.0) <= tolerance


@dataclass(frozen=True)
class SliceEmbedding:
    """One axial slice of one volume, as a unit-norm embedding vector."""

    volume_id: str
    slice_index: int
    vector: np.ndarray

    def __post_init__(self) -> None:
        if self.slice_index < 0:
            raise ValueError(f"slice_index must be >= 0, got {self.slice_index}")


@dataclass(frozen=True)
class VolumeRecord:
    """Placement of one volume's slice rows inside an embedding store.

    Slice ``i`` of the volume lives at payload row ``embedding_offset + i``;
    slice indices run 0..n_slices-1 with no gaps.
    """

    volume_id: str
    n_slices: int
    embedding_offset: int
    split: str = "database"

    def __post_init__(self) -> None:
        if self.n_slices < 1:
            raise ValueError(f"volume {self.volume_id!r}: n_slices must be >= 1")
        if self.embedding_offset < 0:
            raise ValueError(f"volume {self.volume_id!r}: negative embedding_offset")
        if self.split not in ("database", "query"):
            raise ValueError(f"volume {self.volume_id!r}: bad split {self.split!r}")


@dataclass(frozen=True)
class RegionQuery:
    """A sub-volume query: the minimal contiguous slice span of one volume
    that covers every slice where an anatomical region appears.

    ``region`` is a fine label id unless ``coarse`` is set, in which case it
    is a coarse label id. The span is inclusive on both ends.
    """

    volume_id: str
    region: int
    slice_range: tuple[int, int]
    coarse: bool = False

    def __post_init__(self) -> None:
        lo, hi = self.slice_range
        if lo < 0 or lo > hi:
            raise ValueError(f"bad slice_range {self.slice_range} for {self.volume_id!r}")

    @property
    def n_slices(self) -> int:
        lo, hi = self.slice_range
        return hi - lo + 1

    @property
    def query_id(self) -> str:
        """Stable identifier used in hit-table and report exports."""
        lo, hi = self.slice_range
        kind = "c" if self.coarse else "f"
        return f"{self.volume_id}:{kind}{self.region}:{lo}-{hi}"
