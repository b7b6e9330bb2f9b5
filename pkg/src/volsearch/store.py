"""Bit-exact persistence for embedding stores.

File layout (all integers little-endian):

    bytes 0..3    magic ``VGE1``
    u32           format version (currently 1)
    u32           embedding dimension
    u64           row count
    u64           FNV-1a (64-bit) checksum of the payload bytes
    u64           manifest length in bytes
    ...           manifest, UTF-8 JSON: {"volumes": [{"id", "n_slices",
                  "offset", "split"}, ...]}
    ...           payload, row-major float32, row count x dimension

Rows are stored already normalized; normalization happens once at ingest.
The manifest JSON is serialized canonically (fixed key order, no extra
whitespace), so write -> read -> write reproduces a file byte for byte.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import NORM_TOLERANCE, SliceEmbedding, VolumeRecord, normalize
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    DimensionMismatchError,
    NotNormalizedError,
    UnknownVolumeError,
    VersionUnsupportedError,
)

MAGIC = b"VGE1"
FORMAT_VERSION = 1

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over ``data``.

    Sequential by definition; any single-byte change alters the digest
    because each step ``h -> (h ^ b) * prime`` is injective for fixed b.
    """
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64_MASK
    return h


@dataclass(frozen=True)
class StoreManifest:
    """Volume directory of a store: who lives at which payload rows."""

    format_version: int
    dim: int
    volumes: tuple[VolumeRecord, ...]
    checksum: int = 0

    def __post_init__(self) -> None:
        expected_offset = 0
        seen: set[str] = set()
        for rec in self.volumes:
            if rec.volume_id in seen:
                raise ValueError(f"duplicate volume id {rec.volume_id!r}")
            seen.add(rec.volume_id)
            if rec.embedding_offset != expected_offset:
                raise ValueError(
                    f"volume {rec.volume_id!r}: offset {rec.embedding_offset}, expected {expected_offset}"
                )
            expected_offset += rec.n_slices

    @property
    def row_count(self) -> int:
        return sum(rec.n_slices for rec in self.volumes)

    def volume(self, volume_id: str) -> VolumeRecord:
        for rec in self.volumes:
            if rec.volume_id == volume_id:
                return rec
        raise UnknownVolumeError(f"volume {volume_id!r} not in store")

    @classmethod
    def build(cls, dim: int, volumes: Sequence[VolumeRecord]) -> "StoreManifest":
        return cls(format_version=FORMAT_VERSION, dim=dim, volumes=tuple(volumes))


class EmbeddingStore:
    """A manifest plus the float32 embedding matrix it describes.

    Row access by (volume_id, slice_index) is O(1) after an initial
    volume-id hash is built. Instances are immutable and shareable.
    """

    def __init__(self, manifest: StoreManifest, matrix: np.ndarray):
        matrix = np.ascontiguousarray(matrix, dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] != manifest.dim:
            raise DimensionMismatchError(
                f"matrix shape {matrix.shape} does not match dim {manifest.dim}"
            )
        if matrix.shape[0] != manifest.row_count:
            raise ValueError(
                f"matrix has {matrix.shape[0]} rows, manifest declares {manifest.row_count}"
            )
        self.manifest = manifest
        self.matrix = matrix
        self.matrix.setflags(write=False)
        self._index = {rec.volume_id: rec for rec in manifest.volumes}
        self._offsets = np.array([rec.embedding_offset for rec in manifest.volumes], dtype=np.int64)

    @property
    def dim(self) -> int:
        return self.manifest.dim

    @property
    def row_count(self) -> int:
        return self.matrix.shape[0]

    def volume_ids(self) -> list[str]:
        return [rec.volume_id for rec in self.manifest.volumes]

    def volume(self, volume_id: str) -> VolumeRecord:
        try:
            return self._index[volume_id]
        except KeyError:
            raise UnknownVolumeError(f"volume {volume_id!r} not in store") from None

    def __contains__(self, volume_id: str) -> bool:
        return volume_id in self._index

    def row(self, volume_id: str, slice_index: int) -> np.ndarray:
        rec = self.volume(volume_id)
        if not 0 <= slice_index < rec.n_slices:
            raise IndexError(f"slice {slice_index} outside 0..{rec.n_slices - 1} of {volume_id!r}")
        return self.matrix[rec.embedding_offset + slice_index]

    def volume_matrix(self, volume_id: str) -> np.ndarray:
        """All slice rows of one volume as an (n_slices, dim) view."""
        rec = self.volume(volume_id)
        return self.matrix[rec.embedding_offset : rec.embedding_offset + rec.n_slices]

    def locate(self, row: int) -> tuple[str, int]:
        """Map a payload row index back to (volume_id, slice_index)."""
        if not 0 <= row < self.row_count:
            raise IndexError(f"row {row} outside store of {self.row_count} rows")
        vol_pos = int(np.searchsorted(self._offsets, row, side="right")) - 1
        rec = self.manifest.volumes[vol_pos]
        return rec.volume_id, row - rec.embedding_offset

    def iter_slices(self, volume_id: str) -> Iterable[tuple[int, np.ndarray]]:
        rec = self.volume(volume_id)
        base = rec.embedding_offset
        for i in range(rec.n_slices):
            yield i, self.matrix[base + i]


def _manifest_json(manifest: StoreManifest) -> bytes:
    doc = {
        "volumes": [
            {
                "id": rec.volume_id,
                "n_slices": rec.n_slices,
                "offset": rec.embedding_offset,
                "split": rec.split,
            }
            for rec in manifest.volumes
        ]
    }
    return json.dumps(doc, separators=(",", ":")).encode("utf-8")


def store_from_rows(
    dim: int, rows: Sequence[SliceEmbedding], split: str = "database"
) -> EmbeddingStore:
    """Assemble a store from slice embeddings sorted by (volume, slice_index).

    Input vectors are normalized here (the one ingest-time normalization);
    zero vectors are rejected.
    """
    volumes: list[VolumeRecord] = []
    payload = np.empty((len(rows), dim), dtype=np.float32)
    current: str | None = None
    start = 0
    for pos, row in enumerate(rows):
        if len(row.vector) != dim:
            raise DimensionMismatchError(
                f"{row.volume_id!r} slice {row.slice_index}: vector length {len(row.vector)} != {dim}"
            )
        if row.volume_id != current:
            if current is not None:
                volumes.append(VolumeRecord(current, pos - start, start, split))
            current = row.volume_id
            start = pos
        if row.slice_index != pos - start:
            raise ValueError(
                f"{row.volume_id!r}: slice indices must be contiguous from 0, got {row.slice_index}"
            )
        payload[pos] = normalize(row.vector)
    if current is not None:
        volumes.append(VolumeRecord(current, len(rows) - start, start, split))
    manifest = StoreManifest.build(dim, volumes)
    return EmbeddingStore(manifest, payload)


def write_store(store: EmbeddingStore, path: str | Path) -> None:
    """Serialize a store to the binary layout above.

    Raises:
        NotNormalizedError: if any row lacks unit norm (stores persist
            normalized rows only).
    """
    norms = np.linalg.norm(store.matrix.astype(np.float64), axis=1) if store.row_count else np.array([])
    if store.row_count and bool(np.any(np.abs(norms - 1.0) > NORM_TOLERANCE)):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise NotNormalizedError(f"row {bad} has norm {norms[bad]:.6f}")
    payload = np.ascontiguousarray(store.matrix, dtype="<f4").tobytes()
    manifest_bytes = _manifest_json(store.manifest)
    header = MAGIC + struct.pack(
        "<IIQQQ",
        FORMAT_VERSION,
        store.dim,
        store.row_count,
        fnv1a64(payload),
        len(manifest_bytes),
    )
    with open(path, "wb") as f:
        f.write(header)
        f.write(manifest_bytes)
        f.write(payload)


def read_store(path: str | Path) -> EmbeddingStore:
    """Read and validate a store file.

    Raises:
        BadMagicError, VersionUnsupportedError, ChecksumMismatchError:
            on malformed, newer-versioned, or corrupted files.
    """
    with open(path, "rb") as f:
        data = f.read()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagicError(f"{path}: not a VGE1 store")
    if len(data) < 36:
        raise ChecksumMismatchError(f"{path}: truncated header")
    version, dim, row_count, checksum, manifest_len = struct.unpack("<IIQQQ", data[4:36])
    if version != FORMAT_VERSION:
        raise VersionUnsupportedError(f"{path}: format version {version} unsupported")
    manifest_end = 36 + manifest_len
    payload_end = manifest_end + row_count * dim * 4
    if len(data) != payload_end:
        raise ChecksumMismatchError(
            f"{path}: expected {payload_end} bytes, file has {len(data)}"
        )
    payload = data[manifest_end:payload_end]
    if fnv1a64(payload) != checksum:
        raise ChecksumMismatchError(f"{path}: payload checksum mismatch")
    try:
        doc = json.loads(data[36:manifest_end].decode("utf-8"))
        volumes = tuple(
            VolumeRecord(v["id"], v["n_slices"], v["offset"], v["split"]) for v in doc["volumes"]
        )
        manifest = StoreManifest(
            format_version=version, dim=dim, volumes=volumes, checksum=checksum
        )
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ChecksumMismatchError(f"{path}: manifest unreadable or inconsistent: {exc}") from exc
    if manifest.row_count != row_count:
        raise ChecksumMismatchError(
            f"{path}: manifest rows {manifest.row_count} != header rows {row_count}"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(row_count, dim).astype(np.float32)
    return EmbeddingStore(manifest, matrix)
