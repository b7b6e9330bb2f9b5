"""Deterministic synthetic corpora for exercising every retrieval protocol.

Each database volume gets a distinct label signature (a k-subset of the
label alphabet) laid out as contiguous organ spans along the slice axis:
the first signature label covers the left flank plus the core, the second
the core plus the right flank, and any remaining labels the core only. The
core is the central >= core_fraction of slices, so a majority of any
query's top-1 hits land on the one database volume sharing its full
signature. Query volumes are structural clones of database templates with
independent noise, which keeps all four protocols exactly solvable at
sigma = 0 and solvable with margin at small sigma.

Slice embeddings are normalize(sum of label prototypes + N(0, sigma^2 I))
with orthonormal prototypes, so two slices agree exactly only when their
label sets agree.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .core import VolumeRecord, normalize
from .errors import InvalidSpecError
from .labels import SliceLabelTable
from .store import EmbeddingStore, StoreManifest

_ENUMERATION_CAP = 200_000


@dataclass(frozen=True)
class SynthSpec:
    n_volumes: int = 40
    n_labels: int = 20
    slices_range: tuple[int, int] = (24, 48)
    signature_size: int = 3
    dim: int = 32
    core_fraction: float = 0.6
    noise_sigma: float = 0.05
    n_queries: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.n_volumes < 1:
            raise InvalidSpecError("n_volumes must be >= 1")
        if not 1 <= self.signature_size <= self.n_labels:
            raise InvalidSpecError(
                f"signature_size must be in 1..{self.n_labels}, got {self.signature_size}"
            )
        if self.dim < self.n_labels:
            raise InvalidSpecError(
                f"dim must be >= n_labels for orthonormal prototypes, got {self.dim} < {self.n_labels}"
            )
        lo, hi = self.slices_range
        if lo > hi or lo < 1:
            raise InvalidSpecError(f"bad slices_range {self.slices_range}")
        if self.signature_size >= 2 and lo < 5:
            raise InvalidSpecError("slices_range minimum must be >= 5 for multi-label signatures")
        if not 0.0 < self.core_fraction <= 1.0:
            raise InvalidSpecError(f"core_fraction must be in (0,1], got {self.core_fraction}")
        if self.noise_sigma < 0:
            raise InvalidSpecError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if math.comb(self.n_labels, self.signature_size) < self.n_volumes:
            raise InvalidSpecError(
                f"cannot draw {self.n_volumes} distinct signatures from "
                f"C({self.n_labels},{self.signature_size})"
            )
        if self.n_queries is not None and not 1 <= self.n_queries <= self.n_volumes:
            raise InvalidSpecError(f"n_queries must be in 1..{self.n_volumes}")

    @property
    def query_count(self) -> int:
        return self.n_volumes if self.n_queries is None else self.n_queries


def _prototypes(rng: np.random.Generator, dim: int, n_labels: int) -> np.ndarray:
    """Orthonormal label prototypes (rows), pairwise angle 90 degrees."""
    basis, _ = np.linalg.qr(rng.standard_normal((dim, n_labels)))
    return basis.T.copy()


def _signatures(rng: np.random.Generator, spec: SynthSpec) -> list[tuple[int, ...]]:
    total = math.comb(spec.n_labels, spec.signature_size)
    if total <= _ENUMERATION_CAP:
        combos = list(itertools.combinations(range(spec.n_labels), spec.signature_size))
        picks = rng.permutation(total)[: spec.n_volumes]
        return [combos[i] for i in picks]
    seen: set[tuple[int, ...]] = set()
    out: list[tuple[int, ...]] = []
    while len(out) < spec.n_volumes:
        sig = tuple(sorted(rng.choice(spec.n_labels, spec.signature_size, replace=False).tolist()))
        if sig not in seen:
            seen.add(sig)
            out.append(sig)
    return out


def _spans(signature: tuple[int, ...], n_slices: int, core_fraction: float) -> dict[int, tuple[int, int]]:
    """Contiguous slice interval per signature label; union covers every
    slice, and all labels co-occur on the central core."""
    if len(signature) == 1:
        return {signature[0]: (0, n_slices - 1)}
    flank = int(math.floor(n_slices * (1.0 - core_fraction) / 2.0))
    flank = max(1, min(flank, (n_slices - 1) // 2))
    core_lo, core_hi = flank, n_slices - 1 - flank
    spans = {signature[0]: (0, core_hi), signature[1]: (core_lo, n_slices - 1)}
    for label in signature[2:]:
        spans[label] = (core_lo, core_hi)
    return spans


def _slice_sets(spans: dict[int, tuple[int, int]], n_slices: int) -> list[frozenset[int]]:
    sets = []
    for i in range(n_slices):
        sets.append(frozenset(l for l, (lo, hi) in spans.items() if lo <= i <= hi))
    return sets


def generate(spec: SynthSpec) -> tuple[EmbeddingStore, EmbeddingStore, SliceLabelTable]:
    """Build the (database store, query store, slice labels) triple.

    All randomness flows from one generator seeded with spec.seed, in a
    fixed order, so equal specs produce byte-identical stores.
    """
    rng = np.random.default_rng(spec.seed)
    protos = _prototypes(rng, spec.dim, spec.n_labels)
    signatures = _signatures(rng, spec)
    lo, hi = spec.slices_range
    slice_counts = rng.integers(lo, hi + 1, size=spec.n_volumes)

    label_rows: dict[tuple[str, int], frozenset[int]] = {}
    volume_sets: list[list[frozenset[int]]] = []
    db_records: list[VolumeRecord] = []
    offset = 0
    for v in range(spec.n_volumes):
        n = int(slice_counts[v])
        sets = _slice_sets(_spans(signatures[v], n, spec.core_fraction), n)
        volume_sets.append(sets)
        vid = f"db_{v:03d}"
        db_records.append(VolumeRecord(vid, n, offset, "database"))
        offset += n
        for i, s in enumerate(sets):
            label_rows[(vid, i)] = s

    def _embed(sets: list[frozenset[int]]) -> np.ndarray:
        rows = np.empty((len(sets), spec.dim), dtype=np.float32)
        for i, s in enumerate(sets):
            vec = protos[sorted(s)].sum(axis=0)
            if spec.noise_sigma > 0:
                vec = vec + spec.noise_sigma * rng.standard_normal(spec.dim)
            rows[i] = normalize(vec)
        return rows

    db_payload = np.concatenate([_embed(volume_sets[v]) for v in range(spec.n_volumes)])
    db_store = EmbeddingStore(StoreManifest.build(spec.dim, db_records), db_payload)

    query_records: list[VolumeRecord] = []
    query_blocks: list[np.ndarray] = []
    offset = 0
    for v in range(spec.query_count):
        vid = f"q_{v:03d}"
        sets = volume_sets[v]
        query_records.append(VolumeRecord(vid, len(sets), offset, "query"))
        offset += len(sets)
        query_blocks.append(_embed(sets))
        for i, s in enumerate(sets):
            label_rows[(vid, i)] = s
    query_store = EmbeddingStore(
        StoreManifest.build(spec.dim, query_records), np.concatenate(query_blocks)
    )
    return db_store, query_store, SliceLabelTable(label_rows)


def save_spec(spec: SynthSpec, path: str | Path) -> None:
    doc = asdict(spec)
    doc["slices_range"] = list(spec.slices_range)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_spec(path: str | Path) -> SynthSpec:
    with open(path, encoding="utf-8") as f:
        doc = json.load(f)
    doc["slices_range"] = tuple(doc["slices_range"])
    return SynthSpec(**doc)
