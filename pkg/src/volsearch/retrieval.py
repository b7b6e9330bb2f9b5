"""First-stage retrieval: slice matching, hit-tables, count aggregation,
and region sub-volume queries.

Every query slice contributes exactly one top-1 hit, so hit counts over a
table always sum to the number of slices searched. Volume-level retrieval
picks the database volume with the most hits.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .core import RegionQuery, VolumeRecord
from .errors import (
    EmptyHitTableError,
    EmptyIndexError,
    RegionAbsentError,
    UnknownVolumeError,
)
from .index import FlatIndex, HnswIndex, SearchHit
from .labels import LabelMap, SliceLabelTable
from .store import EmbeddingStore

SCORE_BLOCK = 256


@dataclass
class HitEntry:
    hit_count: int = 0
    score_sum: float = 0.0
    hit_pairs: list[tuple[int, int, float]] = field(default_factory=list)


@dataclass
class HitTable:
    """Per-query tally: which database volumes won top-1 slice matches.

    entries preserves first-hit order, which downstream candidate
    filtering relies on.
    """

    query_id: str
    entries: dict[str, HitEntry] = field(default_factory=dict)

    def add(self, q_slice: int, hit: SearchHit) -> None:
        entry = self.entries.setdefault(hit.volume_id, HitEntry())
        entry.hit_count += 1
        entry.score_sum += hit.score
        entry.hit_pairs.append((q_slice, hit.slice_index, hit.score))

    @property
    def total_hits(self) -> int:
        return sum(e.hit_count for e in self.entries.values())

    def validate(self) -> None:
        for vid, e in self.entries.items():
            if e.hit_count != len(e.hit_pairs):
                raise ValueError(f"{self.query_id}/{vid}: hit_count != len(hit_pairs)")


@dataclass(frozen=True)
class RetrievedVolume:
    volume_id: str
    hit_count: int
    score_sum: float
    hit_slice_indices: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.hit_slice_indices:
            raise ValueError(f"{self.volume_id}: no hit slices")


def slice_search(query_slice: np.ndarray, index: FlatIndex | HnswIndex) -> SearchHit:
    hits = index.search(query_slice, 1)
    if not hits:
        raise EmptyIndexError("no hit returned")
    return hits[0]


def _flat_top1_batch(
    index: FlatIndex, queries: np.ndarray, exclude_volume: str | None
) -> list[SearchHit]:
    """Vectorized top-1 per query row, identical tie handling to
    FlatIndex.search (max score, then lowest (volume_id, slice) rank)."""
    store = index.store
    if store.row_count == 0:
        raise EmptyIndexError("flat index over empty store")
    matrix = store.matrix
    rank = index._row_rank
    masked: np.ndarray | None = None
    if exclude_volume is not None and exclude_volume in store:
        rec = store.volume(exclude_volume)
        masked = np.zeros(store.row_count, dtype=bool)
        masked[rec.embedding_offset : rec.embedding_offset + rec.n_slices] = True
        if masked.all():
            raise EmptyIndexError("every database row excluded")
    out: list[SearchHit] = []
    queries = np.asarray(queries, dtype=np.float32)
    for lo in range(0, queries.shape[0], SCORE_BLOCK):
        block = queries[lo : lo + SCORE_BLOCK]
        scores = block @ matrix.T
        if masked is not None:
            scores[:, masked] = -np.inf
        best = scores.max(axis=1)
        is_best = scores == best[:, None]
        tie_rank = np.where(is_best, rank[None, :], np.iinfo(np.int64).max)
        rows = tie_rank.argmin(axis=1)
        for r, s in zip(rows.tolist(), best.astype(np.float64).tolist()):
            vid, sl = store.locate(int(r))
            out.append(SearchHit(vid, sl, s))
    return out


def _hnsw_top1(index: HnswIndex, query: np.ndarray, exclude_volume: str | None) -> SearchHit:
    if exclude_volume is None or exclude_volume not in index.store:
        return index.search(query, 1)[0]
    hit = index.search(query, 1)[0]
    if hit.volume_id != exclude_volume:
        return hit
    # Widen the beam far enough to see past the excluded volume's rows,
    # then fall back to an exact scan if the graph still only finds them.
    rec = index.store.volume(exclude_volume)
    k = rec.n_slices + 1
    ef = max(index.params.ef_search, k)
    for h in index.search(query, min(k, index.row_count), ef):
        if h.volume_id != exclude_volume:
            return h
    flat = FlatIndex(index.store)
    hits = flat.search(query, 1, exclude_volume=exclude_volume)
    if not hits:
        raise EmptyIndexError("every database row excluded")
    return hits[0]


def build_hit_table(
    query_slices: np.ndarray,
    index: FlatIndex | HnswIndex,
    query_id: str = "query",
    exclude_volume: str | None = None,
    stride: int = 1,
    slice_offset: int = 0,
) -> HitTable:
    """Search each query slice (top-1) and group hits by database volume.

    slice_offset shifts recorded query slice indices so region queries
    report absolute positions within their volume.
    """
    queries = np.asarray(query_slices, dtype=np.float32)
    if queries.ndim != 2 or queries.shape[0] == 0:
        raise ValueError("need at least one query slice")
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    searched = range(0, queries.shape[0], stride)
    table = HitTable(query_id)
    if isinstance(index, FlatIndex):
        hits = _flat_top1_batch(index, queries[::stride], exclude_volume)
        for pos, hit in zip(searched, hits):
            table.add(pos + slice_offset, hit)
    else:
        for pos in searched:
            hit = _hnsw_top1(index, queries[pos], exclude_volume)
            table.add(pos + slice_offset, hit)
    return table


def aggregate_count(table: HitTable) -> list[RetrievedVolume]:
    """Rank hit volumes by (hit_count desc, score_sum desc, volume_id asc)."""
    if not table.entries:
        raise EmptyHitTableError(f"{table.query_id}: empty hit table")
    volumes = [
        RetrievedVolume(
            volume_id=vid,
            hit_count=e.hit_count,
            score_sum=e.score_sum,
            hit_slice_indices=tuple(sorted({db for _, db, _ in e.hit_pairs})),
        )
        for vid, e in table.entries.items()
    ]
    volumes.sort(key=lambda v: (-v.hit_count, -v.score_sum, v.volume_id))
    return volumes


def region_subvolume(
    volume_id: str,
    region: int,
    labels: SliceLabelTable,
    coarse: bool = False,
    label_map: LabelMap | None = None,
) -> RegionQuery:
    """Minimal contiguous slice span of `volume_id` covering `region`.

    Disjoint occurrences collapse to one span (min..max): queries are slice
    ranges, so the smallest range containing every occurrence is contiguous.
    """
    if volume_id not in labels:
        raise UnknownVolumeError(f"volume {volume_id!r} has no label rows")
    if coarse and label_map is None:
        raise ValueError("coarse region queries need a label map")
    present = []
    for sl in labels.volume_slices(volume_id):
        slice_labels = (
            labels.labels_coarse(volume_id, sl, label_map) if coarse else labels.labels(volume_id, sl)
        )
        if region in slice_labels:
            present.append(sl)
    if not present:
        kind = "coarse" if coarse else "fine"
        raise RegionAbsentError(f"{kind} region {region} absent from {volume_id!r}")
    return RegionQuery(volume_id, region, (min(present), max(present)), coarse)


def retrieve_volume(
    query: VolumeRecord | RegionQuery,
    index: FlatIndex | HnswIndex,
    query_store: EmbeddingStore,
    exclude_self: bool = False,
    stride: int = 1,
) -> tuple[RetrievedVolume, HitTable]:
    """Full first-stage pipeline: hit-table then count aggregation.

    `query` names a volume (all slices) or a region (its slice span) in
    `query_store`; the index is over the database store.
    """
    if isinstance(query, RegionQuery):
        vid = query.volume_id
        lo, hi = query.slice_range
        slices = query_store.volume_matrix(vid)[lo : hi + 1]
        offset = lo
        qid = query.query_id
    else:
        vid = query.volume_id
        slices = query_store.volume_matrix(vid)
        offset = 0
        qid = vid
    table = build_hit_table(
        slices,
        index,
        query_id=qid,
        exclude_volume=vid if exclude_self else None,
        stride=stride,
        slice_offset=offset,
    )
    ranked = aggregate_count(table)
    return ranked[0], table


def write_hit_tables(tables: Iterable[HitTable], path: str | Path) -> None:
    """Hit-table CSV: one row per (query, database volume), ranked order."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["query_id", "volume_id", "hit_count", "score_sum"])
        for table in tables:
            for vol in aggregate_count(table):
                writer.writerow(
                    [table.query_id, vol.volume_id, vol.hit_count, f"{vol.score_sum:.6f}"]
                )


def write_hit_pairs(tables: Iterable[HitTable], path: str | Path) -> None:
    """Sidecar CSV of individual slice matches, in query slice order."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["query_id", "volume_id", "q_slice", "db_slice", "score"])
        for table in tables:
            rows = []
            for vid, entry in table.entries.items():
                for q_slice, db_slice, score in entry.hit_pairs:
                    rows.append((q_slice, vid, db_slice, score))
            rows.sort(key=lambda r: (r[0], r[1], r[2]))
            for q_slice, vid, db_slice, score in rows:
                writer.writerow([table.query_id, vid, q_slice, db_slice, f"{score:.6f}"])
