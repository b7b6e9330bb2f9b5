"""Late-interaction re-ranking of first-stage candidates.

A candidate volume is scored against the whole query by the sum, over
query slices, of the best similarity any candidate slice achieves (RS).
The winner's column-wise maxima (m_SIM) then localize the query content:
its top-L slice indices are the suggested region locations.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptyHitTableError,
    EmptyMatrixError,
    InvalidParamsError,
)
from .retrieval import HitTable
from .store import EmbeddingStore

DEFAULT_L = 15
MATRIX_BLOCK = 256


@dataclass(frozen=True)
class SimilarityMatrix:
    query_volume_id: str
    candidate_volume_id: str
    matrix: np.ndarray  # n query slices x m candidate slices, float32

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape


@dataclass(frozen=True)
class RerankResult:
    query_id: str
    ranked: tuple[tuple[str, float], ...]  # (volume_id, rs_score), best first
    winner: str
    top_l_slices: tuple[tuple[int, float], ...]  # (db slice index, m_sim)


def filter_candidates(table: HitTable) -> list[str]:
    """Unique hit volumes in first-hit order."""
    if not table.entries:
        raise EmptyHitTableError(f"{table.query_id}: empty hit table")
    return list(table.entries.keys())


def similarity_matrix(
    query: np.ndarray,
    cand: np.ndarray,
    query_volume_id: str = "query",
    candidate_volume_id: str = "candidate",
    block: int = MATRIX_BLOCK,
) -> SimilarityMatrix:
    """All-pairs cosine of query rows vs candidate rows.

    Computed in row blocks with double-precision accumulation; entries are
    stored single-precision, so blocked and unblocked results are
    bit-identical.
    """
    query = np.asarray(query)
    cand = np.asarray(cand)
    if query.ndim != 2 or cand.ndim != 2:
        raise DimensionMismatchError("similarity_matrix needs 2-D inputs")
    if query.shape[1] != cand.shape[1]:
        raise DimensionMismatchError(
            f"dimension mismatch: query {query.shape[1]} vs candidate {cand.shape[1]}"
        )
    n = query.shape[0]
    out = np.empty((n, cand.shape[0]), dtype=np.float32)
    cand64_t = cand.astype(np.float64).T
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        out[lo:hi] = (query[lo:hi].astype(np.float64) @ cand64_t).astype(np.float32)
    return SimilarityMatrix(query_volume_id, candidate_volume_id, out)


def rs_score(sim: SimilarityMatrix) -> float:
    """Sum over query slices of the best candidate-slice similarity."""
    matrix = sim.matrix
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        raise EmptyMatrixError(
            f"{sim.query_volume_id} vs {sim.candidate_volume_id}: empty similarity matrix"
        )
    return float(np.sum(matrix.max(axis=1), dtype=np.float64))


def m_sim(sim: SimilarityMatrix) -> np.ndarray:
    """Per-candidate-slice best similarity to any query slice (column max)."""
    matrix = sim.matrix
    if matrix.shape[0] == 0 or matrix.shape[1] == 0:
        raise EmptyMatrixError(
            f"{sim.query_volume_id} vs {sim.candidate_volume_id}: empty similarity matrix"
        )
    return matrix.max(axis=0)


def top_l_slices(msim: np.ndarray, l: int = DEFAULT_L) -> list[tuple[int, float]]:
    """Indices of the l largest m_SIM values, value desc, ties by index asc.

    l is clamped to the vector length.
    """
    if l < 1:
        raise InvalidParamsError(f"L must be >= 1, got {l}")
    msim = np.asarray(msim, dtype=np.float64)
    order = np.lexsort((np.arange(msim.shape[0]), -msim))
    return [(int(j), float(msim[j])) for j in order[: min(l, msim.shape[0])]]


def rerank(
    query: np.ndarray,
    candidates: Sequence[str],
    store: EmbeddingStore,
    query_id: str = "query",
    hit_counts: dict[str, int] | None = None,
    l: int = DEFAULT_L,
    block: int = MATRIX_BLOCK,
) -> RerankResult:
    """Score each candidate volume against the query slices and pick the
    winner by RS, ties broken by first-stage hit count then volume id.

    Returns the ranked list plus the winner's top-L localization slices.
    """
    if not candidates:
        raise EmptyHitTableError(f"{query_id}: no candidates to rerank")
    query = np.asarray(query, dtype=np.float32)
    counts = hit_counts or {}
    scored: list[tuple[str, float]] = []
    winner_sim: SimilarityMatrix | None = None
    best_key: tuple[float, int, str] | None = None
    for vid in candidates:
        sim = similarity_matrix(query, store.volume_matrix(vid), query_id, vid, block)
        rs = rs_score(sim)
        scored.append((vid, rs))
        key = (-rs, -counts.get(vid, 0), vid)
        if best_key is None or key < best_key:
            best_key, winner_sim = key, sim
    scored.sort(key=lambda t: (-t[1], -counts.get(t[0], 0), t[0]))
    assert winner_sim is not None
    winner = winner_sim.candidate_volume_id
    top = top_l_slices(m_sim(winner_sim), l)
    return RerankResult(query_id, tuple(scored), winner, tuple(top))


def rerank_hit_table(
    query: np.ndarray,
    table: HitTable,
    store: EmbeddingStore,
    l: int = DEFAULT_L,
) -> RerankResult:
    """Convenience wrapper: candidates and tiebreak counts from a hit table."""
    candidates = filter_candidates(table)
    counts = {vid: e.hit_count for vid, e in table.entries.items()}
    return rerank(query, candidates, store, table.query_id, counts, l)


def write_rerank_report(results: Iterable[RerankResult], path: str | Path) -> None:
    """Ranked-candidate CSV: one row per (query, rank)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["query_id", "rank", "volume_id", "rs_score"])
        for res in results:
            for rank, (vid, rs) in enumerate(res.ranked, start=1):
                writer.writerow([res.query_id, rank, vid, f"{rs:.6f}"])


def write_localization(results: Iterable[RerankResult], path: str | Path) -> None:
    """Winner localization CSV: the top-L slices and their m_SIM values."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["query_id", "volume_id", "slice_index", "msim"])
        for res in results:
            for slice_index, value in res.top_l_slices:
                writer.writerow([res.query_id, res.winner, slice_index, f"{value:.6f}"])
