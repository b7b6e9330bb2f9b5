"""Exact and approximate top-k inner-product search over slice embeddings.

Both index kinds operate on an EmbeddingStore whose rows are unit vectors,
so cosine similarity is a plain dot product and the graph index can use
distance = 1 - dot.
"""
from __future__ import annotations

import heapq
import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import NORM_TOLERANCE
from .errors import (
    BadMagicError,
    ChecksumMismatchError,
    EmptyIndexError,
    InvalidParamsError,
    NotNormalizedError,
    VersionUnsupportedError,
)
from .store import EmbeddingStore, StoreManifest, fnv1a64
from .core import VolumeRecord

INDEX_MAGIC = b"VGI1"
INDEX_FORMAT_VERSION = 1


@dataclass(frozen=True)
class SearchHit:
    """One retrieved database slice."""

    volume_id: str
    slice_index: int
    score: float


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 128
    seed: int = 0

    def __post_init__(self) -> None:
        if self.m < 2:
            raise InvalidParamsError(f"M must be >= 2, got {self.m}")
        if self.ef_construction < self.m:
            raise InvalidParamsError(
                f"ef_construction must be >= M, got {self.ef_construction} < {self.m}"
            )
        if self.ef_search < 1:
            raise InvalidParamsError(f"ef_search must be >= 1, got {self.ef_search}")

    @property
    def m0(self) -> int:
        return 2 * self.m

    @property
    def level_multiplier(self) -> float:
        return 1.0 / math.log(self.m)


def _as_store(rows: EmbeddingStore | np.ndarray) -> EmbeddingStore:
    if isinstance(rows, EmbeddingStore):
        return rows
    matrix = np.ascontiguousarray(rows, dtype=np.float32)
    manifest = StoreManifest.build(
        matrix.shape[1], [VolumeRecord("rows", matrix.shape[0], 0, "database")]
    )
    return EmbeddingStore(manifest, matrix)


def _check_rows_normalized(matrix: np.ndarray) -> None:
    if matrix.shape[0] == 0:
        return
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    worst = int(np.argmax(np.abs(norms - 1.0)))
    if abs(norms[worst] - 1.0) > NORM_TOLERANCE:
        raise NotNormalizedError(f"row {worst} has norm {norms[worst]:.6f}")


class FlatIndex:
    """Exact scan: compares the query against every stored row.

    Ties in score are broken by (volume_id, slice_index) ascending, which
    makes results independent of the volume order inside the store file.
    """

    def __init__(self, store: EmbeddingStore):
        self.store = store
        # Rank of each payload row under (volume_id asc, slice_index asc).
        order = sorted(range(len(store.manifest.volumes)),
                       key=lambda i: store.manifest.volumes[i].volume_id)
        rank = np.empty(store.row_count, dtype=np.int64)
        pos = 0
        for i in order:
            rec = store.manifest.volumes[i]
            rank[rec.embedding_offset : rec.embedding_offset + rec.n_slices] = np.arange(
                pos, pos + rec.n_slices
            )
            pos += rec.n_slices
        self._row_rank = rank

    @property
    def row_count(self) -> int:
        return self.store.row_count

    def _top_rows(self, scores: np.ndarray, k: int) -> list[int]:
        n = scores.shape[0]
        k = min(k, int(np.count_nonzero(scores > -np.inf)))
        if k <= 0:
            return []
        if k < n:
            # Everything at or above the k-th largest score competes, so
            # boundary ties resolve by row rank rather than partition order.
            kth = np.partition(scores, n - k)[n - k]
            cand = np.flatnonzero(scores >= kth)
        else:
            cand = np.arange(n)
        order = np.lexsort((self._row_rank[cand], -scores[cand].astype(np.float64)))
        return cand[order[:k]].tolist()

    def search(self, query: np.ndarray, k: int, exclude_volume: str | None = None) -> list[SearchHit]:
        if self.row_count == 0:
            raise EmptyIndexError("flat index over empty store")
        if k < 1:
            raise InvalidParamsError(f"k must be >= 1, got {k}")
        scores = self.store.matrix @ np.asarray(query, dtype=np.float32)
        scores = scores.astype(np.float64)
        if exclude_volume is not None and exclude_volume in self.store:
            rec = self.store.volume(exclude_volume)
            scores[rec.embedding_offset : rec.embedding_offset + rec.n_slices] = -np.inf
        rows = self._top_rows(scores, k)
        hits = []
        for r in rows:
            vid, sl = self.store.locate(r)
            hits.append(SearchHit(vid, sl, float(scores[r])))
        return hits

    def search_batch(
        self, queries: np.ndarray, k: int, exclude_volume: str | None = None
    ) -> list[list[SearchHit]]:
        return [self.search(q, k, exclude_volume) for q in np.asarray(queries, dtype=np.float32)]


def flat_search(index: FlatIndex, query: np.ndarray, k: int) -> list[SearchHit]:
    return index.search(query, k)


class HnswIndex:
    """Layered small-world graph for approximate inner-product search.

    Node ids are payload row indices. Every node lives on layer 0; a node's
    top layer is sampled as floor(-ln(U) * mL) from a seeded generator, so
    builds are reproducible. Layer 0 allows 2*M neighbors, upper layers M.
    """

    def __init__(
        self,
        store: EmbeddingStore,
        params: HnswParams,
        levels: np.ndarray,
        adjacency: list[dict[int, list[int]]],
        entry_point: int,
    ):
        self.store = store
        self.params = params
        self.levels = levels
        self.adjacency = adjacency
        self.entry_point = entry_point

    @property
    def max_level(self) -> int:
        return len(self.adjacency) - 1

    @property
    def row_count(self) -> int:
        return self.store.row_count

    @classmethod
    def build(cls, rows: EmbeddingStore | np.ndarray, params: HnswParams | None = None) -> "HnswIndex":
        params = params or HnswParams()
        store = _as_store(rows)
        matrix = store.matrix
        _check_rows_normalized(matrix)
        n = matrix.shape[0]
        rng = np.random.default_rng(params.seed)
        ml = params.level_multiplier
        levels = np.empty(n, dtype=np.int64)
        for i in range(n):
            u = 1.0 - rng.random()  # in (0, 1], keeps log finite
            levels[i] = int(math.floor(-math.log(u) * ml))
        adjacency: list[dict[int, list[int]]] = [dict()]
        entry = -1
        max_level = -1
        for i in range(n):
            level = int(levels[i])
            while len(adjacency) <= level:
                adjacency.append(dict())
            for lc in range(level + 1):
                adjacency[lc][i] = []
            if entry < 0:
                entry, max_level = i, level
                continue
            q = matrix[i]
            ep, ep_dist = _greedy_descend(matrix, adjacency, q, entry, max_level, level + 1)
            seeds = [(ep_dist, ep)]
            for lc in range(min(level, max_level), -1, -1):
                found = _search_layer(matrix, adjacency[lc], q, seeds, params.ef_construction)
                cap = params.m0 if lc == 0 else params.m
                chosen = [node for _, node in found[: params.m]]
                adjacency[lc][i] = list(chosen)
                for m_node in chosen:
                    peer = adjacency[lc][m_node]
                    peer.append(i)
                    if len(peer) > cap:
                        dists = 1.0 - matrix[peer] @ matrix[m_node]
                        keep = sorted(zip(dists.tolist(), peer))[:cap]
                        adjacency[lc][m_node] = [node for _, node in keep]
                seeds = found
            if level > max_level:
                entry, max_level = i, level
        return cls(store, params, levels, adjacency, entry)

    def search(
        self,
        query: np.ndarray,
        k: int,
        ef_search: int | None = None,
    ) -> list[SearchHit]:
        rows = self.search_rows(query, k, ef_search)
        out = []
        for dist, node in rows:
            vid, sl = self.store.locate(node)
            out.append(SearchHit(vid, sl, 1.0 - dist))
        return out

    def search_rows(
        self, query: np.ndarray, k: int, ef_search: int | None = None
    ) -> list[tuple[float, int]]:
        """Top-k as (distance, row) pairs, nearest first."""
        if self.row_count == 0:
            raise EmptyIndexError("search on empty graph")
        ef = self.params.ef_search if ef_search is None else ef_search
        if ef < k:
            raise InvalidParamsError(f"ef_search must be >= k, got {ef} < {k}")
        q = np.asarray(query, dtype=np.float32)
        matrix = self.store.matrix
        ep, ep_dist = _greedy_descend(matrix, self.adjacency, q, self.entry_point, self.max_level, 1)
        found = _search_layer(matrix, self.adjacency[0], q, [(ep_dist, ep)], ef)
        return found[:k]

    def search_batch(
        self, queries: np.ndarray, k: int, ef_search: int | None = None
    ) -> list[list[SearchHit]]:
        return [self.search(q, k, ef_search) for q in np.asarray(queries, dtype=np.float32)]

    def save(self, path: str | Path) -> None:
        """Write the graph as VGI1: header, level array, one u32 CSR per layer.

        The header records build params, the RNG seed, and a checksum of the
        store payload, binding the file to the exact store it was built on.
        """
        n = self.row_count
        store_sum = fnv1a64(np.ascontiguousarray(self.store.matrix, dtype="<f4").tobytes())
        blob = bytearray()
        blob += INDEX_MAGIC
        blob += struct.pack(
            "<IIIIQIQIq",
            INDEX_FORMAT_VERSION,
            self.params.m,
            self.params.ef_construction,
            self.params.ef_search,
            self.params.seed,
            self.store.dim,
            n,
            len(self.adjacency),
            self.entry_point,
        )
        blob += struct.pack("<Q", store_sum)
        blob += np.asarray(self.levels, dtype="<u4").tobytes()
        for layer in self.adjacency:
            indptr = np.zeros(n + 1, dtype="<u4")
            chunks = []
            total = 0
            for node in range(n):
                nbrs = layer.get(node)
                if nbrs:
                    chunks.append(np.asarray(nbrs, dtype="<u4"))
                    total += len(nbrs)
                indptr[node + 1] = total
            blob += indptr.tobytes()
            if chunks:
                blob += np.concatenate(chunks).tobytes()
        with open(path, "wb") as f:
            f.write(bytes(blob))

    @classmethod
    def load(cls, path: str | Path, store: EmbeddingStore) -> "HnswIndex":
        with open(path, "rb") as f:
            data = f.read()
        if len(data) < 4 or data[:4] != INDEX_MAGIC:
            raise BadMagicError(f"{path}: not a VGI1 index")
        head = struct.calcsize("<IIIIQIQIq")
        version, m, efc, efs, seed, dim, n, n_layers, entry = struct.unpack(
            "<IIIIQIQIq", data[4 : 4 + head]
        )
        if version != INDEX_FORMAT_VERSION:
            raise VersionUnsupportedError(f"{path}: index format version {version} unsupported")
        pos = 4 + head
        (store_sum,) = struct.unpack("<Q", data[pos : pos + 8])
        pos += 8
        if dim != store.dim or n != store.row_count:
            raise ChecksumMismatchError(
                f"{path}: index built for {n} rows dim {dim}, store has "
                f"{store.row_count} rows dim {store.dim}"
            )
        actual = fnv1a64(np.ascontiguousarray(store.matrix, dtype="<f4").tobytes())
        if actual != store_sum:
            raise ChecksumMismatchError(f"{path}: index was built on a different store")
        levels = np.frombuffer(data[pos : pos + 4 * n], dtype="<u4").astype(np.int64)
        pos += 4 * n
        adjacency: list[dict[int, list[int]]] = []
        for layer_idx in range(n_layers):
            indptr = np.frombuffer(data[pos : pos + 4 * (n + 1)], dtype="<u4")
            pos += 4 * (n + 1)
            total = int(indptr[-1])
            indices = np.frombuffer(data[pos : pos + 4 * total], dtype="<u4")
            pos += 4 * total
            layer: dict[int, list[int]] = {}
            for node in range(n):
                if levels[node] >= layer_idx:
                    layer[node] = indices[indptr[node] : indptr[node + 1]].astype(int).tolist()
            adjacency.append(layer)
        if pos != len(data):
            raise ChecksumMismatchError(f"{path}: {len(data) - pos} trailing bytes")
        params = HnswParams(m=m, ef_construction=efc, ef_search=efs, seed=seed)
        return cls(store, params, levels, adjacency, entry)


def _greedy_descend(
    matrix: np.ndarray,
    adjacency: list[dict[int, list[int]]],
    q: np.ndarray,
    entry: int,
    from_level: int,
    to_level: int,
) -> tuple[int, float]:
    """Walk down layers from_level..to_level, hill-climbing to the local
    nearest node on each. Returns the final node and its distance."""
    cur = entry
    cur_dist = float(1.0 - matrix[cur] @ q)
    for lc in range(from_level, to_level - 1, -1):
        improved = True
        while improved:
            improved = False
            nbrs = adjacency[lc].get(cur)
            if not nbrs:
                continue
            dists = 1.0 - matrix[nbrs] @ q
            j = int(np.argmin(dists))
            best_dist, best_node = float(dists[j]), nbrs[j]
            # argmin takes the first minimum; prefer the lower node id among
            # exact ties so runs are insensitive to adjacency list order.
            for jj in np.flatnonzero(dists == dists[j]):
                if nbrs[int(jj)] < best_node:
                    best_node = nbrs[int(jj)]
            if (best_dist, best_node) < (cur_dist, cur):
                cur, cur_dist = best_node, best_dist
                improved = True
    return cur, cur_dist


def _search_layer(
    matrix: np.ndarray,
    layer: dict[int, list[int]],
    q: np.ndarray,
    seeds: list[tuple[float, int]],
    ef: int,
) -> list[tuple[float, int]]:
    """Beam search of width ef on one layer.

    Returns up to ef (distance, node) pairs sorted ascending. Heaps are
    keyed (distance, node id) so expansion order, and therefore the result,
    is deterministic.
    """
    visited = {node for _, node in seeds}
    candidates = list(seeds)
    heapq.heapify(candidates)
    best = [(-d, node) for d, node in seeds]
    heapq.heapify(best)
    while len(best) > ef:
        heapq.heappop(best)
    while candidates:
        dist, node = heapq.heappop(candidates)
        if len(best) >= ef and dist > -best[0][0]:
            break
        fresh = [m for m in layer.get(node, ()) if m not in visited]
        if not fresh:
            continue
        visited.update(fresh)
        dists = 1.0 - matrix[fresh] @ q
        for m_node, dm in zip(fresh, dists.tolist()):
            if len(best) < ef or dm < -best[0][0]:
                heapq.heappush(candidates, (dm, m_node))
                heapq.heappush(best, (-dm, m_node))
                if len(best) > ef:
                    heapq.heappop(best)
    return sorted(((-nd, node) for nd, node in best))


def hnsw_build(rows: EmbeddingStore | np.ndarray, params: HnswParams | None = None) -> HnswIndex:
    return HnswIndex.build(rows, params)


def hnsw_search(
    index: HnswIndex, query: np.ndarray, k: int, ef_search: int | None = None
) -> list[SearchHit]:
    return index.search(query, k, ef_search)
