"""End-to-end protocol runs: per-query retrieval, tallying, and exports.

The runner owns the loop over query volumes so the CLI and the tests share
one code path. Per-query work is pure and may fan out over a thread pool;
tallying happens afterwards in query order, so results are independent of
the thread count.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .core import RegionQuery
from .evaluate import (
    ClassCounts,
    EvalReport,
    localization_ratio_count,
    localization_ratio_rerank,
    localized_recall,
    region_recall,
    slicewise_recall,
    volume_recall,
)
from .index import FlatIndex, HnswIndex, HnswParams
from .labels import LabelMap, SliceLabelTable, coarsen
from .rerank import DEFAULT_L, RerankResult, rerank_hit_table
from .retrieval import HitTable, build_hit_table, region_subvolume, retrieve_volume
from .store import EmbeddingStore


@dataclass
class RunResult:
    report: EvalReport
    hit_tables: list[HitTable] = field(default_factory=list)
    rerank_results: list[RerankResult] = field(default_factory=list)
    searched_slices: int = 0


def build_index(
    store: EmbeddingStore, kind: str = "flat", params: HnswParams | None = None
) -> FlatIndex | HnswIndex:
    if kind == "flat":
        return FlatIndex(store)
    if kind == "hnsw":
        return HnswIndex.build(store, params)
    raise ValueError(f"unknown index kind {kind!r}")


def _volume_labels(
    labels: SliceLabelTable, volume_id: str, coarse: bool, label_map: LabelMap | None
) -> frozenset[int]:
    fine = labels.volume_labels(volume_id)
    return coarsen(fine, label_map) if coarse else fine


def _region_queries(
    query_store: EmbeddingStore,
    labels: SliceLabelTable,
    coarse: bool,
    label_map: LabelMap | None,
) -> list[RegionQuery]:
    """One region query per (query volume, label present in it)."""
    out = []
    for vid in query_store.volume_ids():
        for region in sorted(_volume_labels(labels, vid, coarse, label_map)):
            out.append(region_subvolume(vid, region, labels, coarse, label_map))
    return out


def _map_queries(tasks, worker, threads: int):
    if threads <= 1 or len(tasks) <= 1:
        return [worker(t) for t in tasks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, tasks))


def run_protocol(
    protocol: str,
    db_store: EmbeddingStore,
    query_store: EmbeddingStore,
    labels: SliceLabelTable,
    index: FlatIndex | HnswIndex,
    label_map: LabelMap | None = None,
    granularity: str = "fine104",
    use_rerank: bool = False,
    l: int = DEFAULT_L,
    exclude_self: bool = False,
    stride: int = 1,
    threads: int = 1,
) -> RunResult:
    """Run one evaluation protocol over every query volume.

    exclude_self masks the database volume with the query's own id, for
    leave-one-out runs where both splits come from a single store.
    """
    coarse = granularity == "coarse29"
    if coarse and label_map is None:
        raise ValueError("coarse granularity needs a label map")
    if protocol == "slice":
        return _run_slice(
            db_store, query_store, labels, index, label_map, granularity, exclude_self, stride, threads
        )
    if protocol == "volume":
        return _run_volume(
            db_store, query_store, labels, index, label_map, granularity,
            use_rerank, l, exclude_self, stride, threads,
        )
    if protocol in ("region", "localized"):
        return _run_region(
            protocol, db_store, query_store, labels, index, label_map, granularity,
            use_rerank, l, exclude_self, stride, threads,
        )
    raise ValueError(f"unknown protocol {protocol!r}")


def _run_slice(
    db_store, query_store, labels, index, label_map, granularity, exclude_self, stride, threads
) -> RunResult:
    coarse = granularity == "coarse29"

    def work(vid: str) -> HitTable:
        return build_hit_table(
            query_store.volume_matrix(vid),
            index,
            query_id=vid,
            exclude_volume=vid if exclude_self else None,
            stride=stride,
        )

    volume_ids = query_store.volume_ids()
    tables = _map_queries(volume_ids, work, threads)
    counts = ClassCounts()
    searched = 0
    for vid, table in zip(volume_ids, tables):
        searched += table.total_hits
        matches = []
        for db_vid, entry in table.entries.items():
            for q_slice, db_slice, _ in entry.hit_pairs:
                q_labels = (
                    labels.labels_coarse(vid, q_slice, label_map)
                    if coarse
                    else labels.labels(vid, q_slice)
                )
                f_labels = (
                    labels.labels_coarse(db_vid, db_slice, label_map)
                    if coarse
                    else labels.labels(db_vid, db_slice)
                )
                matches.append((q_labels, f_labels))
        slicewise_recall(matches, counts)
    report = EvalReport("slice", granularity, counts)
    return RunResult(report, hit_tables=tables, searched_slices=searched)


def _run_volume(
    db_store, query_store, labels, index, label_map, granularity,
    use_rerank, l, exclude_self, stride, threads,
) -> RunResult:
    coarse = granularity == "coarse29"

    def work(vid: str):
        retrieved, table = retrieve_volume(
            query_store.volume(vid), index, query_store,
            exclude_self=exclude_self, stride=stride,
        )
        rr = None
        if use_rerank:
            rr = rerank_hit_table(query_store.volume_matrix(vid), table, db_store, l)
        return retrieved, table, rr

    volume_ids = query_store.volume_ids()
    results = _map_queries(volume_ids, work, threads)
    counts = ClassCounts()
    tables, reranks = [], []
    searched = 0
    for vid, (retrieved, table, rr) in zip(volume_ids, results):
        searched += table.total_hits
        tables.append(table)
        winner = retrieved.volume_id
        if rr is not None:
            reranks.append(rr)
            winner = rr.winner
        volume_recall(
            _volume_labels(labels, vid, coarse, label_map),
            _volume_labels(labels, winner, coarse, label_map),
            counts,
        )
    report = EvalReport("volume", granularity, counts)
    return RunResult(report, tables, reranks, searched)


def _run_region(
    protocol, db_store, query_store, labels, index, label_map, granularity,
    use_rerank, l, exclude_self, stride, threads,
) -> RunResult:
    coarse = granularity == "coarse29"
    queries = _region_queries(query_store, labels, coarse, label_map)

    def work(query: RegionQuery):
        retrieved, table = retrieve_volume(
            query, index, query_store, exclude_self=exclude_self, stride=stride
        )
        rr = None
        if use_rerank:
            lo, hi = query.slice_range
            q_matrix = query_store.volume_matrix(query.volume_id)[lo : hi + 1]
            rr = rerank_hit_table(q_matrix, table, db_store, l)
        return retrieved, table, rr

    results = _map_queries(queries, work, threads)
    counts = ClassCounts()
    report = EvalReport(protocol, granularity, counts)
    tables, reranks = [], []
    searched = 0
    for query, (retrieved, table, rr) in zip(queries, results):
        searched += table.total_hits
        tables.append(table)
        region = query.region
        winner_id = retrieved.volume_id
        if rr is not None:
            reranks.append(rr)
            winner_id = rr.winner
        if protocol == "region":
            hit = region_recall(region, _volume_labels(labels, winner_id, coarse, label_map))
        else:
            if rr is not None:
                slice_set = [sl for sl, _ in rr.top_l_slices]
                hit = localized_recall(region, winner_id, slice_set, labels, coarse, label_map)
                report.add_lr(region, localization_ratio_rerank(rr, region, labels, coarse, label_map))
            else:
                hit = localized_recall(
                    region, winner_id, retrieved.hit_slice_indices, labels, coarse, label_map
                )
                report.add_lr(
                    region, localization_ratio_count(retrieved, region, labels, coarse, label_map)
                )
        counts.add(region, hit)
    return RunResult(report, tables, reranks, searched)
