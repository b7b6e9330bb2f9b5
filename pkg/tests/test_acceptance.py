"""Acceptance suite: one test per release criterion, each printing a
single PASS/FAIL line. Run with -s (or read failure output) to see them.
"""
import struct
import time

import numpy as np
import pytest

from volsearch import (
    ChecksumMismatchError,
    EmbeddingStore,
    FlatIndex,
    HitTable,
    HnswIndex,
    HnswParams,
    RetrievedVolume,
    SearchHit,
    StoreManifest,
    SynthSpec,
    VolumeRecord,
    aggregate_count,
    build_index,
    generate,
    localization_ratio_count,
    read_store,
    rerank,
    rs_score,
    run_protocol,
    save_slice_labels,
    similarity_matrix,
    write_store,
)
from volsearch.cli import main as cli_main

from conftest import random_store


def check(ok: bool, label: str, detail: str = "") -> None:
    suffix = f" ({detail})" if detail else ""
    print(f"[{'PASS' if ok else 'FAIL'}] {label}{suffix}")
    assert ok, f"{label}{suffix}"


def test_criterion_1_localization_ratio_arithmetic_anchor():
    from volsearch import SliceLabelTable

    rows = {("vol", s): ([7] if s < 12 else []) for s in range(48)}
    labels = SliceLabelTable(rows)
    retrieved = RetrievedVolume("vol", 48, 48.0, tuple(range(48)))
    lr = localization_ratio_count(retrieved, 7, labels)
    check(lr == 0.25, "C1 localization ratio 12/48", f"got {lr}")


def test_criterion_2_count_aggregation_anchor(rng):
    hits = [("A", i) for i in range(48)] + [("B", i) for i in range(21)] + [("C", i) for i in range(4)]
    rankings = []
    for trial in range(6):
        order = rng.permutation(len(hits))
        table = HitTable("q")
        for q_slice, pos in enumerate(order):
            vid, db_slice = hits[pos]
            table.add(q_slice, SearchHit(vid, db_slice, 0.9))
        rankings.append([v.volume_id for v in aggregate_count(table)])
    first_ok = all(r[0] == "A" for r in rankings)
    stable = all(r == rankings[0] for r in rankings)
    check(
        first_ok and stable,
        "C2 count aggregation {A:48,B:21,C:4}",
        f"rank-1 {rankings[0][0]}, permutation-stable {stable}",
    )


def test_criterion_3_hnsw_recall_vs_flat():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    agree = 0
    total = 0
    n_stores = 20
    for trial in range(n_stores):
        rows = 2000 if trial == 0 else int(rng.integers(200, 800))
        dim = int(rng.integers(16, 49))
        n_volumes = int(rng.integers(2, 7))
        cuts = np.sort(rng.choice(np.arange(1, rows), size=n_volumes - 1, replace=False))
        sizes = np.diff(np.concatenate([[0], cuts, [rows]]))
        store = random_store(
            rng, [(f"v{i}", int(n)) for i, n in enumerate(sizes)], dim
        )
        flat = FlatIndex(store)
        hnsw = HnswIndex.build(store, HnswParams())
        queries = rng.standard_normal((25, dim))
        queries /= np.linalg.norm(queries, axis=1, keepdims=True)
        queries = queries.astype(np.float32)
        for q in queries:
            best_flat = flat.search(q, k=1)[0]
            best_hnsw = hnsw.search(q, k=1)[0]
            same_row = (best_flat.volume_id, best_flat.slice_index) == (
                best_hnsw.volume_id, best_hnsw.slice_index
            )
            if same_row or abs(best_flat.score - best_hnsw.score) <= 1e-5:
                agree += 1
            total += 1
    elapsed = time.perf_counter() - t0
    recall = agree / total
    check(
        recall >= 0.95 and elapsed < 60.0,
        "C3 hnsw recall@1 vs flat on 20 random stores",
        f"recall {recall:.4f} over {total} queries, {elapsed:.1f}s",
    )


def test_criterion_4_rs_brute_force_equivalence():
    rng = np.random.default_rng(7)
    worst = 0.0
    worst_self = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 51))
        m = int(rng.integers(1, 51))
        dim = int(rng.integers(4, 24))
        q = rng.standard_normal((n, dim))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        c = rng.standard_normal((m, dim))
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        q32, c32 = q.astype(np.float32), c.astype(np.float32)

        oracle = 0.0
        for i in range(n):
            best = -2.0
            for j in range(m):
                s = 0.0
                for d in range(dim):
                    s += float(q32[i, d]) * float(c32[j, d])
                if s > best:
                    best = s
            oracle += best
        got = rs_score(similarity_matrix(q32, c32))
        worst = max(worst, abs(got - oracle))

        self_rs = rs_score(similarity_matrix(q32, q32))
        worst_self = max(worst_self, abs(self_rs - n) / n)
    check(
        worst <= 1e-5 and worst_self <= 1e-6,
        "C4 RS vs scalar triple-loop oracle (100 pairs)",
        f"max |diff| {worst:.2e}, max self-RS rel err {worst_self:.2e}",
    )


def _per_class(report):
    return {label: report.counts.recall(label) for label in report.counts.labels()}


def test_criterion_5_pipeline_soundness_on_synthetic_data():
    # sigma = 0: queries are exact twins, every protocol must be perfect
    db0, q0, labels0 = generate(SynthSpec(noise_sigma=0.0, seed=42))
    index0 = build_index(db0, "flat")
    perfect = True
    details = []
    for protocol in ("slice", "volume", "region", "localized"):
        result = run_protocol(protocol, db0, q0, labels0, index0)
        recalls = _per_class(result.report)
        low = min(recalls.values())
        details.append(f"{protocol} {low:.3f}")
        perfect = perfect and low == 1.0

    # sigma = 0.05: region still near-perfect, localized never beats region
    db1, q1, labels1 = generate(SynthSpec(noise_sigma=0.05, seed=42))
    index1 = build_index(db1, "flat")
    region = _per_class(run_protocol("region", db1, q1, labels1, index1).report)
    localized = _per_class(run_protocol("localized", db1, q1, labels1, index1).report)
    region_avg = float(np.mean(list(region.values())))
    implication = all(localized[label] <= region[label] for label in region)
    check(
        perfect and region_avg >= 0.95 and implication,
        "C5 synthetic pipeline soundness",
        f"sigma0 min recalls [{', '.join(details)}]; sigma .05 region avg "
        f"{region_avg:.3f}, localized<=region {implication}",
    )


def test_criterion_6_rerank_selects_duplicate():
    rng = np.random.default_rng(99)
    wins = 0
    trials = 100
    for _ in range(trials):
        dim = int(rng.integers(8, 25))
        n = int(rng.integers(3, 16))
        q = rng.standard_normal((n, dim))
        q /= np.linalg.norm(q, axis=1, keepdims=True)
        q = q.astype(np.float32)

        n_dups = int(rng.integers(1, 3))
        n_others = int(rng.integers(2, 6))
        records, blocks = [], []
        offset = 0
        dup_ids = []
        for i in range(n_dups):
            vid = f"dup{i}"
            dup_ids.append(vid)
            records.append(VolumeRecord(vid, n, offset, "database"))
            blocks.append(q)
            offset += n
        for i in range(n_others):
            m = int(rng.integers(2, 20))
            block = rng.standard_normal((m, dim))
            block /= np.linalg.norm(block, axis=1, keepdims=True)
            records.append(VolumeRecord(f"other{i}", m, offset, "database"))
            blocks.append(block.astype(np.float32))
            offset += m
        store = EmbeddingStore(
            StoreManifest.build(dim, records), np.concatenate(blocks)
        )
        candidates = [r.volume_id for r in records]
        counts = {vid: int(rng.integers(1, 10)) for vid in candidates}
        result = rerank(q, candidates, store, hit_counts=counts)
        if result.winner in dup_ids:
            wins += 1
    check(wins == trials, "C6 rerank self-selection", f"{wins}/{trials} trials picked a duplicate")


def test_criterion_7_determinism_and_corruption_detection(tmp_path):
    corpus = tmp_path / "corpus"
    code = cli_main([
        "synth", "--out", str(corpus), "--volumes", "10", "--labels-n", "8",
        "--dim", "12", "--slices", "8", "12", "--sigma", "0.05",
        "--queries", "5", "--seed", "3",
    ])
    assert code == 0
    outs = []
    for name in ("run_a", "run_b"):
        out = tmp_path / name
        code = cli_main([
            "eval", "--db", str(corpus / "db.vge1"), "--query", str(corpus / "query.vge1"),
            "--labels", str(corpus / "labels.csv"), "--protocol", "localized",
            "--rerank", "--seed", "3", "--out", str(out),
        ])
        assert code == 0
        outs.append(out)
    csvs = ("report.csv", "hits.csv", "hit_pairs.csv", "rerank.csv", "localization.csv")
    identical = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in csvs)

    # round-trip: write(read(f)) reproduces f byte for byte
    db_path = corpus / "db.vge1"
    copy_path = tmp_path / "copy.vge1"
    write_store(read_store(db_path), copy_path)
    round_trip = db_path.read_bytes() == copy_path.read_bytes()

    # single payload byte flip must be caught by the checksum
    raw = bytearray(db_path.read_bytes())
    manifest_len = struct.unpack_from("<Q", raw, 28)[0]
    payload_start = 36 + manifest_len
    flip_at = payload_start + (len(raw) - payload_start) // 2
    raw[flip_at] ^= 0x40
    corrupt_path = tmp_path / "corrupt.vge1"
    corrupt_path.write_bytes(bytes(raw))
    try:
        read_store(corrupt_path)
        corruption_caught = False
    except ChecksumMismatchError:
        corruption_caught = True
    check(
        identical and round_trip and corruption_caught,
        "C7 determinism + corruption detection",
        f"csv identical {identical}, round-trip {round_trip}, flip caught {corruption_caught}",
    )


def test_criterion_8_hit_count_conservation():
    db, query, labels = generate(SynthSpec(noise_sigma=0.05, seed=17))
    index = build_index(db, "flat")

    ok = True
    checked = 0
    # volume and slice protocols search every slice of each query volume
    for protocol in ("slice", "volume"):
        result = run_protocol(protocol, db, query, labels, index)
        for table in result.hit_tables:
            expected = query.volume(table.query_id).n_slices
            ok = ok and table.total_hits == expected
            checked += 1
        ok = ok and result.searched_slices == query.row_count

    # region protocols search exactly the slices of each region span
    from volsearch import region_subvolume

    result = run_protocol("region", db, query, labels, index)
    for table in result.hit_tables:
        vid, rest = table.query_id.split(":", 1)
        region = int(rest.split(":")[0][1:])
        span = region_subvolume(vid, region, labels).slice_range
        expected = span[1] - span[0] + 1
        ok = ok and table.total_hits == expected
        checked += 1
    check(ok, "C8 hit-count conservation", f"{checked} hit tables verified")
