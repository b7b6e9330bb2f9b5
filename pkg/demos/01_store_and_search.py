"""
Building an embedding store and searching slices
================================================

A volume is an ordered stack of 2D slices; each slice is one fixed-length
embedding row. This walk-through builds a tiny store from raw vectors,
saves it to the binary store format, reloads it, and runs the same
nearest-slice query through the exact index and the graph index.
"""
import tempfile
from pathlib import Path

import numpy as np

from volsearch import (
    FlatIndex,
    HnswIndex,
    HnswParams,
    SliceEmbedding,
    normalize,
    read_store,
    store_from_rows,
    write_store,
)

rng = np.random.default_rng(0)
DIM = 16

# Three volumes with a handful of slices each. Vectors are arbitrary here;
# store_from_rows normalizes them once at ingest.
rows = []
for volume_id, n_slices in [("chest_ct_01", 6), ("chest_ct_02", 4), ("abdomen_ct_01", 5)]:
    for s in range(n_slices):
        rows.append(SliceEmbedding(volume_id, s, rng.standard_normal(DIM)))

store = store_from_rows(DIM, rows)
print(f"store: {store.row_count} rows, dim {store.dim}, volumes {store.volume_ids()}")

# Round-trip through the on-disk format. The file carries a checksum, so a
# corrupted copy refuses to load instead of silently returning wrong rows.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.vge1"
    write_store(store, path)
    store = read_store(path)
    print(f"reloaded {path.name}: {path.stat().st_size} bytes")

# Query with a noisy copy of a known slice. Indexes expect unit-length
# queries (cosine is then a plain dot product), so normalize first.
target = store.row("chest_ct_02", 2)
query = normalize(target + 0.1 * rng.standard_normal(DIM).astype(np.float32))

flat = FlatIndex(store)
for hit in flat.search(query, k=3):
    print(f"flat  {hit.volume_id} slice {hit.slice_index}  score {hit.score:.4f}")

# The graph index answers the same query approximately. At these sizes it
# visits nearly everything, so the answers coincide with exact search.
hnsw = HnswIndex.build(store, HnswParams(m=8, ef_construction=50, ef_search=32, seed=1))
for hit in hnsw.search(query, k=3):
    print(f"hnsw  {hit.volume_id} slice {hit.slice_index}  score {hit.score:.4f}")
