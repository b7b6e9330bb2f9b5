import numpy as np
import pytest

from volsearch import EmbeddingStore, StoreManifest, VolumeRecord


def random_store(
    rng: np.random.Generator,
    volumes: list[tuple[str, int]],
    dim: int,
    split: str = "database",
) -> EmbeddingStore:
    """A store of unit-normalized Gaussian rows, one block per volume."""
    records = []
    blocks = []
    offset = 0
    for volume_id, n_slices in volumes:
        records.append(VolumeRecord(volume_id, n_slices, offset, split))
        offset += n_slices
        block = rng.standard_normal((n_slices, dim))
        block /= np.linalg.norm(block, axis=1, keepdims=True)
        blocks.append(block.astype(np.float32))
    return EmbeddingStore(StoreManifest.build(dim, records), np.concatenate(blocks))


def unit(vector) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64)
    return (v / np.linalg.norm(v)).astype(np.float32)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
