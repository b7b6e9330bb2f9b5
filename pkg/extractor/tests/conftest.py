import numpy as np
import pytest

from volextract import ExtractorConfig, load_model, write_nifti

CHEAP_MODEL = "resnet50-radimagenet"


@pytest.fixture(scope="session")
def model():
    """One random-init backbone shared across tests; weights are seeded,
    so every test sees the same network."""
    return load_model(CHEAP_MODEL, pretrained=False, seed=1)


@pytest.fixture()
def config():
    return ExtractorConfig(model=CHEAP_MODEL, pretrained=False, seed=1, batch_size=4)


@pytest.fixture()
def rng():
    return np.random.default_rng(7)


@pytest.fixture()
def volume_files(tmp_path, rng):
    """Three small CT-like volumes with different slice counts."""
    paths = []
    for name, n_slices in [("vol_a", 4), ("vol_b", 6), ("vol_c", 3)]:
        volume = rng.integers(-1000, 2000, size=(20, 24, n_slices)).astype(np.int16)
        path = tmp_path / f"{name}.nii.gz"
        write_nifti(volume, path)
        paths.append((path, n_slices))
    return paths
