"""Shared fixtures; puts src/ on sys.path so `pytest` works from a fresh checkout."""
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent / "src"))

from nskge.data import Dataset, make_synthetic, write_dataset  # noqa: E402
from nskge.linalg import set_deterministic  # noqa: E402


@pytest.fixture(autouse=True)
def deterministic_linalg():
    set_deterministic(True)
    yield
    set_deterministic(True)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture
def tiny_dataset() -> Dataset:
    return make_synthetic(seed=3, entity_count=6, relation_count=2, positive_count=12)


@pytest.fixture
def toy_dataset() -> Dataset:
    """3 entities, 1 relation, a single training triple."""
    return Dataset(
        entity_count=3, relation_count=1,
        train=np.array([[0, 0, 1]], dtype=np.int64),
        valid=np.zeros((0, 3), dtype=np.int64),
        test=np.array([[0, 0, 1]], dtype=np.int64),
        entity_names=["e0", "e1", "e2"], relation_names=["r0"], name="toy",
    ).validate()


@pytest.fixture
def dataset_dir(tmp_path, tiny_dataset) -> Path:
    return write_dataset(tiny_dataset, tmp_path / "tiny")
