import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from centroid_gap.core import Dataset, SplitRole  # noqa: E402


def make_dataset(labels, vectors, role=SplitRole.TRAIN, prefix="s"):
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    ids = tuple(f"{prefix}{i}" for i in range(len(labels)))
    return Dataset(ids, tuple(labels), vectors, role)


def random_dataset(rng, n_labels, per_label, dim, role=SplitRole.TRAIN, spread=1.0):
    labels = [f"L{k:02d}" for k in range(n_labels) for _ in range(per_label)]
    means = rng.normal(scale=10.0, size=(n_labels, dim))
    vectors = np.repeat(means, per_label, axis=0) + rng.normal(scale=spread, size=(len(labels), dim))
    return make_dataset(labels, vectors, role)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
