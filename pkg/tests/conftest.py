import os

import numpy as np
import pytest

from datasets import load_named
from pkm_types import Dataset


def make_blobs(sizes=(10, 10, 10), spread=0.3, seed=0) -> Dataset:
    rng = np.random.default_rng(seed)
    anchors = np.array([[0.0, 0.0], [5.0, 0.0], [2.5, 4.0]])
    points = np.vstack([rng.normal(anchors[j], spread, size=(n, 2)) for j, n in enumerate(sizes)])
    labels = np.repeat(np.arange(len(sizes)), sizes)
    return Dataset(points=points, labels=labels, name="blobs")


@pytest.fixture
def blobs() -> Dataset:
    return make_blobs()


@pytest.fixture
def blobs_csv(tmp_path, blobs) -> str:
    path = tmp_path / "blobs.csv"
    lines = [f"{x:.10f},{y:.10f},class{label}" for (x, y), label in zip(blobs.points, blobs.labels)]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def iris() -> Dataset:
    from sklearn.datasets import load_iris

    bunch = load_iris()
    return Dataset(points=bunch.data, labels=bunch.target, name="iris")


def benchmark(name: str) -> Dataset:
    """A benchmark CSV from PKM_DATA_DIR, or skip the test when it is not there."""
    data_dir = os.getenv("PKM_DATA_DIR")
    if not data_dir:
        pytest.skip("PKM_DATA_DIR is not set")
    try:
        return load_named(name, data_dir)
    except OSError:
        pytest.skip(f"{name} not found under {data_dir}")
