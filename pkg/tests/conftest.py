import numpy as np
import pytest

from splatbench.core import LabeledCloud
from splatbench.rng import derive_stream


def random_cloud(n: int, seed: int = 0, label_fraction: float = 0.3) -> LabeledCloud:
    """Deterministic test cloud inside the unit ball with a sparse heatmap."""
    rng = np.random.default_rng(seed)
    pts = rng.uniform(-1.0, 1.0, size=(n, 3))
    pts /= max(1.0, float(np.linalg.norm(pts, axis=1).max()))
    labels = np.where(rng.random(n) < label_fraction, rng.random(n), 0.0)
    return LabeledCloud(pts, labels)


@pytest.fixture
def cloud2048():
    return random_cloud(2048, seed=7)


@pytest.fixture
def stream():
    return derive_stream(42, 0, 1)
