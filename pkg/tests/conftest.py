import os
import sys
from pathlib import Path

# single-threaded BLAS: the deterministic acceptance configuration (must be
# set before numpy first loads)
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from splatqa.rng import make_rng
from splatqa.splats import ATTR_COUNT, GaussianCloud


def random_cloud(n: int, seed: int = 0, spread: float = 1.0) -> GaussianCloud:
    """Generic random cloud: no structure, no exact attribute ties."""
    rng = make_rng(seed, 777)
    data = rng.normal(0.0, spread, (n, ATTR_COUNT)).astype(np.float32)
    return GaussianCloud(data=data, source_label=f"random-{n}-{seed}")


@pytest.fixture
def small_cloud() -> GaussianCloud:
    return random_cloud(64, seed=3)
