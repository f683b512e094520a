import numpy as np
import pytest

from conftest import random_cloud
from splatqa.errors import DomainError
from splatqa.rng import make_rng
from splatqa.splats import (ATTR_COUNT, EPSILON_EXTENT, GaussianCloud,
                            GaussianSplat, bounding_volume)


def _cloud_at(positions) -> GaussianCloud:
    data = np.zeros((len(positions), ATTR_COUNT), dtype=np.float32)
    data[:, :3] = positions
    return GaussianCloud(data=data)


def test_attribute_count():
    splat = GaussianSplat(
        centroid=np.zeros(3), opacity_raw=0.0, scale_raw=np.zeros(3),
        rotation_raw=np.array([1.0, 0, 0, 0]), sh=np.zeros(48),
    )
    assert splat.to_row().shape == (ATTR_COUNT,)
    assert ATTR_COUNT == 3 + 1 + 3 + 4 + 48


def test_splat_row_roundtrip():
    row = make_rng(1).normal(size=ATTR_COUNT).astype(np.float32)
    splat = GaussianSplat.from_row(row)
    assert np.array_equal(splat.to_row(), row)


def test_bounding_volume_two_splats():
    cloud = _cloud_at([(0, 0, 0), (1, 2, 3)])
    assert bounding_volume(cloud) == pytest.approx(6.0)


def test_bounding_volume_degenerate_clamp():
    coincident = _cloud_at([(0.5, 0.5, 0.5)] * 3)
    assert bounding_volume(coincident) == pytest.approx(EPSILON_EXTENT**3)
    single = _cloud_at([(2, 2, 2)])
    assert bounding_volume(single) == pytest.approx(EPSILON_EXTENT**3)


def test_bounding_volume_empty_cloud_rejected():
    with pytest.raises(DomainError):
        bounding_volume(GaussianCloud(data=np.empty((0, ATTR_COUNT), dtype=np.float32)))


def test_bounding_volume_permutation_invariant():
    cloud = random_cloud(50, seed=9)
    perm = make_rng(4).permutation(50)
    assert bounding_volume(cloud) == bounding_volume(cloud.select(perm))


def test_cloud_select_preserves_extras():
    cloud = GaussianCloud(
        data=np.zeros((4, ATTR_COUNT), dtype=np.float32),
        extras=[("nx", np.arange(4, dtype=np.float32))],
    )
    sub = cloud.select(np.array([2, 0]))
    assert np.array_equal(sub.extras[0][1], np.array([2.0, 0.0], dtype=np.float32))


def test_wrong_width_rejected():
    with pytest.raises(DomainError):
        GaussianCloud(data=np.zeros((3, 58), dtype=np.float32))
