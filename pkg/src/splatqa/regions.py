"""Geometric preprocessing: random pre-downsampling, farthest point sampling,
kNN region extraction, and embedding assembly.

Sampling and neighbor search run in the 9-dim grouping space (centroid, raw
scale, DC SH terms); region embeddings gather the full 59-attribute vectors.
Distances are plain Euclidean over the raw 9-vector. Ties in both FPS and
kNN break toward the lowest index, which makes every result reproducible and
directly comparable against brute-force oracles.
"""

from __future__ import annotations

import io
import os
import struct
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, DataError, DomainError
from .rng import make_rng
from .splats import ATTR_COUNT, GaussianCloud, grouping_matrix


@dataclass
class RegionParams:
    p_pre: int = 8192
    n_regions: int = 64
    k_neighbors: int = 32
    seed: int = 0
    standardize: bool = False  # per-dimension standardization of the grouping space


@dataclass
class RegionBatch:
    """n region centers with a (n, k) neighbor table and (n, k, 59) embeddings.

    Neighbor indices refer to the pre-downsampled cloud; column 0 of each row
    is the region's own center. embeddings[i, j] is the full attribute vector
    of splat neighbors[i, j].
    """

    center_indices: np.ndarray   # (n,) int32
    neighbors: np.ndarray        # (n, k) int32
    embeddings: np.ndarray       # (n, k, 59) float32
    p_pre: int
    n_regions: int
    k_neighbors: int

    def __post_init__(self) -> None:
        self.center_indices = np.ascontiguousarray(self.center_indices, dtype=np.int32)
        self.neighbors = np.ascontiguousarray(self.neighbors, dtype=np.int32)
        self.embeddings = np.ascontiguousarray(self.embeddings, dtype=np.float32)
        n, k = self.neighbors.shape
        if self.center_indices.shape != (n,) or self.embeddings.shape != (n, k, ATTR_COUNT):
            raise ContractError(
                f"inconsistent region batch shapes: centers {self.center_indices.shape}, "
                f"neighbors {self.neighbors.shape}, embeddings {self.embeddings.shape}"
            )

    def center_grouping(self) -> np.ndarray:
        """Grouping-space coordinates of the region centers, (n, 9) float64."""
        return grouping_matrix(self.embeddings[:, 0, :]).astype(np.float64)


def pre_downsample(cloud: GaussianCloud, p_pre: int, seed: int) -> GaussianCloud:
    """Uniform random subset of exactly p_pre splats (identity when N <= p_pre)."""
    if p_pre < 1:
        raise DomainError(f"p_pre must be >= 1, got {p_pre}")
    if cloud.count <= p_pre:
        return cloud
    rng = make_rng(seed)
    keep = np.sort(rng.choice(cloud.count, size=p_pre, replace=False))
    return cloud.select(keep)


def grouping_space(cloud: GaussianCloud, standardize: bool = False) -> np.ndarray:
    """One 9-vector per splat: (centroid, raw scale, DC SH), in that order."""
    g = grouping_matrix(cloud.data).astype(np.float64)
    if standardize and len(g):
        mean = g.mean(axis=0)
        std = g.std(axis=0)
        std[std < 1e-12] = 1.0
        g = (g - mean) / std
    return g


def fps(points: np.ndarray, n: int, seed: int, start: int | None = None) -> np.ndarray:
    """Farthest point sampling over rows of ``points``; returns n indices.

    The first center is a seeded random index (or ``start`` when given); each
    subsequent center maximizes the minimum squared Euclidean distance to the
    already-selected set, ties broken by lowest index.
    """
    points = np.asarray(points, dtype=np.float64)
    total = len(points)
    if not (1 <= n <= total):
        raise DomainError(f"n must be in [1, {total}], got {n}")
    if start is None:
        start = int(make_rng(seed).integers(total))
    elif not (0 <= start < total):
        raise DomainError(f"start index {start} out of range [0, {total})")

    selected = np.empty(n, dtype=np.int64)
    selected[0] = start
    min_d2 = np.full(total, np.inf)
    current = start
    for i in range(1, n):
        d2 = np.sum((points - points[current]) ** 2, axis=1)
        np.minimum(min_d2, d2, out=min_d2)
        min_d2[current] = -1.0  # selected points can never be picked again
        current = int(np.argmax(min_d2))
        selected[i] = current
    return selected


def knn_regions(points: np.ndarray, centers: np.ndarray, k: int) -> np.ndarray:
    """k nearest rows of ``points`` for each center index, center first.

    Each row is sorted by nondecreasing squared distance with ties broken by
    lowest index; the center itself occupies position 0.
    """
    points = np.asarray(points, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.int64)
    total = len(points)
    if not (1 <= k <= total):
        raise DomainError(f"k must be in [1, {total}], got {k}")
    if len(centers) and (centers.min() < 0 or centers.max() >= total):
        raise DomainError("center index out of range")

    table = np.empty((len(centers), k), dtype=np.int64)
    for i, c in enumerate(centers):
        d2 = np.sum((points - points[c]) ** 2, axis=1)
        d2[c] = -1.0  # the center sorts first even against coincident points
        table[i] = np.argsort(d2, kind="stable")[:k]
    return table


def assemble_embeddings(cloud: GaussianCloud, neighbor_table: np.ndarray) -> np.ndarray:
    """Pure gather: embeddings[i, j] = attribute row of splat neighbor_table[i, j]."""
    idx = np.asarray(neighbor_table)
    if idx.size and (idx.min() < 0 or idx.max() >= cloud.count):
        raise DomainError(
            f"neighbor index out of bounds for cloud of {cloud.count} splats"
        )
    return cloud.data[idx]


def extract_regions(cloud: GaussianCloud, params: RegionParams) -> RegionBatch:
    """Full preprocessing pipeline: downsample, FPS centers, kNN, gather.

    RNG streams: (seed, 0) drives the pre-downsample subset, (seed, 1) the
    FPS start index, so the two stages cannot alias.
    """
    if cloud.count < 1:
        raise DomainError("cannot extract regions from an empty cloud")
    reduced = pre_downsample(cloud, params.p_pre, int(make_rng(params.seed, 0).integers(2**63)))
    g = grouping_space(reduced, standardize=params.standardize)
    n = min(params.n_regions, reduced.count)
    k = min(params.k_neighbors, reduced.count)
    start = int(make_rng(params.seed, 1).integers(reduced.count))
    centers = fps(g, n, seed=0, start=start)
    table = knn_regions(g, centers, k)
    emb = assemble_embeddings(reduced, table)
    return RegionBatch(
        center_indices=centers, neighbors=table, embeddings=emb,
        p_pre=params.p_pre, n_regions=n, k_neighbors=k,
    )


_MAGIC = b"RGNB"
_VERSION = 1


def save_regions(batch: RegionBatch, path: str | os.PathLike) -> None:
    """Write the documented binary container: header then indices then floats.

    Layout (little-endian): magic "RGNB", u32 version, u32 p_pre, u32 n,
    u32 k; center indices (n i32); neighbor table (n*k i32); embeddings
    (n*k*59 f32).
    """
    n, k = batch.neighbors.shape
    buf = io.BytesIO()
    buf.write(_MAGIC)
    buf.write(struct.pack("<IIII", _VERSION, batch.p_pre, n, k))
    buf.write(batch.center_indices.astype("<i4").tobytes())
    buf.write(batch.neighbors.astype("<i4").tobytes())
    buf.write(batch.embeddings.astype("<f4").tobytes())
    with open(path, "wb") as f:
        f.write(buf.getvalue())


def load_regions(path: str | os.PathLike) -> RegionBatch:
    with open(path, "rb") as f:
        raw = f.read()
    if raw[:4] != _MAGIC:
        raise DataError(f"{os.fspath(path)}: not a region container (bad magic)")
    version, p_pre, n, k = struct.unpack_from("<IIII", raw, 4)
    if version != _VERSION:
        raise DataError(f"{os.fspath(path)}: unsupported container version {version}")
    offset = 4 + 16
    need = n * 4 + n * k * 4 + n * k * ATTR_COUNT * 4
    if len(raw) - offset < need:
        raise DataError(
            f"{os.fspath(path)}: truncated container, expected {need} payload bytes, "
            f"got {len(raw) - offset}"
        )
    centers = np.frombuffer(raw, dtype="<i4", count=n, offset=offset)
    offset += n * 4
    table = np.frombuffer(raw, dtype="<i4", count=n * k, offset=offset).reshape(n, k)
    offset += n * k * 4
    emb = np.frombuffer(raw, dtype="<f4", count=n * k * ATTR_COUNT, offset=offset)
    emb = emb.reshape(n, k, ATTR_COUNT)
    return RegionBatch(
        center_indices=centers.copy(), neighbors=table.copy(), embeddings=emb.copy(),
        p_pre=int(p_pre), n_regions=int(n), k_neighbors=int(k),
    )
