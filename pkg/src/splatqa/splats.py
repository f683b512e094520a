"""Data model for 3D Gaussian Splatting content.

A splat carries 59 stored attributes, kept in raw (pre-activation) form
exactly as they appear in the PLY file: opacity as a logit, scale as
log-scale, rotation as an unnormalized w-x-y-z quaternion. No sigmoid/exp
activation is applied anywhere in this toolkit; every downstream stage
(distortion synthesis, region extraction, the quality network) consumes the
stored values directly.

Canonical column layout of the (N, 59) attribute matrix:

    [0:3)   centroid x, y, z
    [3]     opacity (logit)
    [4:7)   scale_0..2 (log-scale)
    [7:11)  rot_0..3 (quaternion, w first)
    [11:14) f_dc_0..2 (SH DC terms)
    [14:59) f_rest_0..44 (higher-order SH)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

ATTR_COUNT = 59

CENTROID = slice(0, 3)
OPACITY = 3
SCALE = slice(4, 7)
ROTATION = slice(7, 11)
SH = slice(11, 59)
SH_DC = slice(11, 14)

#: columns spanning the 9-dim grouping space (centroid, raw scale, DC SH terms)
GROUPING_COLS = np.r_[0:3, 4:7, 11:14]

#: smallest admissible bounding-box extent, clamps degenerate axes
EPSILON_EXTENT = 1e-6


@dataclass(frozen=True)
class GaussianSplat:
    """One Gaussian primitive with its 59 raw attributes."""

    centroid: np.ndarray        # (3,)
    opacity_raw: float
    scale_raw: np.ndarray       # (3,)
    rotation_raw: np.ndarray    # (4,), w-x-y-z
    sh: np.ndarray              # (48,), 3 DC then 45 rest

    def to_row(self) -> np.ndarray:
        row = np.empty(ATTR_COUNT, dtype=np.float32)
        row[CENTROID] = self.centroid
        row[OPACITY] = self.opacity_raw
        row[SCALE] = self.scale_raw
        row[ROTATION] = self.rotation_raw
        row[SH] = self.sh
        return row

    @classmethod
    def from_row(cls, row: np.ndarray) -> "GaussianSplat":
        if row.shape != (ATTR_COUNT,):
            raise DomainError(f"splat row must have {ATTR_COUNT} attributes, got shape {row.shape}")
        return cls(
            centroid=np.asarray(row[CENTROID], dtype=np.float32).copy(),
            opacity_raw=float(row[OPACITY]),
            scale_raw=np.asarray(row[SCALE], dtype=np.float32).copy(),
            rotation_raw=np.asarray(row[ROTATION], dtype=np.float32).copy(),
            sh=np.asarray(row[SH], dtype=np.float32).copy(),
        )


@dataclass
class GaussianCloud:
    """Ordered collection of N splats, stored as an (N, 59) float32 matrix.

    ``extras`` holds passthrough PLY properties (e.g. nx/ny/nz) that are
    preserved verbatim on round-trip but invisible to every other module.
    Clouds are treated as immutable after construction; operations return
    new clouds rather than mutating in place.
    """

    data: np.ndarray
    source_label: str = ""
    extras: list[tuple[str, np.ndarray]] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 2 or self.data.shape[1] != ATTR_COUNT:
            raise DomainError(
                f"cloud data must be (N, {ATTR_COUNT}), got shape {self.data.shape}"
            )
        for name, col in self.extras:
            if col.shape != (self.count,):
                raise DomainError(f"extra property {name!r} has {col.shape[0]} values for {self.count} splats")

    @property
    def count(self) -> int:
        return self.data.shape[0]

    def __len__(self) -> int:
        return self.count

    @property
    def centroids(self) -> np.ndarray:
        return self.data[:, CENTROID]

    @property
    def opacity_raw(self) -> np.ndarray:
        return self.data[:, OPACITY]

    @property
    def scale_raw(self) -> np.ndarray:
        return self.data[:, SCALE]

    @property
    def rotation_raw(self) -> np.ndarray:
        return self.data[:, ROTATION]

    @property
    def sh(self) -> np.ndarray:
        return self.data[:, SH]

    def splat(self, i: int) -> GaussianSplat:
        return GaussianSplat.from_row(self.data[i])

    @classmethod
    def from_splats(cls, splats: list[GaussianSplat], source_label: str = "") -> "GaussianCloud":
        if splats:
            data = np.stack([s.to_row() for s in splats])
        else:
            data = np.empty((0, ATTR_COUNT), dtype=np.float32)
        return cls(data=data, source_label=source_label)

    def select(self, indices: np.ndarray, source_label: str | None = None) -> "GaussianCloud":
        """New cloud keeping the given row indices (in the given order)."""
        indices = np.asarray(indices)
        return GaussianCloud(
            data=self.data[indices].copy(),
            source_label=self.source_label if source_label is None else source_label,
            extras=[(name, col[indices].copy()) for name, col in self.extras],
        )

    def replace_data(self, data: np.ndarray, source_label: str | None = None) -> "GaussianCloud":
        """New cloud with the same extras but a fresh attribute matrix."""
        return GaussianCloud(
            data=data,
            source_label=self.source_label if source_label is None else source_label,
            extras=[(name, col.copy()) for name, col in self.extras],
        )


def bounding_volume(cloud: GaussianCloud) -> float:
    """Axis-aligned bounding-box volume of the centroids, in scene units cubed.

    Extents below EPSILON_EXTENT are clamped so degenerate clouds (single
    splat, coplanar layouts) still yield a usable positive volume for the
    minimum-spacing formula.
    """
    if cloud.count == 0:
        raise DomainError("bounding_volume requires at least one splat")
    c = cloud.centroids.astype(np.float64)
    extents = c.max(axis=0) - c.min(axis=0)
    extents = np.maximum(extents, EPSILON_EXTENT)
    return float(extents[0] * extents[1] * extents[2])


def grouping_matrix(data: np.ndarray) -> np.ndarray:
    """Project (N, 59) attribute rows onto the 9-dim grouping space."""
    return data[:, GROUPING_COLS]
