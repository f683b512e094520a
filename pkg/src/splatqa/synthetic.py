"""Procedural splat clouds for demos, smoke experiments, and tests.

Each shape family places centroids on a distinct smooth structure with
position-coherent colors, which gives the synthesis distortions a detectable
signature: centroid noise roughens local geometry, SH noise raises
high-frequency color variance, and downsampling thins neighborhoods.
"""

from __future__ import annotations

import numpy as np

from .rng import make_rng
from .splats import ATTR_COUNT, CENTROID, OPACITY, ROTATION, SCALE, SH, SH_DC, GaussianCloud

SHAPES = ("blobs", "sphere", "torus", "box", "helix")


#: common surface jitter so all bases share the same local roughness floor
_JITTER = 0.002


def _positions(shape: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Surface samples: every base is a 2-D manifold of comparable area and
    extent, so injected distortions have comparable local signatures."""
    u = rng.uniform(0.0, 1.0, n)
    v = rng.uniform(0.0, 1.0, n)
    jitter = rng.normal(0.0, _JITTER, (n, 3))
    if shape == "blobs":
        # union of five ellipsoid shells
        centers = rng.uniform(-0.7, 0.7, (5, 3))
        radii = rng.uniform(0.3, 0.55, (5, 3))
        which = rng.integers(0, 5, n)
        phi = 2.0 * np.pi * u
        costheta = 2.0 * v - 1.0
        sintheta = np.sqrt(1.0 - costheta**2)
        unit = np.stack([sintheta * np.cos(phi), sintheta * np.sin(phi), costheta], axis=1)
        return centers[which] + unit * radii[which] + jitter
    if shape == "sphere":
        phi = 2.0 * np.pi * u
        costheta = 2.0 * v - 1.0
        sintheta = np.sqrt(1.0 - costheta**2)
        pts = np.stack([sintheta * np.cos(phi), sintheta * np.sin(phi), costheta], axis=1)
        return pts + jitter
    if shape == "torus":
        theta = 2.0 * np.pi * u
        phi = 2.0 * np.pi * v
        r_major, r_minor = 0.75, 0.35
        x = (r_major + r_minor * np.cos(phi)) * np.cos(theta)
        y = (r_major + r_minor * np.cos(phi)) * np.sin(theta)
        z = r_minor * np.sin(phi)
        return np.stack([x, y, z], axis=1) + jitter
    if shape == "box":
        face = rng.integers(0, 6, n)
        pts = rng.uniform(-0.7, 0.7, (n, 3))
        axis = face % 3
        side = np.where(face < 3, -0.7, 0.7)
        pts[np.arange(n), axis] = side
        return pts + jitter
    if shape == "helix":
        # tube around a helical spine
        t = 4.0 * np.pi * u
        spine = np.stack([0.7 * np.cos(t), 0.7 * np.sin(t), 1.6 * (u - 0.5)], axis=1)
        ring = 2.0 * np.pi * v
        tangent = np.stack([-np.sin(t), np.cos(t), np.full_like(t, 1.6 / (0.7 * 4.0 * np.pi))], axis=1)
        tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
        ref = np.stack([np.cos(t), np.sin(t), np.zeros_like(t)], axis=1)
        side = np.cross(tangent, ref)
        side /= np.linalg.norm(side, axis=1, keepdims=True)
        r_tube = 0.22
        pts = spine + r_tube * (np.cos(ring)[:, None] * ref + np.sin(ring)[:, None] * side)
        return pts + jitter
    raise ValueError(f"unknown shape {shape!r}; expected one of {SHAPES}")


def make_base_cloud(shape: str, n_splats: int, seed: int,
                    label: str | None = None) -> GaussianCloud:
    """Procedural base model with n_splats primitives on the given shape.

    Non-positional attributes vary smoothly with position (as in optimized
    reconstructions, where neighboring splats share scale and appearance),
    so grouping-space neighborhoods stay spatially local.
    """
    rng = make_rng(seed)
    data = np.zeros((n_splats, ATTR_COUNT), dtype=np.float64)
    pos = _positions(shape, n_splats, rng)
    data[:, CENTROID] = pos
    data[:, OPACITY] = 1.5 + 0.5 * np.sin(2.0 * pos[:, 0]) + rng.normal(0.0, 0.05, n_splats)
    base_scale = -4.6 + 0.25 * np.sin(2.0 * pos) * np.cos(1.5 * pos[:, ::-1])
    data[:, SCALE] = base_scale + rng.normal(0.0, 0.03, (n_splats, 3))
    quats = rng.normal(0.0, 1.0, (n_splats, 4))
    # keep quaternions normalizable even in the measure-zero degenerate draw
    bad = np.linalg.norm(quats, axis=1) < 1e-8
    quats[bad] = (1.0, 0.0, 0.0, 0.0)
    data[:, ROTATION] = quats
    # appearance follows position so color is spatially coherent
    data[:, SH_DC] = 0.6 * np.sin(3.0 * pos) + rng.normal(0.0, 0.02, (n_splats, 3))
    bands = 1.0 / (1.0 + np.arange(45) / 9.0)  # energy decays with SH order
    phase = np.arange(45) * 0.7
    rest = 0.12 * np.sin(4.0 * pos[:, 0:1] + phase) * bands
    rest += rng.normal(0.0, 0.01, (n_splats, 45)) * bands
    data[:, SH.start + 3:SH.stop] = rest
    return GaussianCloud(data=data.astype(np.float32),
                         source_label=label or f"synthetic-{shape}-{seed}")
