"""Plane fitting and 3D segmentation of a cloud around 2D footprints and slabs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..boxes import MIN_HALF_EXTENT, UP, BoundingBox
from ..pointcloud import PointCloud
from .grid import LineSegment2D


@dataclass(frozen=True, eq=False)
class PlaneFit:
    """Plane ``normal . p = offset`` with its inliers.

    ``rms_residual`` is taken over all fitted points, so it measures how
    flat the whole segment is, not just the inliers.
    """

    normal: np.ndarray
    offset: float
    inliers: np.ndarray
    rms_residual: float
    dist_threshold: float
    n_points: int

    @property
    def inlier_fraction(self) -> float:
        return len(self.inliers) / self.n_points if self.n_points else 0.0


def _as_points(points) -> np.ndarray:
    if isinstance(points, PointCloud):
        return points.points
    return np.asarray(points, dtype=float).reshape(-1, 3)


def _orient_normal(n: np.ndarray) -> np.ndarray:
    if abs(n[2]) >= 1e-6:
        return n if n[2] > 0 else -n
    for c in n[:2]:
        if c != 0:
            return n if c > 0 else -n
    return n


def fit_plane(points, dist_threshold: float, min_inlier_fraction: float = 0.8,
              degenerate_ratio: float = 1e-10) -> PlaneFit | None:
    """Total-least-squares plane through the centroid.

    The normal is the covariance eigenvector of the smallest eigenvalue.
    Returns None when the points are collinear or fewer than
    ``min_inlier_fraction`` of them lie within ``dist_threshold``.
    """
    pts = _as_points(points)
    if len(pts) < 3:
        raise ValueError(f"plane fit needs at least 3 points, got {len(pts)}")
    if dist_threshold <= 0:
        raise ValueError("dist_threshold must be positive")
    centroid = pts.mean(axis=0)
    d = pts - centroid
    vals, vecs = np.linalg.eigh(d.T @ d)
    if vals[2] <= 0 or vals[1] <= degenerate_ratio * vals[2]:
        return None
    normal = _orient_normal(vecs[:, 0])
    offset = float(normal @ centroid)
    resid = pts @ normal - offset
    inliers = np.flatnonzero(np.abs(resid) <= dist_threshold)
    if len(inliers) < min_inlier_fraction * len(pts):
        return None
    rms = float(np.sqrt(np.mean(resid ** 2)))
    return PlaneFit(normal, offset, inliers, rms, float(dist_threshold), len(pts))


def oriented_box_from_points(points, direction) -> BoundingBox:
    """Tight upright box whose ``u`` axis follows the horizontal ``direction``.

    Zero extents (e.g. points on a plane) are clamped to 5 mm.
    """
    pts = _as_points(points)
    if len(pts) == 0:
        raise ValueError("cannot box an empty point set")
    d = np.asarray(direction, dtype=float)[:2]
    d = d / np.linalg.norm(d)
    axes = np.array([[d[0], d[1], 0.0], [-d[1], d[0], 0.0], UP])
    local = pts @ axes.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    half = np.maximum((hi - lo) / 2.0, MIN_HALF_EXTENT)
    center = ((lo + hi) / 2.0) @ axes
    return BoundingBox(center, axes, half)


def footprint_mask(points: np.ndarray, footprint: LineSegment2D, thickness: float) -> np.ndarray:
    """Points whose xy projection is within ``thickness/2`` of the segment (capsule)."""
    a = np.asarray(footprint.p0)
    ab = np.asarray(footprint.p1) - a
    xy = points[:, :2] - a
    t = np.clip(xy @ ab / (ab @ ab), 0.0, 1.0)
    closest = np.outer(t, ab)
    dist2 = np.sum((xy - closest) ** 2, axis=1)
    return dist2 <= (thickness / 2.0) ** 2


def back_z_projection(cloud: PointCloud, footprint: LineSegment2D, thickness: float,
                      min_points: int = 100) -> tuple[PointCloud, BoundingBox] | None:
    """Lift a 2D footprint back into 3D.

    Selects every point whose ground projection lies within ``thickness/2``
    of the footprint and boxes them in the footprint's frame. Returns None
    when fewer than ``min_points`` are selected.
    """
    if thickness <= 0:
        raise ValueError("thickness must be positive")
    if len(cloud) == 0:
        return None
    mask = footprint_mask(cloud.points, footprint, thickness)
    if mask.sum() < min_points:
        return None
    segment = cloud.subset(mask)
    return segment, oriented_box_from_points(segment, footprint.direction)


def densest_slab(cloud: PointCloud, slab_thickness: float, step: float) -> tuple[float, np.ndarray] | None:
    """Lowest start ``z`` of the most populated slab ``[z, z + thickness]`` and its point mask."""
    if slab_thickness <= 0 or step <= 0:
        raise ValueError("slab_thickness and step must be positive")
    if len(cloud) == 0:
        return None
    z = cloud.points[:, 2]
    zs = np.sort(z)
    zmin, zmax = zs[0], zs[-1]
    starts = zmin + step * np.arange(int(np.floor((zmax - zmin) / step)) + 1)
    counts = np.searchsorted(zs, starts + slab_thickness, side="right") - np.searchsorted(zs, starts, side="left")
    best = int(np.argmax(counts))
    z0 = float(starts[best])
    return z0, (z >= z0) & (z <= z0 + slab_thickness)


def sweep_horizontal_slab(cloud: PointCloud, slab_thickness: float, step: float) -> BoundingBox | None:
    """Slide a thin horizontal slab upward and box the densest one.

    Ties go to the lowest slab. Returns None for an empty cloud.
    """
    found = densest_slab(cloud, slab_thickness, step)
    if found is None:
        return None
    _, mask = found
    pts = cloud.points[mask]
    return BoundingBox.axis_aligned(pts.min(axis=0), pts.max(axis=0))
