"""Spatial relations between boxes: angles, distance, overlap."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import lsq_linear
from shapely.geometry import Polygon

from ..boxes import BoundingBox


def plane_normal(box: BoundingBox) -> np.ndarray:
    # first axis wins ties so the relation stays defined for cubes
    return box.axes[int(np.argmin(box.half_extents))]


def normal_angle(a: BoundingBox, b: BoundingBox) -> float:
    """Unsigned angle in degrees, in [0, 90], between the dominant-plane normals."""
    c = abs(float(plane_normal(a) @ plane_normal(b)))
    return math.degrees(math.acos(min(1.0, c)))


def is_perpendicular(a: BoundingBox, b: BoundingBox, angle_tol: float = 5.0) -> bool:
    return 90.0 - normal_angle(a, b) <= angle_tol


def is_parallel(a: BoundingBox, b: BoundingBox, angle_tol: float = 5.0) -> bool:
    return normal_angle(a, b) <= angle_tol


def box_distance(a: BoundingBox, b: BoundingBox) -> float:
    """Minimum Euclidean distance between two solid boxes (0 if they overlap).

    Solved as a bounded least-squares problem over the local coordinates of
    one point in each box.
    """
    m = np.hstack([a.axes.T, -b.axes.T])
    rhs = b.center - a.center
    bound = np.concatenate([a.half_extents, b.half_extents])
    res = lsq_linear(m, rhs, bounds=(-bound, bound), method="bvls")
    return float(np.linalg.norm(m @ res.x - rhs))


def is_connected(a: BoundingBox, b: BoundingBox, gap_tol: float = 0.1) -> bool:
    return box_distance(a, b) <= gap_tol


def _footprint(box: BoundingBox) -> Polygon:
    c = box.center[:2]
    u = box.u[:2] * box.half_extents[0]
    v = box.v[:2] * box.half_extents[1]
    return Polygon([c - u - v, c + u - v, c + u + v, c - u + v])


def box_iou(a: BoundingBox, b: BoundingBox, min_thickness: float = 0.0) -> float:
    """Volume intersection over union of two upright boxes.

    With ``min_thickness`` > 0 every extent is first padded to at least that
    size, so thin planar boxes are compared as slabs of a common thickness.
    """
    if not (a.is_upright and b.is_upright):
        raise ValueError("box_iou supports upright boxes only")
    if min_thickness > 0:
        a = BoundingBox(a.center, a.axes, np.maximum(a.half_extents, min_thickness / 2))
        b = BoundingBox(b.center, b.axes, np.maximum(b.half_extents, min_thickness / 2))
    area = _footprint(a).intersection(_footprint(b)).area
    lo = max(a.center[2] - a.half_extents[2], b.center[2] - b.half_extents[2])
    hi = min(a.center[2] + a.half_extents[2], b.center[2] + b.half_extents[2])
    inter = area * max(0.0, hi - lo)
    union = a.volume() + b.volume() - inter
    return float(inter / union) if union > 0 else 0.0
