"""Numeric descriptors of a detected box (orientation, height, size, flatness)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..boxes import UP, BoundingBox
from .planes import PlaneFit

VERTICAL = "Vertical"
HORIZONTAL = "Horizontal"
OBLIQUE = "Oblique"
BIG = "Big"
SMALL = "Small"

ORIENTATION_TOL_DEG = 10.0


@dataclass(frozen=True)
class Descriptors:
    orientation: str
    height: float
    size: str
    planarity_rms: float


def dominant_normal(box: BoundingBox) -> np.ndarray | None:
    """Axis of the strictly smallest half extent, or None on a tie."""
    order = np.argsort(box.half_extents, kind="stable")
    h = box.half_extents
    if h[order[0]] == h[order[1]]:
        return None
    return box.axes[order[0]]


def box_descriptors(box: BoundingBox, source_fit: PlaneFit | None = None,
                    big_size_min: float = 3.0) -> Descriptors:
    """Classify a box's dominant plane and report its size figures.

    The dominant plane is the face spanned by the two largest extents. It
    is Horizontal when its normal is within 10 degrees of up, Vertical when
    within 10 degrees of horizontal, Oblique otherwise (including ties).
    """
    normal = dominant_normal(box)
    if normal is None:
        orientation = OBLIQUE
    else:
        tilt = math.degrees(math.acos(min(1.0, abs(float(normal @ UP)))))
        if tilt <= ORIENTATION_TOL_DEG:
            orientation = HORIZONTAL
        elif tilt >= 90.0 - ORIENTATION_TOL_DEG:
            orientation = VERTICAL
        else:
            orientation = OBLIQUE
    hu, hv, _ = box.half_extents
    size = BIG if 2.0 * max(hu, hv) >= big_size_min else SMALL
    rms = source_fit.rms_residual if source_fit is not None else 0.0
    return Descriptors(orientation, box.height(), size, float(rms))
