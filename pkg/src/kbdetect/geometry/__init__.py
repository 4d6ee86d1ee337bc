"""3D processing used by the rule layer."""

from ..boxes import BoundingBox
from .descriptors import BIG, HORIZONTAL, OBLIQUE, SMALL, VERTICAL, Descriptors, box_descriptors
from .grid import LineSegment2D, OccupancyGrid2D, hough_accumulator, hough_lines, project_to_ground
from .planes import (
    PlaneFit,
    back_z_projection,
    fit_plane,
    oriented_box_from_points,
    sweep_horizontal_slab,
)
from .topology import box_distance, box_iou, is_connected, is_parallel, is_perpendicular, normal_angle

__all__ = [
    "BIG", "HORIZONTAL", "OBLIQUE", "SMALL", "VERTICAL",
    "BoundingBox", "Descriptors", "LineSegment2D", "OccupancyGrid2D", "PlaneFit",
    "back_z_projection", "box_descriptors", "box_distance", "box_iou", "fit_plane",
    "hough_accumulator", "hough_lines", "is_connected", "is_parallel", "is_perpendicular",
    "normal_angle", "oriented_box_from_points", "project_to_ground", "sweep_horizontal_slab",
]
