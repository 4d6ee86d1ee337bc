"""Perpendicular, parallel and connected relations between boxes."""

import numpy as np

from kbdetect.boxes import BoundingBox
from kbdetect.geometry import box_distance, is_connected, is_parallel, is_perpendicular


def upright(p0, p1, height=3.0, thick=0.1):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    c = (p0 + p1) / 2
    return BoundingBox.upright((c[0], c[1], height / 2), p1 - p0,
                               (np.linalg.norm(p1 - p0) / 2, thick / 2, height / 2))


wall = upright((0, 0), (4, 0))
others = {
    "corner wall": upright((4.05, 0), (4.05, 4)),
    "far wall": upright((5, 0), (5, 4)),
    "opposite wall": upright((0, 2), (4, 2)),
    "floor": BoundingBox.axis_aligned((0, 0, -0.1), (8, 8, 0)),
}
for name, box in others.items():
    print(f"{name:14s} distance={box_distance(wall, box):.3f} perpendicular={is_perpendicular(wall, box, 5.0)} "
          f"parallel={is_parallel(wall, box, 5.0)} connected={is_connected(wall, box, 0.1)}")
