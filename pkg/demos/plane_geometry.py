"""Ground projection, Hough lines and a least-squares plane fit on two synthetic walls."""

import math

import numpy as np

from kbdetect.geometry import fit_plane, hough_lines, project_to_ground
from kbdetect.pointcloud import PointCloud

rng = np.random.default_rng(0)


def wall(p0, p1, height=3.0, density=300):
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    n = int(np.linalg.norm(p1 - p0) * height * density)
    a, b = rng.random(n), rng.random(n)
    return np.column_stack([p0 + np.outer(a, p1 - p0), b * height])


cloud = PointCloud(np.vstack([wall((0, 0), (5, 0)), wall((6, 1), (6, 6))]))
grid = project_to_ground(cloud, 0.05)
for seg in hough_lines(grid, 0.05, math.radians(1.0), 40, 1.0, 1, 0.5):
    print(f"line rho={seg.rho:.3f} theta={math.degrees(seg.theta):.2f} deg "
          f"length={seg.length:.2f} votes={seg.votes}")

pts = np.column_stack([2.0 + rng.normal(0, 0.005, 10_000), rng.random((10_000, 2)) * 4])
fit = fit_plane(pts, 0.05)
print("plane x=2 fit: normal", np.round(fit.normal, 5), "offset", round(fit.offset, 5),
      "rms", round(fit.rms_residual, 5))
