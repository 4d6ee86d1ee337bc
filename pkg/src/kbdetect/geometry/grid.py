"""Ground-plane occupancy grids and Hough line extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..pointcloud import PointCloud


@dataclass(frozen=True, eq=False)
class OccupancyGrid2D:
    """Point counts per (x, y) cell.

    Cell ``(i, j)`` covers ``[x0 + i*s, x0 + (i+1)*s) x [y0 + j*s, y0 + (j+1)*s)``.
    ``z_extent`` holds ``max(z) - min(z)`` of the points in each cell (0 for
    empty cells); tall vertical structures show up as large extents.
    """

    origin: tuple[float, float]
    cell_size: float
    counts: np.ndarray
    z_extent: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.counts.shape

    def occupied(self, min_count: int = 1, min_extent: float = 0.0) -> np.ndarray:
        mask = self.counts >= max(min_count, 1)
        if min_extent > 0:
            mask &= self.z_extent >= min_extent
        return mask

    def cell_centers(self, mask: np.ndarray) -> np.ndarray:
        ii, jj = np.nonzero(mask)
        s = self.cell_size
        return np.column_stack([self.origin[0] + (ii + 0.5) * s, self.origin[1] + (jj + 0.5) * s])

    def to_pgm(self, path) -> None:
        """Dump counts as an 8-bit PGM (row = y descending) for inspection."""
        img = self.counts.T[::-1].astype(float)
        peak = img.max() if img.size and img.max() > 0 else 1.0
        data = np.round(255.0 * img / peak).astype(np.uint8)
        with open(path, "wb") as fh:
            fh.write(f"P5\n{data.shape[1]} {data.shape[0]}\n255\n".encode("ascii"))
            fh.write(data.tobytes())


def project_to_ground(cloud: PointCloud, cell_size: float, z_range=None) -> OccupancyGrid2D:
    """Count points per ground cell over the cloud's xy bounds.

    Only points with ``z_range[0] <= z <= z_range[1]`` are counted when a
    range is given; the grid still spans the whole cloud.
    """
    if cell_size <= 0:
        raise ValueError("cell_size must be positive")
    if len(cloud) == 0:
        raise ValueError("cannot project an empty cloud")
    pts = cloud.points
    x0, y0 = pts[:, 0].min(), pts[:, 1].min()
    nx = int(math.floor((pts[:, 0].max() - x0) / cell_size)) + 1
    ny = int(math.floor((pts[:, 1].max() - y0) / cell_size)) + 1
    if z_range is not None:
        zmin, zmax = z_range
        pts = pts[(pts[:, 2] >= zmin) & (pts[:, 2] <= zmax)]
    counts = np.zeros(nx * ny, dtype=np.int64)
    extent = np.zeros(nx * ny)
    if len(pts):
        ii = np.minimum(np.floor((pts[:, 0] - x0) / cell_size).astype(np.int64), nx - 1)
        jj = np.minimum(np.floor((pts[:, 1] - y0) / cell_size).astype(np.int64), ny - 1)
        flat = ii * ny + jj
        counts = np.bincount(flat, minlength=nx * ny)
        order = np.argsort(flat, kind="stable")
        fs = flat[order]
        zs = pts[order, 2]
        starts = np.flatnonzero(np.r_[True, fs[1:] != fs[:-1]])
        cells = fs[starts]
        extent[cells] = np.maximum.reduceat(zs, starts) - np.minimum.reduceat(zs, starts)
    return OccupancyGrid2D((float(x0), float(y0)), float(cell_size),
                           counts.reshape(nx, ny), extent.reshape(nx, ny))


@dataclass(frozen=True)
class LineSegment2D:
    """Segment ``p0 -> p1`` on the line ``x cos(theta) + y sin(theta) = rho``."""

    p0: tuple[float, float]
    p1: tuple[float, float]
    rho: float
    theta: float
    votes: int

    @property
    def length(self) -> float:
        return math.dist(self.p0, self.p1)

    @property
    def direction(self) -> np.ndarray:
        d = np.subtract(self.p1, self.p0)
        return d / np.linalg.norm(d)

    @classmethod
    def through(cls, p0, p1, votes: int = 0) -> "LineSegment2D":
        """Segment between two points with its normal-form parameters filled in."""
        p0 = (float(p0[0]), float(p0[1]))
        p1 = (float(p1[0]), float(p1[1]))
        dx, dy = p1[0] - p0[0], p1[1] - p0[1]
        if dx == 0 and dy == 0:
            raise ValueError("segment endpoints coincide")
        theta, rho = _normal_form(np.array([-dy, dx]), np.array(p0))
        return cls(p0, p1, rho, theta, votes)


def _normal_form(normal, point) -> tuple[float, float]:
    theta = math.atan2(normal[1], normal[0]) + 0.0  # drop -0.0
    if theta < 0:
        theta += math.pi
    if theta >= math.pi:
        theta -= math.pi
    n = np.array([math.cos(theta), math.sin(theta)])
    return theta, float(n @ point)


def hough_accumulator(centers: np.ndarray, rho_res: float, theta_res: float):
    """Vote every center once into each ``(rho, theta)`` bin it lies on.

    Returns ``(acc, rho_bins, thetas)`` where ``acc[r, t]`` counts centers and
    ``rho_bins[r] * rho_res`` is the bin's rho.
    """
    n_theta = max(int(round(math.pi / theta_res)), 1)
    thetas = np.arange(n_theta) * theta_res
    if len(centers) == 0:
        return np.zeros((0, n_theta), dtype=np.int64), np.zeros(0, dtype=np.int64), thetas
    rho = centers[:, 0:1] * np.cos(thetas) + centers[:, 1:2] * np.sin(thetas)
    bins = np.round(rho / rho_res).astype(np.int64)
    lo = bins.min()
    n_rho = int(bins.max() - lo) + 1
    flat = (bins - lo) * n_theta + np.arange(n_theta)
    acc = np.bincount(flat.ravel(), minlength=n_rho * n_theta).reshape(n_rho, n_theta)
    return acc, np.arange(lo, lo + n_rho), thetas


def refine_line(centers: np.ndarray, theta: float, rho: float, weights=None) -> tuple[float, float]:
    """Total-least-squares line through ``centers``, as ``(theta, rho)`` facing like ``theta``.

    ``weights`` (e.g. point counts per cell) default to 1.
    """
    if len(centers) < 2:
        return theta, rho
    w = np.ones(len(centers)) if weights is None else np.asarray(weights, dtype=float)
    m = (w[:, None] * centers).sum(axis=0) / w.sum()
    d = centers - m
    _, vecs = np.linalg.eigh((w[:, None] * d).T @ d)
    direction = vecs[:, 1]
    normal = np.array([-direction[1], direction[0]])
    if normal @ np.array([math.cos(theta), math.sin(theta)]) < 0:
        normal = -normal
    return _normal_form(normal, m)


def trace_runs(centers: np.ndarray, rho: float, theta: float, tol: float, gap: float):
    """Split the centers within ``tol`` of a line into gap-separated runs.

    Returns ``(near_mask, runs)`` where each run is ``(t_min, t_max, index_array)``
    with ``t`` the position along the line direction ``(-sin, cos)``.
    """
    n = np.array([math.cos(theta), math.sin(theta)])
    d = np.array([-n[1], n[0]])
    near = np.abs(centers @ n - rho) <= tol
    idx = np.flatnonzero(near)
    if len(idx) == 0:
        return near, []
    t = centers[idx] @ d
    order = np.argsort(t, kind="stable")
    t, idx = t[order], idx[order]
    breaks = np.flatnonzero(np.diff(t) > gap) + 1
    runs = []
    for part_t, part_i in zip(np.split(t, breaks), np.split(idx, breaks)):
        runs.append((float(part_t[0]), float(part_t[-1]), part_i))
    return near, runs


def _main_run(centers: np.ndarray, active: np.ndarray, rho: float, theta: float, tol: float,
              gap: float) -> np.ndarray:
    """Sorted indices of the run holding the most active cells (empty if none).

    The run itself may include inactive cells.
    """
    _, runs = trace_runs(centers, rho, theta, tol, gap)
    if not runs:
        return np.zeros(0, dtype=np.int64)
    best = max(runs, key=lambda r: (int(active[r[2]].sum()), len(r[2])))
    if not active[best[2]].any():
        return np.zeros(0, dtype=np.int64)
    return np.sort(best[2])


def run_to_segment(t0: float, t1: float, rho: float, theta: float, cell_size: float,
                   votes: int) -> LineSegment2D:
    n = np.array([math.cos(theta), math.sin(theta)])
    d = np.array([-n[1], n[0]])
    foot = rho * n
    # cell centers sit half a cell inside the true ends
    a = foot + (t0 - cell_size / 2) * d
    b = foot + (t1 + cell_size / 2) * d
    return LineSegment2D((float(a[0]), float(a[1])), (float(b[0]), float(b[1])),
                         float(rho), float(theta), int(votes))


_REFINE_ROUNDS = 5


def hough_lines(grid: OccupancyGrid2D, rho_res: float = 0.05, theta_res: float = math.radians(1.0),
                min_votes: int = 40, min_length: float = 1.0, min_cell_count: int = 1,
                min_cell_extent: float = 0.0) -> list[LineSegment2D]:
    """Extract line segments from occupied cells.

    Each occupied cell casts one vote per ``theta`` (so dense cells do not
    outvote long ones). The strongest peak is refined by a count-weighted
    total-least-squares fit of its main run of cells, traced into maximal
    runs with gaps up to two cells, and its cells stop voting before the
    next peak is taken. Tracing still
    sees cells claimed by earlier lines, so a line crossing another one is
    not cut in two. Runs shorter than ``min_length``, or made only of
    claimed cells, are dropped.

    Returns segments sorted by votes (descending), then ``(rho, theta)``.
    """
    if rho_res <= 0 or theta_res <= 0:
        raise ValueError("Hough resolutions must be positive")
    if min_votes < 1:
        raise ValueError("min_votes must be >= 1")
    s = grid.cell_size
    mask = grid.occupied(min_cell_count, min_cell_extent)
    centers = grid.cell_centers(mask)
    weights = grid.counts[mask].astype(float)
    # the epsilon keeps centers exactly one cell off the line inside the band
    tol = max(rho_res, s) + 1e-9
    gap = 2.0 * s
    active = np.ones(len(centers), dtype=bool)
    segments = []
    while active.any():
        live = np.flatnonzero(active)
        acc, rho_bins, thetas = hough_accumulator(centers[live], rho_res, theta_res)
        peak = int(np.argmax(acc))
        r_i, t_i = divmod(peak, acc.shape[1])
        if acc[r_i, t_i] < min_votes:
            break
        theta0, rho0 = float(thetas[t_i]), float(rho_bins[r_i] * rho_res)
        near0, _ = trace_runs(centers[live], rho0, theta0, tol, gap)
        theta, rho = theta0, rho0
        # refit on the main run only, reselecting around each refined line:
        # cells picked by the coarse peak, or of walls crossing its extension,
        # bias the fit; cells already claimed by a crossing line still count
        sel = _main_run(centers, active, rho, theta, tol, gap)
        for _ in range(_REFINE_ROUNDS):
            if len(sel) < 2:
                break
            theta, rho = refine_line(centers[sel], theta, rho, weights[sel])
            nxt = _main_run(centers, active, rho, theta, tol, gap)
            if len(nxt) == 0 or np.array_equal(nxt, sel):
                break
            sel = nxt
        near, runs = trace_runs(centers, rho, theta, tol, gap)
        for t0, t1, idx in runs:
            if t1 - t0 + s >= min_length and active[idx].any():
                segments.append(run_to_segment(t0, t1, rho, theta, s, len(idx)))
        active[live[near0]] = False
        active[near] = False
    segments.sort(key=lambda g: (-g.votes, g.rho, g.theta))
    return segments
