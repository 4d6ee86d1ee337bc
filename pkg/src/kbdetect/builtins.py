"""Processing built-ins: plane detection and the topology predicates.

``plane_detection`` picks one of three strategies from its arguments:

(a) a vertical element near a known position: crop around the prior,
    find the strongest line locally, follow it over the whole cloud and
    lift it back to 3D;
(b) vertical elements anywhere: Hough lines over the whole ground
    projection, each lifted back to 3D and validated;
(c) a horizontal element: densest horizontal slab.

Every candidate must fit a plane, and with ``texture=Flat`` the refit
residual must stay under ``planarity_rms_max``. Boxes are built from the
plane inliers so stray points from adjoining surfaces do not inflate them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import NamedTuple

import numpy as np

from .boxes import BoundingBox
from .geometry import (
    HORIZONTAL,
    VERTICAL,
    Descriptors,
    LineSegment2D,
    OccupancyGrid2D,
    PlaneFit,
    back_z_projection,
    box_descriptors,
    fit_plane,
    hough_lines,
    is_connected,
    is_parallel,
    is_perpendicular,
    oriented_box_from_points,
    project_to_ground,
)
from .geometry.grid import refine_line, run_to_segment, trace_runs
from .geometry.planes import densest_slab
from .knowledge import KnowledgeBase
from .pointcloud import PointCloud, cloud_bounds, crop_to_box
from .rules.registry import IN, OUT, BuiltinDef, BuiltinError, BuiltinRegistry, standard_registry

NAMESPACE = "proc"
ANY = "Any"
FLAT = "Flat"
THICKNESS_TAGS = ("Thick", "Thin", ANY)
ORIENTATION_TAGS = (VERTICAL, HORIZONTAL, ANY)
TEXTURE_TAGS = (FLAT, ANY)


@dataclass(frozen=True)
class DetectionConfig:
    """Tunable parameters of detection, topology and the search loop.

    Angles (``theta_res``, ``perpendicular_tol``, ``parallel_tol``) are in
    degrees; lengths in meters.
    """

    cell_size: float = 0.05
    rho_res: float = 0.05
    theta_res: float = 1.0
    min_votes: int = 40
    min_line_length: float = 1.0
    min_cell_extent: float = 0.5
    slab_thickness: float = 0.10
    slab_step: float = 0.05
    wall_thickness_slab: float = 0.20
    plane_dist_threshold: float = 0.02
    min_inlier_fraction: float = 0.8
    min_points: int = 100
    planarity_rms_max: float = 0.02
    perpendicular_tol: float = 5.0
    parallel_tol: float = 5.0
    connection_gap_tol: float = 0.10
    big_size_min: float = 3.0
    prior_radius: float = 0.5
    search_margin: float = 0.5
    enlargement_factor: float = 1.5
    max_enlargements: int = 3
    max_refinement_iterations: int = 5

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{f.name} must be a finite number, got {v!r}")
            if f.name == "max_enlargements":
                if v < 0 or int(v) != v:
                    raise ValueError("max_enlargements must be a non-negative integer")
            elif v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v!r}")
        if self.enlargement_factor <= 1.0:
            raise ValueError("enlargement_factor must exceed 1")
        if self.min_inlier_fraction > 1.0:
            raise ValueError("min_inlier_fraction must be at most 1")

    @classmethod
    def from_dict(cls, d: dict) -> "DetectionConfig":
        return cls().with_overrides(d)

    def with_overrides(self, d: dict) -> "DetectionConfig":
        known = {f.name: f for f in fields(self)}
        unknown = sorted(set(d) - set(known))
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        vals = {}
        for k, v in d.items():
            if known[k].type == "int" and isinstance(v, float) and v.is_integer():
                v = int(v)
            vals[k] = v
        return replace(self, **vals)

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


@dataclass(frozen=True)
class HeightConstraint:
    """``op`` is ``">"`` or ``"<"`` (strict), or None for no constraint."""

    op: str | None = None
    bound: float = 0.0

    def __post_init__(self):
        if self.op not in (None, ">", "<"):
            raise ValueError(f"height operator must be '>' or '<', got {self.op!r}")
        if self.op is not None and not self.bound > 0:
            raise ValueError("height bound must be positive")

    def accepts(self, height: float) -> bool:
        if self.op == ">":
            return height > self.bound
        if self.op == "<":
            return height < self.bound
        return True

    @classmethod
    def parse(cls, value) -> "HeightConstraint":
        if isinstance(value, str):
            s = value.strip().replace(" ", "")
            if s.lower() == "any":
                return cls()
            if s[:1] in "<>":
                num = s[1:].rstrip("m")
                try:
                    return cls(s[0], float(num))
                except ValueError:
                    pass
        raise BuiltinError(f"height must be '>N', '<N' or Any, got {value!r}")

    def __str__(self):
        return ANY if self.op is None else f"{self.op}{self.bound:g}"


@dataclass(frozen=True)
class PlaneDetectionArgs:
    """What to look for and where.

    ``position`` is None (anywhere), an ``(x, y)`` prior or a prior box.
    ``enlargement`` scales the search region around a prior by
    ``enlargement_factor ** enlargement``.
    """

    element: str | None = None
    orientation: str = VERTICAL
    texture: str = FLAT
    thickness: str = ANY
    height: HeightConstraint = HeightConstraint()
    position: tuple | BoundingBox | None = None
    enlargement: int = 0

    def __post_init__(self):
        if self.orientation not in ORIENTATION_TAGS:
            raise BuiltinError(f"orientation must be one of {ORIENTATION_TAGS}, got {self.orientation!r}")
        if self.texture not in TEXTURE_TAGS:
            raise BuiltinError(f"texture must be one of {TEXTURE_TAGS}, got {self.texture!r}")
        if self.thickness not in THICKNESS_TAGS:
            raise BuiltinError(f"thickness must be one of {THICKNESS_TAGS}, got {self.thickness!r}")
        if isinstance(self.position, tuple):
            if len(self.position) < 2:
                raise BuiltinError("a point prior needs x and y")
            object.__setattr__(self, "position", (float(self.position[0]), float(self.position[1])))
        elif self.position is not None and not isinstance(self.position, BoundingBox):
            raise BuiltinError(f"unsupported position {self.position!r}")
        if self.enlargement < 0:
            raise BuiltinError("enlargement must be >= 0")

    def geometry_key(self) -> tuple:
        """Everything that affects the geometry (the element name does not)."""
        pos = self.position
        if isinstance(pos, BoundingBox):
            pos = ("box",) + pos._key()
        return (self.orientation, self.texture, self.height.op, self.height.bound, pos, self.enlargement)


class Detection(NamedTuple):
    box: BoundingBox
    descriptors: Descriptors


def detection_branch(args: PlaneDetectionArgs) -> str:
    """``"a"``, ``"b"`` or ``"c"`` for a single-orientation request; joined for Any."""
    if args.orientation == HORIZONTAL:
        return "c"
    vertical = "a" if args.position is not None else "b"
    return vertical if args.orientation == VERTICAL else vertical + "+c"


# -- candidates ------------------------------------------------------------

def _validated(segment_pts: np.ndarray, args: PlaneDetectionArgs, config: DetectionConfig):
    """Plane-fit a pre-segmented point set; returns ``(inlier_points, fit)`` or None."""
    if len(segment_pts) < max(3, config.min_points):
        return None
    fit = fit_plane(segment_pts, config.plane_dist_threshold, config.min_inlier_fraction)
    if fit is None:
        return None
    inliers = segment_pts[fit.inliers]
    # refit on the inliers so grazing points of neighbouring surfaces drop out
    refit = fit_plane(inliers, config.plane_dist_threshold, 0.0)
    if refit is None:
        return None
    if args.texture == FLAT and refit.rms_residual > config.planarity_rms_max:
        return None
    return inliers, refit


def _accept(box: BoundingBox, fit: PlaneFit, orientation: str, args: PlaneDetectionArgs,
            config: DetectionConfig) -> Detection | None:
    desc = box_descriptors(box, fit, config.big_size_min)
    if desc.orientation != orientation or not args.height.accepts(desc.height):
        return None
    return Detection(box, desc)


def _vertical_from_footprint(cloud: PointCloud, footprint: LineSegment2D, args, config) -> Detection | None:
    found = back_z_projection(cloud, footprint, config.wall_thickness_slab, config.min_points)
    if found is None:
        return None
    segment, _ = found
    ok = _validated(segment.points, args, config)
    if ok is None:
        return None
    inliers, fit = ok
    # the fitted plane gives a better direction than the footprint's Hough angle
    direction = np.array([-fit.normal[1], fit.normal[0]])
    if np.linalg.norm(direction) < 1e-6:
        return None
    if direction @ footprint.direction < 0:
        direction = -direction
    box = oriented_box_from_points(inliers, direction)
    return _accept(box, fit, VERTICAL, args, config)


def _hough(grid: OccupancyGrid2D, config: DetectionConfig, min_votes: int) -> list[LineSegment2D]:
    return hough_lines(grid, config.rho_res, math.radians(config.theta_res), min_votes,
                       config.min_line_length, 1, config.min_cell_extent)


def _same_place(a: BoundingBox, b: BoundingBox, config: DetectionConfig) -> bool:
    if np.linalg.norm(a.center - b.center) >= config.rho_res:
        return False
    cos = min(1.0, abs(float(a.u @ b.u)))
    return math.acos(cos) < math.radians(config.theta_res)


class _CloudCache:
    """Per-cloud products shared between calls: the ground grid and its lines."""

    def __init__(self):
        self.grid: OccupancyGrid2D | None = None
        self.lines: list[LineSegment2D] | None = None
        self.vertical: PointCloud | None = None

    def full_grid(self, cloud, config):
        if self.grid is None:
            self.grid = project_to_ground(cloud, config.cell_size)
        return self.grid

    def vertical_cloud(self, cloud, config):
        """Points in cells tall enough to hold part of a vertical structure."""
        if self.vertical is None:
            grid = self.full_grid(cloud, config)
            tall = grid.occupied(1, config.min_cell_extent)
            s = grid.cell_size
            nx, ny = grid.shape
            pts = cloud.points
            ii = np.minimum(np.floor((pts[:, 0] - grid.origin[0]) / s).astype(np.int64), nx - 1)
            jj = np.minimum(np.floor((pts[:, 1] - grid.origin[1]) / s).astype(np.int64), ny - 1)
            self.vertical = cloud.subset(tall[ii, jj])
        return self.vertical

    def full_lines(self, cloud, config):
        if self.lines is None:
            self.lines = _hough(self.full_grid(cloud, config), config, config.min_votes)
        return self.lines


def _branch_b(cloud, args, config, cache) -> list[Detection]:
    out: list[Detection] = []
    tall = cache.vertical_cloud(cloud, config)
    for seg in cache.full_lines(cloud, config):
        det = _vertical_from_footprint(tall, seg, args, config)
        if det is None:
            continue
        if any(_same_place(det.box, kept.box, config) for kept in out):
            continue
        out.append(det)
    return out


def search_region(cloud: PointCloud, position, enlargement: int, config: DetectionConfig) -> BoundingBox:
    """Crop box around a prior after ``enlargement`` retries.

    A point prior gets a square of half width ``prior_radius + search_margin``;
    a box prior is padded by ``search_margin``. Either is then scaled
    horizontally by ``enlargement_factor ** enlargement``. Point priors span
    the full height of the cloud.
    """
    scale = config.enlargement_factor ** enlargement
    if isinstance(position, BoundingBox):
        return position.expanded(scale, config.search_margin)
    b = cloud_bounds(cloud)
    half = (config.prior_radius + config.search_margin) * scale
    zc = (b.min[2] + b.max[2]) / 2.0
    hz = max((b.max[2] - b.min[2]) / 2.0, 0.0) + config.search_margin
    return BoundingBox.upright((position[0], position[1], zc), (1.0, 0.0), (half, half, hz))


def _extend_along_cloud(cloud, local: LineSegment2D, config, cache) -> LineSegment2D:
    """Follow a locally found line over the whole ground grid."""
    grid = cache.full_grid(cloud, config)
    s = grid.cell_size
    mask = grid.occupied(1, config.min_cell_extent)
    centers = grid.cell_centers(mask)
    weights = grid.counts[mask]
    mid = (np.asarray(local.p0) + np.asarray(local.p1)) / 2.0
    half = local.length / 2.0
    rho, theta = local.rho, local.theta
    found = None
    for _ in range(2):
        _, runs = trace_runs(centers, rho, theta, max(config.rho_res, s), 2.0 * s)
        d = np.array([-math.sin(theta), math.cos(theta)])
        tm = float(mid @ d)
        best, best_overlap = None, 0.0
        for r0, r1, idx in runs:
            overlap = min(tm + half, r1 + s) - max(tm - half, r0 - s)
            if overlap > best_overlap:
                best, best_overlap = (r0, r1, idx), overlap
        if best is None:
            break
        found = (best, rho, theta)
        # refit the line on the whole run before tracing again
        theta, rho = refine_line(centers[best[2]], theta, rho, weights[best[2]])
    if found is None:
        return local
    (r0, r1, idx), rho, theta = found
    return run_to_segment(r0, r1, rho, theta, s, len(idx))


def _branch_a(cloud, args, config, cache) -> list[Detection]:
    region = search_region(cloud, args.position, args.enlargement, config)
    local_cloud = crop_to_box(cloud, region)
    if len(local_cloud) < config.min_points:
        return []
    grid = project_to_ground(local_cloud, config.cell_size)
    min_votes = max(1, math.ceil(config.min_line_length / config.cell_size))
    tall = cache.vertical_cloud(cloud, config)
    for seg in _hough(grid, config, min_votes):
        det = _vertical_from_footprint(tall, _extend_along_cloud(cloud, seg, config, cache), args, config)
        if det is not None:
            return [det]
    return []


def _branch_c(cloud, args, config) -> list[Detection]:
    if isinstance(args.position, BoundingBox):
        cloud = crop_to_box(cloud, search_region(cloud, args.position, args.enlargement, config))
    found = densest_slab(cloud, config.slab_thickness, config.slab_step)
    if found is None:
        return []
    _, mask = found
    ok = _validated(cloud.points[mask], args, config)
    if ok is None:
        return []
    inliers, fit = ok
    box = BoundingBox.axis_aligned(inliers.min(axis=0), inliers.max(axis=0))
    det = _accept(box, fit, HORIZONTAL, args, config)
    return [] if det is None else [det]


def plane_detection(cloud: PointCloud, args: PlaneDetectionArgs, config: DetectionConfig | None = None,
                    _cache: _CloudCache | None = None) -> list[Detection]:
    """Detect planar elements matching ``args``.

    Returns ``(box, descriptors)`` pairs. Every box satisfies the height
    constraint and has the requested orientation. Vertical results without
    a prior come in Hough order (votes descending, then rho, theta); a
    prior yields at most one vertical result.
    """
    config = config or DetectionConfig()
    if len(cloud) == 0:
        raise BuiltinError("plane detection on an empty cloud")
    if args.orientation == HORIZONTAL and isinstance(args.position, tuple):
        raise BuiltinError("a horizontal element cannot be searched from a point prior")
    cache = _cache or _CloudCache()
    out: list[Detection] = []
    if args.orientation in (VERTICAL, ANY):
        if args.position is None:
            out += _branch_b(cloud, args, config, cache)
        else:
            out += _branch_a(cloud, args, config, cache)
    if args.orientation in (HORIZONTAL, ANY) and not isinstance(args.position, tuple):
        out += _branch_c(cloud, args, config)
    return out


class PlaneDetector:
    """Plane detection bound to one cloud, with results cached per argument set.

    ``calls`` counts how many times the geometry actually ran.
    """

    def __init__(self, cloud: PointCloud, config: DetectionConfig | None = None):
        self.cloud = cloud
        self.config = config or DetectionConfig()
        self.calls = 0
        self._memo: dict[tuple, list[Detection]] = {}
        self._cache = _CloudCache()

    def detect(self, args: PlaneDetectionArgs) -> list[Detection]:
        key = args.geometry_key()
        if key not in self._memo:
            self.calls += 1
            self._memo[key] = plane_detection(self.cloud, args, self.config, self._cache)
        return list(self._memo[key])


# -- knowledge base adapters -------------------------------------------------

BOX_CLASS = "BoundingBox"


def box_of(kb: KnowledgeBase, ref) -> BoundingBox:
    if isinstance(ref, BoundingBox):
        return ref
    if isinstance(ref, str) and kb.has_individual(ref):
        box = kb.value(ref, "hasBoxGeometry")
        if isinstance(box, BoundingBox):
            return box
    raise BuiltinError(f"{ref!r} does not resolve to a stored box")


def parse_detection_args(values, kb: KnowledgeBase | None = None) -> PlaneDetectionArgs:
    """Build arguments from the six input values of a Plane_Detection atom.

    The position may be Any, an ``(x, y)`` tuple, a box, or the name of an
    individual whose hasBoxGeometry (preferred) or hasPosition is the prior.
    """
    if len(values) != 6:
        raise BuiltinError(f"Plane_Detection takes 6 inputs, got {len(values)}")
    element, orientation, texture, thickness, height, position = values
    tag = lambda v: v if not isinstance(v, str) or v.lower() != "any" else ANY  # noqa: E731
    if isinstance(position, str):
        if position.lower() == "any":
            position = None
        elif kb is not None and kb.has_individual(position):
            prior = kb.value(position, "hasBoxGeometry")
            if prior is None:
                prior = kb.value(position, "hasPosition")
            if prior is None:
                raise BuiltinError(f"individual {position!r} has no position")
            position = prior
        else:
            raise BuiltinError(f"cannot resolve position {position!r}")
    return PlaneDetectionArgs(
        element=element if isinstance(element, str) else None,
        orientation=tag(orientation), texture=tag(texture), thickness=tag(thickness),
        height=HeightConstraint.parse(height), position=position)


def materialize_box(kb: KnowledgeBase, det: Detection) -> str:
    """Store a detected box as an individual and return its name.

    A box identical to one already stored reuses that individual, so
    re-running detection adds nothing.
    """
    for fact in kb.facts("hasBoxGeometry"):
        if fact.object == det.box and kb.instance_of(fact.subject, BOX_CLASS):
            return fact.subject
    n = len(kb.instances(BOX_CLASS)) + 1
    while kb.has_individual(f"box{n}"):
        n += 1
    name = f"box{n}"
    kb.add_individual(name, BOX_CLASS)
    d = det.descriptors
    kb.assert_fact(name, "hasBoxGeometry", det.box)
    kb.assert_fact(name, "hasPosition", (float(det.box.center[0]), float(det.box.center[1])))
    kb.assert_fact(name, "hasHeight", float(d.height))
    kb.assert_fact(name, "hasOrientation", d.orientation)
    kb.assert_fact(name, "hasSize", d.size)
    kb.assert_fact(name, "hasPlanarity", float(d.planarity_rms))
    return name


def _plane_detection_builtin(detector: PlaneDetector):
    def func(ctx, args):
        kb = ctx.kb
        pd_args = parse_detection_args(args[:6], kb)
        names = [materialize_box(kb, det) for det in detector.detect(pd_args)]
        element = pd_args.element
        if names and element is not None and kb.has_individual(element):
            kb.assert_fact(element, "hasDetectionRes", True)
        return [(n,) for n in names]
    return BuiltinDef(NAMESPACE, "Plane_Detection", (IN,) * 6 + (OUT,), func,
                      generative=True, memoizable=True)


def perpendicular_builtin(kb: KnowledgeBase, a, b, config: DetectionConfig | None = None) -> bool:
    """Perpendicular planes that are also within three gap tolerances of each other."""
    config = config or DetectionConfig()
    if a == b:
        return False
    ba, bb = box_of(kb, a), box_of(kb, b)
    return (is_perpendicular(ba, bb, config.perpendicular_tol)
            and is_connected(ba, bb, 3.0 * config.connection_gap_tol))


def connection_builtin(kb: KnowledgeBase, a, b, config: DetectionConfig | None = None) -> bool:
    config = config or DetectionConfig()
    if a == b:
        return False
    return is_connected(box_of(kb, a), box_of(kb, b), config.connection_gap_tol)


def parallel_builtin(kb: KnowledgeBase, a, b, config: DetectionConfig | None = None) -> bool:
    config = config or DetectionConfig()
    if a == b:
        return False
    return is_parallel(box_of(kb, a), box_of(kb, b), config.parallel_tol)


def register_processing_builtins(registry: BuiltinRegistry, detector: PlaneDetector | None = None,
                                 config: DetectionConfig | None = None) -> BuiltinRegistry:
    """Add ``proc:Plane_Detection``, ``proc:Perpendicular``, ``proc:Connection``
    and ``proc:Parallel`` to ``registry``.

    Without a detector, Plane_Detection is registered for validation only
    and fails when called.
    """
    config = detector.config if detector is not None else (config or DetectionConfig())
    if detector is not None:
        registry.register(_plane_detection_builtin(detector))
    else:
        def missing(ctx, args):
            raise BuiltinError("no point cloud is attached")
        registry.register(BuiltinDef(NAMESPACE, "Plane_Detection", (IN,) * 6 + (OUT,), missing,
                                     generative=True, memoizable=True))
    for name, pred in (("Perpendicular", perpendicular_builtin), ("Connection", connection_builtin),
                       ("Parallel", parallel_builtin)):
        registry.register(BuiltinDef(
            NAMESPACE, name, (IN, IN),
            lambda ctx, args, pred=pred: pred(ctx.kb, args[0], args[1], config),
            memoizable=True))
    return registry


def processing_registry(detector: PlaneDetector | None = None,
                        config: DetectionConfig | None = None) -> BuiltinRegistry:
    """Standard comparisons plus the processing built-ins."""
    return register_processing_builtins(standard_registry(), detector, config)


__all__ = [
    "ANY", "BOX_CLASS", "FLAT", "NAMESPACE", "Detection", "DetectionConfig", "HeightConstraint",
    "PlaneDetectionArgs", "PlaneDetector", "box_of", "connection_builtin", "detection_branch",
    "materialize_box", "parallel_builtin", "parse_detection_args", "perpendicular_builtin",
    "plane_detection", "processing_registry", "register_processing_builtins", "search_region",
]
