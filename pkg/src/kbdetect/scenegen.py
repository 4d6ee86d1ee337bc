"""Synthetic indoor scenes: planar objects sampled into a noisy, occluded cloud.

A scene is a list of objects, each either an upright rectangle standing on
a ground-plane line (walls, panels, counters) or a horizontal rectangle
(floors). Every object is sampled with its own generator derived from the
scene seed and the object name, so adding or removing one object leaves the
points of the others unchanged.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace

import numpy as np

from .boxes import MIN_HALF_EXTENT, BoundingBox
from .knowledge import KnowledgeBase, builtin_vocabulary
from .pointcloud import PointCloud

VERTICAL_KIND = "vertical"
HORIZONTAL_KIND = "horizontal"


class SceneSpecError(ValueError):
    pass


@dataclass(frozen=True)
class Rectangle:
    """The parallelogram ``origin + a*edge_u + b*edge_v`` for ``a, b`` in ``[0, 1]``."""

    origin: tuple
    edge_u: tuple
    edge_v: tuple

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.edge_u, self.edge_v)
        return n / np.linalg.norm(n)

    @property
    def area(self) -> float:
        return float(np.linalg.norm(np.cross(self.edge_u, self.edge_v)))


@dataclass(frozen=True)
class SceneObject:
    name: str
    label: str
    kind: str
    start: tuple[float, float] = (0.0, 0.0)
    end: tuple[float, float] = (0.0, 0.0)
    height: float = 0.0
    base: float = 0.0

    def rectangle(self) -> Rectangle:
        x0, y0 = self.start
        x1, y1 = self.end
        if self.kind == VERTICAL_KIND:
            return Rectangle((x0, y0, self.base), (x1 - x0, y1 - y0, 0.0), (0.0, 0.0, self.height))
        return Rectangle((x0, y0, self.base), (x1 - x0, 0.0, 0.0), (0.0, y1 - y0, 0.0))

    def truth_box(self) -> BoundingBox:
        x0, y0 = self.start
        x1, y1 = self.end
        if self.kind == VERTICAL_KIND:
            length = math.hypot(x1 - x0, y1 - y0)
            center = ((x0 + x1) / 2, (y0 + y1) / 2, self.base + self.height / 2)
            return BoundingBox.upright(center, (x1 - x0, y1 - y0),
                                       (length / 2, MIN_HALF_EXTENT, self.height / 2))
        lo = (min(x0, x1), min(y0, y1), self.base)
        hi = (max(x0, x1), max(y0, y1), self.base)
        return BoundingBox.axis_aligned(lo, hi)

    def to_dict(self) -> dict:
        d = {"name": self.name, "label": self.label, "kind": self.kind,
             "start": list(self.start), "end": list(self.end)}
        if self.kind == VERTICAL_KIND:
            d["height"] = self.height
        d["base"] = self.base
        return d


@dataclass(frozen=True)
class SceneSpec:
    objects: tuple[SceneObject, ...]
    density: float = 500.0
    sigma: float = 0.01
    occlusion: float = 0.1
    seed: int = 42

    def validate(self, vocabulary: KnowledgeBase | None = None) -> None:
        vocabulary = vocabulary or builtin_vocabulary()
        if not self.density > 0:
            raise SceneSpecError("density must be positive")
        if not self.sigma >= 0:
            raise SceneSpecError("sigma must be non-negative")
        if not 0 <= self.occlusion < 1:
            raise SceneSpecError("occlusion must be in [0, 1)")
        names = set()
        for obj in self.objects:
            if obj.name in names:
                raise SceneSpecError(f"duplicate object name {obj.name!r}")
            names.add(obj.name)
            if obj.label not in vocabulary.classes:
                raise SceneSpecError(f"{obj.name}: unknown label {obj.label!r}")
            if obj.kind not in (VERTICAL_KIND, HORIZONTAL_KIND):
                raise SceneSpecError(f"{obj.name}: kind must be vertical or horizontal")
            if obj.kind == VERTICAL_KIND and not obj.height > 0:
                raise SceneSpecError(f"{obj.name}: height must be positive")
            if not obj.rectangle().area > 0:
                raise SceneSpecError(f"{obj.name}: degenerate footprint")

    def with_(self, **changes) -> "SceneSpec":
        return replace(self, **changes)

    def without(self, *names: str) -> "SceneSpec":
        return replace(self, objects=tuple(o for o in self.objects if o.name not in names))

    def to_dict(self) -> dict:
        return {"density": self.density, "sigma": self.sigma, "occlusion": self.occlusion,
                "seed": self.seed, "objects": [o.to_dict() for o in self.objects]}

    @classmethod
    def from_dict(cls, d: dict) -> "SceneSpec":
        try:
            objects = []
            for i, o in enumerate(d["objects"]):
                extra = set(o) - {"name", "label", "kind", "start", "end", "height", "base"}
                if extra:
                    raise SceneSpecError(f"objects[{i}]: unknown fields {sorted(extra)}")
                objects.append(SceneObject(
                    name=str(o["name"]), label=str(o["label"]), kind=str(o["kind"]),
                    start=tuple(float(x) for x in o["start"]), end=tuple(float(x) for x in o["end"]),
                    height=float(o.get("height", 0.0)), base=float(o.get("base", 0.0))))
            spec = cls(tuple(objects), float(d.get("density", 500.0)), float(d.get("sigma", 0.01)),
                       float(d.get("occlusion", 0.1)), int(d.get("seed", 42)))
        except (KeyError, TypeError, ValueError) as e:
            if isinstance(e, SceneSpecError):
                raise
            raise SceneSpecError(f"malformed scene spec: {e}") from None
        spec.validate()
        return spec


def load_scene_spec(path) -> SceneSpec:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as e:
            raise SceneSpecError(f"{path}: {e}") from None
    return SceneSpec.from_dict(doc)


def save_scene_spec(spec: SceneSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2)
        fh.write("\n")


def default_scene_spec(density: float = 500.0, seed: int = 42) -> SceneSpec:
    """An 8 x 8 m waiting area: four 5 m walls, floor, two 2.5 m panels and a 1 m counter."""
    v = VERTICAL_KIND
    objects = (
        SceneObject("wall_south", "Wall", v, (0.0, 0.0), (8.0, 0.0), 5.0),
        SceneObject("wall_east", "Wall", v, (8.0, 0.0), (8.0, 8.0), 5.0),
        SceneObject("wall_north", "Wall", v, (8.0, 8.0), (0.0, 8.0), 5.0),
        SceneObject("wall_west", "Wall", v, (0.0, 8.0), (0.0, 0.0), 5.0),
        SceneObject("floor", "Ground", HORIZONTAL_KIND, (0.0, 0.0), (8.0, 8.0)),
        SceneObject("panel_1", "Panel", v, (1.5, 3.0), (3.9, 3.0), 2.5),
        SceneObject("panel_2", "Panel", v, (5.0, 2.0), (5.0, 4.4), 2.5),
        SceneObject("counter", "Gate_Counter", v, (2.8, 5.8), (5.2, 5.8), 1.0),
    )
    return SceneSpec(objects, density=density, sigma=0.01, occlusion=0.1, seed=seed)


def sample_surface(rect: Rectangle, density: float, rng: np.random.Generator) -> PointCloud:
    """``round(area * density)`` points uniform on ``rect``."""
    params = _sample_params(rect, density, rng)
    return PointCloud(_params_to_points(rect, params))


def _sample_params(rect: Rectangle, density: float, rng) -> np.ndarray:
    if not density > 0:
        raise ValueError("density must be positive")
    area = rect.area
    if not area > 0:
        raise ValueError("degenerate rectangle")
    n = int(round(area * density))
    return rng.random((n, 2))


def _params_to_points(rect: Rectangle, params: np.ndarray) -> np.ndarray:
    return (np.asarray(rect.origin, dtype=float) + params[:, :1] * np.asarray(rect.edge_u, dtype=float)
            + params[:, 1:2] * np.asarray(rect.edge_v, dtype=float))


def object_seed(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([seed, zlib.crc32(name.encode("utf-8"))])


def sample_object(obj: SceneObject, spec: SceneSpec) -> np.ndarray:
    """Points of one object: uniform samples, one square hole, normal noise."""
    rng = np.random.default_rng(object_seed(spec.seed, obj.name))
    rect = obj.rectangle()
    params = _sample_params(rect, spec.density, rng)
    if spec.occlusion > 0:
        side = math.sqrt(spec.occlusion)
        a0, b0 = rng.random(2) * (1.0 - side)
        hole = ((params[:, 0] >= a0) & (params[:, 0] < a0 + side)
                & (params[:, 1] >= b0) & (params[:, 1] < b0 + side))
        params = params[~hole]
    pts = _params_to_points(rect, params)
    if spec.sigma > 0:
        pts = pts + np.outer(rng.normal(0.0, spec.sigma, len(pts)), rect.normal)
    return pts


def truth_kb(spec: SceneSpec) -> KnowledgeBase:
    """One labelled individual per object, with its exact box, position and height."""
    kb = builtin_vocabulary()
    for obj in spec.objects:
        box = obj.truth_box()
        kb.add_individual(obj.name, obj.label)
        kb.assert_fact(obj.name, "hasBoxGeometry", box)
        kb.assert_fact(obj.name, "hasPosition", (float(box.center[0]), float(box.center[1])))
        kb.assert_fact(obj.name, "hasHeight", float(box.height()))
    return kb


def generate_scene(spec: SceneSpec) -> tuple[PointCloud, KnowledgeBase]:
    """Sample every object, shuffle the union with the scene seed and build the truth KB."""
    spec.validate()
    parts = [sample_object(o, spec) for o in spec.objects]
    pts = np.concatenate(parts) if parts else np.zeros((0, 3))
    rng = np.random.default_rng(spec.seed)
    pts = pts[rng.permutation(len(pts))]
    return PointCloud(pts), truth_kb(spec)


def priors_from_truth(truth: KnowledgeBase, offsets: dict | None = None,
                      keep=None, box_labels=("Ground",)) -> KnowledgeBase:
    """A prior KB: each truth object as an individual with its (shifted) position.

    Objects whose label is in ``box_labels`` get a shifted hasBoxGeometry
    prior instead of a point.
    """
    offsets = offsets or {}
    kb = builtin_vocabulary()
    for name in truth.individuals:
        if keep is not None and name not in keep:
            continue
        dx, dy = offsets.get(name, (0.0, 0.0))
        labels = truth.classes_of(name)
        kb.add_individual(name, *labels)
        box = truth.value(name, "hasBoxGeometry")
        if any(lbl in box_labels for lbl in labels) and box is not None:
            kb.assert_fact(name, "hasBoxGeometry", box.transformed(np.eye(3), (dx, dy, 0.0)))
        else:
            x, y = truth.value(name, "hasPosition")
            kb.assert_fact(name, "hasPosition", (x + dx, y + dy))
    return kb


def random_offsets(names, max_offset: float, seed: int) -> dict:
    """Offsets of length at most ``max_offset`` in seeded random directions."""
    rng = np.random.default_rng(seed)
    out = {}
    for name in names:
        ang = rng.uniform(0, 2 * math.pi)
        r = max_offset * math.sqrt(rng.uniform(0, 1))
        out[name] = (r * math.cos(ang), r * math.sin(ang))
    return out
