"""Point clouds: container, ASCII readers/writers, bounds and cropping."""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .boxes import BoundingBox


class CloudFormatError(ValueError):
    """Malformed point cloud file. ``line`` is 1-based when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Immutable (N, 3) array of points in meters, +z up.

    ``intensity`` is optional and, when given, has one value per point.
    """

    points: np.ndarray
    intensity: np.ndarray | None = None

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ValueError("point coordinates must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if self.intensity is not None:
            inten = np.array(self.intensity, dtype=float).reshape(-1)
            if len(inten) != len(pts):
                raise ValueError(f"{len(inten)} intensities for {len(pts)} points")
            inten.setflags(write=False)
            object.__setattr__(self, "intensity", inten)

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask_or_index) -> "PointCloud":
        inten = None if self.intensity is None else self.intensity[mask_or_index]
        return PointCloud(self.points[mask_or_index], inten)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(np.zeros((0, 3)))


@dataclass(frozen=True)
class Aabb:
    min: np.ndarray
    max: np.ndarray

    def contains(self, other: "Aabb") -> bool:
        return bool(np.all(self.min <= other.min) and np.all(other.max <= self.max))


def _infer_format(path) -> str:
    ext = Path(path).suffix.lower()
    if ext == ".ply":
        return "ply-ascii"
    if ext in (".xyz", ".txt", ".pts", ".asc"):
        return "xyz-ascii"
    raise ValueError(f"cannot infer point cloud format from extension {ext!r}")


def load_cloud(path, format: str | None = None) -> PointCloud:
    """Read an ASCII point cloud.

    ``format`` is ``"xyz-ascii"`` or ``"ply-ascii"``; by default it is
    inferred from the file extension. File order is preserved.
    """
    fmt = format or _infer_format(path)
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if fmt == "xyz-ascii":
        return _parse_xyz(lines)
    if fmt == "ply-ascii":
        return _parse_ply(lines)
    raise ValueError(f"unknown point cloud format {fmt!r}")


def _parse_floats(fields, lineno):
    try:
        vals = [float(f) for f in fields]
    except ValueError:
        raise CloudFormatError(f"non-numeric field in {' '.join(fields)!r}", lineno) from None
    if not all(np.isfinite(vals)):
        raise CloudFormatError("non-finite coordinate", lineno)
    return vals


def _parse_xyz(lines) -> PointCloud:
    rows = []
    for lineno, raw in enumerate(lines, start=1):
        text = raw.strip()
        if not text or text.startswith("#"):
            continue
        fields = text.split()
        if len(fields) < 3:
            raise CloudFormatError(f"expected at least 3 fields, got {len(fields)}", lineno)
        rows.append(_parse_floats(fields[:4], lineno))
    if not rows:
        return PointCloud.empty()
    pts = np.array([r[:3] for r in rows])
    intensity = None
    # a 4th column is read as intensity only when every line has one
    if all(len(r) == 4 for r in rows):
        intensity = np.array([r[3] for r in rows])
    return PointCloud(pts, intensity)


def _parse_ply(lines) -> PointCloud:
    if not lines or lines[0].strip() != "ply":
        raise CloudFormatError("missing 'ply' magic", 1)
    elements = []  # (name, count, [(prop_name, is_list)])
    i = 1
    while True:
        if i >= len(lines):
            raise CloudFormatError("unterminated PLY header", i)
        tok = lines[i].split()
        i += 1
        if not tok or tok[0] in ("comment", "obj_info"):
            continue
        if tok[0] == "format":
            if len(tok) < 2 or tok[1] != "ascii":
                raise CloudFormatError(f"only ASCII PLY is supported, got {' '.join(tok[1:])!r}", i)
        elif tok[0] == "element":
            if len(tok) != 3:
                raise CloudFormatError("bad element declaration", i)
            elements.append((tok[1], int(tok[2]), []))
        elif tok[0] == "property":
            if not elements:
                raise CloudFormatError("property before any element", i)
            is_list = len(tok) > 1 and tok[1] == "list"
            elements[-1][2].append((tok[-1], is_list))
        elif tok[0] == "end_header":
            break
        else:
            raise CloudFormatError(f"unexpected header keyword {tok[0]!r}", i)

    pts = None
    intensity = None
    for name, count, props in elements:
        body = []
        while len(body) < count:
            if i >= len(lines):
                raise CloudFormatError(f"file ends inside element {name!r}", i)
            if lines[i].strip():
                body.append((i + 1, lines[i].split()))
            i += 1
        if name != "vertex":
            continue
        names = [p for p, _ in props]
        if any(is_list for _, is_list in props):
            raise CloudFormatError("list properties on vertex are not supported")
        for axis in "xyz":
            if axis not in names:
                raise CloudFormatError(f"vertex element lacks property {axis!r}")
        cols = [names.index(a) for a in "xyz"]
        icol = names.index("intensity") if "intensity" in names else None
        rows = []
        inten = []
        for lineno, fields in body:
            if len(fields) != len(names):
                raise CloudFormatError(f"expected {len(names)} values, got {len(fields)}", lineno)
            vals = _parse_floats([fields[c] for c in cols], lineno)
            rows.append(vals)
            if icol is not None:
                inten.append(float(fields[icol]))
        pts = np.array(rows).reshape(-1, 3)
        intensity = np.array(inten) if icol is not None else None
    if pts is None:
        return PointCloud.empty()
    return PointCloud(pts, intensity)


def save_cloud(cloud: PointCloud, path, format: str | None = None, precision: int = 6) -> None:
    """Write ``cloud`` as xyz-ascii or ASCII PLY with fixed decimals."""
    fmt = format or _infer_format(path)
    fmt_num = f"%.{precision}f"
    cols = cloud.points if cloud.intensity is None else np.column_stack([cloud.points, cloud.intensity])
    lines = [" ".join(fmt_num % v for v in row) for row in cols]
    if fmt == "ply-ascii":
        header = ["ply", "format ascii 1.0", f"element vertex {len(cloud)}",
                  "property float x", "property float y", "property float z"]
        if cloud.intensity is not None:
            header.append("property float intensity")
        header.append("end_header")
        lines = header + lines
    elif fmt != "xyz-ascii":
        raise ValueError(f"unknown point cloud format {fmt!r}")
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))
        if lines:
            fh.write("\n")
    os.replace(tmp, path)


def cloud_bounds(cloud: PointCloud) -> Aabb:
    if len(cloud) == 0:
        raise ValueError("bounds of an empty cloud are undefined")
    return Aabb(cloud.points.min(axis=0), cloud.points.max(axis=0))


def crop_to_box(cloud: PointCloud, box: BoundingBox, margin: float = 0.0) -> PointCloud:
    """Points inside ``box`` grown by ``margin`` along each of its axes."""
    if margin < 0:
        raise ValueError("margin must be non-negative")
    if len(cloud) == 0:
        return cloud
    return cloud.subset(box.contains(cloud.points, margin=margin))
