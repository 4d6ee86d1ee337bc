"""Oriented bounding boxes.

A box is a center, a right-handed orthonormal frame (rows ``u``, ``v``,
``w``) and three positive half-extents. Boxes produced by detection are
upright: ``w`` is the global up axis ``(0, 0, 1)``.
"""

from __future__ import annotations

import itertools

import numpy as np

UP = np.array([0.0, 0.0, 1.0])
MIN_HALF_EXTENT = 0.005
_ORTHO_TOL = 1e-9


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


class BoundingBox:
    """Oriented box ``center ± hu*u ± hv*v ± hw*w``.

    Parameters
    ----------
    center : array_like, shape (3,)
    axes : array_like, shape (3, 3)
        Rows are the unit axes ``u``, ``v``, ``w``.
    half_extents : array_like, shape (3,)
        Strictly positive half sizes along ``u``, ``v``, ``w``.
    """

    __slots__ = ("center", "axes", "half_extents")

    def __init__(self, center, axes, half_extents):
        center = _frozen(center)
        axes = _frozen(axes)
        half = _frozen(half_extents)
        if center.shape != (3,) or axes.shape != (3, 3) or half.shape != (3,):
            raise ValueError("box needs center (3,), axes (3,3), half_extents (3,)")
        if not (np.all(np.isfinite(center)) and np.all(np.isfinite(axes)) and np.all(np.isfinite(half))):
            raise ValueError("box parameters must be finite")
        if np.any(half <= 0):
            raise ValueError(f"half extents must be positive, got {half.tolist()}")
        if np.max(np.abs(axes @ axes.T - np.eye(3))) > _ORTHO_TOL:
            raise ValueError("box axes are not orthonormal")
        if np.dot(np.cross(axes[0], axes[1]), axes[2]) < 0:
            raise ValueError("box axes are not right-handed")
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "axes", axes)
        object.__setattr__(self, "half_extents", half)

    def __setattr__(self, name, value):
        raise AttributeError("BoundingBox is immutable")

    @classmethod
    def upright(cls, center, direction, half_extents) -> "BoundingBox":
        """Box whose ``u`` axis is the horizontal ``direction`` and ``w`` is up."""
        d = np.asarray(direction, dtype=float)[:2]
        n = np.hypot(d[0], d[1])
        if n == 0:
            raise ValueError("direction must be non-zero")
        u = np.array([d[0] / n, d[1] / n, 0.0])
        v = np.array([-u[1], u[0], 0.0])
        return cls(center, np.vstack([u, v, UP]), half_extents)

    @classmethod
    def axis_aligned(cls, lo, hi) -> "BoundingBox":
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        half = np.maximum((hi - lo) / 2.0, MIN_HALF_EXTENT)
        return cls((lo + hi) / 2.0, np.eye(3), half)

    @property
    def u(self) -> np.ndarray:
        return self.axes[0]

    @property
    def v(self) -> np.ndarray:
        return self.axes[1]

    @property
    def w(self) -> np.ndarray:
        return self.axes[2]

    @property
    def is_upright(self) -> bool:
        return bool(np.allclose(self.axes[2], UP, atol=1e-9))

    def height(self) -> float:
        return float(2.0 * self.half_extents[2])

    def base_elevation(self) -> float:
        return float(self.center[2] - self.half_extents[2])

    def volume(self) -> float:
        return float(8.0 * np.prod(self.half_extents))

    def corners(self) -> np.ndarray:
        """The 8 corners, ordered by sign pattern ``(su, sv, sw)`` with ``-`` first."""
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))
        return self.center + (signs * self.half_extents) @ self.axes

    def to_local(self, points) -> np.ndarray:
        """Coordinates of ``points`` in the box frame (origin at center)."""
        return (np.asarray(points, dtype=float) - self.center) @ self.axes.T

    def contains(self, points, margin: float = 0.0, eps: float = 1e-9) -> np.ndarray:
        local = np.abs(self.to_local(np.atleast_2d(points)))
        return np.all(local <= self.half_extents + margin + eps, axis=1)

    def expanded(self, horizontal_scale: float = 1.0, margin: float = 0.0) -> "BoundingBox":
        """Scale the ``u``/``v`` half extents, then pad all three by ``margin``."""
        half = self.half_extents * np.array([horizontal_scale, horizontal_scale, 1.0]) + margin
        return BoundingBox(self.center, self.axes, half)

    def transformed(self, rotation, translation) -> "BoundingBox":
        """Apply the rigid motion ``p -> R p + t``."""
        r = np.asarray(rotation, dtype=float)
        return BoundingBox(r @ self.center + np.asarray(translation, dtype=float),
                           self.axes @ r.T, self.half_extents)

    def _key(self):
        return (tuple(self.center.tolist()), tuple(self.axes.ravel().tolist()),
                tuple(self.half_extents.tolist()))

    def __eq__(self, other):
        if not isinstance(other, BoundingBox):
            return NotImplemented
        return self._key() == other._key()

    def __hash__(self):
        return hash(self._key())

    def __repr__(self):
        c = ", ".join(f"{x:.3f}" for x in self.center)
        h = ", ".join(f"{x:.3f}" for x in self.half_extents)
        return f"BoundingBox(center=({c}), half_extents=({h}))"

    def to_dict(self) -> dict:
        return {
            "center": self.center.tolist(),
            "axes": self.axes.tolist(),
            "half_extents": self.half_extents.tolist(),
            "corners": self.corners().tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoundingBox":
        # corners are emitted for readers only; the frame is authoritative
        return cls(d["center"], d["axes"], d["half_extents"])
