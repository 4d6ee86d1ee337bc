import numpy as np
import pytest

from kbdetect.pipeline import run_generic
from kbdetect.scenegen import default_scene_spec, generate_scene


def wall_points(p0, p1, height, density, rng, base=0.0, sigma=0.0):
    """Uniform samples on the upright rectangle standing on segment p0-p1."""
    p0, p1 = np.asarray(p0, float), np.asarray(p1, float)
    length = np.linalg.norm(p1 - p0)
    n = int(round(length * height * density))
    a, b = rng.random(n), rng.random(n)
    xy = p0 + np.outer(a, p1 - p0)
    pts = np.column_stack([xy, base + b * height])
    if sigma > 0:
        d = (p1 - p0) / length
        normal = np.array([-d[1], d[0], 0.0])
        pts = pts + np.outer(rng.normal(0, sigma, n), normal)
    return pts


def floor_points(lo, hi, density, rng, z=0.0):
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    n = int(round(np.prod(hi - lo) * density))
    xy = lo + rng.random((n, 2)) * (hi - lo)
    return np.column_stack([xy, np.full(n, z)])


@pytest.fixture(scope="session")
def scene():
    """Default room at 500 points per square meter: (spec, cloud, truth KB)."""
    spec = default_scene_spec()
    cloud, truth = generate_scene(spec)
    return spec, cloud, truth


@pytest.fixture(scope="session")
def generic_report(scene):
    from kbdetect.knowledge import builtin_vocabulary
    _, cloud, _ = scene
    return run_generic(cloud, builtin_vocabulary())
