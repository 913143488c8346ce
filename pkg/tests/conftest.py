import numpy as np
import pytest


def random_convex_quad(rng, scale=1.0):
    """Convex CCW quadrilateral: four angle-sorted points on a jittered ellipse."""
    while True:
        angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, 4))
        if np.min(np.diff(np.concatenate([angles, [angles[0] + 2 * np.pi]]))) < 0.35:
            continue
        r = rng.uniform(0.6, 1.4, 4)
        pts = scale * np.column_stack([r * np.cos(angles), r * np.sin(angles)])
        pts += rng.uniform(-0.15, 0.15, (4, 2)) * scale
        if _is_convex_ccw(pts):
            return pts


def _is_convex_ccw(pts):
    for a in range(4):
        p0, p1, p2 = pts[a], pts[(a + 1) % 4], pts[(a + 2) % 4]
        cross = (p1[0] - p0[0]) * (p2[1] - p1[1]) - (p1[1] - p0[1]) * (p2[0] - p1[0])
        if cross <= 1e-9:
            return False
    return True


def shoelace_area(pts):
    s = 0.0
    for a in range(4):
        x0, y0 = pts[a]
        x1, y1 = pts[(a + 1) % 4]
        s += x0 * y1 - x1 * y0
    return 0.5 * s


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
