"""Shared helpers for the test suite."""

import numpy as np

UNIT_SQUARE = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])


def random_polygon(rng, n_min=4, n_max=9):
    """Random star-shaped polygon with CCW vertices around a random center.

    Vertex angles are drawn uniformly and sorted; the draw is rejected when
    the largest angular gap exceeds 0.9*pi, which keeps every polygon
    comfortably away from degenerate. Radii in [0.3, 1.0] do the same for
    edge lengths and area.
    """
    while True:
        k = int(rng.integers(n_min, n_max + 1))
        ang = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=k))
        gaps = np.diff(np.append(ang, ang[0] + 2.0 * np.pi))
        if gaps.max() < 0.9 * np.pi:
            break
    rad = rng.uniform(0.3, 1.0, size=k)
    center = rng.uniform(-0.25, 0.25, size=2)
    return center + np.column_stack((rad * np.cos(ang), rad * np.sin(ang)))
