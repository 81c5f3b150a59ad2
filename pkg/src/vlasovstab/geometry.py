"""Unit-torus arithmetic and the deterministic reductions shared by all modules.

Positions live on the torus [0, 1)^d. Differences use the minimal-image
representative with every coordinate in [-1/2, 1/2); a coordinate distance of
exactly 1/2 resolves to -1/2.
"""

from __future__ import annotations

import numpy as np


def _check_finite(a: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{what} must be finite")


def torus_wrap(x) -> np.ndarray:
    """Reduce coordinates modulo 1 into [0, 1).

    Works on a single d-vector or on an ``(N, d)`` array of positions.
    """
    a = np.asarray(x, dtype=float)
    _check_finite(a, "position")
    w = a - np.floor(a)
    # x - floor(x) rounds to 1.0 for tiny negative inputs
    w[w >= 1.0] = 0.0
    return w


def minimal_image(delta) -> np.ndarray:
    """Map raw differences to their representative in [-1/2, 1/2)."""
    a = np.asarray(delta, dtype=float)
    r = a - np.floor(a + 0.5)
    r[r >= 0.5] -= 1.0
    return r


def torus_displacement(x, y) -> np.ndarray:
    """Minimal-image representative of ``x - y`` on the unit torus."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    _check_finite(x, "position")
    _check_finite(y, "position")
    return minimal_image(x - y)


def torus_distance(x, y) -> np.ndarray:
    """Geodesic distance on the torus; reduces over the last axis."""
    return np.linalg.norm(torus_displacement(x, y), axis=-1)


def tree_sum(a, axis: int = 0) -> np.ndarray:
    """Pairwise sum along ``axis`` with a reduction tree fixed by the index order.

    Element ``i`` is always combined with element ``i + half`` at each level,
    so the result depends only on the data and its order, never on how work
    is scheduled.
    """
    a = np.moveaxis(np.asarray(a, dtype=float), axis, 0)
    n = a.shape[0]
    if n == 0:
        return np.zeros(a.shape[1:])
    while n > 1:
        half = n // 2
        head = a[:half] + a[half : 2 * half]
        if n % 2:
            a = np.concatenate([head, a[2 * half :]], axis=0)
        else:
            a = head
        n = a.shape[0]
    return a[0]
