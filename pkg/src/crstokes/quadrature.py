"""Symmetric quadrature rules on triangles.

Rules are returned in barycentric coordinates with weights summing to one,
so that ``sum(w * g(x)) * area`` approximates the integral over a triangle.
Degrees 1-6 use fully symmetric rules (Strang-Fix / Dunavant); higher
degrees fall back to a collapsed Gauss-Jacobi product rule.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

MAX_DEGREE = 30


def _orbit3(a, w):
    b = 1.0 - 2.0 * a
    return [(a, a, b), (a, b, a), (b, a, a)], [w] * 3


def _orbit6(a, b, w):
    c = 1.0 - a - b
    pts = [(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)]
    return pts, [w] * 6


def _assemble(*orbits):
    pts, wts = [], []
    for p, w in orbits:
        pts += p
        wts += w
    return np.array(pts), np.array(wts)


def _symmetric(degree):
    third = 1.0 / 3.0
    if degree <= 1:
        return np.array([[third, third, third]]), np.array([1.0])
    if degree == 2:
        # edge midpoints
        return _assemble(_orbit3(0.5, third))
    if degree == 3:
        return _assemble(
            ([(third, third, third)], [-27.0 / 48.0]), _orbit3(0.2, 25.0 / 48.0)
        )
    if degree == 4:
        return _assemble(
            _orbit3(0.445948490915965, 0.223381589678011),
            _orbit3(0.091576213509771, 0.109951743655322),
        )
    if degree == 5:
        s = np.sqrt(15.0)
        return _assemble(
            ([(third, third, third)], [9.0 / 40.0]),
            _orbit3((6.0 - s) / 21.0, (155.0 - s) / 1200.0),
            _orbit3((6.0 + s) / 21.0, (155.0 + s) / 1200.0),
        )
    if degree == 6:
        return _assemble(
            _orbit3(0.063089014491502, 0.050844906370207),
            _orbit3(0.249286745170910, 0.116786275726379),
            _orbit6(0.053145049844817, 0.310352451033784, 0.082851075618374),
        )
    return None


def _collapsed(degree):
    n = degree // 2 + 1
    # the Jacobi weight (1 - s) absorbs the Duffy Jacobian
    s, ws = roots_jacobi(n, 1.0, 0.0)
    t, wt = roots_legendre(n)
    s = 0.5 * (s + 1.0)
    t = 0.5 * (t + 1.0)
    ws = ws / 4.0
    wt = wt / 2.0
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    l1 = S.ravel()
    l2 = ((1.0 - S) * T).ravel()
    pts = np.stack([1.0 - l1 - l2, l1, l2], axis=1)
    w = W.ravel() * 2.0
    return pts, w


@lru_cache(maxsize=None)
def triangle_rule(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Barycentric points ``(n, 3)`` and weights ``(n,)`` exact to ``degree``."""
    if int(degree) != degree or degree < 0 or degree > MAX_DEGREE:
        raise ValueError(f"unsupported quadrature degree {degree}")
    rule = _symmetric(degree)
    if rule is None:
        rule = _collapsed(degree)
    pts, w = rule
    pts.setflags(write=False)
    w.setflags(write=False)
    return pts, w


@lru_cache(maxsize=None)
def composite_rule(degree: int, m: int) -> tuple[np.ndarray, np.ndarray]:
    """``triangle_rule(degree)`` applied on each of the ``m*m`` congruent sub-triangles."""
    pts, w = triangle_rule(degree)
    if m == 1:
        return pts, w
    # sub-triangle vertices in (l1, l2) reference coordinates
    subs = []
    h = 1.0 / m
    for i in range(m):
        for j in range(m - i):
            o = np.array([i * h, j * h])
            subs.append((o, o + [h, 0.0], o + [0.0, h]))
            if i + j < m - 1:
                subs.append((o + [h, 0.0], o + [h, h], o + [0.0, h]))
    out = []
    for a, b, c in subs:
        xy = pts[:, :1] * a + pts[:, 1:2] * b + pts[:, 2:3] * c
        out.append(xy)
    xy = np.concatenate(out)
    bary = np.column_stack([1.0 - xy.sum(axis=1), xy])
    weights = np.tile(w, len(subs)) / len(subs)
    bary.setflags(write=False)
    weights.setflags(write=False)
    return bary, weights


def physical_points(element_vertices: np.ndarray, bary: np.ndarray) -> np.ndarray:
    """Map barycentric points into every element, shape ``(n_elements, n_points, 2)``."""
    return np.einsum("qk,ekd->eqd", bary, element_vertices)
