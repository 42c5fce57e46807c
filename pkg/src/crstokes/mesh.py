"""Structured triangulations of rectangles with explicit facet connectivity.

Two builders are provided: a uniform grid and a Shishkin-type grid that is
piecewise uniform in y with a transition point ``tau`` above the lower wall.
Every grid cell is split along its lower-left to upper-right diagonal.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np


class Grading(enum.Enum):
    UNIFORM = "uniform"
    SHISHKIN = "shishkin"


@dataclass(frozen=True)
class Rect:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate rectangle {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Conforming triangulation with facet entities.

    Local facet ``k`` of a triangle is the edge opposite its local vertex
    ``k``.  ``element_facets[t, k]`` is the global index of that facet.
    ``facet_normals`` point out of ``facet_to_elements[f, 0]`` (the adjacent
    element with the smaller index); for boundary facets that is the outward
    normal.  ``facet_to_elements[f, 1]`` is ``-1`` on the boundary.
    """

    rect: Rect
    vertices: np.ndarray
    triangles: np.ndarray
    facets: np.ndarray
    facet_to_elements: np.ndarray
    element_facets: np.ndarray
    boundary_facets: np.ndarray
    facet_midpoints: np.ndarray
    facet_normals: np.ndarray
    facet_lengths: np.ndarray
    areas: np.ndarray
    grading: Grading = Grading.UNIFORM
    tau: float | None = None
    nx: int = 0
    ny: int = 0
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def element_vertices(self) -> np.ndarray:
        """Vertex coordinates per element, shape ``(n_elements, 3, 2)``."""
        return self.vertices[self.triangles]

    def facet_signs(self) -> np.ndarray:
        """``+1`` where the global facet normal is outward for the element, else ``-1``."""
        if "signs" not in self._cache:
            owner = self.facet_to_elements[self.element_facets, 0]
            own = owner == np.arange(self.n_elements)[:, None]
            self._cache["signs"] = np.where(own, 1.0, -1.0)
        return self._cache["signs"]

    def barycentric_gradients(self) -> np.ndarray:
        """Gradients of the barycentric coordinates, shape ``(n_elements, 3, 2)``."""
        if "grad_lambda" not in self._cache:
            p = self.element_vertices
            g = np.empty_like(p)
            for k in range(3):
                a = p[:, (k + 1) % 3]
                b = p[:, (k + 2) % 3]
                # rotate the opposite edge clockwise: inward normal scaled by 1/(2|T|)
                g[:, k, 0] = a[:, 1] - b[:, 1]
                g[:, k, 1] = b[:, 0] - a[:, 0]
            g /= (2.0 * self.areas)[:, None, None]
            self._cache["grad_lambda"] = g
        return self._cache["grad_lambda"]

    def outward_normals(self) -> np.ndarray:
        """Outward unit normals per element and local facet, shape ``(n_elements, 3, 2)``."""
        return self.facet_normals[self.element_facets] * self.facet_signs()[..., None]


@dataclass(frozen=True)
class MeshQuality:
    max_angle: float
    max_aspect_ratio: float
    n_elements: int
    n_facets: int
    n_vertices: int
    h_max: float

    def csv_row(self) -> str:
        return (
            f"{self.n_elements},{self.n_facets},{self.h_max!r},"
            f"{self.max_angle!r},{self.max_aspect_ratio!r}"
        )

    CSV_HEADER = "n_elements,n_facets,h_max,max_angle,max_aspect_ratio"


def _signed_areas(p: np.ndarray) -> np.ndarray:
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def from_arrays(
    rect: Rect,
    vertices: np.ndarray,
    triangles: np.ndarray,
    grading: Grading = Grading.UNIFORM,
    tau: float | None = None,
    nx: int = 0,
    ny: int = 0,
) -> TriMesh:
    """Build facet connectivity for a counterclockwise triangulation."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    triangles = np.ascontiguousarray(triangles, dtype=np.int64)
    if len(triangles) == 0:
        raise ValueError("empty mesh")
    areas = _signed_areas(vertices[triangles])
    if np.any(areas <= 0.0):
        raise ValueError("triangles must be counterclockwise and non-degenerate")

    n_el = len(triangles)
    # local facet k is opposite local vertex k
    local = np.stack(
        [triangles[:, [1, 2]], triangles[:, [2, 0]], triangles[:, [0, 1]]], axis=1
    )
    keys = np.sort(local.reshape(-1, 2), axis=1)
    facets, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    element_facets = inverse.reshape(n_el, 3)

    n_f = len(facets)
    owners = np.repeat(np.arange(n_el), 3)
    order = np.lexsort((owners, inverse))
    counts = np.bincount(inverse, minlength=n_f)
    if np.any(counts > 2):
        raise ValueError("non-manifold facet")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    f2e = np.full((n_f, 2), -1, dtype=np.int64)
    f2e[:, 0] = owners[order[starts]]
    two = counts == 2
    f2e[two, 1] = owners[order[starts[two] + 1]]
    boundary = ~two

    a = vertices[facets[:, 0]]
    b = vertices[facets[:, 1]]
    mid = 0.5 * (a + b)
    t = b - a
    lengths = np.hypot(t[:, 0], t[:, 1])
    normals = np.stack([t[:, 1], -t[:, 0]], axis=1) / lengths[:, None]
    # orient out of the owner element
    owner_centroid = vertices[triangles[f2e[:, 0]]].mean(axis=1)
    flip = np.einsum("ij,ij->i", normals, mid - owner_centroid) < 0.0
    normals[flip] *= -1.0

    return TriMesh(
        rect=rect,
        vertices=vertices,
        triangles=triangles,
        facets=facets,
        facet_to_elements=f2e,
        element_facets=element_facets,
        boundary_facets=boundary,
        facet_midpoints=mid,
        facet_normals=normals,
        facet_lengths=lengths,
        areas=areas,
        grading=grading,
        tau=tau,
        nx=nx,
        ny=ny,
    )


def _tensor_mesh(rect: Rect, xs: np.ndarray, ys: np.ndarray, **meta) -> TriMesh:
    nx = len(xs) - 1
    ny = len(ys) - 1
    X, Y = np.meshgrid(xs, ys)
    vertices = np.stack([X.ravel(), Y.ravel()], axis=1)
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    triangles = np.stack([lower, upper], axis=1).reshape(-1, 3)
    return from_arrays(rect, vertices, triangles, nx=nx, ny=ny, **meta)


def _check_counts(nx: int, ny: int) -> None:
    if int(nx) != nx or int(ny) != ny or nx < 1 or ny < 1:
        raise ValueError(f"cell counts must be positive integers, got nx={nx}, ny={ny}")


def build_uniform(rect: Rect, nx: int, ny: int) -> TriMesh:
    """Uniform ``nx`` by ``ny`` grid, two triangles per cell."""
    _check_counts(nx, ny)
    xs = np.linspace(rect.x_min, rect.x_max, nx + 1)
    ys = np.linspace(rect.y_min, rect.y_max, ny + 1)
    return _tensor_mesh(rect, xs, ys, grading=Grading.UNIFORM)


def shishkin_nodes(y_min: float, y_max: float, ny: int, tau: float) -> np.ndarray:
    """Piecewise uniform nodes: ``ny/2`` cells below ``y_min + tau``, ``ny/2`` above."""
    half = ny // 2
    fine = y_min + tau * np.arange(half + 1) / half
    coarse = np.linspace(y_min + tau, y_max, half + 1)
    return np.concatenate([fine, coarse[1:]])


def build_shishkin(rect: Rect, nx: int, ny: int, tau: float) -> TriMesh:
    """Shishkin-type grid, graded towards ``y = y_min`` with transition at ``y_min + tau``.

    Parameters
    ----------
    rect : Rect
        Domain.
    nx, ny : int
        Cell counts; ``ny`` must be even.
    tau : float
        Width of the fine strip, ``0 < tau < rect.height``.
    """
    _check_counts(nx, ny)
    if ny % 2:
        raise ValueError(f"ny must be even for a Shishkin mesh, got {ny}")
    if not 0.0 < tau < rect.height:
        raise ValueError(f"tau={tau} outside (0, {rect.height})")
    xs = np.linspace(rect.x_min, rect.x_max, nx + 1)
    ys = shishkin_nodes(rect.y_min, rect.y_max, ny, tau)
    return _tensor_mesh(rect, xs, ys, grading=Grading.SHISHKIN, tau=float(tau))


def element_angles(mesh: TriMesh) -> np.ndarray:
    """Interior angles per element; column ``k`` is the angle at local vertex ``k``."""
    p = mesh.element_vertices
    out = np.empty((mesh.n_elements, 3))
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cross = u[:, 0] * v[:, 1] - u[:, 1] * v[:, 0]
        out[:, k] = np.arctan2(np.abs(cross), np.einsum("ij,ij->i", u, v))
    return out


def element_aspect_ratios(mesh: TriMesh) -> np.ndarray:
    """Longest edge divided by the height onto it, per element."""
    longest = mesh.facet_lengths[mesh.element_facets].max(axis=1)
    height = 2.0 * mesh.areas / longest
    return longest / height


def quality(mesh: TriMesh) -> MeshQuality:
    return MeshQuality(
        max_angle=float(element_angles(mesh).max()),
        max_aspect_ratio=float(element_aspect_ratios(mesh).max()),
        n_elements=mesh.n_elements,
        n_facets=mesh.n_facets,
        n_vertices=mesh.n_vertices,
        h_max=float(mesh.facet_lengths.max()),
    )
