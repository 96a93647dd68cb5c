"""Simplex geometry for closed simplicial boundaries in R^d.

Weighted normals are the cofactor expansion of the determinant whose first
row is the standard basis and whose remaining rows are the edge vectors
``z_i - z_1``, divided by ``(d-1)!``. Their length equals the (d-1)-volume
of the simplex, so ``sum_i F(c_i) . n_i`` is a flux with no extra area factor.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HULL_TOL = 1e-10
DEGENERATE_TOL = 1e-14


class GeometryError(ValueError):
    pass


class DegenerateSimplexError(GeometryError):
    pass


class OrientationError(GeometryError):
    pass


@dataclass(frozen=True)
class Facet:
    vertex_ids: tuple[int, ...]
    weighted_normal: np.ndarray
    area: float
    degenerate: bool = False


def _edge_matrix(vertices: np.ndarray) -> np.ndarray:
    """Rows ``z_i - z_1`` for i = 2..d; works on stacks of shape (..., d, d)."""
    return vertices[..., 1:, :] - vertices[..., :1, :]


def weighted_normals(simplices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized weighted normals for a stack of (d-1)-simplices.

    ``simplices`` has shape (m, d, d): m simplices with d vertices in R^d.
    Returns ``(normals, degenerate)`` where degenerate rows are zeroed.
    """
    simplices = np.asarray(simplices, dtype=float)
    m, nv, d = simplices.shape
    if nv != d or d < 2:
        raise GeometryError(f"need d vertices in R^d with d >= 2, got {nv} in R^{d}")
    edges = _edge_matrix(simplices)  # (m, d-1, d)
    normals = np.empty((m, d))
    cols = np.arange(d)
    for k in range(d):
        minor = edges[:, :, cols != k]
        normals[:, k] = (-1) ** k * np.linalg.det(minor)
    normals /= math.factorial(d - 1)
    scale = np.max(np.abs(edges), axis=(1, 2)) ** (d - 1) / math.factorial(d - 1)
    degenerate = np.linalg.norm(normals, axis=1) <= DEGENERATE_TOL * np.maximum(scale, 1e-300)
    normals[degenerate] = 0.0
    return normals, degenerate


def weighted_normal(vertices) -> np.ndarray:
    """Normal of one (d-1)-simplex whose magnitude is the simplex (d-1)-volume.

    A degenerate simplex yields the zero vector; use :func:`weighted_normals`
    to get the degeneracy flag explicitly.
    """
    normals, _ = weighted_normals(np.asarray(vertices, dtype=float)[None])
    return normals[0]


def dot_with_normal(w, vertices) -> float:
    """``w . weighted_normal(vertices)`` as a single determinant."""
    vertices = np.asarray(vertices, dtype=float)
    d = vertices.shape[1]
    mat = np.vstack([np.asarray(w, dtype=float)[None], _edge_matrix(vertices)])
    return float(np.linalg.det(mat) / math.factorial(d - 1))


def gram_volume(vertices) -> float:
    """(d-1)-volume of a simplex from the Gram determinant of its edge vectors."""
    vertices = np.asarray(vertices, dtype=float)
    edges = _edge_matrix(vertices)
    k = edges.shape[0]
    gram = edges @ edges.T
    return float(math.sqrt(max(np.linalg.det(gram), 0.0)) / math.factorial(k))


@dataclass(frozen=True)
class SimplicialBoundary:
    """Closed boundary made of (d-1)-simplices.

    ``normals[i]`` is the weighted normal of ``vertices[facets[i]]`` taken in
    the stored vertex order; orientation is fixed by vertex order, so flipping
    a normal swaps two vertex ids.
    """

    vertices: np.ndarray
    facets: np.ndarray
    normals: np.ndarray
    interior_point: np.ndarray
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", np.zeros(len(self.facets), dtype=bool))

    @classmethod
    def from_facets(cls, vertices, facets, interior_point=None) -> "SimplicialBoundary":
        vertices = np.asarray(vertices, dtype=float)
        facets = np.asarray(facets, dtype=np.int64).reshape(-1, vertices.shape[1])
        if not np.all(np.isfinite(vertices)):
            raise GeometryError("vertex coordinates must be finite")
        for f in facets:
            if len(set(f.tolist())) != len(f):
                raise GeometryError(f"facet {f.tolist()} repeats a vertex")
        normals, degenerate = weighted_normals(vertices[facets])
        if interior_point is None:
            used = np.unique(facets)
            interior_point = vertices[used].mean(axis=0)
        return cls(vertices, facets, normals, np.asarray(interior_point, dtype=float), degenerate)

    @property
    def dim(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_facets(self) -> int:
        return len(self.facets)

    @property
    def areas(self) -> np.ndarray:
        return np.linalg.norm(self.normals, axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    @property
    def unit_normals(self) -> np.ndarray:
        areas = self.areas
        out = np.zeros_like(self.normals)
        ok = areas > 0
        out[ok] = self.normals[ok] / areas[ok, None]
        return out

    @property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.facets].mean(axis=1)

    def facet(self, i: int) -> Facet:
        return Facet(
            tuple(int(v) for v in self.facets[i]),
            self.normals[i].copy(),
            float(np.linalg.norm(self.normals[i])),
            bool(self.degenerate[i]),
        )

    def closedness_residual(self) -> float:
        """``max |sum_i n_i|`` relative to the total area."""
        total = self.total_area
        return float(np.max(np.abs(self.normals.sum(axis=0))) / total) if total > 0 else 0.0

    def is_closed(self, tol: float = 1e-10) -> bool:
        return self.closedness_residual() <= tol and _ridges_paired(self.facets)

    def used_vertex_ids(self) -> np.ndarray:
        return np.unique(self.facets)

    def to_json(self) -> dict:
        return {
            "d": self.dim,
            "vertices": self.vertices.tolist(),
            "facets": self.facets.tolist(),
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1))


def _ridges_paired(facets: np.ndarray) -> bool:
    d = facets.shape[1]
    counts: dict[tuple, int] = {}
    for f in facets.tolist():
        for ridge in itertools.combinations(sorted(f), d - 1):
            counts[ridge] = counts.get(ridge, 0) + 1
    return all(c % 2 == 0 for c in counts.values())


def orient_outward(boundary: SimplicialBoundary) -> SimplicialBoundary:
    """Flip facets whose normal points toward ``interior_point``.

    Raises :class:`OrientationError` when the interior point lies on the
    hyperplane of a non-degenerate facet.
    """
    facets = boundary.facets.copy()
    normals = boundary.normals.copy()
    areas = np.linalg.norm(normals, axis=1)
    side = np.einsum("ij,ij->i", normals, boundary.centroids - boundary.interior_point)
    live = ~boundary.degenerate
    ambiguous = live & (np.abs(side) <= 1e-12 * np.maximum(areas, 1e-300))
    if np.any(ambiguous):
        raise OrientationError(
            f"interior point lies on the hyperplane of facet {int(np.flatnonzero(ambiguous)[0])}"
        )
    flip = live & (side < 0)
    facets[flip, :2] = facets[flip, 1::-1]
    normals[flip] *= -1.0
    return SimplicialBoundary(boundary.vertices, facets, normals, boundary.interior_point, boundary.degenerate)


# --------------------------------------------------------------------------- hull


def _local_coords(points: np.ndarray, k: int) -> np.ndarray:
    """Coordinates of ``points`` in an orthonormal basis of their k-dim affine span."""
    centered = points - points.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    return centered @ vt[:k].T


def _supporting_groups(coords: np.ndarray, tol: float) -> list[tuple[int, ...]]:
    """Point groups lying on supporting hyperplanes of conv(coords).

    Brute force over every k-subset of the n points in R^k. A subset defines a
    supporting hyperplane when no other point is strictly on either side of it
    beyond ``tol``; the group is every point within ``tol`` of that plane.
    """
    n, k = coords.shape
    groups: set[tuple[int, ...]] = set()
    combos = np.array(list(itertools.combinations(range(n), k)), dtype=np.int64)
    for start in range(0, len(combos), 20000):
        chunk = combos[start:start + 20000]
        normals, degenerate = weighted_normals(coords[chunk])
        norms = np.linalg.norm(normals, axis=1)
        keep = ~degenerate
        chunk, normals, norms = chunk[keep], normals[keep], norms[keep]
        unit = normals / norms[:, None]
        offsets = np.einsum("ij,ij->i", unit, coords[chunk[:, 0]])
        dist = unit @ coords.T - offsets[:, None]  # (m, n)
        above = np.any(dist > tol, axis=1)
        below = np.any(dist < -tol, axis=1)
        for row in np.flatnonzero(~(above & below)):
            groups.add(tuple(np.flatnonzero(np.abs(dist[row]) <= tol).tolist()))
    return sorted(groups)


def _face_vertices(points: np.ndarray, idx: tuple[int, ...], k: int, tol: float) -> tuple[int, ...]:
    if len(idx) == k + 1:
        return tuple(sorted(idx))
    coords = _local_coords(points[list(idx)], k)
    if k == 1:
        order = np.argsort(coords[:, 0], kind="stable")
        return tuple(sorted((idx[order[0]], idx[order[-1]])))
    verts: set[int] = set()
    for g in _supporting_groups(coords, tol):
        verts.update(_face_vertices(points, tuple(idx[i] for i in g), k - 1, tol))
    return tuple(sorted(verts))


def _pulling_triangulation(points: np.ndarray, idx: tuple[int, ...], k: int, tol: float) -> list[tuple[int, ...]]:
    """Triangulate a k-face by coning from its lowest-id vertex.

    Using a global vertex order makes triangulations of shared sub-faces agree,
    so neighbouring facets stay conforming.
    """
    verts = _face_vertices(points, idx, k, tol)
    if len(verts) == k + 1:
        return [verts]
    apex = verts[0]
    coords = _local_coords(points[list(verts)], k)
    out = []
    for g in _supporting_groups(coords, tol):
        sub = tuple(verts[i] for i in g)
        if apex in sub:
            continue
        for simplex in _pulling_triangulation(points, sub, k - 1, tol):
            out.append((apex,) + simplex)
    return out


def convex_hull(points, tol: float = HULL_TOL) -> SimplicialBoundary:
    """Convex hull of a point set as an outward-oriented simplicial boundary.

    Points in general position give facets that are exactly the d-subsets with
    every other point strictly on one side. Coplanar facet groups (cube faces,
    for instance) are triangulated consistently. Non-vertex input points are
    dropped; the returned vertex store holds hull vertices only.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim != 2:
        raise GeometryError("points must be a 2-d array")
    n, d = points.shape
    if d < 2:
        raise GeometryError("dimension must be at least 2")
    if n < d + 1:
        raise GeometryError(f"need at least {d + 1} points in R^{d}, got {n}")
    centered = points - points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[-1] <= tol * max(sv[0], 1.0):
        raise GeometryError("points do not affinely span R^d")

    simplices: list[tuple[int, ...]] = []
    for group in _supporting_groups(points, tol):
        if len(group) == d:
            simplices.append(group)
        else:
            simplices.extend(_pulling_triangulation(points, group, d - 1, tol))

    used = sorted({v for s in simplices for v in s})
    remap = {old: new for new, old in enumerate(used)}
    facets = np.array([[remap[v] for v in s] for s in simplices], dtype=np.int64)
    boundary = SimplicialBoundary.from_facets(points[used], facets)
    return orient_outward(boundary)


def load_polytope(path) -> SimplicialBoundary:
    """Read ``{"d", "vertices", "facets"}`` JSON; normals are recomputed and oriented."""
    data = json.loads(Path(path).read_text())
    return polytope_from_json(data)


def polytope_from_json(data: dict) -> SimplicialBoundary:
    vertices = np.asarray(data["vertices"], dtype=float)
    if vertices.shape[1] != int(data["d"]):
        raise GeometryError("vertex dimension does not match 'd'")
    boundary = SimplicialBoundary.from_facets(vertices, data["facets"])
    return orient_outward(boundary)


# ------------------------------------------------------------------ volume etc.


def polytope_volume(boundary: SimplicialBoundary, tol: float = 1e-10) -> float:
    """Exact volume as the flux of x/d through the boundary."""
    if not boundary.is_closed(tol):
        raise GeometryError("boundary is not closed")
    d = boundary.dim
    flux = np.einsum("ij,ij->i", boundary.centroids / d, boundary.normals)
    volume = float(flux.sum())
    if volume <= 0:
        raise OrientationError("boundary normals point inward")
    return volume


def contains(boundary: SimplicialBoundary, x, rel_tol: float = 1e-10) -> bool:
    """Half-space membership; points on the boundary count as inside."""
    return bool(contains_many(boundary, np.asarray(x, dtype=float)[None], rel_tol)[0])


def contains_many(boundary: SimplicialBoundary, xs, rel_tol: float = 1e-10) -> np.ndarray:
    xs = np.asarray(xs, dtype=float)
    anchors = boundary.vertices[boundary.facets[:, 0]]
    offsets = np.einsum("ij,ij->i", anchors, boundary.normals)
    scale = boundary.areas * max(1.0, float(np.abs(boundary.vertices).max()))
    signed = xs @ boundary.normals.T - offsets  # (n, k)
    return np.all(signed <= rel_tol * scale, axis=1)


def _simplex_points(corners: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Uniform points in simplices; ``corners`` is (n, m, d), one simplex per row."""
    n, m, _ = corners.shape
    weights = rng.exponential(size=(n, m))
    weights /= weights.sum(axis=1, keepdims=True)
    return np.einsum("nm,nmd->nd", weights, corners)


def sample_uniform(boundary: SimplicialBoundary, rng: np.random.Generator, n: int) -> np.ndarray:
    """Uniform points inside a convex polytope by coning facets to the interior point."""
    d = boundary.dim
    if n == 0:
        return np.empty((0, d))
    anchors = boundary.vertices[boundary.facets[:, 0]]
    cone_vol = np.einsum("ij,ij->i", boundary.normals, anchors - boundary.interior_point) / d
    cone_vol = np.clip(cone_vol, 0.0, None)
    picks = rng.choice(len(cone_vol), size=n, p=cone_vol / cone_vol.sum())
    corners = np.concatenate(
        [boundary.vertices[boundary.facets[picks]], np.broadcast_to(boundary.interior_point, (n, 1, d))],
        axis=1,
    )
    return _simplex_points(corners, rng)


def sample_uniform_on_facets(
    boundary: SimplicialBoundary, rng: np.random.Generator, n: int
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform points on the boundary surface and the facet each one landed on."""
    d = boundary.dim
    if n == 0:
        return np.empty((0, d)), np.empty(0, dtype=np.int64)
    areas = boundary.areas
    picks = rng.choice(len(areas), size=n, p=areas / areas.sum())
    return _simplex_points(boundary.vertices[boundary.facets[picks]], rng), picks


# ------------------------------------------------------------------- fixtures


def unit_cube(d: int) -> SimplicialBoundary:
    """[0,1]^d with each square face split into (d-1)! Kuhn simplices."""
    if d < 2:
        raise GeometryError("need d >= 2")
    corners = np.array(list(itertools.product([0.0, 1.0], repeat=d)))
    index = {tuple(c): i for i, c in enumerate(corners.astype(int).tolist())}
    facets = []
    for axis, side in itertools.product(range(d), (0, 1)):
        free = [k for k in range(d) if k != axis]
        for order in itertools.permutations(free):
            # walk from the face's lowest corner, raising one free coordinate at a time
            corner = [0] * d
            corner[axis] = side
            path = [index[tuple(corner)]]
            for k in order:
                corner[k] = 1
                path.append(index[tuple(corner)])
            facets.append(path)
    return orient_outward(SimplicialBoundary.from_facets(corners, np.array(facets), np.full(d, 0.5)))


def standard_simplex(d: int) -> SimplicialBoundary:
    return convex_hull(np.vstack([np.zeros(d), np.eye(d)]))


def box(lower, upper) -> SimplicialBoundary:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(upper <= lower):
        raise GeometryError("box needs upper > lower in every coordinate")
    cube = unit_cube(len(lower))
    return SimplicialBoundary.from_facets(lower + cube.vertices * (upper - lower), cube.facets)
