"""Deterministic d-dimensional convex geometry.

Hulls, faces, volumes, simplices, cones and the segment/ball predicates the
random-polytope experiments are built on.  Everything here is a pure function
of its inputs; the dataclasses are frozen and safe to share across workers.

Convex hulls are delegated to Qhull (``scipy.spatial.ConvexHull``); facet
data is re-expressed in the reduced vertex indexing so downstream code never
touches Qhull's raw output.  Gaussian inputs are almost surely in general
position, so plain double precision with a single tolerance ``EPS_GEOM``
is enough; genuine degeneracies raise :class:`DegenerateInput` and the
caller resamples.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import factorial

import numpy as np
from scipy.spatial import ConvexHull as _QhullHull
from scipy.spatial import QhullError

from .errors import (
    BadFrame,
    DegenerateInput,
    DimensionMismatch,
    EmptyInterior,
    InvalidDimension,
    OriginOutside,
    SingularGenerators,
)

EPS_GEOM = 1e-9


def as_points(points, d: int | None = None) -> np.ndarray:
    """Coerce to a float (N, d) array, validating dimension."""
    arr = np.asarray(points, dtype=float)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d point array, got shape {arr.shape}")
    if d is not None and arr.shape[1] != d:
        raise DimensionMismatch(f"expected dimension {d}, got {arr.shape[1]}")
    if arr.shape[1] < 2:
        raise DimensionMismatch("ambient dimension must be at least 2")
    if not np.all(np.isfinite(arr)):
        raise DimensionMismatch("coordinates must be finite")
    return arr


@dataclass(frozen=True)
class Hyperplane:
    """Oriented hyperplane {x : normal . x = offset} with unit normal."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e2 * EPS_GEOM:
            raise DimensionMismatch("hyperplane normal must be a unit vector")
        object.__setattr__(self, "normal", n)

    def signed_distance(self, points) -> np.ndarray:
        pts = as_points(points, d=self.normal.shape[0])
        return pts @ self.normal - self.offset

    def halfspace_contains(self, points, eps: float = EPS_GEOM) -> np.ndarray:
        """Membership in the far halfspace {x : normal . x >= offset}."""
        return self.signed_distance(points) >= -eps * max(1.0, abs(self.offset))


@dataclass(frozen=True)
class Simplex:
    """k-dimensional simplex given by k+1 affinely independent vertices."""

    vertices: np.ndarray

    def __post_init__(self):
        v = as_points(self.vertices)
        object.__setattr__(self, "vertices", v)
        edges = v[1:] - v[0]
        gram = edges @ edges.T
        scale = max(1.0, float(np.abs(gram).max()))
        if abs(np.linalg.det(gram)) <= (EPS_GEOM * scale) ** edges.shape[0]:
            raise DegenerateInput("simplex vertices are affinely dependent")

    @property
    def dim(self) -> int:
        return self.vertices.shape[0] - 1

    def contains(self, points, eps: float = EPS_GEOM) -> np.ndarray:
        """Barycentric membership test, vectorized over points.

        Only full-dimensional simplices (k == ambient d) support containment.
        """
        v = self.vertices
        d = v.shape[1]
        if self.dim != d:
            raise InvalidDimension("containment requires a full-dimensional simplex")
        pts = as_points(points, d=d)
        lam = np.linalg.solve((v[1:] - v[0]).T, (pts - v[0]).T).T
        return (lam >= -eps).all(axis=1) & (lam.sum(axis=1) <= 1.0 + eps)


@dataclass(frozen=True)
class Cone:
    """apex + nonnegative span of d linearly independent generators."""

    apex: np.ndarray
    generators: np.ndarray

    def __post_init__(self):
        apex = np.asarray(self.apex, dtype=float)
        gen = as_points(self.generators, d=apex.shape[0])
        object.__setattr__(self, "apex", apex)
        object.__setattr__(self, "generators", gen)


@dataclass(frozen=True)
class Polytope:
    """Simplicial convex polytope: hull vertices plus facet structure.

    ``facets[i]`` holds d indices into ``vertices``; ``normals[i]`` is the
    outward unit normal and ``offsets[i] = normals[i] . v`` for any facet
    vertex v (the signed distance of the facet plane from the origin).
    """

    vertices: np.ndarray
    facets: np.ndarray
    normals: np.ndarray
    offsets: np.ndarray

    @property
    def d(self) -> int:
        return self.vertices.shape[1]

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_facets(self) -> int:
        return self.facets.shape[0]

    def contains(self, points, eps: float = EPS_GEOM) -> np.ndarray:
        """Vectorized membership: inside or on the boundary."""
        pts = as_points(points, d=self.d)
        slack = pts @ self.normals.T - self.offsets[None, :]
        tol = eps * np.maximum(1.0, np.abs(self.offsets))[None, :]
        return (slack <= tol).all(axis=1)

    def validate(self, input_points=None, eps: float = 1e-7) -> None:
        """Check the structural invariants; raises AssertionError on failure.

        Intended for tests and debugging, not for the hot path.
        """
        d = self.d
        assert self.facets.shape[1] == d, "facets of a simplicial polytope have d vertices"
        recomputed = np.einsum("fd,fd->f", self.vertices[self.facets[:, 0]], self.normals)
        assert np.allclose(recomputed, self.offsets, rtol=0, atol=eps * max(1.0, np.abs(self.offsets).max()))
        # each ridge (facet of a facet) is shared by exactly two facets
        ridge_count: dict[tuple, int] = {}
        for f in self.facets:
            for ridge in combinations(sorted(f.tolist()), d - 1):
                ridge_count[ridge] = ridge_count.get(ridge, 0) + 1
        assert all(c == 2 for c in ridge_count.values()), "open or non-manifold facet surface"
        if input_points is not None:
            assert bool(self.contains(input_points, eps=eps).all()), "input point outside hull"


def convex_hull(points) -> Polytope:
    """Convex hull of points in general position.

    Raises :class:`DegenerateInput` when the points are affinely dependent
    (fewer than d+1 points, or Qhull cannot build a full-dimensional hull),
    which signals the Monte Carlo caller to resample the trial.
    """
    pts = as_points(points)
    n, d = pts.shape
    if n < d + 1:
        raise DegenerateInput(f"need at least {d + 1} points in R^{d}, got {n}")
    try:
        hull = _QhullHull(pts)
    except QhullError as exc:
        raise DegenerateInput(f"Qhull failed, input likely degenerate: {exc}") from exc
    vertex_ids = hull.vertices
    reindex = np.full(n, -1, dtype=np.intp)
    reindex[vertex_ids] = np.arange(vertex_ids.size)
    facets = reindex[hull.simplices]
    if (facets < 0).any():  # pragma: no cover - qhull guarantees simplices use hull vertices
        raise DegenerateInput("Qhull produced facets through non-vertex points")
    return Polytope(
        vertices=pts[vertex_ids].copy(),
        facets=facets.astype(np.intp),
        normals=hull.equations[:, :d].copy(),
        offsets=-hull.equations[:, d].copy(),
    )


def _interior_point(p: Polytope) -> np.ndarray:
    # vertex centroid: always interior for a full-dimensional hull
    return p.vertices.mean(axis=0)


def volume(p: Polytope) -> float:
    """Volume as a fan of simplices from the vertex centroid over the facets."""
    c = _interior_point(p)
    slack = p.normals @ c - p.offsets
    if (slack >= -EPS_GEOM * np.maximum(1.0, np.abs(p.offsets))).any():
        raise EmptyInterior("vertex centroid is not strictly inside the hull")
    mats = p.vertices[p.facets] - c[None, None, :]
    dets = np.abs(np.linalg.det(mats))
    return float(dets.sum() / factorial(p.d))


def enumerate_faces(p: Polytope, s: int) -> set[tuple[int, ...]]:
    """All s-faces as sorted vertex-index tuples.

    Valid for simplicial polytopes, where every s-face is an (s+1)-subset of
    some facet's vertex tuple.
    """
    d = p.d
    if not 0 <= s <= d - 1:
        raise InvalidDimension(f"face dimension must lie in [0, {d - 1}], got {s}")
    faces: set[tuple[int, ...]] = set()
    for f in p.facets:
        fs = sorted(f.tolist())
        faces.update(combinations(fs, s + 1))
    return faces


def face_count(p: Polytope, s: int) -> int:
    """Number of s-dimensional faces."""
    d = p.d
    if not 0 <= s <= d - 1:
        raise InvalidDimension(f"face dimension must lie in [0, {d - 1}], got {s}")
    if s == d - 1:
        return p.n_facets
    if s == 0:
        return p.n_vertices
    return len(enumerate_faces(p, s))


def f_vector(p: Polytope) -> tuple[int, ...]:
    return tuple(face_count(p, s) for s in range(p.d))


def _facet_area(verts: np.ndarray) -> float:
    # (d-1)-volume of a (d-1)-simplex embedded in R^d via the Gram determinant
    edges = verts[1:] - verts[0]
    gram = edges @ edges.T
    k = edges.shape[0]
    det = float(np.linalg.det(gram))
    return float(np.sqrt(max(det, 0.0)) / factorial(k))


def surface_area(p: Polytope) -> float:
    """Sum of facet (d-1)-volumes."""
    return float(sum(_facet_area(p.vertices[f]) for f in p.facets))


def regular_simplex(k: int, circumradius: float, center, frame) -> np.ndarray:
    """Vertices of a regular k-simplex of given circumradius.

    The simplex lives in the affine subspace center + span(frame), where
    ``frame`` is k orthonormal d-vectors.  Returns a (k+1, d) array of
    pairwise-equidistant points, each at ``circumradius`` from ``center``.
    """
    if k < 1:
        raise InvalidDimension("simplex dimension k must be >= 1")
    if circumradius <= 0:
        raise BadFrame("circumradius must be positive")
    fr = as_points(frame)
    if fr.shape[0] != k:
        raise BadFrame(f"frame must hold k={k} vectors, got {fr.shape[0]}")
    if not np.allclose(fr @ fr.T, np.eye(k), atol=1e2 * EPS_GEOM):
        raise BadFrame("frame vectors must be orthonormal")
    c = np.asarray(center, dtype=float)
    if c.shape[0] != fr.shape[1]:
        raise BadFrame("center dimension does not match frame")
    # centered standard-basis rows expressed in the Helmert basis of 1^perp
    rows = np.eye(k + 1) - np.full((k + 1, k + 1), 1.0 / (k + 1))
    helmert = np.zeros((k, k + 1))
    for j in range(1, k + 1):
        helmert[j - 1, :j] = 1.0
        helmert[j - 1, j] = -j
        helmert[j - 1] /= np.sqrt(j * (j + 1))
    coords = rows @ helmert.T  # (k+1, k), all rows of equal norm
    coords /= np.linalg.norm(coords[0])
    return c[None, :] + circumradius * coords @ fr


def cone_contains(cone: Cone, simplex: Simplex, eps: float = EPS_GEOM) -> bool:
    """True iff every simplex vertex is apex + nonneg combination of generators."""
    gen = cone.generators
    try:
        lam = np.linalg.solve(gen.T, (simplex.vertices - cone.apex[None, :]).T)
    except np.linalg.LinAlgError as exc:
        raise SingularGenerators(str(exc)) from exc
    scale = max(1.0, float(np.abs(lam).max()))
    if not np.all(np.isfinite(lam)) or scale > 1.0 / EPS_GEOM:
        raise SingularGenerators("generator system is numerically singular")
    return bool((lam >= -eps * scale).all())


def segment_avoids_ball(a, b, radius: float) -> bool:
    """True iff the segment [a, b] stays at distance >= radius from the origin."""
    if radius < 0:
        raise InvalidDimension("radius must be nonnegative")
    av = np.asarray(a, dtype=float)
    bv = np.asarray(b, dtype=float)
    direction = bv - av
    denom = float(direction @ direction)
    if denom == 0.0:
        return float(np.linalg.norm(av)) >= radius
    t = float(np.clip(-(av @ direction) / denom, 0.0, 1.0))
    closest = av + t * direction
    return float(np.linalg.norm(closest)) >= radius


def ball_contained_in(p: Polytope, radius: float) -> bool:
    """True iff B(radius) (centered at the origin) lies inside the polytope.

    Requires the origin strictly inside; equivalent to every facet plane
    sitting at distance >= radius from the origin.
    """
    min_offset = float(p.offsets.min())
    if min_offset <= EPS_GEOM * max(1.0, float(np.abs(p.offsets).max())):
        raise OriginOutside("origin is not strictly interior to the polytope")
    return min_offset >= radius


def inradius_about_origin(p: Polytope) -> float:
    """Distance from the origin to the nearest facet plane (origin must be inside)."""
    min_offset = float(p.offsets.min())
    if min_offset <= 0.0:
        raise OriginOutside("origin is not strictly interior to the polytope")
    return min_offset
