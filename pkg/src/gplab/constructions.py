"""Explicit geometric scaffolding for the variance and CLT experiments.

Greedy maximal separated nets on spheres, the apex/simplex/halfspace family
attached to each net point, Voronoi cells on an annulus, the dependency
graph over those cells, and per-cell hull statistics.

Construction for a given (d, n, constants) is deterministic given its
RngStream; built objects are immutable and shared across trial workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from . import geometry
from .errors import ConditionBViolated, FrameConstructionFailure
from .geometry import Hyperplane, Polytope, Simplex, regular_simplex
from .models import ModelSpec, RadiiBundle, generate
from .sampling import RngStream, halfspace_tail

NET_STOP_FACTOR = 200  # greedy stops after 200 * current-size consecutive rejections


@dataclass(frozen=True)
class SphereNet:
    """Maximal min_sep-separated point family on the sphere S(radius)."""

    radius: float
    min_sep: float
    centers: np.ndarray

    @property
    def m(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    def min_pairwise_distance(self) -> float:
        if self.m < 2:
            return math.inf
        c = self.centers
        dists = np.linalg.norm(c[:, None, :] - c[None, :, :], axis=-1)
        dists[np.diag_indices(self.m)] = math.inf
        return float(dists.min())

    def coverage_gap(self, n_probes: int, rng: RngStream) -> float:
        """Max over random sphere probes of the distance to the nearest center.

        Maximality certificate: for a maximal net the gap must stay below
        min_sep, otherwise the probe itself could have been inserted.
        """
        probes = rng.generator().standard_normal((n_probes, self.d))
        probes *= self.radius / np.linalg.norm(probes, axis=1, keepdims=True)
        d2 = ((probes[:, None, :] - self.centers[None, :, :]) ** 2).sum(axis=-1)
        return float(np.sqrt(d2.min(axis=1)).max())

    def to_json(self) -> str:
        return json.dumps(
            {"radius": self.radius, "min_sep": self.min_sep, "centers": self.centers.tolist()}
        )


def build_net(radius: float, min_sep: float, d: int, rng: RngStream) -> SphereNet:
    """Greedy maximal separated net from a stream of uniform sphere points.

    Candidates are accepted when at least min_sep from every accepted center;
    insertion stops after NET_STOP_FACTOR * max(1, current size) consecutive
    rejections.  Maximality is then certified probabilistically through
    :meth:`SphereNet.coverage_gap`.
    """
    if min_sep <= 0 or radius <= 0:
        raise ValueError("radius and min_sep must be positive")
    if not min_sep < 2 * radius:
        # separation beyond the diameter: a single point is already maximal
        gen = rng.generator()
        v = gen.standard_normal(d)
        v *= radius / np.linalg.norm(v)
        return SphereNet(radius=radius, min_sep=min_sep, centers=v[None, :])
    gen = rng.generator()
    centers: list[np.ndarray] = []
    sep2 = min_sep * min_sep
    rejections = 0
    while rejections < NET_STOP_FACTOR * max(1, len(centers)):
        batch = gen.standard_normal((64, d))
        batch *= radius / np.linalg.norm(batch, axis=1, keepdims=True)
        for cand in batch:
            if centers:
                arr = np.asarray(centers)
                if (((arr - cand) ** 2).sum(axis=1) < sep2).any():
                    rejections += 1
                    if rejections >= NET_STOP_FACTOR * max(1, len(centers)):
                        break
                    continue
            centers.append(cand)
            rejections = 0
        else:
            continue
        break
    return SphereNet(radius=radius, min_sep=min_sep, centers=np.asarray(centers))


def _frame_orthogonal_to(unit: np.ndarray) -> np.ndarray:
    """d-1 orthonormal vectors spanning the hyperplane orthogonal to unit.

    Householder reflection mapping e_1 to unit; its remaining columns are the
    frame.  Deterministic and numerically stable for any direction.
    """
    d = unit.shape[0]
    e1 = np.zeros(d)
    e1[0] = 1.0
    w = unit - e1
    norm = np.linalg.norm(w)
    if norm < 1e-14:
        frame = np.eye(d)[1:]
    else:
        w /= norm
        house = np.eye(d) - 2.0 * np.outer(w, w)
        frame = house[:, 1:].T
    check = frame @ unit
    if np.abs(check).max() > 1e-10:
        raise FrameConstructionFailure("frame is not orthogonal to the sphere direction")
    return frame


def _simplex_membership_maps(vertices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # returns (v0, Tinv) with lam(x) = Tinv @ (x - v0)
    v0 = vertices[0]
    t = (vertices[1:] - v0).T
    return v0, np.linalg.inv(t)


@dataclass(frozen=True)
class SimplexFamily:
    """Per net point: apex, base simplex, shrunken copies and halfspaces.

    Index convention for each center i: vertex 0 of the simplex is the apex
    (1 + 1/r^2) y_i; vertices 1..d are the regular base simplex in the
    tangent hyperplane H_i = {z . y_i = r^2}, at distance sqrt(2) from y_i.
    ``shrunken[i][j]`` is the homothetic copy of the simplex centered at
    vertex j with factor b_2.  ``plus_halfspace[i]`` is the halfspace beyond
    H_i; ``touch_halfspaces[i][j-1]`` (j = 1..d) is the halfspace whose
    boundary touches every shrunken copy except the one at vertex j.
    """

    net: SphereNet
    r: float
    b_2: float
    simplices: tuple[Simplex, ...]
    shrunken: tuple[tuple[Simplex, ...], ...]
    plus_halfspaces: tuple[Hyperplane, ...]
    touch_halfspaces: tuple[tuple[Hyperplane, ...], ...]

    @property
    def m(self) -> int:
        return self.net.m

    @property
    def d(self) -> int:
        return self.net.d

    def prefilter_radius(self) -> float:
        """Norm below which a point can belong to no simplex or halfspace."""
        offsets = [h.offset for row in self.touch_halfspaces for h in row]
        return min([self.r] + offsets) - 1e-9


def build_simplex_family(net: SphereNet, r: float, b_2: float) -> SimplexFamily:
    """Attach the apex/simplex/halfspace construction to every net point."""
    if abs(net.radius - r) > 1e-9 * max(1.0, r):
        raise ValueError("net radius must equal the construction radius r")
    if not 0 < b_2 < 0.5:
        raise ValueError("homothety factor b_2 must lie in (0, 1/2)")
    d = net.d
    simplices = []
    shrunken = []
    plus = []
    touch = []
    # affine function values at the simplex vertices pin each touching
    # hyperplane: zero min on the kept copies, zero max on the apex copy
    f_apex = -(b_2 / (1.0 - b_2)) ** 2
    f_keep = b_2 / (1.0 - b_2)
    f_drop = -1.0
    for y in net.centers:
        unit = y / r
        frame = _frame_orthogonal_to(unit)
        apex = (1.0 + 1.0 / (r * r)) * y
        base = regular_simplex(d - 1, math.sqrt(2.0), y, frame)
        verts = np.vstack([apex[None, :], base])
        simplex = Simplex(verts)
        simplices.append(simplex)
        shrunken.append(
            tuple(Simplex(verts[j] + b_2 * (verts - verts[j])) for j in range(d + 1))
        )
        plus.append(Hyperplane(normal=unit, offset=r))
        row = []
        for j in range(1, d + 1):
            fvals = np.full(d + 1, f_keep)
            fvals[0] = f_apex
            fvals[j] = f_drop
            system = np.hstack([verts, -np.ones((d + 1, 1))])
            sol = np.linalg.solve(system, fvals)
            a, c = sol[:d], sol[d]
            scale = np.linalg.norm(a)
            if scale < 1e-14:
                raise FrameConstructionFailure("touching hyperplane has zero normal")
            row.append(Hyperplane(normal=a / scale, offset=c / scale))
        touch.append(tuple(row))
    return SimplexFamily(
        net=net,
        r=r,
        b_2=b_2,
        simplices=tuple(simplices),
        shrunken=tuple(shrunken),
        plus_halfspaces=tuple(plus),
        touch_halfspaces=tuple(touch),
    )


def halfspace_family_mass(fam: SimplexFamily) -> np.ndarray:
    """Gaussian mass of H_i^+ and each H_i^j, as an (m, d+1) array.

    Column 0 is the mass of the halfspace beyond the tangent plane (offset r,
    identical for all i); column j >= 1 is the mass of the j-th touching
    halfspace.
    """
    out = np.empty((fam.m, fam.d + 1))
    for i in range(fam.m):
        out[i, 0] = halfspace_tail(fam.plus_halfspaces[i].offset)
        for j, h in enumerate(fam.touch_halfspaces[i], start=1):
            out[i, j] = halfspace_tail(h.offset)
    return out


def _event_A_single(sample: np.ndarray, fam: SimplexFamily, i: int, k_required: int) -> bool:
    d = fam.d
    n = sample.shape[0]
    in_any = np.zeros(n, dtype=bool)
    counts = np.empty(d + 1, dtype=int)
    for j in range(d + 1):
        member = fam.shrunken[i][j].contains(sample)
        counts[j] = int(member.sum())
        in_any |= member
    if counts[0] != k_required or (counts[1:] != 1).any():
        return False
    forbidden = fam.plus_halfspaces[i].halfspace_contains(sample)
    for h in fam.touch_halfspaces[i]:
        forbidden |= h.halfspace_contains(sample)
    return not bool((forbidden & ~in_any).any())


def detect_event_A(sample, fam: SimplexFamily, i: int, k_required: int = 1) -> bool:
    """Counting event at net point i: k_required points in the apex copy,
    exactly one in every other shrunken copy, and nothing else in the
    forbidden halfspace union.
    """
    if k_required not in (1, 2):
        raise ValueError("k_required must be 1 or 2")
    pts = geometry.as_points(sample, d=fam.d)
    # only points near the sphere radius can interact with the construction
    keep = np.linalg.norm(pts, axis=1) >= fam.prefilter_radius()
    return _event_A_single(pts[keep], fam, i, k_required)


def event_A_flags(sample, fam: SimplexFamily, k_required: int = 1) -> np.ndarray:
    """detect_event_A for every net point at once (shared prefilter)."""
    pts = geometry.as_points(sample, d=fam.d)
    keep = np.linalg.norm(pts, axis=1) >= fam.prefilter_radius()
    reduced = pts[keep]
    return np.array([_event_A_single(reduced, fam, i, k_required) for i in range(fam.m)])


@dataclass(frozen=True)
class CellPartition:
    """Voronoi cells of the net restricted to the annulus A(R, r)."""

    net: SphereNet
    R: float
    r: float

    @property
    def m(self) -> int:
        return self.net.m

    def cell_of(self, points) -> np.ndarray:
        """Nearest-center index per point; ties break to the lowest index."""
        pts = geometry.as_points(points, d=self.net.d)
        d2 = ((pts[:, None, :] - self.net.centers[None, :, :]) ** 2).sum(axis=-1)
        return d2.argmin(axis=1)

    def in_annulus(self, points) -> np.ndarray:
        pts = geometry.as_points(points, d=self.net.d)
        norms = np.linalg.norm(pts, axis=1)
        return (norms >= self.r) & (norms <= self.R)

    def annulus_volume(self) -> float:
        d = self.net.d
        kappa = math.pi ** (d / 2.0) / math.gamma(d / 2.0 + 1.0)
        return kappa * (self.R**d - self.r**d)

    def sample_annulus(self, count: int, rng: RngStream) -> np.ndarray:
        """Uniform points in the annulus (direction uniform, radial inversion)."""
        gen = rng.generator()
        d = self.net.d
        dirs = gen.standard_normal((count, d))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        u = gen.random(count)
        radii = (self.r**d + u * (self.R**d - self.r**d)) ** (1.0 / d)
        return dirs * radii[:, None]


def build_cells(net: SphereNet, R: float, r: float) -> CellPartition:
    if not r < net.radius < R:
        raise ValueError("cells need r < net radius < R")
    return CellPartition(net=net, R=R, r=r)


@dataclass(frozen=True)
class DependencyGraph:
    """Adjacency over cells; non-edges certify independence of cell statistics."""

    m: int
    adjacency: tuple[tuple[int, ...], ...]
    parameters: dict

    @property
    def max_degree(self) -> int:
        return max((len(a) for a in self.adjacency), default=0)

    def has_edge(self, i: int, j: int) -> bool:
        return j in self.adjacency[i]

    def to_json(self) -> str:
        return json.dumps(
            {
                "m": self.m,
                "adjacency": [list(a) for a in self.adjacency],
                "parameters": self.parameters,
            }
        )


def build_dependency_graph(cells: CellPartition) -> DependencyGraph:
    """Angular over-approximation of the annulus-path edge relation.

    Two cells are joined when the angle between their net points is at most
    theta = 2 * alpha_cell + 4 * gamma, where gamma = arccos(r / R) bounds
    the half-angle a single annulus segment can subtend while avoiding B(r)
    and alpha_cell = 2 * arcsin(min_sep / (2 rho)) bounds the angular radius
    of a cell (by net maximality).  Over-approximating keeps every true edge,
    so non-edges still certify independence.
    """
    net = cells.net
    rho = net.radius
    gamma = math.acos(min(1.0, cells.r / cells.R))
    alpha_cell = 2.0 * math.asin(min(1.0, net.min_sep / (2.0 * rho)))
    theta = 2.0 * alpha_cell + 4.0 * gamma
    unit = net.centers / rho
    cosines = np.clip(unit @ unit.T, -1.0, 1.0)
    angles = np.arccos(cosines)
    adj = []
    for i in range(net.m):
        nbrs = np.nonzero((angles[i] <= theta) & (np.arange(net.m) != i))[0]
        adj.append(tuple(int(j) for j in nbrs))
    return DependencyGraph(
        m=net.m,
        adjacency=tuple(adj),
        parameters={
            "R": cells.R,
            "r": cells.r,
            "rho": rho,
            "min_sep": net.min_sep,
            "gamma": gamma,
            "alpha_cell": alpha_cell,
            "theta_edge": theta,
        },
    )


@dataclass(frozen=True)
class CellStatistics:
    """Per-cell accounting of one hull realization against a cell partition.

    face_numerators[i] counts, over all s-faces of the hull, the face
    vertices lying in cell i; the face count share is numerators / (s + 1)
    and sums exactly to f_s.  xi[i] is the Monte Carlo volume of
    (cell i) intersect hull, cell_volume[i] the Monte Carlo volume of the
    cell itself (shared darts, so errors are comparable).
    """

    s: int
    f_s: int
    face_numerators: np.ndarray
    xi: np.ndarray
    xi_se: np.ndarray
    cell_volume: np.ndarray
    cell_volume_se: np.ndarray
    point_counts: np.ndarray
    darts: int

    @property
    def face_shares(self) -> np.ndarray:
        return self.face_numerators / (self.s + 1.0)

    def xi_total(self) -> tuple[float, float]:
        """Sum of cell-hull volumes with its combined standard error."""
        return float(self.xi.sum()), float(np.sqrt((self.xi_se**2).sum()))


def cell_statistics(
    p: Polytope,
    cells: CellPartition,
    sample,
    s: int,
    rng: RngStream,
    darts: int = 200_000,
) -> CellStatistics:
    """Face accounting plus Monte Carlo cell-hull volumes for one trial.

    Requires condition B: the hull must contain B(r), so every hull vertex
    lies in the annulus and every s-face is attributed to cells exactly.
    """
    if not geometry.ball_contained_in(p, cells.r):
        raise ConditionBViolated(f"hull does not contain B({cells.r:.4f})")
    m = cells.m
    norms = np.linalg.norm(p.vertices, axis=1)
    if (norms > cells.R * (1 + 1e-9)).any():
        raise ConditionBViolated("hull vertex outside B(R); not a truncated-model hull?")
    vertex_cell = cells.cell_of(p.vertices)
    numerators = np.zeros(m, dtype=int)
    faces = geometry.enumerate_faces(p, s)
    for face in faces:
        for v in face:
            numerators[vertex_cell[v]] += 1
    # shared uniform darts over the annulus measure both the cells and
    # their hull intersections
    dart_pts = cells.sample_annulus(darts, rng)
    dart_cell = cells.cell_of(dart_pts)
    inside = p.contains(dart_pts)
    vol_annulus = cells.annulus_volume()
    cell_hits = np.bincount(dart_cell, minlength=m).astype(float)
    hull_hits = np.bincount(dart_cell[inside], minlength=m).astype(float)
    p_cell = cell_hits / darts
    p_hull = hull_hits / darts
    xi = vol_annulus * p_hull
    xi_se = vol_annulus * np.sqrt(p_hull * (1.0 - p_hull) / darts)
    cvol = vol_annulus * p_cell
    cvol_se = vol_annulus * np.sqrt(p_cell * (1.0 - p_cell) / darts)
    pts = geometry.as_points(sample, d=cells.net.d)
    in_ann = cells.in_annulus(pts)
    counts = np.bincount(cells.cell_of(pts[in_ann]), minlength=m)
    return CellStatistics(
        s=s,
        f_s=len(faces),
        face_numerators=numerators,
        xi=xi,
        xi_se=xi_se,
        cell_volume=cvol,
        cell_volume_se=cvol_se,
        point_counts=counts,
        darts=darts,
    )


def sandwich_trial(spec: ModelSpec, radii: RadiiBundle, rng: RngStream) -> bool:
    """One containment trial: does the model hull contain B(r_sandwich)?"""
    if spec.kind == "gaussian":
        raise ValueError("sandwich trials are defined for the truncated and poisson models")
    _, record = generate(spec, radii, rng)
    return bool(record.sandwich_ok)
