"""Structured P1 triangulations of the unit square and the unit disk.

Meshes are immutable: arrays are flagged read-only after construction and
derived geometry (areas, gradients, edge lists) is computed lazily and cached.
Boundary vertices are kept in counterclockwise traversal order; every boundary
vector in the package (Dirichlet data, DtN pairings) follows that order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path

import numpy as np


class Region(str, Enum):
    UNIT_SQUARE = "UnitSquare"
    UNIT_DISK = "UnitDisk"

    @classmethod
    def parse(cls, value: "Region | str") -> "Region":
        if isinstance(value, Region):
            return value
        key = str(value).replace("_", "").replace("-", "").lower()
        for member in cls:
            if member.value.lower() == key or member.value.lower() == "unit" + key:
                return member
        raise ValueError(f"unknown region {value!r}; expected UnitSquare or UnitDisk")


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TriangleMesh:
    """Conforming P1 triangulation with an ordered boundary loop.

    Attributes
    ----------
    vertices : (N, 2) float array
    triangles : (M, 3) int array, counterclockwise
    boundary_edges : (B, 2) int array
        Consecutive edges of the closed boundary loop, counterclockwise, so
        ``boundary_edges[k, 1] == boundary_edges[k + 1, 0]``.
    region : Region
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    region: Region
    _check: bool = field(default=True, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "vertices", _frozen(self.vertices, float))
        object.__setattr__(self, "triangles", _frozen(self.triangles, np.int64))
        object.__setattr__(self, "boundary_edges", _frozen(self.boundary_edges, np.int64))
        object.__setattr__(self, "region", Region.parse(self.region))
        if self._check:
            self.validate()

    # -- topology ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    @cached_property
    def boundary_nodes(self) -> np.ndarray:
        """Boundary vertex indices in traversal order."""
        return _frozen(self.boundary_edges[:, 0], np.int64)

    @cached_property
    def boundary_vertex_flags(self) -> np.ndarray:
        flags = np.zeros(self.n_vertices, dtype=bool)
        flags[self.boundary_nodes] = True
        flags.setflags(write=False)
        return flags

    @cached_property
    def interior_nodes(self) -> np.ndarray:
        return _frozen(np.flatnonzero(~self.boundary_vertex_flags), np.int64)

    @cached_property
    def edges(self) -> np.ndarray:
        """Unique undirected edges (i < j), sorted lexicographically."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return _frozen(np.unique(e, axis=0), np.int64)

    # -- geometry ---------------------------------------------------------

    @cached_property
    def signed_areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return _frozen(0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]), float)

    @property
    def areas(self) -> np.ndarray:
        return self.signed_areas

    @cached_property
    def gradients(self) -> np.ndarray:
        """(M, 3, 2) gradients of the three barycentric hat functions per triangle."""
        p = self.vertices[self.triangles]
        two_area = 2.0 * self.signed_areas
        # grad phi_i = perp(p_k - p_j) / (2|T|) for (i, j, k) cyclic
        g = np.empty((self.n_triangles, 3, 2))
        for i, (j, k) in enumerate(((1, 2), (2, 0), (0, 1))):
            d = p[:, k] - p[:, j]
            g[:, i, 0] = -d[:, 1] / two_area
            g[:, i, 1] = d[:, 0] / two_area
        g.setflags(write=False)
        return g

    @cached_property
    def boundary_normals(self) -> np.ndarray:
        """Outward unit normal of each boundary edge."""
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        n = np.column_stack([d[:, 1], -d[:, 0]])
        n /= np.linalg.norm(n, axis=1)[:, None]
        return _frozen(n, float)

    @cached_property
    def boundary_edge_lengths(self) -> np.ndarray:
        d = self.vertices[self.boundary_edges[:, 1]] - self.vertices[self.boundary_edges[:, 0]]
        return _frozen(np.linalg.norm(d, axis=1), float)

    @cached_property
    def boundary_arclength(self) -> np.ndarray:
        """Cumulative arclength at each boundary node, starting from 0 at the first."""
        s = np.concatenate([[0.0], np.cumsum(self.boundary_edge_lengths)[:-1]])
        return _frozen(s, float)

    @cached_property
    def max_diameter(self) -> float:
        p = self.vertices[self.triangles]
        lengths = [np.linalg.norm(p[:, a] - p[:, b], axis=1) for a, b in ((0, 1), (1, 2), (2, 0))]
        return float(np.max(lengths))

    @property
    def centroid(self) -> np.ndarray:
        return np.array([0.5, 0.5]) if self.region is Region.UNIT_SQUARE else np.zeros(2)

    @property
    def boundary_points(self) -> np.ndarray:
        return self.vertices[self.boundary_nodes]

    # -- checks -----------------------------------------------------------

    def validate(self) -> None:
        """Raise ``ValueError`` if any mesh invariant is violated."""
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must have shape (N, 2)")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise ValueError("triangles must have shape (M, 3)")
        if self.triangles.min() < 0 or self.triangles.max() >= self.n_vertices:
            raise ValueError("triangle index out of range")
        if np.any(self.signed_areas <= 0):
            bad = np.flatnonzero(self.signed_areas <= 0)[:5]
            raise ValueError(f"non-positive triangle area (triangles {bad.tolist()})")
        be = self.boundary_edges
        if not np.array_equal(be[1:, 0], be[:-1, 1]) or be[-1, 1] != be[0, 0]:
            raise ValueError("boundary_edges must form one closed consecutive loop")
        # each boundary edge belongs to exactly one triangle, and no other edge does
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        und = np.sort(directed, axis=1)
        uniq, counts = np.unique(und, axis=0, return_counts=True)
        if counts.max() > 2:
            raise ValueError("non-manifold edge")
        topo = {tuple(e) for e in uniq[counts == 1]}
        given = {tuple(sorted(e)) for e in be.tolist()}
        if topo != given or len(given) != len(be):
            raise ValueError("boundary_edges do not match the topological boundary")
        # orientation: boundary edges appear in triangles with the same direction
        dset = {tuple(e) for e in directed.tolist()}
        if not all(tuple(e) in dset for e in be.tolist()):
            raise ValueError("boundary loop must be counterclockwise")

    # -- serialization ----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "region": self.region.value,
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "boundary_edges": self.boundary_edges.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TriangleMesh":
        try:
            return cls(
                vertices=np.asarray(data["vertices"], dtype=float),
                triangles=np.asarray(data["triangles"], dtype=np.int64),
                boundary_edges=np.asarray(data["boundary_edges"], dtype=np.int64),
                region=data["region"],
            )
        except KeyError as exc:
            raise ValueError(f"mesh document is missing key {exc.args[0]!r}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "TriangleMesh":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _square_grid(n: int, lo: float, hi: float):
    xs = np.linspace(lo, hi, n + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((n + 1) ** 2).reshape(n + 1, n + 1)  # idx[j, i]
    boundary = np.concatenate([
        idx[0, :-1],            # bottom, left to right
        idx[:-1, -1],           # right, bottom to top
        idx[-1, :0:-1],         # top, right to left
        idx[:0:-1, 0],          # left, top to bottom
    ])
    boundary_edges = np.column_stack([boundary, np.roll(boundary, -1)])
    return vertices, idx, boundary_edges


def _split_cells(idx: np.ndarray, flip: np.ndarray) -> np.ndarray:
    v00 = idx[:-1, :-1].ravel()
    v10 = idx[:-1, 1:].ravel()
    v01 = idx[1:, :-1].ravel()
    v11 = idx[1:, 1:].ravel()
    f = flip.ravel()
    # unflipped: diagonal v00-v11; flipped: diagonal v10-v01
    t1 = np.where(f[:, None], np.column_stack([v00, v10, v01]), np.column_stack([v00, v10, v11]))
    t2 = np.where(f[:, None], np.column_stack([v10, v11, v01]), np.column_stack([v00, v11, v01]))
    return np.concatenate([t1, t2])


def generate(region: "Region | str", resolution: int) -> TriangleMesh:
    """Structured triangulation of the unit square [0,1]^2 or the unit disk.

    For the square, ``resolution`` is the number of cells per side. For the disk
    a ``2*resolution`` grid on [-1,1]^2 is pulled onto the disk by radial
    rescaling, so the mesh width is comparable to the square's at equal
    resolution.
    """
    region = Region.parse(region)
    if int(resolution) != resolution or resolution < 2:
        raise ValueError(f"resolution must be an integer >= 2, got {resolution!r}")
    n = int(resolution)
    if region is Region.UNIT_SQUARE:
        vertices, idx, bedges = _square_grid(n, 0.0, 1.0)
        tris = _split_cells(idx, np.zeros((n, n), dtype=bool))
        return TriangleMesh(vertices, tris, bedges, region)

    m = 2 * n
    vertices, idx, bedges = _square_grid(m, -1.0, 1.0)
    c = (np.arange(m) + 0.5) / n - 1.0
    cx, cy = np.meshgrid(c, c, indexing="xy")
    # diagonals point away from the centre so the corner cells stay well shaped
    flip = cx * cy < 0
    tris = _split_cells(idx, flip)
    sup = np.max(np.abs(vertices), axis=1)
    r = np.linalg.norm(vertices, axis=1)
    scale = np.divide(sup, r, out=np.ones_like(r), where=r > 0)
    vertices = vertices * scale[:, None]
    b = bedges[:, 0]
    vertices[b] /= np.linalg.norm(vertices[b], axis=1)[:, None]
    return TriangleMesh(vertices, tris, bedges, region)


def refine(mesh: TriangleMesh) -> TriangleMesh:
    """Uniform red refinement; every triangle is split into four.

    Parent vertices keep their indices. Edge midpoints are appended in the
    order of ``mesh.edges``; on the disk, boundary midpoints are projected
    onto the unit circle.
    """
    edges = mesh.edges
    nv = mesh.n_vertices
    mids = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    key = edges[:, 0] * nv + edges[:, 1]
    order = np.argsort(key)
    skey = key[order]

    def mid_index(a, b):
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        pos = np.searchsorted(skey, lo * nv + hi)
        return nv + order[pos]

    t = mesh.triangles
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    mab, mbc, mca = mid_index(a, b), mid_index(b, c), mid_index(c, a)
    tris = np.concatenate([
        np.column_stack([a, mab, mca]),
        np.column_stack([mab, b, mbc]),
        np.column_stack([mca, mbc, c]),
        np.column_stack([mab, mbc, mca]),
    ])
    be = mesh.boundary_edges
    bm = mid_index(be[:, 0], be[:, 1])
    bedges = np.empty((2 * len(be), 2), dtype=np.int64)
    bedges[0::2, 0], bedges[0::2, 1] = be[:, 0], bm
    bedges[1::2, 0], bedges[1::2, 1] = bm, be[:, 1]
    vertices = np.concatenate([mesh.vertices, mids])
    if mesh.region is Region.UNIT_DISK:
        vertices[bm] /= np.linalg.norm(vertices[bm], axis=1)[:, None]
    return TriangleMesh(vertices, tris, bedges, mesh.region)


def boundary_distance(mesh_or_region, point) -> float:
    """Signed distance to the boundary: positive outside, negative inside.

    Uses the analytic shape of the region; no mesh search is performed.
    """
    region = mesh_or_region.region if isinstance(mesh_or_region, TriangleMesh) else Region.parse(mesh_or_region)
    p = np.asarray(point, dtype=float)
    if region is Region.UNIT_DISK:
        return float(np.hypot(p[0], p[1]) - 1.0)
    q = np.abs(p - 0.5) - 0.5
    outside = np.linalg.norm(np.maximum(q, 0.0))
    inside = min(max(q[0], q[1]), 0.0)
    return float(outside + inside)


def region_area(region) -> float:
    return 1.0 if Region.parse(region) is Region.UNIT_SQUARE else float(np.pi)
