"""Tensor-product prismatic space-time meshes.

A :class:`PrismMesh` is the product of a :class:`TimePartition` of ``[0, T]``
and a :class:`Triangulation` of a polygon.  Triangles are stored as vertex
triples ``(a, b, c)`` in counter-clockwise order with ``c`` the newest vertex,
so that ``(a, b)`` is the refinement edge used by newest vertex bisection.

Example
-------

>>> mesh = make_initial_mesh("square")
>>> fine = refine_uniform(refine_uniform(mesh))
>>> fine.n_prisms, mesh_size(fine)
(256, 0.25)
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

INTERIOR, BOUNDARY, CORNER = 0, 1, 2


@dataclass(frozen=True)
class TimePartition:
    """Strictly increasing breakpoints ``0 = t_0 < ... < t_N = T``."""

    breakpoints: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.breakpoints, dtype=float)
        if t.ndim != 1 or t.size < 2:
            raise ValueError("need at least two breakpoints")
        if t[0] != 0.0:
            raise ValueError("first breakpoint must be 0")
        if np.any(np.diff(t) <= 0):
            raise ValueError("breakpoints must be strictly increasing")
        t.setflags(write=False)
        object.__setattr__(self, "breakpoints", t)

    @property
    def T(self) -> float:
        return float(self.breakpoints[-1])

    @property
    def n_slabs(self) -> int:
        return self.breakpoints.size - 1

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    def bisect(self) -> "TimePartition":
        t = self.breakpoints
        out = np.empty(2 * t.size - 1)
        out[0::2] = t
        out[1::2] = 0.5 * (t[:-1] + t[1:])
        return TimePartition(out)


@dataclass(frozen=True, eq=False)
class Triangulation:
    """Conforming triangulation with newest-vertex labels.

    Parameters
    ----------
    vertices : (nv, 2) array
    triangles : (nt, 3) int array
        Counter-clockwise; the last entry of every row is the newest vertex.
    corners : (nc,) int array
        Vertex indices of the polygon corners.  Vertex indices are stable
        under refinement, so these are fixed on the initial mesh.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    corners: np.ndarray

    def __post_init__(self):
        for name, dtype in (("vertices", float), ("triangles", np.int64),
                            ("corners", np.int64)):
            a = np.array(getattr(self, name), dtype=dtype)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        if np.any(self.areas <= 0):
            raise ValueError("triangles must have positive signed area")

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def newest_vertex(self) -> np.ndarray:
        return self.triangles[:, 2]

    @cached_property
    def areas(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @cached_property
    def diameters(self) -> np.ndarray:
        p = self.vertices[self.triangles]
        d = [np.linalg.norm(p[:, i] - p[:, j], axis=1)
             for i, j in ((0, 1), (1, 2), (2, 0))]
        return np.max(d, axis=0)

    @cached_property
    def _edge_data(self):
        t = self.triangles
        # local edge i is opposite local vertex i
        local = np.stack([t[:, [1, 2]], t[:, [2, 0]], t[:, [0, 1]]], axis=1)
        keys = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        tri_edges = inverse.reshape(-1, 3)
        counts = np.bincount(inverse, minlength=len(edges))
        if np.any(counts > 2):
            raise ValueError("edge shared by more than two triangles")
        edge_tris = -np.ones((len(edges), 2), dtype=np.int64)
        edge_local = -np.ones((len(edges), 2), dtype=np.int64)
        order = np.argsort(inverse, kind="stable")
        first = np.ones(len(inverse), dtype=bool)
        sorted_inv = inverse[order]
        first[1:] = sorted_inv[1:] != sorted_inv[:-1]
        slot = np.where(first, 0, 1)
        edge_tris[sorted_inv, slot] = order // 3
        edge_local[sorted_inv, slot] = order % 3
        return edges, tri_edges, edge_tris, edge_local

    @property
    def edges(self) -> np.ndarray:
        """(ne, 2) vertex pairs, sorted so that ``edges[:, 0] < edges[:, 1]``."""
        return self._edge_data[0]

    @property
    def tri_edges(self) -> np.ndarray:
        """(nt, 3) edge index opposite each local vertex."""
        return self._edge_data[1]

    @property
    def edge_triangles(self) -> np.ndarray:
        """(ne, 2) adjacent triangles; ``-1`` in the second slot on the boundary."""
        return self._edge_data[2]

    @property
    def edge_local_index(self) -> np.ndarray:
        return self._edge_data[3]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @cached_property
    def boundary_edges(self) -> np.ndarray:
        return self.edge_triangles[:, 1] < 0

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        p = self.vertices[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @cached_property
    def edge_tangents(self) -> np.ndarray:
        """Unit tangent from the lower to the higher vertex index."""
        p = self.vertices[self.edges]
        d = p[:, 1] - p[:, 0]
        return d / np.linalg.norm(d, axis=1)[:, None]

    @cached_property
    def edge_normals(self) -> np.ndarray:
        """Global unit normal per edge; outward on boundary edges."""
        tau = self.edge_tangents
        n = np.stack([tau[:, 1], -tau[:, 0]], axis=1)
        bnd = self.boundary_edges
        if np.any(bnd):
            tri = self.edge_triangles[bnd, 0]
            mid = self.vertices[self.edges[bnd]].mean(axis=1)
            centroid = self.vertices[self.triangles[tri]].mean(axis=1)
            flip = np.einsum("ij,ij->i", n[bnd], mid - centroid) < 0
            nb = n[bnd]
            nb[flip] *= -1
            n[bnd] = nb
        return n

    @cached_property
    def boundary(self) -> "BoundaryInfo":
        return classify_boundary(self)

    def area(self) -> float:
        return float(self.areas.sum())


@dataclass(frozen=True, eq=False)
class BoundaryInfo:
    """Per-vertex boundary classification.

    ``kind[v]`` is one of ``INTERIOR``, ``BOUNDARY`` (non-corner boundary
    vertex) and ``CORNER``; ``normal[v]`` is the outward unit normal for
    non-corner boundary vertices and zero otherwise.
    """

    kind: np.ndarray
    normal: np.ndarray
    # two boundary edges meeting at each boundary vertex, -1 elsewhere
    vertex_edges: np.ndarray = field(repr=False)

    @property
    def interior(self) -> np.ndarray:
        return np.flatnonzero(self.kind == INTERIOR)

    @property
    def noncorner(self) -> np.ndarray:
        return np.flatnonzero(self.kind == BOUNDARY)

    @property
    def corners(self) -> np.ndarray:
        return np.flatnonzero(self.kind == CORNER)


def classify_boundary(tri: Triangulation) -> BoundaryInfo:
    """Classify vertices into interior, non-corner boundary and corner.

    Boundary edges are those with a single adjacent triangle.  Corners are
    taken from ``tri.corners``; any other boundary vertex must have collinear
    adjacent boundary edges, otherwise the mesh is reported as corrupt.
    """
    nv = tri.n_vertices
    bnd = np.flatnonzero(tri.boundary_edges)
    ends = tri.edges[bnd]
    count = np.bincount(ends.ravel(), minlength=nv)
    if np.any((count != 0) & (count != 2)):
        raise ValueError("boundary is not a union of closed polygons")
    vertex_edges = -np.ones((nv, 2), dtype=np.int64)
    fill = np.zeros(nv, dtype=np.int64)
    for e, (a, b) in zip(bnd, ends):
        vertex_edges[a, fill[a]] = e
        fill[a] += 1
        vertex_edges[b, fill[b]] = e
        fill[b] += 1

    kind = np.full(nv, INTERIOR, dtype=np.int64)
    normal = np.zeros((nv, 2))
    on_bnd = count == 2
    kind[on_bnd] = BOUNDARY
    is_corner = np.zeros(nv, dtype=bool)
    is_corner[tri.corners] = True
    if np.any(is_corner & ~on_bnd):
        raise ValueError("corner vertex not on the boundary")
    kind[is_corner] = CORNER

    en = tri.edge_normals
    idx = np.flatnonzero(kind == BOUNDARY)
    na = en[vertex_edges[idx, 0]]
    nb = en[vertex_edges[idx, 1]]
    if np.any(np.abs(na - nb).max(axis=1) > 1e-12):
        bad = idx[np.abs(na - nb).max(axis=1) > 1e-12][0]
        raise ValueError(
            f"vertex {bad} has non-collinear boundary edges but is not a corner")
    normal[idx] = na
    return BoundaryInfo(kind=kind, normal=normal, vertex_edges=vertex_edges)


def detect_corners(vertices, triangles) -> np.ndarray:
    """Boundary vertices whose two boundary edges are not collinear."""
    probe = Triangulation(vertices, triangles, corners=np.zeros(0, dtype=int))
    bnd = np.flatnonzero(probe.boundary_edges)
    en = probe.edge_normals
    first = {}
    corners = set()
    for e in bnd:
        for v in probe.edges[e]:
            if v in first:
                if np.abs(en[first[v]] - en[e]).max() > 1e-12:
                    corners.add(int(v))
            else:
                first[v] = e
    return np.array(sorted(corners), dtype=np.int64)


@dataclass(frozen=True, eq=False)
class PrismMesh:
    time: TimePartition
    space: Triangulation
    level: int = 0
    domain: str = ""

    @property
    def n_prisms(self) -> int:
        return self.time.n_slabs * self.space.n_triangles


def _square_pieces(x0, y0):
    """Vertices and triangles of a unit square split by both diagonals."""
    v = np.array([[x0, y0], [x0 + 1, y0], [x0 + 1, y0 + 1], [x0, y0 + 1],
                  [x0 + 0.5, y0 + 0.5]])
    t = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return v, t


def _merge(pieces):
    verts, tris, lookup = [], [], {}
    for v, t in pieces:
        ids = []
        for p in v:
            key = (round(p[0] * 4), round(p[1] * 4))
            if key not in lookup:
                lookup[key] = len(verts)
                verts.append(p)
            ids.append(lookup[key])
        tris.extend([[ids[i] for i in row] for row in t])
    return np.array(verts, dtype=float), np.array(tris, dtype=np.int64)


def make_initial_mesh(domain: str = "square") -> PrismMesh:
    """Initial prismatic mesh ``[0, 1] x Omega`` for ``square`` or ``lshape``.

    The square ``(0,1)^2`` is cut into four triangles by its diagonals; the
    L-shape ``(-1,1)^2 minus [-1,0]^2`` consists of three such squares.  The
    newest vertex of every triangle is the center of its square.
    """
    if domain == "square":
        vertices, triangles = _square_pieces(0.0, 0.0)
    elif domain == "lshape":
        vertices, triangles = _merge(
            [_square_pieces(0.0, 0.0), _square_pieces(-1.0, 0.0),
             _square_pieces(0.0, -1.0)])
    else:
        raise ValueError(f"unknown domain {domain!r}")
    corners = detect_corners(vertices, triangles)
    space = Triangulation(vertices, triangles, corners)
    return PrismMesh(TimePartition(np.array([0.0, 1.0])), space, 0, domain)


def bisect(tri: Triangulation) -> Triangulation:
    """One newest vertex bisection of every triangle.

    ``(a, b, c)`` with newest vertex ``c`` is split at the midpoint ``m`` of
    ``(a, b)`` into ``(c, a, m)`` and ``(b, c, m)``; ``m`` becomes the newest
    vertex of both children.  Midpoints are keyed by their sorted endpoint
    indices, so shared edges yield a single new vertex.
    """
    t = tri.triangles
    keys = np.sort(t[:, :2], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    mids = tri.n_vertices + np.arange(len(uniq))
    new_vertices = np.vstack(
        [tri.vertices, 0.5 * (tri.vertices[uniq[:, 0]] + tri.vertices[uniq[:, 1]])])
    m = mids[inv]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    child1 = np.stack([c, a, m], axis=1)
    child2 = np.stack([b, c, m], axis=1)
    # children of triangle k are 2k, 2k+1
    new_tris = np.empty((2 * len(t), 3), dtype=np.int64)
    new_tris[0::2] = child1
    new_tris[1::2] = child2
    return Triangulation(new_vertices, new_tris, tri.corners)


def check_conforming(tri: Triangulation) -> None:
    """Raise if some vertex lies in the interior of an edge (hanging node)."""
    p = tri.vertices
    e = tri.edges
    bnd = tri.boundary_edges
    # a hanging node makes the boundary of the union non-closed or produces
    # boundary edges strictly inside the domain; test via total area and
    # boundary length against the refined midpoints.
    mids = 0.5 * (p[e[:, 0]] + p[e[:, 1]])
    key = {tuple(np.round(q, 14)) for q in p}
    hanging = [i for i in np.flatnonzero(~bnd) if tuple(np.round(mids[i], 14)) in key]
    if hanging:
        raise ValueError(f"hanging node on edge {hanging[0]}")
    classify_boundary(tri)


def refine_uniform(mesh: PrismMesh) -> PrismMesh:
    """Split every prism into 8: one time bisection, two rounds of NVB."""
    space = bisect(bisect(mesh.space))
    return PrismMesh(mesh.time.bisect(), space, mesh.level + 1, mesh.domain)


def refined_mesh(domain: str, level: int) -> PrismMesh:
    mesh = make_initial_mesh(domain)
    for _ in range(level):
        mesh = refine_uniform(mesh)
    return mesh


def mesh_size(mesh: PrismMesh) -> float:
    """``max(max_J |J|, max_K diam K)``."""
    return float(max(mesh.time.lengths.max(), mesh.space.diameters.max()))


def min_angles(tri: Triangulation) -> np.ndarray:
    p = tri.vertices[tri.triangles]
    out = np.full(tri.n_triangles, np.pi)
    for i in range(3):
        u = p[:, (i + 1) % 3] - p[:, i]
        v = p[:, (i + 2) % 3] - p[:, i]
        cos = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        out = np.minimum(out, np.arccos(np.clip(cos, -1, 1)))
    return out


def write_mesh_text(mesh: PrismMesh, path) -> None:
    """Debug dump: ``v x y``, ``t i j k newest`` and ``s t`` lines."""
    with open(path, "w", encoding="utf-8") as fh:
        for x, y in mesh.space.vertices:
            fh.write(f"v {float(x)!r} {float(y)!r}\n")
        for i, j, k in mesh.space.triangles:
            fh.write(f"t {i} {j} {k} {k}\n")
        for t in mesh.time.breakpoints:
            fh.write(f"s {float(t)!r}\n")
