"""Macro-element geometry and local bases.

Every triangle ``K`` carries two splits:

* the Clough-Tocher split ``R(K)``: three subtriangles ``(g, v[i+1], v[i+2])``
  through the centroid ``g``, carrier of the 9-dimensional symmetric stress
  element;
* a Powell-Sabin split: six subtriangles through the incenter ``z``, with one
  split point per edge, carrier of the velocity edge bubbles.

Trial functions are polynomial only on their own split, so pairings between
velocity bubbles and stresses are integrated on the common refinement of the
two splits (:func:`split_quadrature`).

Local numbering.  Vertex ``i`` is opposite local edge ``i`` = ``(v[i+1],
v[i+2])``.  Powell-Sabin nodes are ``0..2`` (vertices), ``3+i`` (split point
of edge ``i``), ``6`` (incenter); subtriangle ``2i`` is ``(z, v[i+1], m_i)``
and ``2i+1`` is ``(z, m_i, v[i+2])``.  Clough-Tocher nodes are ``0..2`` and
``3`` (centroid); subtriangle ``i`` is ``(g, v[i+1], v[i+2])``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Triangulation
from .quadrature import gauss_triangle

PS_SUB_NODES = np.array([[6, 1, 3], [6, 3, 2],
                         [6, 2, 4], [6, 4, 0],
                         [6, 0, 5], [6, 5, 1]])
CT_SUB_NODES = np.array([[3, 1, 2], [3, 2, 0], [3, 0, 1]])

# symmetric tensors are stored as (xx, xy, yy)
XX, XY, YY = 0, 1, 2


class UnisolvenceError(np.linalg.LinAlgError):
    """Local element space has the wrong dimension or a singular DOF matrix."""


def barycentric_maps(nodes):
    """Affine maps ``[1, x, y] -> barycentrics`` for triangles ``(..., 3, 2)``.

    Returns ``C`` with ``lambda = C @ [1, x, y]``; ``C[..., :, 1:]`` holds the
    (constant) gradients of the barycentric coordinates.
    """
    nodes = np.asarray(nodes, dtype=float)
    M = np.ones(nodes.shape[:-2] + (3, 3))
    M[..., 1, :] = nodes[..., 0]
    M[..., 2, :] = nodes[..., 1]
    return np.linalg.inv(M)


def incenters(P):
    a = np.linalg.norm(P[:, 1] - P[:, 2], axis=1)
    b = np.linalg.norm(P[:, 2] - P[:, 0], axis=1)
    c = np.linalg.norm(P[:, 0] - P[:, 1], axis=1)
    s = a + b + c
    return (a[:, None] * P[:, 0] + b[:, None] * P[:, 1] + c[:, None] * P[:, 2]) / s[:, None]


@dataclass(frozen=True, eq=False)
class SplitGeometry:
    """Node coordinates of both splits for every triangle.

    Attributes
    ----------
    ps_nodes : (nt, 7, 2)
    ct_nodes : (nt, 4, 2)
    ps_maps : (nt, 6, 3, 3) barycentric maps of the Powell-Sabin subtriangles
    ct_maps : (nt, 3, 3, 3) barycentric maps of the Clough-Tocher subtriangles
    tri_maps : (nt, 3, 3) barycentric maps of the triangles themselves
    """

    ps_nodes: np.ndarray
    ct_nodes: np.ndarray
    ps_maps: np.ndarray
    ct_maps: np.ndarray
    tri_maps: np.ndarray


def split_geometry(tri: Triangulation) -> SplitGeometry:
    P = tri.vertices[tri.triangles]
    nt = tri.n_triangles
    z = incenters(P)
    # split point of every edge: intersection of the line joining the two
    # incenters with the edge, midpoint on the boundary
    edges = tri.edges
    A = tri.vertices[edges[:, 0]]
    B = tri.vertices[edges[:, 1]]
    split = 0.5 * (A + B)
    inner = np.flatnonzero(~tri.boundary_edges)
    z1 = z[tri.edge_triangles[inner, 0]]
    z2 = z[tri.edge_triangles[inner, 1]]
    d = z2 - z1
    e = B[inner] - A[inner]
    rhs = A[inner] - z1
    det = d[:, 0] * (-e[:, 1]) - d[:, 1] * (-e[:, 0])
    s = (rhs[:, 0] * (-e[:, 1]) - rhs[:, 1] * (-e[:, 0])) / det
    pt = z1 + s[:, None] * d
    split[inner] = pt

    ps_nodes = np.empty((nt, 7, 2))
    ps_nodes[:, :3] = P
    ps_nodes[:, 3:6] = split[tri.tri_edges]
    ps_nodes[:, 6] = z
    ct_nodes = np.empty((nt, 4, 2))
    ct_nodes[:, :3] = P
    ct_nodes[:, 3] = P.mean(axis=1)

    ps_maps = barycentric_maps(ps_nodes[:, PS_SUB_NODES])
    ct_maps = barycentric_maps(ct_nodes[:, CT_SUB_NODES])
    tri_maps = barycentric_maps(P)
    return SplitGeometry(ps_nodes, ct_nodes, ps_maps, ct_maps, tri_maps)


# --------------------------------------------------------------------------
# common refinement quadrature


def _clip(poly, tri, eps):
    """Sutherland-Hodgman clip of a convex polygon by a CCW triangle."""
    out = list(poly)
    for k in range(3):
        a = tri[k]
        b = tri[(k + 1) % 3]
        ex, ey = b - a
        inp, out = out, []
        if not inp:
            break
        s = inp[-1]
        ds = ex * (s[1] - a[1]) - ey * (s[0] - a[0])
        for p in inp:
            dp = ex * (p[1] - a[1]) - ey * (p[0] - a[0])
            if dp >= -eps:
                if ds < -eps:
                    out.append(s + (p - s) * (ds / (ds - dp)))
                out.append(p)
            elif ds >= -eps:
                out.append(s + (p - s) * (ds / (ds - dp)))
            s, ds = p, dp
    return out


@dataclass(frozen=True, eq=False)
class QuadPoints:
    """Quadrature points on the common refinement of both splits.

    ``tri``, ``ct`` and ``ps`` give the triangle and the subtriangles that
    contain every point.  Weights include the area Jacobian.
    """

    tri: np.ndarray
    ct: np.ndarray
    ps: np.ndarray
    xy: np.ndarray
    w: np.ndarray

    @property
    def n(self) -> int:
        return self.w.size


def _cells(ct_nodes, ps_nodes, scale):
    cells = []
    eps = 1e-13 * scale
    for i in range(3):
        ct = ct_nodes[CT_SUB_NODES[i]]
        for j in range(6):
            ps = ps_nodes[PS_SUB_NODES[j]]
            poly = _clip(list(ps), ct, eps)
            if len(poly) < 3:
                continue
            for k in range(1, len(poly) - 1):
                t = np.array([poly[0], poly[k], poly[k + 1]])
                d1 = t[1] - t[0]
                d2 = t[2] - t[0]
                area = 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])
                if area > 1e-12 * scale * scale:
                    cells.append((i, j, t, area))
    return cells


def split_quadrature(tri: Triangulation, geo: SplitGeometry, degree: int) -> QuadPoints:
    """Gauss points of the given degree on every cell of CT(K) cap PS(K)."""
    bary, wref = gauss_triangle(degree)
    out_t, out_ct, out_ps, out_xy, out_w = [], [], [], [], []
    diam = tri.diameters
    for k in range(tri.n_triangles):
        for i, j, t, area in _cells(geo.ct_nodes[k], geo.ps_nodes[k], diam[k]):
            nq = len(wref)
            out_t.append(np.full(nq, k))
            out_ct.append(np.full(nq, i))
            out_ps.append(np.full(nq, j))
            out_xy.append(bary @ t)
            out_w.append(2.0 * area * wref)
    return QuadPoints(np.concatenate(out_t), np.concatenate(out_ct),
                      np.concatenate(out_ps), np.concatenate(out_xy),
                      np.concatenate(out_w))


def locate(geo: SplitGeometry, k: int, xy, tol=1e-12):
    """Clough-Tocher and Powell-Sabin subtriangle of a point in triangle ``k``."""
    h = np.array([1.0, xy[0], xy[1]])
    lam = geo.tri_maps[k] @ h
    if lam.min() < -tol:
        raise ValueError(f"point {tuple(xy)} is outside triangle {k}")
    ct = int(np.argmax((geo.ct_maps[k] @ h).min(axis=1)))
    ps = int(np.argmax((geo.ps_maps[k] @ h).min(axis=1)))
    return ct, ps


# --------------------------------------------------------------------------
# edge bubbles


@dataclass(frozen=True, eq=False)
class EdgeBubbles:
    """Edge bubbles of the interior edges.

    The bubble of edge ``e`` is continuous and piecewise linear on the
    Powell-Sabin splits of its two triangles, vanishes on the boundary of
    the patch and has constant divergence on each triangle.  It is fixed by
    its values at the two incenters and at the split point of ``e``, scaled
    so that ``int_e phi . n_e ds = |e|`` with the global edge normal.

    Attributes
    ----------
    edges : (nb,) interior edge indices
    incenter_values : (nb, 2, 2) values at the incenters of
        ``edge_triangles[e, 0]`` and ``edge_triangles[e, 1]``
    split_values : (nb, 2) value at the split point of ``e``
    divergence : (nb, 2) constant divergence on both triangles
    """

    edges: np.ndarray
    incenter_values: np.ndarray
    split_values: np.ndarray
    divergence: np.ndarray


def _ps_divergence_rows(geo, k, i):
    """Rows mapping (value at z, value at m_i) to the divergence on the six
    Powell-Sabin subtriangles of triangle ``k``."""
    rows = np.zeros((6, 4))
    for j in range(6):
        grads = geo.ps_maps[k, j][:, 1:]
        for slot, node in enumerate(PS_SUB_NODES[j]):
            if node == 6:
                rows[j, 0:2] += grads[slot]
            elif node == 3 + i:
                rows[j, 2:4] += grads[slot]
    return rows


def build_edge_bubble(tri: Triangulation, geo: SplitGeometry, e: int, rtol=1e-10):
    """Construct the bubble of interior edge ``e``.

    Solves for the values ``(phi(z1), phi(z2), phi(m_e))`` such that the
    divergence is the same on all six Powell-Sabin subtriangles of each
    adjacent triangle.  The solution space must be one-dimensional with
    nonzero flux through ``e``.
    """
    k1, k2 = tri.edge_triangles[e]
    if k2 < 0:
        raise ValueError(f"edge {e} is on the boundary")
    i1, i2 = tri.edge_local_index[e]
    rows = []
    for slot, (k, i) in enumerate(((k1, i1), (k2, i2))):
        r = _ps_divergence_rows(geo, k, i)
        full = np.zeros((6, 6))
        full[:, 2 * slot:2 * slot + 2] = r[:, 0:2]
        full[:, 4:6] = r[:, 2:4]
        rows.append(full[1:] - full[0])
    S = np.vstack(rows)
    _, sv, vt = np.linalg.svd(S)
    if sv[-2] < rtol * sv[0] or sv[-1] > 1e-8 * sv[0]:
        raise np.linalg.LinAlgError(
            f"edge bubble system for edge {e} is singular (singular values {sv})")
    x = vt[-1]
    n = tri.edge_normals[e]
    flux_density = x[4:6] @ n
    if abs(flux_density) < rtol * np.abs(x).max():
        raise np.linalg.LinAlgError(f"edge bubble of edge {e} has zero flux")
    # int_e phi.n = |e|/2 * phi(m).n, normalised to |e|
    x = x * (2.0 / flux_density)
    div = np.array([_ps_divergence_rows(geo, k, i)[0] @ np.r_[x[2 * s:2 * s + 2], x[4:6]]
                    for s, (k, i) in enumerate(((k1, i1), (k2, i2)))])
    return x[0:4].reshape(2, 2), x[4:6], div


def build_edge_bubbles(tri: Triangulation, geo: SplitGeometry) -> EdgeBubbles:
    inner = np.flatnonzero(~tri.boundary_edges)
    zv = np.empty((len(inner), 2, 2))
    mv = np.empty((len(inner), 2))
    dv = np.empty((len(inner), 2))
    for r, e in enumerate(inner):
        zv[r], mv[r], dv[r] = build_edge_bubble(tri, geo, e)
    return EdgeBubbles(inner, zv, mv, dv)


# --------------------------------------------------------------------------
# symmetric stress element on the Clough-Tocher split


def _wn(n):
    """(2, 3) matrix mapping (xx, xy, yy) to the traction w n."""
    return np.array([[n[0], n[1], 0.0], [0.0, n[0], n[1]]])


def _raw(sub, node, comp):
    return (sub * 3 + node) * 3 + comp


def stress_constraints(ct_nodes, ct_maps):
    """Linear constraints (18 x 27) cutting ``W_K`` out of the raw space of
    discontinuous piecewise linear symmetric tensors on ``R(K)``."""
    rows = []
    g = ct_nodes[3]
    grads = ct_maps[:, :, 1:]  # (sub, node, 2)

    def div_row(sub):
        r = np.zeros((2, 27))
        for node in range(3):
            gx, gy = grads[sub, node]
            r[0, _raw(sub, node, XX)] += gx
            r[0, _raw(sub, node, XY)] += gy
            r[1, _raw(sub, node, XY)] += gx
            r[1, _raw(sub, node, YY)] += gy
        return r

    for j in range(3):
        # internal edge g - v_j, shared by subs j+1 and j+2
        a, b = (j + 1) % 3, (j + 2) % 3
        t = ct_nodes[j] - g
        n = np.array([t[1], -t[0]]) / np.linalg.norm(t)
        W = _wn(n)
        # node slot of g is 0; of v_j is 2 in sub j+1 and 1 in sub j+2
        for slot_a, slot_b in ((0, 0), (2, 1)):
            r = np.zeros((2, 27))
            for c in range(3):
                r[:, _raw(a, slot_a, c)] += W[:, c]
                r[:, _raw(b, slot_b, c)] -= W[:, c]
            rows.extend(r)
        rows.append(n @ (div_row(a) - div_row(b)))
    for i in range(3):
        p, q = ct_nodes[(i + 1) % 3], ct_nodes[(i + 2) % 3]
        t = (q - p) / np.linalg.norm(q - p)
        n = np.array([t[1], -t[0]])
        wt = t @ _wn(n)
        r = np.zeros(27)
        for c in range(3):
            r[_raw(i, 1, c)] += wt[c]
            r[_raw(i, 2, c)] -= wt[c]
        rows.append(r)
    return np.array(rows)


def stress_moments(ct_nodes, normals, tangents, forward):
    """Edge moment functionals (9 x 27) in the given edge frames.

    For local edge ``i`` the moments are, divided by ``|e|``: the mean of
    ``(w n).tau``, the mean of ``(w n).n`` and the first moment of
    ``(w n).n`` against the linear weight running from -1 to +1 along the
    edge.  ``forward[i]`` is True when that weight increases from
    ``v[i+1]`` to ``v[i+2]``.
    """
    Mo = np.zeros((9, 27))
    for i in range(3):
        W = _wn(normals[i])
        ft = tangents[i] @ W
        fn = normals[i] @ W
        sa, sb = (1, 2) if forward[i] else (2, 1)
        for c in range(3):
            Mo[3 * i, _raw(i, 1, c)] += 0.5 * ft[c]
            Mo[3 * i, _raw(i, 2, c)] += 0.5 * ft[c]
            Mo[3 * i + 1, _raw(i, 1, c)] += 0.5 * fn[c]
            Mo[3 * i + 1, _raw(i, 2, c)] += 0.5 * fn[c]
            Mo[3 * i + 2, _raw(i, sb, c)] += fn[c] / 6.0
            Mo[3 * i + 2, _raw(i, sa, c)] -= fn[c] / 6.0
    return Mo


def build_stress_local_basis(ct_nodes, ct_maps, normals, tangents, forward, rtol=1e-10):
    """Nine shape functions of ``W_K`` dual to the edge moments.

    Returns the raw coefficients ``(9, 3, 3, 3)`` indexed by (shape function,
    CT subtriangle, subtriangle node, tensor component), together with the
    constraint nullspace dimension.
    """
    S = stress_constraints(ct_nodes, ct_maps)
    _, sv, vt = np.linalg.svd(S)
    rank = int(np.sum(sv > rtol * sv[0]))
    dim = 27 - rank
    if dim != 9:
        raise UnisolvenceError(f"local stress space has dimension {dim}, expected 9")
    N = vt[rank:].T
    Mo = stress_moments(ct_nodes, normals, tangents, forward)
    G = Mo @ N
    if np.linalg.cond(G) > 1.0 / rtol:
        raise UnisolvenceError("edge moments are not unisolvent on W_K")
    C = N @ np.linalg.inv(G)
    return C.T.reshape(9, 3, 3, 3), dim


def triangle_frames(tri: Triangulation):
    """Global edge frames seen from every triangle.

    Returns normals and tangents ``(nt, 3, 2)`` of the global edges and a
    boolean ``(nt, 3)`` telling whether the global orientation (lower to
    higher vertex index) runs from ``v[i+1]`` to ``v[i+2]``.
    """
    te = tri.tri_edges
    t = tri.triangles
    forward = t[:, [1, 2, 0]] < t[:, [2, 0, 1]]
    return tri.edge_normals[te], tri.edge_tangents[te], forward


def build_stress_bases(tri: Triangulation, geo: SplitGeometry):
    normals, tangents, forward = triangle_frames(tri)
    coef = np.empty((tri.n_triangles, 9, 3, 3, 3))
    for k in range(tri.n_triangles):
        coef[k], _ = build_stress_local_basis(
            geo.ct_nodes[k], geo.ct_maps[k], normals[k], tangents[k], forward[k])
    return coef
