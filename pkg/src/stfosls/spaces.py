"""Discrete trial spaces ``U_delta x W_delta x P_delta``.

Spatial parts only live here; the temporal factors (continuous piecewise
linears for the velocity, piecewise constants for stress and pressure) are
handled by :mod:`stfosls.system`.  Every space exposes :meth:`evaluate`,
which returns sparse matrices mapping coefficient vectors to point values
(and derivatives) on a set of quadrature points.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .elements import (PS_SUB_NODES, XX, XY, YY, EdgeBubbles,
                       QuadPoints, SplitGeometry, build_edge_bubbles,
                       build_stress_bases, locate, split_geometry,
                       split_quadrature)
from .mesh import BOUNDARY, INTERIOR, PrismMesh, Triangulation
from .quadrature import gauss_interval, gauss_triangle

SLIP, NOSLIP = "slip", "noslip"


def _homog(xy):
    return np.concatenate([np.ones((len(xy), 1)), xy], axis=1)


def _coo(rows, cols, vals, shape):
    keep = cols >= 0
    m = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=shape)
    return m.tocsr()


def points_in_triangles(geo: SplitGeometry, tri_index, xy) -> QuadPoints:
    """Wrap arbitrary points (with known triangles) as unit-weight points."""
    tri_index = np.asarray(tri_index, dtype=np.int64)
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    ct = np.empty(len(xy), dtype=np.int64)
    ps = np.empty(len(xy), dtype=np.int64)
    for n, (k, p) in enumerate(zip(tri_index, xy)):
        ct[n], ps[n] = locate(geo, k, p)
    return QuadPoints(tri_index, ct, ps, xy, np.ones(len(xy)))


class VelocitySpace:
    """Continuous piecewise linear velocities plus edge bubbles.

    Vertex DOFs are components along per-vertex directions: ``e_x, e_y`` at
    interior vertices, the unit tangent at non-corner boundary vertices in
    the slip case, nothing at corners (slip) or boundary vertices (no-slip).
    One bubble DOF per interior edge when ``bubbles`` is set.
    """

    def __init__(self, tri: Triangulation, geo: SplitGeometry, bc: str = SLIP,
                 bubbles: EdgeBubbles | None = None):
        if bc not in (SLIP, NOSLIP):
            raise ValueError(f"unknown boundary condition {bc!r}")
        self.tri, self.geo, self.bc, self.bubbles = tri, geo, bc, bubbles
        info = tri.boundary
        nv = tri.n_vertices
        dofs = -np.ones((nv, 2), dtype=np.int64)
        dirs = np.zeros((nv, 2, 2))
        n = 0
        for v in range(nv):
            kind = info.kind[v]
            if kind == INTERIOR:
                dofs[v] = (n, n + 1)
                dirs[v] = np.eye(2)
                n += 2
            elif kind == BOUNDARY and bc == SLIP:
                nrm = info.normal[v]
                dofs[v, 0] = n
                dirs[v, 0] = (-nrm[1], nrm[0])
                n += 1
        self.vertex_dofs, self.vertex_dirs = dofs, dirs
        self.n_nodal = n
        self.bubble_dofs = -np.ones(tri.n_edges, dtype=np.int64)
        if bubbles is not None:
            self.bubble_dofs[bubbles.edges] = n + np.arange(len(bubbles.edges))
            n += len(bubbles.edges)
        self.n_dofs = n

        # per triangle and local edge: bubble dof and its nodal values on K
        nt = tri.n_triangles
        self._bub_dof = -np.ones((nt, 3), dtype=np.int64)
        self._bub_z = np.zeros((nt, 3, 2))
        self._bub_m = np.zeros((nt, 3, 2))
        if bubbles is not None:
            for r, e in enumerate(bubbles.edges):
                for s in range(2):
                    k = tri.edge_triangles[e, s]
                    i = tri.edge_local_index[e, s]
                    self._bub_dof[k, i] = self.bubble_dofs[e]
                    self._bub_z[k, i] = bubbles.incenter_values[r, s]
                    self._bub_m[k, i] = bubbles.split_values[r]

    @property
    def n_bubbles(self) -> int:
        return self.n_dofs - self.n_nodal

    def evaluate(self, q: QuadPoints) -> dict:
        """Sparse evaluation matrices at the points of ``q``.

        Keys: ``ux, uy`` (values), ``dxux, dyux, dxuy, dyuy`` (spatial
        derivatives) and ``div``.
        """
        tri, geo = self.tri, self.geo
        k = q.tri
        h = _homog(q.xy)
        C = geo.tri_maps[k]
        lam = np.einsum("pij,pj->pi", C, h)
        grad = C[:, :, 1:]
        rows, cols = [], []
        vals = {key: [] for key in ("ux", "uy", "dxux", "dyux", "dxuy", "dyuy")}
        pid = np.arange(q.n)
        verts = tri.triangles[k]
        for a in range(3):
            for s in range(2):
                v = verts[:, a]
                d = self.vertex_dirs[v, s]
                rows.append(pid)
                cols.append(self.vertex_dofs[v, s])
                vals["ux"].append(lam[:, a] * d[:, 0])
                vals["uy"].append(lam[:, a] * d[:, 1])
                vals["dxux"].append(grad[:, a, 0] * d[:, 0])
                vals["dyux"].append(grad[:, a, 1] * d[:, 0])
                vals["dxuy"].append(grad[:, a, 0] * d[:, 1])
                vals["dyuy"].append(grad[:, a, 1] * d[:, 1])
        if self.bubbles is not None:
            Cps = geo.ps_maps[k, q.ps]
            mu = np.einsum("pij,pj->pi", Cps, h)
            gmu = Cps[:, :, 1:]
            nodes = PS_SUB_NODES[q.ps]
            for i in range(3):
                # weight of the incenter (slot 0) and of the split point 3+i
                wz, gz = mu[:, 0], gmu[:, 0]
                hit = nodes == 3 + i
                wm = np.where(hit, mu, 0.0).sum(axis=1)
                gm = np.einsum("ps,psj->pj", hit.astype(float), gmu)
                cz = self._bub_z[k, i]
                cm = self._bub_m[k, i]
                rows.append(pid)
                cols.append(self._bub_dof[k, i])
                vals["ux"].append(wz * cz[:, 0] + wm * cm[:, 0])
                vals["uy"].append(wz * cz[:, 1] + wm * cm[:, 1])
                vals["dxux"].append(gz[:, 0] * cz[:, 0] + gm[:, 0] * cm[:, 0])
                vals["dyux"].append(gz[:, 1] * cz[:, 0] + gm[:, 1] * cm[:, 0])
                vals["dxuy"].append(gz[:, 0] * cz[:, 1] + gm[:, 0] * cm[:, 1])
                vals["dyuy"].append(gz[:, 1] * cz[:, 1] + gm[:, 1] * cm[:, 1])
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        shape = (q.n, self.n_dofs)
        out = {key: _coo(rows, cols, np.concatenate(v), shape) for key, v in vals.items()}
        out["div"] = out["dxux"] + out["dyuy"]
        return out


class StressSpace:
    """H(div)-conforming symmetric stresses, 9 DOFs per triangle.

    Global DOFs per edge: mean of ``(w n).tau``, mean and first moment of
    ``(w n).n`` in the global edge frame.  In the slip case the tangential
    DOF of boundary edges is removed.
    """

    def __init__(self, tri: Triangulation, geo: SplitGeometry, bc: str = SLIP,
                 coef: np.ndarray | None = None):
        if bc not in (SLIP, NOSLIP):
            raise ValueError(f"unknown boundary condition {bc!r}")
        self.tri, self.geo, self.bc = tri, geo, bc
        self.coef = build_stress_bases(tri, geo) if coef is None else coef
        ne = tri.n_edges
        active = np.ones((ne, 3), dtype=bool)
        if bc == SLIP:
            active[tri.boundary_edges, 0] = False
        dofs = -np.ones((ne, 3), dtype=np.int64)
        dofs[active] = np.arange(active.sum())
        self.edge_dofs = dofs
        self.n_dofs = int(active.sum())
        self.local_dofs = dofs[tri.tri_edges].reshape(tri.n_triangles, 9)

    def evaluate(self, q: QuadPoints) -> dict:
        """Keys ``wxx, wxy, wyy, divx, divy``."""
        k = q.tri
        h = _homog(q.xy)
        Cct = self.geo.ct_maps[k, q.ct]
        beta = np.einsum("pij,pj->pi", Cct, h)
        gb = Cct[:, :, 1:]
        # (p, 9, node, comp) raw coefficients on the containing subtriangle
        R = self.coef[k, :, q.ct]
        w = np.einsum("pn,plnc->plc", beta, R)
        divx = np.einsum("pn,pln->pl", gb[:, :, 0], R[..., XX]) + \
            np.einsum("pn,pln->pl", gb[:, :, 1], R[..., XY])
        divy = np.einsum("pn,pln->pl", gb[:, :, 0], R[..., XY]) + \
            np.einsum("pn,pln->pl", gb[:, :, 1], R[..., YY])
        rows = np.repeat(np.arange(q.n), 9)
        cols = self.local_dofs[k].ravel()
        shape = (q.n, self.n_dofs)
        return {
            "wxx": _coo(rows, cols, w[..., XX].ravel(), shape),
            "wxy": _coo(rows, cols, w[..., XY].ravel(), shape),
            "wyy": _coo(rows, cols, w[..., YY].ravel(), shape),
            "divx": _coo(rows, cols, divx.ravel(), shape),
            "divy": _coo(rows, cols, divy.ravel(), shape),
        }


class PressureSpace:
    """Piecewise constants on the triangles."""

    def __init__(self, tri: Triangulation):
        self.tri = tri
        self.n_dofs = tri.n_triangles

    def evaluate(self, q: QuadPoints) -> dict:
        m = sp.csr_matrix((np.ones(q.n), (np.arange(q.n), q.tri)),
                          shape=(q.n, self.n_dofs))
        return {"p": m}


@dataclass(frozen=True)
class SpaceOptions:
    bc: str = SLIP
    bubbles: bool = True


class FESpaces:
    """The triple of spatial spaces on one prismatic mesh.

    Parameters
    ----------
    mesh : PrismMesh
    bc : {"slip", "noslip"}
    bubbles : bool
        Include the edge bubbles in the velocity space.
    """

    def __init__(self, mesh: PrismMesh, bc: str = SLIP, bubbles: bool = True):
        self.mesh = mesh
        self.bc = bc
        self.with_bubbles = bubbles
        tri = mesh.space
        self.tri = tri
        self.geo = split_geometry(tri)
        bub = build_edge_bubbles(tri, self.geo) if bubbles else None
        self.velocity = VelocitySpace(tri, self.geo, bc, bub)
        self.stress = StressSpace(tri, self.geo, bc)
        self.pressure = PressureSpace(tri)

    @property
    def time(self):
        return self.mesh.time

    @property
    def n_time_nodes(self) -> int:
        return self.mesh.time.n_slabs + 1

    @property
    def block_sizes(self) -> tuple[int, int, int]:
        nt = self.mesh.time.n_slabs
        return (self.n_time_nodes * self.velocity.n_dofs,
                nt * self.stress.n_dofs,
                nt * self.pressure.n_dofs)

    @property
    def n_dofs(self) -> int:
        return sum(self.block_sizes)

    def quadrature(self, degree: int) -> QuadPoints:
        return self._quad(degree)

    @cached_property
    def _quad_cache(self):
        return {}

    def _quad(self, degree):
        if degree not in self._quad_cache:
            self._quad_cache[degree] = split_quadrature(self.tri, self.geo, degree)
        return self._quad_cache[degree]

    def evaluate(self, q: QuadPoints) -> dict:
        out = {}
        out.update(self.velocity.evaluate(q))
        out.update(self.stress.evaluate(q))
        out.update(self.pressure.evaluate(q))
        return out

    def points(self, tri_index, xy) -> QuadPoints:
        return points_in_triangles(self.geo, tri_index, xy)

    # state vector layout -------------------------------------------------

    def split(self, x):
        """View a flat state vector as ``(U, W, P)`` coefficient arrays.

        ``U`` has shape (time nodes, velocity DOFs), ``W`` and ``P`` have
        shape (slabs, stress DOFs) and (slabs, triangles).
        """
        nu, nw, _ = self.block_sizes
        N = self.mesh.time.n_slabs
        x = np.asarray(x)
        U = x[:nu].reshape(N + 1, self.velocity.n_dofs)
        W = x[nu:nu + nw].reshape(N, self.stress.n_dofs)
        P = x[nu + nw:].reshape(N, self.pressure.n_dofs)
        return U, W, P

    def join(self, U, W, P):
        return np.concatenate([np.ravel(U), np.ravel(W), np.ravel(P)])


# --------------------------------------------------------------------------
# basis evaluation on a single prism


def time_basis(time, slab, t):
    """Values and derivatives of the two nodal hats of a slab at ``t``."""
    t0, t1 = time.breakpoints[slab], time.breakpoints[slab + 1]
    if not (t0 - 1e-14 <= t <= t1 + 1e-14):
        raise ValueError(f"time {t} outside slab {slab}")
    h = t1 - t0
    return np.array([(t1 - t) / h, (t - t0) / h]), np.array([-1.0 / h, 1.0 / h])


def evaluate_basis(spaces: FESpaces, slab: int, triangle: int, xy, t) -> dict:
    """All basis functions supported on one prism, evaluated at ``(t, xy)``.

    Returns per block the global (space-time) DOF indices and values:
    velocity values ``(n, 2)``, spatial gradients ``(n, 2, 2)`` with
    ``grad[:, i, j] = d u_i / d x_j``, ``div`` and the time derivative
    ``dt`` (n, 2); stress values ``(n, 3)`` as (xx, xy, yy) and ``div``
    ``(n, 2)``; pressure values.
    """
    q = spaces.points([triangle], [xy])
    V = spaces.velocity.evaluate(q)
    S = spaces.stress.evaluate(q)
    th, dth = time_basis(spaces.time, slab, t)
    nU = spaces.velocity.n_dofs
    nu, nw, _ = spaces.block_sizes

    sdofs = np.unique(np.concatenate([V[key].indices for key in V]))
    val = np.stack([V["ux"][0, sdofs].toarray()[0], V["uy"][0, sdofs].toarray()[0]], axis=1)
    grad = np.stack([
        np.stack([V["dxux"][0, sdofs].toarray()[0], V["dyux"][0, sdofs].toarray()[0]], axis=1),
        np.stack([V["dxuy"][0, sdofs].toarray()[0], V["dyuy"][0, sdofs].toarray()[0]], axis=1),
    ], axis=1)
    vel = {
        "dofs": np.concatenate([slab * nU + sdofs, (slab + 1) * nU + sdofs]),
        "values": np.concatenate([th[0] * val, th[1] * val]),
        "grad": np.concatenate([th[0] * grad, th[1] * grad]),
        "div": np.concatenate([th[0] * np.trace(grad, axis1=1, axis2=2),
                               th[1] * np.trace(grad, axis1=1, axis2=2)]),
        "dt": np.concatenate([dth[0] * val, dth[1] * val]),
    }
    wd = spaces.stress.local_dofs[triangle]
    wd = wd[wd >= 0]
    nW = spaces.stress.n_dofs
    stress = {
        "dofs": nu + slab * nW + wd,
        "values": np.stack([S[c][0, wd].toarray()[0] for c in ("wxx", "wxy", "wyy")], axis=1),
        "div": np.stack([S[c][0, wd].toarray()[0] for c in ("divx", "divy")], axis=1),
    }
    pressure = {
        "dofs": np.array([nu + nw + slab * spaces.pressure.n_dofs + triangle]),
        "values": np.ones(1),
        "grad": np.zeros((1, 2)),
        "dt": np.zeros(1),
    }
    return {"velocity": vel, "stress": stress, "pressure": pressure}


# --------------------------------------------------------------------------
# interpolation operators


def _edge_rule(n=6):
    return gauss_interval(n)


def edge_dual_weight():
    """Coefficients of the P1 dual weight on an edge of unit length.

    Returns ``(a, b)`` such that ``psi = (a mu_z + b mu_other) / |e|``
    satisfies ``int_e phi_z psi = 1`` and ``int_e phi_other psi = 0``.
    """
    mass = np.array([[1 / 3, 1 / 6], [1 / 6, 1 / 3]])
    return np.linalg.solve(mass, np.array([1.0, 0.0]))


def _dual_moment(tri, v, z, e, direction, n=6):
    """``int_e (v . direction) psi_e ds`` with the dual weight at vertex z."""
    a, b = edge_dual_weight()
    s, w = _edge_rule(n)
    p0, p1 = tri.vertices[tri.edges[e]]
    other = tri.edges[e, 1] if tri.edges[e, 0] == z else tri.edges[e, 0]
    pz, po = tri.vertices[z], tri.vertices[other]
    pts = pz[None, :] + s[:, None] * (po - pz)[None, :]
    length = np.linalg.norm(p1 - p0)
    psi = (a * (1 - s) + b * s) / length
    vals = np.asarray(v(pts)) @ direction
    return float(np.sum(w * length * vals * psi))


def _scott_zhang_interior(tri, v, z, n_quad=7):
    """Coordinatewise Scott-Zhang value at an interior vertex.

    Uses the lowest-index triangle containing ``z`` and the L2-dual of the
    hat function of ``z`` on that triangle.
    """
    k = int(np.flatnonzero((tri.triangles == z).any(axis=1))[0])
    a = int(np.flatnonzero(tri.triangles[k] == z)[0])
    bary, w = gauss_triangle(n_quad)
    P = tri.vertices[tri.triangles[k]]
    pts = bary @ P
    area = tri.areas[k]
    dual = 3.0 / area * (4.0 * bary[:, a] - 1.0)
    vals = np.asarray(v(pts))
    return (2 * area * w * dual) @ vals


def quasi_interpolate_velocity(spaces: FESpaces, v, n_quad=8):
    """Divergence-preserving quasi-interpolation of a vector field.

    Parameters
    ----------
    v : callable
        Maps ``(n, 2)`` points to ``(n, 2)`` values; should satisfy
        ``v . n = 0`` on the boundary.

    Returns
    -------
    coefficients of the spatial velocity space.  The nodal part is a
    Scott-Zhang type projector that keeps vanishing normal components;
    every interior edge bubble then corrects the flux through its edge, so
    that the divergence of the result on every triangle equals the mean
    divergence of ``v``.
    """
    V = spaces.velocity
    tri = spaces.tri
    info = tri.boundary
    nodal_values = np.zeros((tri.n_vertices, 2))
    for z in range(tri.n_vertices):
        kind = info.kind[z]
        if kind == INTERIOR:
            nodal_values[z] = _scott_zhang_interior(tri, v, z)
        else:
            ea, eb = info.vertex_edges[z]
            if kind == BOUNDARY:
                e = min(ea, eb)
                n = tri.edge_normals[e]
                tau = np.array([-n[1], n[0]])
                vn = _dual_moment(tri, v, z, e, n, n_quad)
                vt = _dual_moment(tri, v, z, e, tau, n_quad)
                nodal_values[z] = vn * n + vt * tau
            else:
                na, nb = tri.edge_normals[ea], tri.edge_normals[eb]
                rhs = np.array([_dual_moment(tri, v, z, ea, na, n_quad),
                                _dual_moment(tri, v, z, eb, nb, n_quad)])
                nodal_values[z] = np.linalg.solve(np.array([na, nb]), rhs)
    if V.bc == NOSLIP:
        nodal_values[info.kind != INTERIOR] = 0.0
    coef = np.zeros(V.n_dofs)
    for s in range(2):
        have = V.vertex_dofs[:, s] >= 0
        coef[V.vertex_dofs[have, s]] = np.einsum(
            "vi,vi->v", nodal_values[have], V.vertex_dirs[have, s])
    # fluxes are corrected against the nodal values the space actually represents
    kept = np.zeros_like(nodal_values)
    for s in range(2):
        have = V.vertex_dofs[:, s] >= 0
        kept[have] += coef[V.vertex_dofs[have, s], None] * V.vertex_dirs[have, s]
    nodal_values = kept
    if V.bubbles is not None:
        s, w = _edge_rule(n_quad)
        for e in V.bubbles.edges:
            a, b = tri.edges[e]
            pa, pb = tri.vertices[a], tri.vertices[b]
            length = tri.edge_lengths[e]
            n = tri.edge_normals[e]
            pts = pa[None, :] + s[:, None] * (pb - pa)[None, :]
            lin = (1 - s)[:, None] * nodal_values[a] + s[:, None] * nodal_values[b]
            flux = np.sum(w * length * ((np.asarray(v(pts)) - lin) @ n))
            # bubbles are normalised to unit mean normal flux
            coef[V.bubble_dofs[e]] = flux / length
    return coef


def stress_edge_moments(tri: Triangulation, w, n_quad=6):
    """Global edge moments ``(ne, 3)`` of a symmetric tensor field.

    ``w`` maps ``(n, 2)`` points to ``(n, 3)`` values (xx, xy, yy).
    """
    s, wq = _edge_rule(n_quad)
    A = tri.vertices[tri.edges[:, 0]]
    B = tri.vertices[tri.edges[:, 1]]
    pts = A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]
    vals = np.asarray(w(pts.reshape(-1, 2))).reshape(tri.n_edges, len(s), 3)
    n = tri.edge_normals
    tau = tri.edge_tangents
    wn = np.stack([vals[..., XX] * n[:, None, 0] + vals[..., XY] * n[:, None, 1],
                   vals[..., XY] * n[:, None, 0] + vals[..., YY] * n[:, None, 1]], axis=-1)
    ft = np.einsum("eqi,ei->eq", wn, tau)
    fn = np.einsum("eqi,ei->eq", wn, n)
    out = np.empty((tri.n_edges, 3))
    out[:, 0] = ft @ wq
    out[:, 1] = fn @ wq
    out[:, 2] = fn @ (wq * (2 * s - 1))
    return out


def interpolate_stress(spaces: FESpaces, w, n_quad=6):
    """Moment interpolation of a smooth symmetric tensor field.

    Coefficients are the edge moments of ``w``; removed boundary DOFs
    (tangential moments in the slip case) are dropped.
    """
    S = spaces.stress
    mom = stress_edge_moments(spaces.tri, w, n_quad)
    coef = np.zeros(S.n_dofs)
    active = S.edge_dofs >= 0
    coef[S.edge_dofs[active]] = mom[active]
    return coef


def local_stress_interpolant(spaces: FESpaces, w, n_quad=6):
    """Element-wise projections onto ``W_K`` using all nine moments.

    Returns raw coefficients ``(nt, 3, 3, 3)`` (subtriangle, node, comp).
    """
    mom = stress_edge_moments(spaces.tri, w, n_quad)
    local = mom[spaces.tri.tri_edges].reshape(spaces.tri.n_triangles, 9)
    return np.einsum("kl,klsnc->ksnc", local, spaces.stress.coef)


def project_pressure(spaces: FESpaces, p, degree=6):
    """L2 projection of a scalar field onto the piecewise constants."""
    q = spaces.quadrature(degree)
    vals = np.asarray(p(q.xy))
    area = spaces.tri.areas
    return np.bincount(q.tri, q.w * vals, minlength=len(area)) / area
