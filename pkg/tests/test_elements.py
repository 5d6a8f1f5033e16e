import numpy as np
import pytest
from math import factorial

from stfosls.elements import (CT_SUB_NODES, PS_SUB_NODES, UnisolvenceError, build_edge_bubble,
                              build_stress_bases, build_stress_local_basis,
                              split_geometry, split_quadrature, stress_constraints,
                              stress_moments, triangle_frames)
from stfosls.mesh import Triangulation, refined_mesh
from stfosls.quadrature import gauss_interval, gauss_triangle
from stfosls.spaces import stress_edge_moments


def single_triangle(P):
    P = np.asarray(P, dtype=float)
    d1, d2 = P[1] - P[0], P[2] - P[0]
    if d1[0] * d2[1] - d1[1] * d2[0] < 0:
        P = P[[0, 2, 1]]
    return Triangulation(P, np.array([[0, 1, 2]]), np.array([0, 1, 2]))


def random_triangles(n, seed=7):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        P = rng.uniform(-1, 1, (3, 2))
        d1, d2 = P[1] - P[0], P[2] - P[0]
        area = 0.5 * abs(d1[0] * d2[1] - d1[1] * d2[0])
        longest = max(np.linalg.norm(P[i] - P[j]) for i, j in ((0, 1), (1, 2), (2, 0)))
        if area > 0.05 * longest ** 2:
            out.append(single_triangle(P))
    return out


# --- quadrature -------------------------------------------------------------

@pytest.mark.parametrize("n", [1, 3, 5])
def test_gauss_interval_exact(n):
    s, w = gauss_interval(n)
    for k in range(2 * n):
        assert w @ s ** k == pytest.approx(1 / (k + 1), rel=1e-13)


@pytest.mark.parametrize("degree", [2, 4, 7])
def test_gauss_triangle_exact(degree):
    bary, w = gauss_triangle(degree)
    x, y = bary[:, 1], bary[:, 2]
    for a in range(degree + 1):
        for b in range(degree + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert w @ (x ** a * y ** b) == pytest.approx(exact, rel=1e-12)


def test_split_quadrature_areas_and_cells():
    tri = refined_mesh("lshape", 1).space
    geo = split_geometry(tri)
    q = split_quadrature(tri, geo, 4)
    per = np.bincount(q.tri, q.w)
    assert np.allclose(per, tri.areas, rtol=1e-13)
    # every point lies in the recorded CT and PS subtriangles
    for idx in range(0, q.n, 37):
        k, h = q.tri[idx], np.r_[1.0, q.xy[idx]]
        assert (geo.ct_maps[k, q.ct[idx]] @ h).min() > -1e-12
        assert (geo.ps_maps[k, q.ps[idx]] @ h).min() > -1e-12


# --- edge bubbles -------------------------------------------------------------

def reference_patch():
    v = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    t = np.array([[0, 1, 2], [3, 2, 1]])
    return Triangulation(v, t, np.array([0, 1, 2, 3]))


def test_bubble_reference_patch():
    tri = reference_patch()
    geo = split_geometry(tri)
    e = int(np.flatnonzero(~tri.boundary_edges)[0])
    zv, mv, div = build_edge_bubble(tri, geo, e)
    L = tri.edge_lengths[e]
    # flux through e is |e|: phi linear on both halves of e, zero at its ends
    assert 0.5 * L * mv @ tri.edge_normals[e] == pytest.approx(L, rel=1e-13)
    k1, k2 = tri.edge_triangles[e]
    # equal and opposite area-weighted divergence (divergence theorem on each K)
    assert div[0] * tri.areas[k1] == pytest.approx(-div[1] * tri.areas[k2], rel=1e-12)
    assert abs(div[0] * tri.areas[k1]) == pytest.approx(L, rel=1e-12)


def test_bubble_divergence_by_differentiation():
    """Recompute div on all six PS subtriangles from the nodal values."""
    tri = refined_mesh("square", 1).space
    geo = split_geometry(tri)
    for e in np.flatnonzero(~tri.boundary_edges):
        zv, mv, div = build_edge_bubble(tri, geo, e)
        for slot in range(2):
            k = tri.edge_triangles[e, slot]
            i = tri.edge_local_index[e, slot]
            vals = np.zeros((7, 2))
            vals[6] = zv[slot]
            vals[3 + i] = mv
            for j in range(6):
                grads = geo.ps_maps[k, j][:, 1:]
                d = sum(grads[s] @ vals[node] for s, node in enumerate(PS_SUB_NODES[j]))
                assert d == pytest.approx(div[slot], abs=1e-12)


def test_bubble_on_boundary_edge_rejected():
    tri = reference_patch()
    geo = split_geometry(tri)
    with pytest.raises(ValueError):
        build_edge_bubble(tri, geo, int(np.flatnonzero(tri.boundary_edges)[0]))


# --- stress element -----------------------------------------------------------

def local_basis(tri):
    geo = split_geometry(tri)
    n, t, fw = triangle_frames(tri)
    return geo, build_stress_local_basis(geo.ct_nodes[0], geo.ct_maps[0], n[0], t[0], fw[0])


def test_stress_unisolvence_random_triangles():
    for tri in random_triangles(100):
        geo, (coef, dim) = local_basis(tri)
        assert dim == 9
        S = stress_constraints(geo.ct_nodes[0], geo.ct_maps[0])
        assert np.linalg.matrix_rank(S, tol=1e-10 * np.abs(S).max()) == 18
        n, t, fw = triangle_frames(tri)
        Mo = stress_moments(geo.ct_nodes[0], n[0], t[0], fw[0])
        G = Mo @ coef.reshape(9, 27).T
        assert np.abs(G - np.eye(9)).max() < 1e-10
        assert np.abs(S @ coef.reshape(9, 27).T).max() < 1e-10


def test_stress_degenerate_triangle():
    P = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1e-13]])
    tri = Triangulation.__new__(Triangulation)
    object.__setattr__(tri, "vertices", P)
    object.__setattr__(tri, "triangles", np.array([[0, 1, 2]]))
    object.__setattr__(tri, "corners", np.array([0, 1, 2]))
    geo = split_geometry(tri)
    n, t, fw = triangle_frames(tri)
    with pytest.raises((UnisolvenceError, np.linalg.LinAlgError)):
        build_stress_local_basis(geo.ct_nodes[0], geo.ct_maps[0], n[0], t[0], fw[0])


def raw_values(coef, geo, k, xy):
    """Evaluate raw CT coefficients (3, 3, 3) at points of triangle k."""
    out = np.zeros((len(xy), 3))
    h = np.concatenate([np.ones((len(xy), 1)), xy], axis=1)
    lam_all = np.einsum("snj,pj->psn", geo.ct_maps[k], h)
    sub = np.argmax(lam_all.min(axis=2), axis=1)
    for p in range(len(xy)):
        out[p] = lam_all[p, sub[p]] @ coef[sub[p]]
    return out, sub


def raw_divergence(coef, geo, k):
    """Constant divergence (3 subs, 2) of raw CT coefficients."""
    g = geo.ct_maps[k][:, :, 1:]
    dx = np.einsum("sn,snc->sc", g[..., 0], coef)
    dy = np.einsum("sn,snc->sc", g[..., 1], coef)
    return np.stack([dx[:, 0] + dy[:, 1], dx[:, 1] + dy[:, 2]], axis=1)


def test_identity_tensor_reproduced():
    for tri in random_triangles(10, seed=3):
        geo, (coef, _) = local_basis(tri)
        ident = lambda xy: np.tile([1.0, 0.0, 1.0], (len(xy), 1))
        mom = stress_edge_moments(tri, ident)[tri.tri_edges[0]].ravel()
        rep = np.einsum("l,lsnc->snc", mom, coef)
        bary, _ = gauss_triangle(4)
        pts = bary @ tri.vertices
        vals, _ = raw_values(rep, geo, 0, pts)
        assert np.allclose(vals, [1.0, 0.0, 1.0], atol=1e-12)


def test_shape_function_divergence_piecewise_constant():
    tri = random_triangles(1, seed=11)[0]
    geo, (coef, _) = local_basis(tri)
    bary, _ = gauss_triangle(4)
    for l in range(9):
        div = raw_divergence(coef[l], geo, 0)
        # finite differences inside each CT subtriangle agree with the constant
        for s in range(3):
            g = geo.ct_nodes[0][CT_SUB_NODES[s]].mean(axis=0)
            eps = 1e-6
            pts = g + eps * np.array([[0, 0], [1, 0], [0, 1]])
            vals, sub = raw_values(coef[l], geo, 0, pts)
            assert np.all(sub == s)
            dx, dy = (vals[1] - vals[0]) / eps, (vals[2] - vals[0]) / eps
            fd = np.array([dx[0] + dy[1], dx[1] + dy[2]])
            assert np.allclose(fd, div[s], atol=1e-6 * max(1, np.abs(div[s]).max()))


def rm_basis(xy):
    return [np.tile([1.0, 0.0], (len(xy), 1)), np.tile([0.0, 1.0], (len(xy), 1)),
            np.stack([xy[:, 1], -xy[:, 0]], axis=1)]


def vk_projection(tri, geo, div_w):
    """Oracle for Q*_K div w: the element of V_K with the same RM_K moments.

    V_K = piecewise constant vectors on the CT split with continuous normal
    components across the three internal edges, built from scratch here.
    """
    g = geo.ct_nodes[0][3]
    C = np.zeros((3, 6))
    for j in range(3):
        a, b = (j + 1) % 3, (j + 2) % 3
        t = geo.ct_nodes[0][j] - g
        n = np.array([t[1], -t[0]])
        C[j, 2 * a:2 * a + 2] = n
        C[j, 2 * b:2 * b + 2] = -n
    _, _, vt = np.linalg.svd(C)
    V = vt[3:].T  # (6, 3) basis of V_K
    bary, w = gauss_triangle(6)
    G = np.zeros((3, 3))
    rhs = np.zeros(3)
    for s in range(3):
        P = geo.ct_nodes[0][CT_SUB_NODES[s]]
        pts = bary @ P
        d1, d2 = P[1] - P[0], P[2] - P[0]
        ws = w * abs(d1[0] * d2[1] - d1[1] * d2[0])
        rm = rm_basis(pts)
        dw = div_w(pts)
        for i in range(3):
            rhs[i] += ws @ np.sum(dw * rm[i], axis=1)
            for j in range(3):
                G[i, j] += ws @ (rm[i] @ V[2 * s:2 * s + 2, j])
    return (V @ np.linalg.solve(G, rhs)).reshape(3, 2)


def test_stress_commuting_diagram():
    rng = np.random.default_rng(0)
    for tri in random_triangles(20, seed=5):
        geo, (coef, _) = local_basis(tri)
        c = rng.standard_normal((3, 6))

        def w(xy):
            x, y = xy[:, 0], xy[:, 1]
            mono = np.stack([np.ones_like(x), x, y, x * x, x * y, y * y], axis=1)
            return mono @ c.T

        def div_w(xy):
            x, y = xy[:, 0], xy[:, 1]
            dx = c[:, 1] + 2 * c[:, 3] * x[:, None] + c[:, 4] * y[:, None]
            dy = c[:, 2] + c[:, 4] * x[:, None] + 2 * c[:, 5] * y[:, None]
            return np.stack([dx[:, 0] + dy[:, 1], dx[:, 1] + dy[:, 2]], axis=1)

        mom = stress_edge_moments(tri, w)[tri.tri_edges[0]].ravel()
        proj = np.einsum("l,lsnc->snc", mom, coef)
        lhs = raw_divergence(proj, geo, 0)
        assert np.abs(lhs - vk_projection(tri, geo, div_w)).max() < 1e-9 * max(1, np.abs(c).max())


def test_stress_bases_all_triangles():
    tri = refined_mesh("lshape", 1).space
    coef = build_stress_bases(tri, split_geometry(tri))
    assert coef.shape == (tri.n_triangles, 9, 3, 3, 3)
    assert np.isfinite(coef).all()
