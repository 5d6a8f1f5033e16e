"""Least-squares operators for the space-time first-order Stokes system.

The extended operator maps a discrete triple ``(u, w, p)`` to the five
components

    ( w + T(nu u, p),  d_t u + div_x w,  div_x u,  u(0, .),  M p )

measured in L2 (tensor), L2 (vector), H1(I; L2) or L2(I; L2), L2(Omega) and
L2(I), with ``T(v, q) = D(v) - q Id``, ``D(v) = grad v + grad v^T`` and ``M``
the scaled spatial mean of the pressure.

Because the trial spaces are tensor products, the normal operator ``A`` and
the Gram matrix ``B`` of the solution norm are sums of Kronecker products of
small temporal matrices with sparse spatial matrices, plus a rank-one term
per time slab coming from ``M``.  Neither matrix is ever formed; the
Kronecker factors are applied directly.  A second, quadrature based path
(:meth:`FoslsSystem.gbar_components`) evaluates the residual components
pointwise and backs the estimator and the dense test oracles.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.sparse as sp

from .quadrature import gauss_interval
from .spaces import FESpaces

H1, L2 = "h1", "l2"


@dataclass
class ProblemData:
    """Data of the least-squares problem.

    ``f(t, xy)`` and ``u0(xy)`` return ``(n, 2)`` arrays; ``g(t, xy)`` and
    its time derivative ``g_t`` return ``(n,)`` arrays and may be omitted
    for ``g = 0``.  ``f`` is the second data component as it enters the
    functional.
    """

    f: Callable
    u0: Callable
    g: Optional[Callable] = None
    g_t: Optional[Callable] = None
    nu: float = 1.0
    time_points: int = 5
    space_degree: int = 7

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("viscosity must be positive")
        if (self.g is None) != (self.g_t is None):
            raise ValueError("g and g_t must be given together")


def zero_data(nu=1.0) -> ProblemData:
    zero2 = lambda *args: np.zeros((len(args[-1]), 2))
    return ProblemData(f=zero2, u0=zero2, nu=nu)


@dataclass
class ResidualDecomposition:
    """Squared residual contributions; ``eta**2`` is their sum."""

    r1: float
    r2: float
    r3: float
    r4: float
    r5: float

    @property
    def eta(self) -> float:
        return float(np.sqrt(self.r1 + self.r2 + self.r3 + self.r4 + self.r5))

    def as_tuple(self):
        return (self.r1, self.r2, self.r3, self.r4, self.r5)


def time_matrices(breakpoints):
    """Temporal factors on a partition with ``N`` slabs.

    Returns a dict with the hat mass ``M`` and stiffness ``A`` ((N+1)^2),
    the hat/indicator couplings ``C = int theta_i chi_j`` and
    ``D = int theta_i' chi_j`` ((N+1) x N), the slab lengths ``H`` (N x N
    diagonal) and ``E0`` selecting the value at ``t = 0``.
    """
    h = np.diff(breakpoints)
    N = h.size
    main = np.zeros(N + 1)
    main[:-1] += h / 3
    main[1:] += h / 3
    M = sp.diags([h / 6, main, h / 6], [-1, 0, 1], format="csr")
    amain = np.zeros(N + 1)
    amain[:-1] += 1 / h
    amain[1:] += 1 / h
    A = sp.diags([-1 / h, amain, -1 / h], [-1, 0, 1], format="csr")
    j = np.arange(N)
    C = sp.csr_matrix((np.r_[h / 2, h / 2], (np.r_[j, j + 1], np.r_[j, j])), shape=(N + 1, N))
    D = sp.csr_matrix((np.r_[-np.ones(N), np.ones(N)], (np.r_[j, j + 1], np.r_[j, j])),
                      shape=(N + 1, N))
    H = sp.diags(h, format="csr")
    E0 = sp.csr_matrix(([1.0], ([0], [0])), shape=(N + 1, N + 1))
    return {"M": M, "A": A, "C": C, "D": D, "H": H, "E0": E0}


def _wdot(E, w, F):
    return (E.T.multiply(w)) @ F


def spatial_matrices(spaces: FESpaces, degree: int = 4) -> dict:
    """Sparse spatial pairings, integrated exactly on the split refinement."""
    q = spaces.quadrature(degree)
    E = spaces.evaluate(q)
    w = q.w
    Dxx, Dyy = 2 * E["dxux"], 2 * E["dyuy"]
    Dxy = E["dyux"] + E["dxuy"]
    S = {}
    S["uu"] = _wdot(E["ux"], w, E["ux"]) + _wdot(E["uy"], w, E["uy"])
    S["gg"] = sum(_wdot(E[k], w, E[k]) for k in ("dxux", "dyux", "dxuy", "dyuy"))
    S["DD"] = _wdot(Dxx, w, Dxx) + 2 * _wdot(Dxy, w, Dxy) + _wdot(Dyy, w, Dyy)
    S["divdiv"] = _wdot(E["div"], w, E["div"])
    S["divp"] = _wdot(E["div"], w, E["p"])
    S["Dw"] = _wdot(Dxx, w, E["wxx"]) + 2 * _wdot(Dxy, w, E["wxy"]) + _wdot(Dyy, w, E["wyy"])
    S["ww"] = _wdot(E["wxx"], w, E["wxx"]) + 2 * _wdot(E["wxy"], w, E["wxy"]) + \
        _wdot(E["wyy"], w, E["wyy"])
    S["trp"] = _wdot(E["wxx"] + E["wyy"], w, E["p"])
    S["udivw"] = _wdot(E["ux"], w, E["divx"]) + _wdot(E["uy"], w, E["divy"])
    S["divwdivw"] = _wdot(E["divx"], w, E["divx"]) + _wdot(E["divy"], w, E["divy"])
    S["pp"] = sp.diags(spaces.tri.areas, format="csr")
    return {k: sp.csr_matrix(v) for k, v in S.items()}


class KroneckerOperator:
    """Block operator ``sum_k c_k (T_k kron S_k)`` on ``(U, W, P)`` blocks.

    Optionally adds ``H kron (m m^T) / |Omega|`` on the pressure block.
    """

    def __init__(self, spaces: FESpaces, terms, mean_term=None):
        self.spaces = spaces
        self.terms = terms
        self.mean_term = mean_term
        self.shape = (spaces.n_dofs, spaces.n_dofs)

    def matvec(self, x):
        X = self.spaces.split(np.asarray(x, dtype=float))
        Y = [np.zeros_like(b) for b in X]
        for out, inp, T, S in self.terms:
            Z = S @ X[inp].T
            Y[out] += T @ Z.T
        if self.mean_term is not None:
            h, m, area = self.mean_term
            Y[2] += (h * (X[2] @ m) / area)[:, None] * m[None, :]
        return self.spaces.join(*Y)

    __call__ = matvec

    def diagonal(self):
        parts = [np.zeros(b.size) for b in self.spaces.split(np.zeros(self.shape[0]))]
        for out, inp, T, S in self.terms:
            if out == inp:
                parts[out] += np.kron(T.diagonal(), S.diagonal())
        if self.mean_term is not None:
            h, m, area = self.mean_term
            parts[2] += np.kron(h, m * m / area)
        return np.concatenate(parts)

    def sparse(self, include_mean=False):
        """Assemble the Kronecker terms as one sparse matrix."""
        sizes = self.spaces.block_sizes
        blocks = [[None] * 3 for _ in range(3)]
        for out, inp, T, S in self.terms:
            K = sp.kron(T, S, format="csr")
            blocks[out][inp] = K if blocks[out][inp] is None else blocks[out][inp] + K
        for i in range(3):
            if blocks[i][i] is None:
                blocks[i][i] = sp.csr_matrix((sizes[i], sizes[i]))
        A = sp.bmat(blocks, format="csr")
        if include_mean and self.mean_term is not None:
            h, m, area = self.mean_term
            nu, nw, _ = sizes
            dense = np.kron(np.diag(h), np.outer(m, m) / area)
            Z = sp.csr_matrix((nu + nw, nu + nw))
            A = A + sp.block_diag([Z, sp.csr_matrix(dense)], format="csr")
        return A

    def dense(self):
        return self.sparse(include_mean=True).toarray()


class FoslsSystem:
    """Normal equations of the least-squares problem on one discretization.

    Parameters
    ----------
    spaces : FESpaces
    nu : float
        Viscosity.
    div_norm : {"h1", "l2"}
        Norm of the ``div_x u`` component in time: ``H1(I; L2)`` (default)
        or ``L2(I; L2)``.  The choice applies consistently to the
        functional, the right-hand side and the solution norm.
    degree : int
        Exactness degree of the spatial rule used for the trial pairings.
    """

    def __init__(self, spaces: FESpaces, nu: float = 1.0, div_norm: str = H1,
                 degree: int = 4):
        if div_norm not in (H1, L2):
            raise ValueError(f"unknown divergence norm {div_norm!r}")
        self.spaces, self.nu, self.div_norm = spaces, nu, div_norm
        self.t = time_matrices(spaces.time.breakpoints)
        self.S = spatial_matrices(spaces, degree)
        self.area = spaces.tri.area()
        self.A = self._normal_operator()
        self.B = self._gram_operator()
        self._eval_cache = {}

    # operators -----------------------------------------------------------

    def _normal_operator(self):
        t, S, nu = self.t, self.S, self.nu
        h1 = self.div_norm == H1
        U, W, P = 0, 1, 2
        uu_dt = S["uu"] + S["divdiv"] if h1 else S["uu"]
        terms = [
            (U, U, t["M"], nu * nu * S["DD"] + S["divdiv"]),
            (U, U, t["A"], uu_dt),
            (U, U, t["E0"], S["uu"]),
            (U, W, t["C"], nu * S["Dw"]),
            (U, W, t["D"], S["udivw"]),
            (U, P, t["C"], -2 * nu * S["divp"]),
            (W, W, t["H"], S["ww"] + S["divwdivw"]),
            (W, P, t["H"], -S["trp"]),
            (P, P, t["H"], 2 * S["pp"]),
        ]
        terms = _symmetrize(terms)
        m = self.spaces.tri.areas
        return KroneckerOperator(self.spaces, terms, (self.t["H"].diagonal(), m, self.area))

    def _gram_operator(self):
        t, S = self.t, self.S
        h1 = self.div_norm == H1
        U, W, P = 0, 1, 2
        terms = [
            (U, U, t["M"], S["uu"] + S["gg"] + S["divdiv"]),
            (U, U, t["A"], S["uu"] + S["divdiv"] if h1 else S["uu"]),
            (U, W, t["D"], S["udivw"]),
            (W, W, t["H"], S["ww"] + S["divwdivw"]),
            (P, P, t["H"], S["pp"]),
        ]
        return KroneckerOperator(self.spaces, _symmetrize(terms))

    def apply_A(self, x):
        return self.A.matvec(x)

    def apply_B(self, x):
        return self.B.matvec(x)

    def diag_A(self):
        return self.A.diagonal()

    def apply_M_pairing(self, p, q):
        """``<M p, M q>_{L2(I)}`` for pressure coefficient arrays (slabs, nt)."""
        h = self.t["H"].diagonal()
        m = self.spaces.tri.areas
        p = np.asarray(p).reshape(len(h), -1)
        q = np.asarray(q).reshape(len(h), -1)
        return float(np.sum(h * (p @ m) * (q @ m)) / self.area)

    # right-hand side -------------------------------------------------------

    def _evaluation(self, degree):
        if degree not in self._eval_cache:
            q = self.spaces.quadrature(degree)
            self._eval_cache[degree] = (q, self.spaces.evaluate(q))
        return self._eval_cache[degree]

    def slab_rule(self, j, npts):
        s, w = gauss_interval(npts)
        t0, t1 = self.spaces.time.breakpoints[j:j + 2]
        return t0 + (t1 - t0) * s, (t1 - t0) * w

    def assemble_rhs(self, data: ProblemData):
        """Vector ``b`` with ``b . z = <F, G z>`` for every basis vector ``z``."""
        q, E = self._evaluation(data.space_degree)
        sp_ = self.spaces
        N = sp_.time.n_slabs
        nU = sp_.velocity.n_dofs
        bU = np.zeros((N + 1, nU))
        bW = np.zeros((N, sp_.stress.n_dofs))
        bP = np.zeros((N, sp_.pressure.n_dofs))
        h1 = self.div_norm == H1
        bp = sp_.time.breakpoints
        for j in range(N):
            ts, wt = self.slab_rule(j, data.time_points)
            h = bp[j + 1] - bp[j]
            fbar = np.zeros((q.n, 2))
            for t, a in zip(ts, wt):
                fbar += a * np.asarray(data.f(t, q.xy))
            fx, fy = q.w * fbar[:, 0], q.w * fbar[:, 1]
            vel = E["ux"].T @ fx + E["uy"].T @ fy
            bU[j] -= vel / h
            bU[j + 1] += vel / h
            bW[j] += E["divx"].T @ fx + E["divy"].T @ fy
            if data.g is not None:
                for t, a in zip(ts, wt):
                    gv = q.w * np.asarray(data.g(t, q.xy))
                    dv = E["div"].T @ gv
                    bU[j] += a * (bp[j + 1] - t) / h * dv
                    bU[j + 1] += a * (t - bp[j]) / h * dv
                    if h1:
                        gt = E["div"].T @ (q.w * np.asarray(data.g_t(t, q.xy)))
                        bU[j] -= a * gt / h
                        bU[j + 1] += a * gt / h
        u0 = np.asarray(data.u0(q.xy))
        bU[0] += E["ux"].T @ (q.w * u0[:, 0]) + E["uy"].T @ (q.w * u0[:, 1])
        return sp_.join(bU, bW, bP)

    def data_norm_sq(self, data: ProblemData) -> float:
        """``||F||^2`` with ``F = (0, f, g, u0, 0)`` by the data quadrature."""
        q, _ = self._evaluation(data.space_degree)
        total = 0.0
        h1 = self.div_norm == H1
        for j in range(self.spaces.time.n_slabs):
            ts, wt = self.slab_rule(j, data.time_points)
            for t, a in zip(ts, wt):
                f = np.asarray(data.f(t, q.xy))
                total += a * np.sum(q.w * (f * f).sum(axis=1))
                if data.g is not None:
                    g = np.asarray(data.g(t, q.xy))
                    total += a * np.sum(q.w * g * g)
                    if h1:
                        gt = np.asarray(data.g_t(t, q.xy))
                        total += a * np.sum(q.w * gt * gt)
        u0 = np.asarray(data.u0(q.xy))
        total += np.sum(q.w * (u0 * u0).sum(axis=1))
        return float(total)

    # pointwise residual components ------------------------------------------

    def fields(self, x, degree=7):
        """Spatial point values of the discrete fields per time function.

        Returns the quadrature and a dict with arrays of shape
        ``(points, time nodes)`` for velocity quantities and
        ``(points, slabs)`` for stress and pressure quantities.
        """
        q, E = self._evaluation(degree)
        U, W, P = self.spaces.split(x)
        out = {}
        for key in ("ux", "uy", "dxux", "dyux", "dxuy", "dyuy", "div"):
            out[key] = E[key] @ U.T
        for key in ("wxx", "wxy", "wyy", "divx", "divy"):
            out[key] = E[key] @ W.T
        out["p"] = E["p"] @ P.T
        return q, out

    def _residual_chunks(self, x, data: ProblemData | None, degree, time_points):
        """Yield ``(group, values)`` of the weighted residual components.

        Groups 1-5 are the five residual parts; streaming them keeps the
        estimator's memory at one time point's worth of values.
        """
        q, F = self.fields(x, degree)
        nu = self.nu
        h1 = self.div_norm == H1
        sw = np.sqrt(q.w)
        bp = self.spaces.time.breakpoints
        for j in range(self.spaces.time.n_slabs):
            ts, wt = self.slab_rule(j, time_points)
            h = bp[j + 1] - bp[j]
            for t, a in zip(ts, wt):
                th0, th1 = (bp[j + 1] - t) / h, (t - bp[j]) / h
                val = {k: th0 * F[k][:, j] + th1 * F[k][:, j + 1]
                       for k in ("dxux", "dyux", "dxuy", "dyuy", "div")}
                dt = {k: (F[k][:, j + 1] - F[k][:, j]) / h for k in ("ux", "uy", "div")}
                wxx, wxy, wyy = F["wxx"][:, j], F["wxy"][:, j], F["wyy"][:, j]
                p = F["p"][:, j]
                s = np.sqrt(a) * sw
                c1xx = wxx + 2 * nu * val["dxux"] - p
                c1xy = wxy + nu * (val["dyux"] + val["dxuy"])
                c1yy = wyy + 2 * nu * val["dyuy"] - p
                c2x = dt["ux"] + F["divx"][:, j]
                c2y = dt["uy"] + F["divy"][:, j]
                c3 = val["div"]
                c3t = dt["div"]
                if data is not None:
                    f = np.asarray(data.f(t, q.xy))
                    c2x, c2y = c2x - f[:, 0], c2y - f[:, 1]
                    if data.g is not None:
                        c3 = c3 - np.asarray(data.g(t, q.xy))
                        c3t = c3t - np.asarray(data.g_t(t, q.xy))
                yield 1, s * c1xx
                yield 1, np.sqrt(2) * s * c1xy
                yield 1, s * c1yy
                yield 2, s * c2x
                yield 2, s * c2y
                yield 3, s * c3
                if h1:
                    yield 3, s * c3t
        u0x, u0y = F["ux"][:, 0], F["uy"][:, 0]
        if data is not None:
            u0 = np.asarray(data.u0(q.xy))
            u0x, u0y = u0x - u0[:, 0], u0y - u0[:, 1]
        yield 4, sw * u0x
        yield 4, sw * u0y
        h = np.diff(bp)
        mean = (q.w @ F["p"]) / np.sqrt(self.area)
        yield 5, np.sqrt(h) * mean

    def gbar_components(self, x, data: ProblemData | None = None, degree=7,
                        time_points=5):
        """Square-root weighted residual components at all quadrature points.

        Returns a flat vector ``r`` with ``r . r = ||F - G x||^2`` (or
        ``||G x||^2`` when ``data`` is None, up to the sign of ``x``).
        """
        return np.concatenate([c for _, c in self._residual_chunks(x, data, degree, time_points)])

    def norm_components(self, x, degree=7, time_points=5):
        """Square-root weighted pointwise terms of the solution norm.

        ``r . r`` equals ``||u||^2_{L2(H1)} + ||div u||^2`` (in ``H1(I; L2)``
        or ``L2(I; L2)``) ``+ ||w||^2 + ||d_t u + div w||^2 + ||p||^2``.
        """
        q, F = self.fields(x, degree)
        h1 = self.div_norm == H1
        sw = np.sqrt(q.w)
        bp = self.spaces.time.breakpoints
        chunks = []
        for j in range(self.spaces.time.n_slabs):
            ts, wt = self.slab_rule(j, time_points)
            h = bp[j + 1] - bp[j]
            for t, a in zip(ts, wt):
                th0, th1 = (bp[j + 1] - t) / h, (t - bp[j]) / h
                s = np.sqrt(a) * sw
                for k in ("ux", "uy", "dxux", "dyux", "dxuy", "dyuy", "div"):
                    chunks.append(s * (th0 * F[k][:, j] + th1 * F[k][:, j + 1]))
                if h1:
                    chunks.append(s * (F["div"][:, j + 1] - F["div"][:, j]) / h)
                chunks.append(s * F["wxx"][:, j])
                chunks.append(np.sqrt(2) * s * F["wxy"][:, j])
                chunks.append(s * F["wyy"][:, j])
                for c, d in (("ux", "divx"), ("uy", "divy")):
                    chunks.append(s * ((F[c][:, j + 1] - F[c][:, j]) / h + F[d][:, j]))
                chunks.append(s * F["p"][:, j])
        return np.concatenate(chunks)

    def apply_Gbar_component_inner_products(self, x, y, degree=7):
        """``<G x, G y>_F`` by direct quadrature of the residual components."""
        return float(self.gbar_components(x, None, degree) @ self.gbar_components(y, None, degree))

    def compute_estimator(self, x, data: ProblemData) -> ResidualDecomposition:
        """The five squared residual norms of ``F - G x`` by quadrature."""
        r = np.zeros(6)
        for group, c in self._residual_chunks(x, data, data.space_degree, data.time_points):
            r[group] += c @ c
        return ResidualDecomposition(*(float(v) for v in r[1:]))

    def xnorm_sq(self, x) -> float:
        return float(x @ self.apply_B(x))


def _symmetrize(terms):
    out = []
    for o, i, T, S in terms:
        out.append((o, i, T, S))
        if o != i:
            out.append((i, o, T.T.tocsr(), S.T.tocsr()))
    return out


class GramSolver:
    """Exact application of ``B^{-1}`` for the solution-norm Gram matrix.

    Eliminating the stress block leaves the velocity Schur complement
    ``M_t kron K1 + A_t kron (K2 - S_ud S_w^{-1} S_ud^T)`` because
    ``D_t H^{-1} D_t^T = A_t``.  The generalized eigenvectors of
    ``(A_t, M_t)`` decouple it into one spatial problem per temporal mode,
    each solved through a sparse saddle-free augmented system

        [[K1 + lam K2, sqrt(lam) S_ud], [sqrt(lam) S_ud^T, S_w]].
    """

    def __init__(self, system: FoslsSystem):
        import scipy.linalg as sl
        from scipy.sparse.linalg import splu

        self.system = system
        t, S = system.t, system.S
        h1 = system.div_norm == H1
        self.h = t["H"].diagonal()
        K1 = S["uu"] + S["gg"] + S["divdiv"]
        K2 = S["uu"] + S["divdiv"] if h1 else S["uu"]
        Sw = (S["ww"] + S["divwdivw"]).tocsc()
        self.Sud = S["udivw"]
        self.Sw = splu(Sw)
        lam, V = sl.eigh(t["A"].toarray(), t["M"].toarray())
        self.lam, self.V = np.clip(lam, 0.0, None), V
        self.D = t["D"]
        self.pp = S["pp"].diagonal()
        nu = K1.shape[0]
        self.factors = []
        for lk in self.lam:
            r = np.sqrt(lk)
            K = sp.bmat([[K1 + lk * K2, r * self.Sud], [r * self.Sud.T, Sw]], format="csc")
            self.factors.append((splu(K), nu))

    def _mode_solve(self, k, z):
        lu, nu = self.factors[k]
        rhs = np.zeros(lu.shape[0])
        rhs[:nu] = z
        return lu.solve(rhs)[:nu]

    def solve(self, r):
        sps = self.system.spaces
        rU, rW, rP = sps.split(r)
        Z = self.Sw.solve(np.ascontiguousarray(rW.T)).T / self.h[:, None]
        rt = rU - self.D @ (self.Sud @ Z.T).T
        Y = self.V.T @ rt
        for k in range(Y.shape[0]):
            Y[k] = self._mode_solve(k, Y[k])
        U = self.V @ Y
        Wr = rW - (self.D.T @ (self.Sud.T @ U.T).T)
        W = self.Sw.solve(np.ascontiguousarray(Wr.T)).T / self.h[:, None]
        P = rP / (self.h[:, None] * self.pp[None, :])
        return sps.join(U, W, P)

    __call__ = solve
