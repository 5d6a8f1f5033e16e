"""Manufactured solution, slip checks and error norms."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import refined_mesh
from .quadrature import gauss_interval
from .system import H1, FoslsSystem, ProblemData

PI = np.pi


class ExactSolution:
    """Velocity ``exp(-t) curl psi`` with ``psi = sin(pi x) sin(pi y) / pi``.

    ``curl psi = (d_y psi, -d_x psi)``; the pressure is
    ``exp(-t) sin(pi (x - y))`` and ``w = -nu D(u) + p Id``.  All spatial
    arguments are ``(n, 2)`` arrays; tensors are returned as
    ``(n, 3)`` arrays of ``(xx, xy, yy)`` components.
    """

    def __init__(self, nu: float = 1.0):
        self.nu = nu

    def u(self, t, xy):
        x, y = xy[:, 0], xy[:, 1]
        return np.exp(-t) * np.stack([np.sin(PI * x) * np.cos(PI * y),
                                      -np.cos(PI * x) * np.sin(PI * y)], axis=1)

    def grad_u(self, t, xy):
        """``g[:, i, j] = d_j u_i``."""
        x, y = xy[:, 0], xy[:, 1]
        e = np.exp(-t) * PI
        g = np.empty((len(x), 2, 2))
        g[:, 0, 0] = e * np.cos(PI * x) * np.cos(PI * y)
        g[:, 0, 1] = -e * np.sin(PI * x) * np.sin(PI * y)
        g[:, 1, 0] = e * np.sin(PI * x) * np.sin(PI * y)
        g[:, 1, 1] = -e * np.cos(PI * x) * np.cos(PI * y)
        return g

    def div_u(self, t, xy):
        g = self.grad_u(t, xy)
        return g[:, 0, 0] + g[:, 1, 1]

    def u_t(self, t, xy):
        return -self.u(t, xy)

    def p(self, t, xy):
        return np.exp(-t) * np.sin(PI * (xy[:, 0] - xy[:, 1]))

    def grad_p(self, t, xy):
        c = PI * np.exp(-t) * np.cos(PI * (xy[:, 0] - xy[:, 1]))
        return np.stack([c, -c], axis=1)

    def laplace_u(self, t, xy):
        return -2 * PI ** 2 * self.u(t, xy)

    def w(self, t, xy):
        g = self.grad_u(t, xy)
        p = self.p(t, xy)
        nu = self.nu
        return np.stack([-2 * nu * g[:, 0, 0] + p,
                         -nu * (g[:, 0, 1] + g[:, 1, 0]),
                         -2 * nu * g[:, 1, 1] + p], axis=1)

    def f(self, t, xy):
        """``d_t u - nu Lap u + grad p``, written out by hand."""
        return (2 * PI ** 2 * self.nu - 1.0) * self.u(t, xy) + self.grad_p(t, xy)

    def u0(self, xy):
        return self.u(0.0, xy)

    def problem_data(self) -> ProblemData:
        return ProblemData(f=self.f, u0=self.u0, nu=self.nu)


def evaluate_exact(t, xy, nu=1.0) -> dict:
    """Values of the manufactured fields at time ``t`` and points ``xy``."""
    sol = ExactSolution(nu)
    xy = np.atleast_2d(np.asarray(xy, dtype=float))
    return {"u": sol.u(t, xy), "grad_u": sol.grad_u(t, xy), "div_u": sol.div_u(t, xy),
            "p": sol.p(t, xy), "w": sol.w(t, xy), "f": sol.f(t, xy)}


@dataclass
class SlipReport:
    ok: bool
    max_normal: float
    max_traction: float
    first_violation: tuple | None = None


def check_slip_compatibility(domain: str, solution=None, level: int = 2,
                             times=(0.0, 0.5, 1.0), n_points: int = 4,
                             tol: float = 1e-12) -> SlipReport:
    """Check ``u . n = 0`` and ``(D(u) n) . tau = 0`` on the boundary.

    ``solution`` needs ``u(t, xy)`` and ``grad_u(t, xy)``; it defaults to
    :class:`ExactSolution`.  Points are Gauss points on the boundary edges
    of the refined mesh at the given times.
    """
    sol = solution or ExactSolution()
    tri = refined_mesh(domain, level).space
    be = tri.boundary_edges
    ends = tri.vertices[tri.edges[be]]
    n = tri.edge_normals[be]
    tau = np.stack([-n[:, 1], n[:, 0]], axis=1)
    s, _ = gauss_interval(n_points)
    worst_n = worst_t = 0.0
    first = None
    for t in times:
        for si in s:
            xy = (1 - si) * ends[:, 0] + si * ends[:, 1]
            un = np.abs(np.sum(sol.u(t, xy) * n, axis=1))
            g = sol.grad_u(t, xy)
            Dm = g + np.transpose(g, (0, 2, 1))
            tr = np.abs(np.einsum("ni,nij,nj->n", tau, Dm, n))
            worst_n, worst_t = max(worst_n, un.max()), max(worst_t, tr.max())
            bad = np.flatnonzero((un > tol) | (tr > tol))
            if first is None and bad.size:
                first = (float(t), tuple(xy[bad[0]]))
    return SlipReport(first is None, float(worst_n), float(worst_t), first)


@dataclass
class ErrorReport:
    err_u: float
    err_w: float
    err_pde: float
    err_p: float
    eta: float

    def as_dict(self):
        return {"eta": self.eta, "err_u": self.err_u, "err_w": self.err_w,
                "err_pde": self.err_pde, "err_p": self.err_p}


def compute_errors(system: FoslsSystem, x, solution: ExactSolution | None = None,
                   data: ProblemData | None = None) -> ErrorReport:
    """Errors of ``x`` against the manufactured solution by quadrature.

    ``err_u`` combines ``L2(I; H1)`` with the divergence measured in
    ``H1(I; L2)`` (``L2(I; L2)`` for the L2 variant).  The rules are the data
    rules of ``data``, so ``eta`` and the errors share quadrature points.
    """
    sol = solution or ExactSolution(system.nu)
    data = data or sol.problem_data()
    q, F = system.fields(x, data.space_degree)
    bp = system.spaces.time.breakpoints
    s, ws = gauss_interval(data.time_points)
    h1 = system.div_norm == H1
    eu = ew = epde = ep = 0.0
    w = q.w
    for j in range(system.spaces.time.n_slabs):
        h = bp[j + 1] - bp[j]
        for sk, wk in zip(s, ws):
            t = bp[j] + h * sk
            a = h * wk
            th0, th1 = 1 - sk, sk
            val = {k: th0 * F[k][:, j] + th1 * F[k][:, j + 1]
                   for k in ("ux", "uy", "dxux", "dyux", "dxuy", "dyuy", "div")}
            dt = {k: (F[k][:, j + 1] - F[k][:, j]) / h for k in ("ux", "uy", "div")}
            u, g = sol.u(t, q.xy), sol.grad_u(t, q.xy)
            du = sol.div_u(t, q.xy)
            d2 = ((u[:, 0] - val["ux"]) ** 2 + (u[:, 1] - val["uy"]) ** 2
                  + (g[:, 0, 0] - val["dxux"]) ** 2 + (g[:, 0, 1] - val["dyux"]) ** 2
                  + (g[:, 1, 0] - val["dxuy"]) ** 2 + (g[:, 1, 1] - val["dyuy"]) ** 2
                  + (du - val["div"]) ** 2)
            if h1:
                # d_t div u = -div u for the exact solution
                d2 = d2 + (-du - dt["div"]) ** 2
            eu += a * (w @ d2)
            we = sol.w(t, q.xy)
            ew += a * (w @ ((we[:, 0] - F["wxx"][:, j]) ** 2
                            + 2 * (we[:, 1] - F["wxy"][:, j]) ** 2
                            + (we[:, 2] - F["wyy"][:, j]) ** 2))
            f = data.f(t, q.xy)
            rx = f[:, 0] - dt["ux"] - F["divx"][:, j]
            ry = f[:, 1] - dt["uy"] - F["divy"][:, j]
            epde += a * (w @ (rx ** 2 + ry ** 2))
            ep += a * (w @ (sol.p(t, q.xy) - F["p"][:, j]) ** 2)
    eta = system.compute_estimator(x, data).eta
    return ErrorReport(float(np.sqrt(eu)), float(np.sqrt(ew)), float(np.sqrt(epde)),
                       float(np.sqrt(ep)), eta)
