import numpy as np
import pytest

from stfosls.manufactured import (ExactSolution, check_slip_compatibility, compute_errors,
                                  evaluate_exact)
from stfosls.quadrature import gauss_interval
from stfosls.spaces import project_pressure

from conftest import cached_system

PI = np.pi


def test_point_values():
    sol = ExactSolution()
    assert np.allclose(sol.u(0.0, np.array([[0.5, 0.5]])), 0.0, atol=1e-15)
    assert np.allclose(sol.u(0.0, np.array([[0.5, 0.25]])), [[np.sqrt(2) / 2, 0.0]])
    out = evaluate_exact(1.0, [0.5, 0.25])
    assert np.allclose(out["u"], np.exp(-1) * np.array([[np.sqrt(2) / 2, 0.0]]))
    assert out["p"][0] == pytest.approx(np.exp(-1) * np.sin(PI / 4))


def test_divergence_free(rng):
    sol = ExactSolution()
    xy = rng.uniform(-1, 1, (200, 2))
    for t in (0.0, 0.3, 1.0):
        assert np.abs(sol.div_u(t, xy)).max() < 1e-12


@pytest.mark.parametrize("nu", [1.0, 0.1])
def test_derivatives_by_finite_differences(nu, rng):
    sol = ExactSolution(nu)
    xy = rng.uniform(-1, 1, (100, 2))
    t = rng.uniform(0, 1)
    eps = 1e-5
    ex, ey = np.array([eps, 0.0]), np.array([0.0, eps])
    g = np.stack([(sol.u(t, xy + ex) - sol.u(t, xy - ex)) / (2 * eps),
                  (sol.u(t, xy + ey) - sol.u(t, xy - ey)) / (2 * eps)], axis=2)
    assert np.abs(g - sol.grad_u(t, xy)).max() < 1e-6
    dp = np.stack([(sol.p(t, xy + ex) - sol.p(t, xy - ex)) / (2 * eps),
                   (sol.p(t, xy + ey) - sol.p(t, xy - ey)) / (2 * eps)], axis=1)
    assert np.abs(dp - sol.grad_p(t, xy)).max() < 1e-6
    # w = -nu D(u) + p I with D(u) = grad u + grad u^T
    D = g + np.transpose(g, (0, 2, 1))
    p = sol.p(t, xy)
    w = np.stack([-nu * D[:, 0, 0] + p, -nu * D[:, 0, 1], -nu * D[:, 1, 1] + p], axis=1)
    assert np.abs(w - sol.w(t, xy)).max() < 1e-6
    # f = d_t u + div w, with div w by finite differences of w
    divw = ((sol.w(t, xy + ex)[:, [0, 1]] - sol.w(t, xy - ex)[:, [0, 1]])
            + (sol.w(t, xy + ey)[:, [1, 2]] - sol.w(t, xy - ey)[:, [1, 2]])) / (2 * eps)
    ut = (sol.u(t + eps, xy) - sol.u(t - eps, xy)) / (2 * eps)
    assert np.abs(ut + divw - sol.f(t, xy)).max() < 1e-6


@pytest.mark.parametrize("domain", ["square", "lshape"])
def test_slip_compatible(domain):
    rep = check_slip_compatibility(domain)
    assert rep.ok and rep.first_violation is None
    assert rep.max_normal < 1e-12 and rep.max_traction < 1e-12


class Perturbed(ExactSolution):
    """Stream function ``psi + x_1``: adds a constant tangential-free flow (0, -1)."""

    def u(self, t, xy):
        return super().u(t, xy) + np.exp(-t) * np.array([0.0, -1.0])


def test_perturbed_solution_rejected():
    rep = check_slip_compatibility("square", Perturbed())
    assert not rep.ok
    assert rep.max_normal == pytest.approx(1.0)
    assert rep.first_violation is not None


def test_zero_state_stress_error():
    system = cached_system("square", 1)
    sol = ExactSolution()
    err = compute_errors(system, np.zeros(system.spaces.n_dofs), sol)
    # independent tensor Gauss rule on the unit square and in time
    s, w = gauss_interval(12)
    X, Y = np.meshgrid(s, s, indexing="ij")
    xy = np.column_stack([X.ravel(), Y.ravel()])
    wx = np.outer(w, w).ravel()
    total = 0.0
    for t, a in zip(s, w):
        v = sol.w(t, xy)
        total += a * wx @ (v[:, 0] ** 2 + 2 * v[:, 1] ** 2 + v[:, 2] ** 2)
    assert err.err_w == pytest.approx(np.sqrt(total), rel=1e-8)
    # closed forms: ||u(t)||^2 = e^{-2t}/2, ||grad u(t)||^2 = pi^2 e^{-2t}
    assert err.err_u == pytest.approx(np.sqrt((0.5 + PI ** 2) * (1 - np.exp(-2)) / 2), rel=1e-8)


def test_pressure_error_best_approximation():
    system = cached_system("lshape", 1)
    sp_ = system.spaces
    sol = ExactSolution()
    s, w = gauss_interval(5)
    bp = sp_.time.breakpoints
    P = np.zeros((sp_.time.n_slabs, sp_.tri.n_triangles))
    for j in range(sp_.time.n_slabs):
        h = bp[j + 1] - bp[j]
        for sk, wk in zip(s, w):
            P[j] += wk * project_pressure(sp_, lambda xy: sol.p(bp[j] + h * sk, xy))
    x = np.zeros(sp_.n_dofs)
    U, W, _ = sp_.split(x)
    err = compute_errors(system, sp_.join(U, W, P), sol)
    # Pythagoras: ||p - Pp||^2 = ||p||^2 - ||Pp||^2
    q = sp_.quadrature(10)
    norm_p = 0.0
    for j in range(sp_.time.n_slabs):
        h = bp[j + 1] - bp[j]
        for sk, wk in zip(s, w):
            norm_p += h * wk * q.w @ sol.p(bp[j] + h * sk, q.xy) ** 2
    norm_P = np.sum(np.diff(bp)[:, None] * P ** 2 * sp_.tri.areas[None, :])
    assert err.err_p == pytest.approx(np.sqrt(norm_p - norm_P), rel=1e-6)
    zero = compute_errors(system, np.zeros(sp_.n_dofs), sol)
    assert err.err_p < zero.err_p


def test_velocity_error_dominates_l2h1_part(rng):
    sol = ExactSolution()
    x = rng.standard_normal(cached_system("square", 1).spaces.n_dofs)
    h1 = compute_errors(cached_system("square", 1, "slip", "h1"), x, sol)
    l2 = compute_errors(cached_system("square", 1, "slip", "l2"), x, sol)
    assert h1.err_u >= l2.err_u
    assert h1.err_w == pytest.approx(l2.err_w)
    assert h1.err_p == pytest.approx(l2.err_p)


def test_exact_data_estimator_matches_errors_at_zero():
    system = cached_system("square", 1)
    sol = ExactSolution()
    data = sol.problem_data()
    err = compute_errors(system, np.zeros(system.spaces.n_dofs), sol, data)
    assert err.err_pde == pytest.approx(np.sqrt(system.compute_estimator(
        np.zeros(system.spaces.n_dofs), data).r2), rel=1e-12)
