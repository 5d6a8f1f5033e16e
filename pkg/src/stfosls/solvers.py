"""Preconditioned CG for the normal equations and generalized eigenvalue bounds."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg as sl
from scipy.sparse.linalg import LinearOperator, eigsh


@dataclass
class PcgConfig:
    """Options of :func:`pcg`.

    ``tol`` bounds the preconditioned residual relative to the
    preconditioned right-hand side, ``sqrt(r^T D^{-1} r / b^T D^{-1} b)``.
    """

    tol: float = 1e-10
    max_iter: int = 20000
    verbose: bool = False
    stream: object = None


@dataclass
class PcgResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    history: list = field(default_factory=list)


def pcg(apply_A: Callable, diag, rhs, config: PcgConfig | None = None, x0=None) -> PcgResult:
    """Conjugate gradients with diagonal (Jacobi) preconditioning.

    Parameters
    ----------
    apply_A : callable
        Matrix-vector product with an SPD matrix.
    diag : ndarray
        Its diagonal, all entries positive.
    rhs : ndarray
    config : PcgConfig, optional

    Returns
    -------
    PcgResult
        When ``max_iter`` is hit the best iterate is returned with
        ``converged = False``.
    """
    config = config or PcgConfig()
    stream = config.stream or sys.stderr
    diag = np.asarray(diag, dtype=float)
    if np.any(diag <= 0):
        raise ValueError("diagonal preconditioner needs positive entries")
    b = np.asarray(rhs, dtype=float)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - apply_A(x) if x0 is not None else b.copy()
    z = r / diag
    bnorm = np.sqrt(b @ (b / diag))
    if bnorm == 0.0:
        return PcgResult(np.zeros_like(b), 0, 0.0, True, [0.0])
    rz = r @ z
    history = [np.sqrt(rz) / bnorm]
    if history[-1] <= config.tol:
        return PcgResult(x, 0, history[-1], True, history)
    p = z.copy()
    best_x, best_res = x.copy(), history[-1]
    for k in range(1, config.max_iter + 1):
        Ap = apply_A(p)
        pAp = p @ Ap
        if pAp <= 0:
            raise np.linalg.LinAlgError("matrix is not positive definite")
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        z = r / diag
        rz_new = r @ z
        res = np.sqrt(max(rz_new, 0.0)) / bnorm
        history.append(res)
        if config.verbose:
            print(f"iter {k} relres {res:.6e}", file=stream)
        if res < best_res:
            best_x, best_res = x.copy(), res
        if res <= config.tol:
            return PcgResult(x, k, res, True, history)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return PcgResult(best_x, config.max_iter, best_res, False, history)


@dataclass
class RatioReport:
    level: int
    dofs: int
    lambda_max: float
    lambda_min: float
    method: str = "dense"

    @property
    def ratio(self) -> float:
        return float(np.sqrt(self.lambda_max / self.lambda_min))


def probe_dense(apply, n):
    """Dense matrix of a linear map by applying it to the unit vectors."""
    out = np.empty((n, n))
    e = np.zeros(n)
    for i in range(n):
        e[i] = 1.0
        out[:, i] = apply(e)
        e[i] = 0.0
    return out


DENSE_MAX = 4000


def extremal_generalized_eigs(apply_A: Callable, apply_B: Callable, n: int,
                              apply_Binv: Optional[Callable] = None,
                              dense_max: int = DENSE_MAX, tol: float = 1e-8,
                              max_iter: int = 3000, ncv: int = 80, seed: int = 0):
    """Largest and smallest ``lam`` with ``A v = lam B v``.

    Both matrices must be symmetric, ``B`` positive definite.  Up to
    ``dense_max`` unknowns they are probed into dense arrays and handed to a
    dense symmetric-definite eigensolver.  Beyond that implicitly restarted
    Lanczos runs on ``B^{-1} A``, which is self-adjoint in the ``B`` inner
    product, once for each end of the spectrum.  This requires
    ``apply_Binv``.  The returned pairs are checked to satisfy
    ``||A v - lam B v||_{B^{-1}} <= tol * max(1, lam) ||v||_B``.

    Returns
    -------
    (lambda_max, lambda_min, method)
    """
    if n <= dense_max:
        A = probe_dense(apply_A, n)
        B = probe_dense(apply_B, n)
        A, B = 0.5 * (A + A.T), 0.5 * (B + B.T)
        ev = sl.eigh(A, B, eigvals_only=True)
        return float(ev[-1]), float(ev[0]), "dense"
    if apply_Binv is None:
        raise ValueError("iterative eigensolve needs a B^{-1} application")
    A = LinearOperator((n, n), matvec=apply_A, dtype=float)
    B = LinearOperator((n, n), matvec=apply_B, dtype=float)
    Binv = LinearOperator((n, n), matvec=apply_Binv, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(n)
    vals = []
    for which in ("LA", "SA"):
        lam, vec = eigsh(A, k=1, M=B, Minv=Binv, which=which, tol=tol * 1e-2,
                         ncv=min(n - 1, ncv), maxiter=max_iter, v0=v0)
        v = vec[:, 0]
        r = apply_A(v) - lam[0] * apply_B(v)
        resid = np.sqrt(abs(r @ apply_Binv(r)) / (v @ apply_B(v)))
        if resid > tol * max(1.0, abs(lam[0])):
            raise RuntimeError(f"eigen residual {resid:.2e} above tolerance")
        vals.append(float(lam[0]))
    return vals[0], vals[1], "lanczos"
