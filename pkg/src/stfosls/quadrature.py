"""Gauss rules on intervals and triangles."""
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi


@lru_cache(maxsize=None)
def gauss_interval(n: int):
    """``n``-point Gauss-Legendre rule on ``[0, 1]`` (exact to degree ``2n-1``)."""
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w


@lru_cache(maxsize=None)
def gauss_triangle(degree: int):
    """Collapsed Gauss rule on the unit triangle ``{x, y >= 0, x + y <= 1}``.

    Returns barycentric coordinates ``(nq, 3)`` and weights summing to 1/2.
    The rule is a Gauss-Jacobi(1, 0) x Gauss-Legendre product under the
    Duffy map and integrates polynomials of total degree ``degree`` exactly.
    """
    n = degree // 2 + 1
    xa, wa = roots_jacobi(n, 1.0, 0.0)
    xb, wb = np.polynomial.legendre.leggauss(n)
    # a in [0, 1] carries the (1 - a) Jacobian factor
    a = 0.5 * (xa + 1.0)
    wa = wa / 4.0
    b = 0.5 * (xb + 1.0)
    wb = 0.5 * wb
    A, B = np.meshgrid(a, b, indexing="ij")
    x = A.ravel()
    y = ((1.0 - A) * B).ravel()
    w = np.outer(wa, wb).ravel()
    bary = np.stack([1.0 - x - y, x, y], axis=1)
    return bary, w
