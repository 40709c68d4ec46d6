"""Quadrature rules on the reference triangle and the unit interval.

Both rules are normalised so that the weights sum to one, i.e. an integral
over a physical cell is ``measure * sum(w * g(points))``.
"""
from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def gauss_interval(degree):
    """Gauss-Legendre rule on [0, 1] exact for polynomials of ``degree``.

    Returns
    -------
    s : ndarray, shape (n,)
        Nodes in [0, 1].
    w : ndarray, shape (n,)
        Weights, summing to one.
    """
    n = max(1, (degree + 2) // 2)
    x, w = np.polynomial.legendre.leggauss(n)
    s = 0.5 * (x + 1.0)
    w = 0.5 * w
    s.setflags(write=False)
    w.setflags(write=False)
    return s, w


@lru_cache(maxsize=None)
def triangle_rule(degree):
    """Conical product (collapsed Gauss) rule on the reference triangle.

    The reference triangle has vertices (0,0), (1,0), (0,1).  A monomial of
    total degree ``d`` pulled back through the Duffy map becomes degree
    ``d + 1`` in the collapsed direction, hence ``n = ceil((degree+2)/2)``
    points per direction.

    Returns
    -------
    lam : ndarray, shape (nq, 3)
        Barycentric coordinates of the nodes.
    w : ndarray, shape (nq,)
        Weights, summing to one.
    """
    n = max(1, (degree + 3) // 2)
    x, wx = np.polynomial.legendre.leggauss(n)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * wx
    U, V = np.meshgrid(u, u, indexing="ij")
    WU, WV = np.meshgrid(wu, wu, indexing="ij")
    xi = U.ravel()
    eta = (V * (1.0 - U)).ravel()
    # Jacobian of the collapse is (1 - u); the reference area 1/2 is divided out.
    w = (WU * WV * (1.0 - U)).ravel() * 2.0
    lam = np.column_stack([1.0 - xi - eta, xi, eta])
    lam.setflags(write=False)
    w.setflags(write=False)
    return lam, w
