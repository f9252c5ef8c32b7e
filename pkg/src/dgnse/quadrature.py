"""Quadrature rules on the reference triangle and on time intervals.

The reference triangle has vertices (0, 0), (1, 0), (0, 1); its area is 1/2,
so the weights of every rule sum to 1/2.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre


@dataclass(frozen=True)
class QuadratureRule:
    """Triangle quadrature rule.

    Attributes
    ----------
    points : ndarray, shape (nq, 3)
        Barycentric coordinates (lambda_0, lambda_1, lambda_2).
    weights : ndarray, shape (nq,)
        Positive weights summing to the reference area 1/2.
    exact_degree : int
        Total polynomial degree integrated exactly.
    name : str
    """

    points: np.ndarray
    weights: np.ndarray
    exact_degree: int
    name: str = ""

    @property
    def xi(self) -> np.ndarray:
        """Reference coordinates, shape (nq, 2)."""
        return self.points[:, 1:3]

    def __len__(self) -> int:
        return len(self.weights)


def _orbit3(a: float) -> np.ndarray:
    b = 1.0 - 2.0 * a
    return np.array([[b, a, a], [a, b, a], [a, a, b]])


def _orbit6(a: float, b: float) -> np.ndarray:
    c = 1.0 - a - b
    return np.array([[a, b, c], [b, c, a], [c, a, b], [b, a, c], [a, c, b], [c, b, a]])


@lru_cache(maxsize=None)
def dunavant6() -> QuadratureRule:
    """Symmetric 12-point rule of degree 6 (Dunavant)."""
    groups = [
        (0.116786275726379, _orbit3(0.249286745170910)),
        (0.050844906370207, _orbit3(0.063089014491502)),
        (0.082851075618374, _orbit6(0.053145049844817, 0.310352451033784)),
    ]
    pts = np.vstack([g[1] for g in groups])
    w = np.concatenate([np.full(len(g[1]), g[0]) for g in groups])
    # the tabulated values carry 15 digits; polish them against the moment
    # conditions so that degree-6 monomials are integrated to round-off
    pts, w = _polish_symmetric6(pts, w)
    return QuadratureRule(pts, 0.5 * w, 6, "dunavant6")


def _monomial_exact(i: int, j: int) -> float:
    # int_T xi^i eta^j = i! j! / (i + j + 2)!
    from math import factorial

    return factorial(i) * factorial(j) / factorial(i + j + 2)


def _polish_symmetric6(pts, w):
    from scipy.optimize import least_squares

    a1 = pts[1, 0]
    a2 = pts[4, 0]
    b3, c3 = pts[6, 0], pts[6, 1]
    x0 = np.array([w[0], w[3], w[6], a1, a2, b3, c3])
    mons = [(i, d - i) for d in range(7) for i in range(d + 1)]

    def build(x):
        groups = [(x[0], _orbit3(x[3])), (x[1], _orbit3(x[4])), (x[2], _orbit6(x[5], x[6]))]
        p = np.vstack([g[1] for g in groups])
        ww = np.concatenate([np.full(len(g[1]), g[0]) for g in groups])
        return p, ww

    def resid(x):
        p, ww = build(x)
        return np.array(
            [0.5 * ww @ (p[:, 1] ** i * p[:, 2] ** j) - _monomial_exact(i, j) for i, j in mons]
        ) * 1e3

    sol = least_squares(resid, x0, xtol=3e-16, ftol=3e-16, gtol=3e-16)
    return build(sol.x)


@lru_cache(maxsize=None)
def collapsed_gauss(degree: int) -> QuadratureRule:
    """Conical product (collapsed Gauss-Jacobi x Gauss-Legendre) rule.

    Exact for total degree ``degree``; weights are positive.
    """
    n = (degree + 2) // 2
    xj, wj = roots_jacobi(n, 1.0, 0.0)
    xl, wl = roots_legendre(n)
    eta = 0.5 * (1.0 + xj)
    weta = 0.25 * wj
    s = 0.5 * (1.0 + xl)
    ws = 0.5 * wl
    E, S = np.meshgrid(eta, s, indexing="ij")
    W = np.outer(weta, ws)
    xi = (1.0 - E) * S
    pts = np.column_stack([1.0 - xi.ravel() - E.ravel(), xi.ravel(), E.ravel()])
    return QuadratureRule(pts, W.ravel(), degree, f"collapsed{degree}")


def assembly_rule() -> QuadratureRule:
    return dunavant6()


def error_rule() -> QuadratureRule:
    return collapsed_gauss(10)


def gauss_interval(npts: int, a: float, b: float) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes and weights on [a, b]."""
    x, w = roots_legendre(npts)
    h = 0.5 * (b - a)
    return a + h * (x + 1.0), h * w
