"""Manufactured solutions on the unit square.

All builtin cases share the stream function psi = X(x) Y(y) g(t) with
X = sin^2(pi x), Y = sin^2(pi y), so u = (d_y psi, -d_x psi) is divergence
free and vanishes on the boundary together with its normal derivative. The
pressure is p = sin(2 pi x) cos(2 pi y) g(t), which has zero mean.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

PI = np.pi


@dataclass(frozen=True)
class ManufacturedCase:
    """Exact solution closures; points have shape (..., 2).

    ``grad_u`` returns (..., 2, 2) with ``[..., c, d] = d_d u_c``.
    """

    name: str
    nu: float
    T: float
    u: Callable
    grad_u: Callable
    dt_u: Callable
    p: Callable
    f: Callable
    lap_u: Callable | None = None

    def u0(self, x):
        return self.u(x, 0.0)

    def with_nu(self, nu: float) -> "ManufacturedCase":
        return builtin_case(self.name, nu=nu, T=self.T)


def _X(x):
    return np.sin(PI * x) ** 2


def _dX(x):
    return PI * np.sin(2 * PI * x)


def _ddX(x):
    return 2 * PI**2 * np.cos(2 * PI * x)


def _dddX(x):
    return -4 * PI**3 * np.sin(2 * PI * x)


_TIME = {
    "taylor-vortex-box": (np.cos, lambda t: -np.sin(t)),
    "decaying": (lambda t: np.exp(-t), lambda t: -np.exp(-t)),
    "steady": (lambda t: np.ones_like(np.asarray(t, dtype=float)), lambda t: np.zeros_like(np.asarray(t, dtype=float))),
}


def stream_case(name: str, g: Callable, dg: Callable, nu: float = 1.0, T: float = 1.0) -> ManufacturedCase:
    """Case built from psi = sin^2(pi x) sin^2(pi y) g(t)."""

    def spatial(x):
        X, Y = _X(x[..., 0]), _X(x[..., 1])
        dX, dY = _dX(x[..., 0]), _dX(x[..., 1])
        return X, Y, dX, dY

    def u(x, t):
        X, Y, dX, dY = spatial(x)
        return np.stack([X * dY, -dX * Y], axis=-1) * g(t)

    def grad_u(x, t):
        X, Y, dX, dY = spatial(x)
        ddX, ddY = _ddX(x[..., 0]), _ddX(x[..., 1])
        G = np.empty(x.shape[:-1] + (2, 2))
        G[..., 0, 0] = dX * dY
        G[..., 0, 1] = X * ddY
        G[..., 1, 0] = -ddX * Y
        G[..., 1, 1] = -dX * dY
        return G * g(t)

    def dt_u(x, t):
        X, Y, dX, dY = spatial(x)
        return np.stack([X * dY, -dX * Y], axis=-1) * dg(t)

    def lap_u(x, t):
        X, Y, dX, dY = spatial(x)
        ddX, ddY = _ddX(x[..., 0]), _ddX(x[..., 1])
        dddX, dddY = _dddX(x[..., 0]), _dddX(x[..., 1])
        return np.stack([ddX * dY + X * dddY, -(dddX * Y + dX * ddY)], axis=-1) * g(t)

    def p(x, t):
        return np.sin(2 * PI * x[..., 0]) * np.cos(2 * PI * x[..., 1]) * g(t)

    def grad_p(x, t):
        a, b = 2 * PI * x[..., 0], 2 * PI * x[..., 1]
        return np.stack([2 * PI * np.cos(a) * np.cos(b), -2 * PI * np.sin(a) * np.sin(b)], axis=-1) * g(t)

    def f(x, t):
        uu = u(x, t)
        conv = np.einsum("...cd,...d->...c", grad_u(x, t), uu)
        return dt_u(x, t) - nu * lap_u(x, t) + conv + grad_p(x, t)

    return ManufacturedCase(name, nu, T, u, grad_u, dt_u, p, f, lap_u)


CASE_NAMES = tuple(_TIME)


def builtin_case(name: str, nu: float = 1.0, T: float = 1.0) -> ManufacturedCase:
    """One of ``taylor-vortex-box`` (g = cos t), ``decaying`` (g = e^-t), ``steady`` (g = 1)."""
    if name not in _TIME:
        raise ValueError(f"unknown case {name!r}; choose one of {', '.join(CASE_NAMES)}")
    g, dg = _TIME[name]
    return stream_case(name, g, dg, nu, T)
