"""Stationary Stokes Ritz projection, discrete Leray projection, and the
discrete operators Delta_h and A_h.

Factorizations are cached on the space, so repeated projections (for
instance at many time samples) cost one back-substitution each.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse.linalg as spla

from .forms import _patterns, _scatter_vector, load_vector
from .quadrature import error_rule
from .solver import SaddleFactorization
from .spaces import Field, MixedSpace, coeffs_of


def _cache(space: MixedSpace) -> dict:
    c = getattr(space, "_proj_cache", None)
    if c is None:
        c = space._proj_cache = {}
    return c


def _ritz_factorization(space: MixedSpace) -> SaddleFactorization:
    c = _cache(space)
    if "ritz" not in c:
        f = space.forms()
        c["ritz"] = SaddleFactorization(space, f.stiffness, -f.div.T.tocsr(), f.div, 1)
    return c["ritz"]


def _leray_factorization(space: MixedSpace) -> SaddleFactorization:
    c = _cache(space)
    if "leray" not in c:
        f = space.forms()
        c["leray"] = SaddleFactorization(space, f.mass, f.div.T.tocsr(), f.div, 1)
    return c["leray"]


def _mass_lu(space: MixedSpace):
    c = _cache(space)
    if "mass" not in c:
        c["mass"] = spla.splu(space.forms().mass.tocsc())
    return c["mass"]


@dataclass
class RitzPair:
    """Velocity and pressure parts of the stationary Stokes Ritz projection."""

    velocity: Field
    pressure: Field
    momentum_residual: float = 0.0
    divergence_residual: float = 0.0


def ritz_rhs(space: MixedSpace, w: Callable, grad_w: Callable, r: Callable):
    """Right-hand sides (grad w, grad phi) - (r, div phi) and (div w, psi), degree-10 rule."""
    rule = error_rule()
    tab = space.tabulate(rule)
    gw = np.asarray(grad_w(tab.points))  # (nc, nq, 2, 2)
    rv = np.asarray(r(tab.points))  # (nc, nq)
    # velocity test phi_i e_e: grad phi = e_e (x) grad phi_i
    loc = np.einsum("cq,cqed,cqid->cei", tab.wdet, gw, tab.dphi)
    loc -= np.einsum("cq,cq,cqie->cei", tab.wdet, rv, tab.dphi)
    ru = _scatter_vector(space, loc)
    div_w = gw[..., 0, 0] + gw[..., 1, 1]
    locp = np.einsum("cq,cq,qa->ca", tab.wdet, div_w, tab.psi)
    rp = np.bincount(space.cell_pdofs.ravel(), weights=locp.ravel(), minlength=space.n_p)
    return ru, rp


def stokes_ritz(space: MixedSpace, w: Callable, grad_w: Callable, r: Callable) -> RitzPair:
    """Stokes Ritz projection of (w, r).

    Finds (R, R_p) in U_h x M_h with zero-mean R_p such that
    (grad(w - R), grad phi) - (r - R_p, div phi) = 0 and (div(w - R), psi) = 0.
    ``w``, ``grad_w`` and ``r`` map points (..., 2) to (..., 2), (..., 2, 2), (...).
    """
    fac = _ritz_factorization(space)
    ru, rp = ritz_rhs(space, w, grad_w, r)
    u, p, _ = fac.solve(ru, rp)
    f = space.forms()
    mom = ru - (f.stiffness0 @ u - f.div.T @ p)
    mom[space.dirichlet_mask] = 0.0
    div = rp - f.div @ u
    scale = max(1.0, np.abs(ru).max(), np.abs(rp).max())
    return RitzPair(
        Field(space, "velocity", u),
        Field(space, "pressure", p),
        float(np.abs(mom).max() / scale),
        float(np.abs(div).max() / scale),
    )


def leray_project(space: MixedSpace, v) -> Field:
    """L2 projection onto the discretely divergence-free space V_h.

    ``v`` is a velocity Field, a coefficient vector, or a closure of points.
    """
    if callable(v):
        b = load_vector(space, v, rule=error_rule())
    else:
        b = space.forms().mass0 @ coeffs_of(v)
    u, _, _ = _leray_factorization(space).solve(b)
    return Field(space, "velocity", u)


def discrete_laplacian(space: MixedSpace, w) -> Field:
    """Delta_h w in U_h, defined by (Delta_h w, phi) = -(grad w, grad phi)."""
    rhs = -(space.forms().stiffness0 @ coeffs_of(w))
    return Field(space, "velocity", _mass_lu(space).solve(rhs))


def discrete_stokes_op(space: MixedSpace, w) -> Field:
    """A_h w = -P_h Delta_h w for w in V_h."""
    lap = discrete_laplacian(space, w)
    return leray_project(space, -lap.coefficients)


def random_vh_fields(space: MixedSpace, count: int, seed: int = 0) -> list[Field]:
    """Leray projections of random U_h coefficient vectors."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        c = rng.standard_normal(space.n_u) * space.free
        out.append(leray_project(space, c))
    return out


def linf_surrogate(space: MixedSpace, w) -> float:
    """Max velocity magnitude over DOF nodes and degree-10 quadrature points."""
    c = coeffs_of(w).reshape(2, space.n_scalar)
    nodal = np.hypot(c[0], c[1]).max()
    vals = space.velocity_values(coeffs_of(w), error_rule())
    return float(max(nodal, np.hypot(vals[..., 0], vals[..., 1]).max()))


def inequality_constants(space: MixedSpace, count: int = 50, seed: int = 0) -> dict:
    """Empirical constants of three discrete inequalities over random V_h fields.

    ``guermond_pasciak``: max ||Delta_h w|| / ||A_h w||.
    ``gagliardo_nirenberg``: max ||w||_inf / (||w||^(1/2) ||A_h w||^(1/2)).
    ``h1_interpolation``: max ||grad w|| / (||w||^(1/2) ||A_h w||^(1/2)).
    """
    f = space.forms()
    M, K = f.mass_full, f.stiffness_full
    gp, gn, hi = 0.0, 0.0, 0.0
    for w in random_vh_fields(space, count, seed):
        c = w.coefficients
        lap = discrete_laplacian(space, c).coefficients
        A = discrete_stokes_op(space, c).coefficients
        nl = np.sqrt(lap @ (M @ lap))
        na = np.sqrt(A @ (M @ A))
        nw = np.sqrt(c @ (M @ c))
        ng = np.sqrt(c @ (K @ c))
        gp = max(gp, nl / na)
        gn = max(gn, linf_surrogate(space, c) / np.sqrt(nw * na))
        hi = max(hi, ng / np.sqrt(nw * na))
    return {"guermond_pasciak": float(gp), "gagliardo_nirenberg": float(gn), "h1_interpolation": float(hi)}


__all__ = [
    "RitzPair",
    "discrete_laplacian",
    "discrete_stokes_op",
    "inequality_constants",
    "leray_project",
    "linf_surrogate",
    "random_vh_fields",
    "ritz_rhs",
    "stokes_ritz",
]
