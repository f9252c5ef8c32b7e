"""Assembly of the spatial forms on a Taylor-Hood space.

Dirichlet DOFs are eliminated by a symmetric pin: masked rows and columns are
zeroed and a unit diagonal is placed on them, with zero right-hand side.
Matrices with suffix ``0`` carry the zeroed rows/columns without the unit
diagonal, which is what time-slab block systems are built from.
"""

from __future__ import annotations

from typing import Callable

import numpy as np
import scipy.sparse as sp

from .quadrature import QuadratureRule, assembly_rule, error_rule
from .spaces import Field, MixedSpace, coeffs_of


class _Pattern:
    """CSR pattern for local-to-global scatter of dense cell blocks."""

    def __init__(self, rows: np.ndarray, cols: np.ndarray, shape: tuple[int, int]):
        # rows/cols: (nc, a, b) global indices
        r = rows.ravel()
        c = cols.ravel()
        key = r.astype(np.int64) * shape[1] + c
        uniq, inv = np.unique(key, return_inverse=True)
        self.map = inv.ravel()
        ur = uniq // shape[1]
        uc = uniq % shape[1]
        self.indices = uc.astype(np.int32)
        self.indptr = np.searchsorted(ur, np.arange(shape[0] + 1)).astype(np.int32)
        self.nnz = len(uniq)
        self.shape = shape

    def assemble(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self.map, weights=local.ravel(), minlength=self.nnz)
        return sp.csr_matrix((data, self.indices.copy(), self.indptr.copy()), shape=self.shape)


def _vector_local_dofs(space: MixedSpace) -> np.ndarray:
    """Global velocity indices of the 12 local DOFs, shape (nc, 12)."""
    return np.hstack([space.cell_dofs, space.n_scalar + space.cell_dofs])


def _patterns(space: MixedSpace) -> dict:
    pats = getattr(space, "_patterns", None)
    if pats is None:
        ld = _vector_local_dofs(space)
        sd = space.cell_dofs
        pd = space.cell_pdofs
        pats = {
            "vec": _Pattern(
                np.broadcast_to(ld[:, :, None], (len(ld), 12, 12)),
                np.broadcast_to(ld[:, None, :], (len(ld), 12, 12)),
                (space.n_u, space.n_u),
            ),
            "scalar": _Pattern(
                np.broadcast_to(sd[:, :, None], (len(sd), 6, 6)),
                np.broadcast_to(sd[:, None, :], (len(sd), 6, 6)),
                (space.n_scalar, space.n_scalar),
            ),
            "div": _Pattern(
                np.broadcast_to(pd[:, :, None], (len(pd), 3, 12)),
                np.broadcast_to(ld[:, None, :], (len(pd), 3, 12)),
                (space.n_p, space.n_u),
            ),
            "pmass": _Pattern(
                np.broadcast_to(pd[:, :, None], (len(pd), 3, 3)),
                np.broadcast_to(pd[:, None, :], (len(pd), 3, 3)),
                (space.n_p, space.n_p),
            ),
            "local_free": space.free[ld].astype(float),  # (nc, 12)
            "local_dofs": ld,
        }
        space._patterns = pats
    return pats


def pin(A: sp.spmatrix, mask: np.ndarray, diag: bool = True) -> sp.csr_matrix:
    """Zero masked rows and columns; optionally put ones on their diagonal."""
    D = sp.diags((~mask).astype(float))
    out = D @ A @ D
    if diag:
        out = out + sp.diags(mask.astype(float))
    return out.tocsr()


class Forms:
    """All constant matrices of a mixed space.

    Attributes
    ----------
    mass_full, stiffness_full : velocity mass/stiffness without boundary conditions
    mass, stiffness : pinned versions (unit diagonal on Dirichlet DOFs)
    mass0, stiffness0 : Dirichlet rows/columns zeroed, no diagonal
    div_full : (psi_k, div phi_i) without boundary conditions
    div : Dirichlet columns removed
    pressure_mass : P1 mass matrix
    pressure_mean : integrals of the pressure basis functions
    area : measure of the domain
    """

    def __init__(self, space: MixedSpace, rule: QuadratureRule | None = None):
        self.space = space
        tab = space.tabulate(rule or assembly_rule())
        pats = _patterns(space)
        w = tab.wdet
        ms = np.einsum("cq,qi,qj->cij", w, tab.phi, tab.phi)
        ks = np.einsum("cq,cqid,cqjd->cij", w, tab.dphi, tab.dphi)
        self.mass_scalar = pats["scalar"].assemble(ms)
        self.stiffness_scalar = pats["scalar"].assemble(ks)
        I2 = sp.identity(2, format="csr")
        self.mass_full = sp.kron(I2, self.mass_scalar, format="csr")
        self.stiffness_full = sp.kron(I2, self.stiffness_scalar, format="csr")
        mask = space.dirichlet_mask
        self.mass0 = pin(self.mass_full, mask, diag=False)
        self.stiffness0 = pin(self.stiffness_full, mask, diag=False)
        self.mass = pin(self.mass_full, mask)
        self.stiffness = pin(self.stiffness_full, mask)
        # local divergence block: (psi_a, d_e phi_i) -> column e*6 + i
        bl = np.einsum("cq,qa,cqie->caei", w, tab.psi, tab.dphi).reshape(-1, 3, 12)
        self.div_full = pats["div"].assemble(bl)
        self.div = (self.div_full @ sp.diags((~mask).astype(float))).tocsr()
        pm = np.einsum("cq,qa,qb->cab", w, tab.psi, tab.psi)
        self.pressure_mass = pats["pmass"].assemble(pm)
        self.pressure_mean = np.asarray(self.pressure_mass.sum(axis=1)).ravel()
        self.area = float(self.pressure_mean.sum())


def assemble_mass(space: MixedSpace) -> sp.csr_matrix:
    return space.forms().mass


def assemble_stiffness(space: MixedSpace) -> sp.csr_matrix:
    return space.forms().stiffness


def assemble_divergence(space: MixedSpace) -> sp.csr_matrix:
    return space.forms().div


# ---------------------------------------------------------------------------
# coefficient data for the convection forms


def coefficient_data(space: MixedSpace, a, rule: QuadratureRule | None = None):
    """Values (nc, nq, 2) and gradients (nc, nq, 2, 2) of a coefficient field.

    ``a`` may be a velocity Field, a coefficient vector, a pair of closures
    ``(value(x), gradient(x))`` acting on points of shape (..., 2), or a pair
    of arrays already tabulated on ``rule``.
    """
    if isinstance(a, tuple):
        if callable(a[0]):
            tab = space.tabulate(rule or error_rule())
            return np.asarray(a[0](tab.points)), np.asarray(a[1](tab.points))
        return np.asarray(a[0]), np.asarray(a[1])
    c = coeffs_of(a)
    return space.velocity_values(c, rule), space.velocity_gradients(c, rule)


def convection_c(space: MixedSpace, a, v, w, rule: QuadratureRule | None = None) -> float:
    """Quadrature value of ((a . grad) v, w)."""
    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    av, _ = coefficient_data(space, a, rule)
    gv = space.velocity_gradients(coeffs_of(v), rule)
    wv = space.velocity_values(coeffs_of(w), rule)
    conv = np.einsum("cqed,cqd->cqe", gv, av)
    return float(np.einsum("cq,cqe,cqe->", tab.wdet, conv, wv))


def convection_chat(space: MixedSpace, a, v, w, rule: QuadratureRule | None = None) -> float:
    """Antisymmetrized convection 1/2 c(a, v, w) - 1/2 c(a, w, v)."""
    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    av, _ = coefficient_data(space, a, rule)
    gv = space.velocity_gradients(coeffs_of(v), rule)
    gw = space.velocity_gradients(coeffs_of(w), rule)
    vv = space.velocity_values(coeffs_of(v), rule)
    wv = space.velocity_values(coeffs_of(w), rule)
    t1 = np.einsum("cqed,cqd,cqe->cq", gv, av, wv)
    t2 = np.einsum("cqed,cqd,cqe->cq", gw, av, vv)
    return float(0.5 * np.sum(tab.wdet * (t1 - t2)))


def _chat_local(tab, av, ag, which: str) -> np.ndarray:
    """Local 12x12 blocks of the linearized antisymmetric convection.

    ``which='second'``: operator v -> chat(a, v, .)
    ``which='first'``:  operator d -> chat(d, a, .)
    """
    w = tab.wdet
    nc = w.shape[0]
    if which == "second":
        G = np.einsum("cqd,cqjd->cqj", av, tab.dphi)  # a . grad phi_j
        T = np.einsum("cq,qi,cqj->cij", w, tab.phi, G)
        C = 0.5 * (T - T.transpose(0, 2, 1))
        out = np.zeros((nc, 12, 12))
        out[:, :6, :6] = C
        out[:, 6:, 6:] = C
        return out
    wp = np.einsum("cq,qi,qj->cqij", w, tab.phi, tab.phi)
    t1 = np.einsum("cqij,cqed->ceidj", wp, ag)
    t2 = np.einsum("cq,qj,cqe,cqid->ceidj", w, tab.phi, av, tab.dphi)
    return (0.5 * (t1 - t2)).reshape(nc, 12, 12)


def _masked(space: MixedSpace, local: np.ndarray) -> np.ndarray:
    f = _patterns(space)["local_free"]
    return local * f[:, :, None] * f[:, None, :]


def assemble_chat_operator(space: MixedSpace, a, rule: QuadratureRule | None = None) -> sp.csr_matrix:
    """N(a) with (N(a) v) . w = chat(a, v, w); Dirichlet rows/columns zero."""
    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    av, ag = coefficient_data(space, a, rule)
    return _patterns(space)["vec"].assemble(_masked(space, _chat_local(tab, av, ag, "second")))


def assemble_newton_blocks(space: MixedSpace, a, rule: QuadratureRule | None = None):
    """(N1, N2) with N1(a) d = chat(d, a, .) and N2(a) d = chat(a, d, .)."""
    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    av, ag = coefficient_data(space, a, rule)
    pat = _patterns(space)["vec"]
    n1 = pat.assemble(_masked(space, _chat_local(tab, av, ag, "first")))
    n2 = pat.assemble(_masked(space, _chat_local(tab, av, ag, "second")))
    return n1, n2


def assemble_chat_jacobian(space: MixedSpace, a, rule: QuadratureRule | None = None, scale=None):
    """Sum N1(a) + N2(a) assembled in one pass.

    ``a`` may also be a list of coefficients with matching ``scale`` weights,
    in which case the weighted sum of the Jacobians is assembled.
    """
    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    items = a if isinstance(a, list) else [a]
    scale = [1.0] * len(items) if scale is None else scale
    local = 0.0
    for s, item in zip(scale, items):
        av, ag = coefficient_data(space, item, rule)
        local = local + s * (_chat_local(tab, av, ag, "first") + _chat_local(tab, av, ag, "second"))
    return _patterns(space)["vec"].assemble(_masked(space, local))


def chat_residual(space: MixedSpace, a, rule: QuadratureRule | None = None) -> np.ndarray:
    """Vector with entries chat(a, a, phi_i); Dirichlet entries zero."""
    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    c = coeffs_of(a)
    av = space.velocity_values(c, rule)
    ag = space.velocity_gradients(c, rule)
    conv = np.einsum("cqed,cqd->cqe", ag, av)  # (a . grad) a
    G = np.einsum("cqd,cqid->cqi", av, tab.dphi)  # a . grad phi_i
    loc = 0.5 * (
        np.einsum("cq,cqe,qi->cei", tab.wdet, conv, tab.phi)
        - np.einsum("cq,cqi,cqe->cei", tab.wdet, G, av)
    )
    return _scatter_vector(space, loc)


def _scatter_vector(space: MixedSpace, loc: np.ndarray) -> np.ndarray:
    ld = _patterns(space)["local_dofs"]
    out = np.bincount(ld.ravel(), weights=loc.reshape(len(ld), 12).ravel(), minlength=space.n_u)
    out[space.dirichlet_mask] = 0.0
    return out


def load_vector(
    space: MixedSpace,
    g: Callable,
    t: float | None = None,
    rule: QuadratureRule | None = None,
    masked: bool = True,
) -> np.ndarray:
    """Entries (g(., t), phi_i); ``g`` maps points (..., 2) [, t] to (..., 2)."""
    tab = space.tabulate(rule or assembly_rule())
    vals = np.asarray(g(tab.points) if t is None else g(tab.points, t))
    loc = np.einsum("cq,cqe,qi->cei", tab.wdet, vals, tab.phi)
    ld = _patterns(space)["local_dofs"]
    out = np.bincount(ld.ravel(), weights=loc.reshape(len(ld), 12).ravel(), minlength=space.n_u)
    if masked:
        out[space.dirichlet_mask] = 0.0
    return out


def velocity_l2_norm(space: MixedSpace, v) -> float:
    c = coeffs_of(v)
    return float(np.sqrt(max(c @ (space.forms().mass_full @ c), 0.0)))


def velocity_h1_seminorm(space: MixedSpace, v) -> float:
    c = coeffs_of(v)
    return float(np.sqrt(max(c @ (space.forms().stiffness_full @ c), 0.0)))


def divergence_residual(space: MixedSpace, v) -> np.ndarray:
    """Vector (div v, psi_k) over all pressure basis functions."""
    return space.forms().div_full @ coeffs_of(v)


__all__ = [
    "Field",
    "Forms",
    "assemble_chat_jacobian",
    "assemble_chat_operator",
    "assemble_divergence",
    "assemble_mass",
    "assemble_newton_blocks",
    "assemble_stiffness",
    "chat_residual",
    "coefficient_data",
    "convection_c",
    "convection_chat",
    "load_vector",
    "pin",
]
