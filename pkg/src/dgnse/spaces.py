"""Taylor-Hood P2/P1 mixed spaces on a triangle mesh.

Velocity DOFs are component-blocked: scalar P2 index ``s`` (vertices first,
then edge midpoints) of component ``c`` has global index ``c * n_scalar + s``.
Pressure DOFs are the mesh vertices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Mesh
from .quadrature import QuadratureRule, assembly_rule

_REF_GRAD_BARY = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
_EDGE_VERTS = ((1, 2), (2, 0), (0, 1))


def p2_basis(bary: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reference P2 values (nq, 6) and reference gradients (nq, 6, 2)."""
    lam = np.atleast_2d(bary)
    nq = len(lam)
    phi = np.empty((nq, 6))
    dphi = np.empty((nq, 6, 2))
    for k in range(3):
        phi[:, k] = lam[:, k] * (2.0 * lam[:, k] - 1.0)
        dphi[:, k] = (4.0 * lam[:, k] - 1.0)[:, None] * _REF_GRAD_BARY[k]
    for k, (a, b) in enumerate(_EDGE_VERTS):
        phi[:, 3 + k] = 4.0 * lam[:, a] * lam[:, b]
        dphi[:, 3 + k] = 4.0 * (
            lam[:, a][:, None] * _REF_GRAD_BARY[b] + lam[:, b][:, None] * _REF_GRAD_BARY[a]
        )
    return phi, dphi


@dataclass
class Tabulation:
    """Basis data of a mixed space at the points of one quadrature rule."""

    rule: QuadratureRule
    phi: np.ndarray  # (nq, 6) P2 values
    psi: np.ndarray  # (nq, 3) P1 values
    dphi: np.ndarray  # (nc, nq, 6, 2) physical P2 gradients
    dpsi: np.ndarray  # (nc, 3, 2) physical P1 gradients
    wdet: np.ndarray  # (nc, nq) weight * |det J|
    points: np.ndarray  # (nc, nq, 2) physical points


class MixedSpace:
    """P2 vector velocity / P1 scalar pressure space with Dirichlet mask."""

    def __init__(self, mesh: Mesh):
        self.mesh = mesh
        nv, ne = mesh.n_vertices, mesh.n_edges
        self.n_scalar = nv + ne
        self.n_u = 2 * self.n_scalar
        self.n_p = nv
        self.cell_dofs = np.hstack([mesh.cells, nv + mesh.cell_edges])  # (nc, 6)
        self.cell_pdofs = mesh.cells
        self.dof_points = np.vstack(
            [mesh.vertices, 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])]
        )
        bscalar = np.concatenate([mesh.boundary_vertex_flags, mesh.boundary_edge_flags])
        self.scalar_dirichlet = bscalar
        self.dirichlet_mask = np.concatenate([bscalar, bscalar])
        self.free = ~self.dirichlet_mask
        p = mesh.vertices[mesh.cells]
        self.jac = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (nc, 2, 2)
        self.det = self.jac[:, 0, 0] * self.jac[:, 1, 1] - self.jac[:, 0, 1] * self.jac[:, 1, 0]
        self.inv_jac = np.linalg.inv(self.jac)
        self._tab: dict[str, Tabulation] = {}
        self._forms = None

    # DOF maps --------------------------------------------------------------
    def velocity_dof(self, entity: str, index: int, component: int) -> int:
        """Global velocity DOF of a vertex or edge midpoint."""
        s = index if entity == "vertex" else self.mesh.n_vertices + index
        return component * self.n_scalar + s

    def pressure_dof(self, vertex: int) -> int:
        return vertex

    @property
    def h(self) -> float:
        return self.mesh.h_max

    # tabulation ------------------------------------------------------------
    def tabulate(self, rule: QuadratureRule | None = None) -> Tabulation:
        rule = rule or assembly_rule()
        key = rule.name or str(id(rule))
        if key not in self._tab:
            phi, dref = p2_basis(rule.points)
            # physical gradient = J^{-T} reference gradient
            dphi = np.einsum("cji,qkj->cqki", self.inv_jac, dref)
            dpsi = np.einsum("cji,kj->cki", self.inv_jac, _REF_GRAD_BARY)
            wdet = np.outer(np.abs(self.det), rule.weights)
            v = self.mesh.vertices[self.mesh.cells]
            pts = np.einsum("qk,ckd->cqd", rule.points, v)
            self._tab[key] = Tabulation(rule, phi, rule.points.copy(), dphi, dpsi, wdet, pts)
        return self._tab[key]

    def forms(self):
        """Assembled matrices of this space (cached)."""
        if self._forms is None:
            from .forms import Forms

            self._forms = Forms(self)
        return self._forms

    # field evaluation ------------------------------------------------------
    def _cell_coeffs(self, coeffs: np.ndarray) -> np.ndarray:
        c = np.asarray(coeffs).reshape(2, self.n_scalar)
        return c[:, self.cell_dofs]  # (2, nc, 6)

    def velocity_values(self, coeffs, rule=None) -> np.ndarray:
        """Velocity at quadrature points, shape (nc, nq, 2)."""
        tab = self.tabulate(rule)
        return np.einsum("dck,qk->cqd", self._cell_coeffs(coeffs), tab.phi)

    def velocity_gradients(self, coeffs, rule=None) -> np.ndarray:
        """Velocity Jacobian at quadrature points, ``[..., c, d] = d_d u_c``."""
        tab = self.tabulate(rule)
        return np.einsum("eck,cqkd->cqed", self._cell_coeffs(coeffs), tab.dphi)

    def pressure_values(self, coeffs, rule=None) -> np.ndarray:
        tab = self.tabulate(rule)
        return np.asarray(coeffs)[self.cell_pdofs] @ tab.psi.T

    def zero_velocity(self) -> "Field":
        return Field(self, "velocity", np.zeros(self.n_u))

    def zero_pressure(self) -> "Field":
        return Field(self, "pressure", np.zeros(self.n_p))


@dataclass
class Field:
    """Coefficient vector of a velocity or pressure finite element function."""

    space: MixedSpace
    kind: str
    coefficients: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.kind not in ("velocity", "pressure"):
            raise ValueError(f"unknown field kind {self.kind!r}")
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        n = self.space.n_u if self.kind == "velocity" else self.space.n_p
        if self.coefficients.shape != (n,):
            raise ValueError(f"{self.kind} field needs {n} coefficients, got {self.coefficients.shape}")

    def values(self, rule=None) -> np.ndarray:
        if self.kind == "velocity":
            return self.space.velocity_values(self.coefficients, rule)
        return self.space.pressure_values(self.coefficients, rule)

    def gradients(self, rule=None) -> np.ndarray:
        if self.kind != "velocity":
            raise ValueError("gradients implemented for velocity fields only")
        return self.space.velocity_gradients(self.coefficients, rule)


def coeffs_of(v) -> np.ndarray:
    return v.coefficients if isinstance(v, Field) else np.asarray(v, dtype=float)


def interpolate_velocity(space: MixedSpace, u_exact: Callable) -> Field:
    """Lagrange interpolant at vertices and edge midpoints, zero on the boundary.

    ``u_exact`` maps points of shape (..., 2) to values of shape (..., 2).
    """
    vals = np.asarray(u_exact(space.dof_points), dtype=float)
    coeffs = np.concatenate([vals[:, 0], vals[:, 1]])
    coeffs[space.dirichlet_mask] = 0.0
    return Field(space, "velocity", coeffs)


def interpolate_pressure(space: MixedSpace, q_exact: Callable) -> Field:
    """Vertex interpolant shifted to zero mean."""
    vals = np.asarray(q_exact(space.mesh.vertices), dtype=float).copy()
    f = space.forms()
    vals -= (f.pressure_mean @ vals) / f.area
    return Field(space, "pressure", vals)


class InfSupError(RuntimeError):
    pass


def infsup_constant(
    space: MixedSpace,
    mean_zero: bool = True,
    max_iter: int = 500,
    tol: float = 1e-10,
    shift: float = 1e-6,
    seed: int = 0,
) -> float:
    """Discrete inf-sup constant from the pressure Schur complement.

    Finds the smallest ``sigma`` with ``B K^{-1} B^T q = sigma^2 M_p q`` over
    mean-zero pressures. Inverse iteration is run inside a Lanczos (ARPACK)
    loop: every step applies ``M_p S^{-1} M_p`` through one saddle solve, and
    the largest eigenvalue ``1 / sigma^2`` of that operator is extracted. The
    smallest Schur eigenvalues cluster, which makes plain power-type inverse
    iteration stall. With ``mean_zero=False`` the constant pressure stays in
    the search space and a small shift replaces the constraint row.
    """
    from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu

    from .solver import SaddleFactorization

    f = space.forms()
    K, B, Mp = f.stiffness, f.div, f.pressure_mass
    nu, npr = space.n_u, space.n_p
    A_pp = None if mean_zero else (-shift * Mp).tocsr()
    # the shifted system is nearly singular on constants by design
    fac = SaddleFactorization(
        space, K, B.T.tocsr(), B, 1, A_pp=A_pp, mean_zero=mean_zero, residual_tol=1e-8 if mean_zero else 1e-4
    )

    def apply(x):
        # constrained solve gives y = S^+ M_p x; the shifted one (S + shift M_p)^{-1} M_p x
        _, y, _ = fac.solve(np.zeros(nu), -(Mp @ np.ravel(x)))
        return Mp @ y

    T = LinearOperator((npr, npr), matvec=apply, dtype=float)
    mlu = splu(Mp.tocsc())
    Minv = LinearOperator((npr, npr), matvec=lambda x: mlu.solve(np.ravel(x)), dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(npr)
    try:
        mu = eigsh(T, k=1, M=Mp, Minv=Minv, which="LA", tol=tol, maxiter=max_iter, v0=v0, return_eigenvectors=False)
    except ArpackNoConvergence as exc:
        raise InfSupError(f"inverse iteration did not converge in {max_iter} Lanczos restarts") from exc
    sigma2 = 1.0 / float(mu[0]) - (0.0 if mean_zero else shift)
    return float(np.sqrt(max(sigma2, 0.0)))
