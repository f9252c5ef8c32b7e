"""Discontinuous Galerkin dG(q) time machinery, q in {0, 1}.

On a slab (t_{m-1}, t_m] the time basis is Lagrange on the two endpoints for
q = 1 (coefficient 0 is the right limit at t_{m-1}, coefficient 1 the left
limit at t_m) and the constant 1 for q = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp

from .forms import assemble_chat_jacobian, chat_residual, coefficient_data, load_vector
from .quadrature import error_rule, gauss_interval
from .spaces import MixedSpace


class GridAssumptionError(ValueError):
    """A time grid violates one of the standing partition assumptions."""


@dataclass(frozen=True)
class TimeGrid:
    """Partition 0 = t_0 < ... < t_M = T with checked step assumptions.

    Assumption (1): k_min >= C * k_max**beta.
    Assumption (2): 1/kappa <= k_m / k_{m-1} <= kappa.
    Assumption (3): k_max <= T / 4.
    """

    nodes: np.ndarray
    kappa: float = 2.0
    C: float = 0.5
    beta: float = 1.0

    def __post_init__(self):
        t = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", t)
        if t.ndim != 1 or len(t) < 2 or t[0] != 0.0:
            raise GridAssumptionError("time nodes must start at t_0 = 0 and contain at least one slab")
        k = np.diff(t)
        if np.any(k <= 0):
            raise GridAssumptionError("time nodes must be strictly increasing")
        T = t[-1]
        if k.max() > T / 4 * (1 + 1e-12):
            raise GridAssumptionError(
                f"assumption (3) violated: k_max = {k.max():.6g} > T/4 = {T / 4:.6g}"
            )
        r = k[1:] / k[:-1]
        if len(r) and (r.max() > self.kappa * (1 + 1e-12) or r.min() < (1 - 1e-12) / self.kappa):
            raise GridAssumptionError(
                f"assumption (2) violated: step ratio outside [1/{self.kappa}, {self.kappa}]"
            )
        if k.min() < self.C * k.max() ** self.beta * (1 - 1e-12):
            raise GridAssumptionError(
                f"assumption (1) violated: k_min = {k.min():.6g} < {self.C} * k_max^{self.beta}"
            )

    @classmethod
    def uniform(cls, T: float, M: int, **kw) -> "TimeGrid":
        return cls(np.linspace(0.0, T, M + 1), **kw)

    @property
    def M(self) -> int:
        return len(self.nodes) - 1

    @property
    def T(self) -> float:
        return float(self.nodes[-1])

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def k_max(self) -> float:
        return float(self.steps.max())

    @property
    def k_min(self) -> float:
        return float(self.steps.min())

    def slab(self, m: int) -> tuple[float, float]:
        """Endpoints of slab ``m`` (1-based)."""
        return float(self.nodes[m - 1]), float(self.nodes[m])

    def locate(self, t: float) -> int:
        """Slab index m with t in (t_{m-1}, t_m]; t = 0 maps to slab 1."""
        m = int(np.searchsorted(self.nodes, t, side="left"))
        return min(max(m, 1), self.M)


# ---------------------------------------------------------------------------
# time basis


def time_basis(q: int, s) -> np.ndarray:
    """Basis values at reference times s in [0, 1], shape (len(s), q + 1)."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if q == 0:
        return np.ones((len(s), 1))
    if q == 1:
        return np.column_stack([1.0 - s, s])
    raise ValueError(f"only q in {{0, 1}} is supported, got {q}")


def time_matrices(q: int, k: float) -> tuple[np.ndarray, np.ndarray]:
    """(derivative + upwind jump, time mass) on a slab of length k.

    Entry [i, j] pairs test function i with trial function j.
    """
    if q == 0:
        return np.array([[1.0]]), np.array([[k]])
    if q == 1:
        return np.array([[0.5, 0.5], [-0.5, 0.5]]), k / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
    raise ValueError(f"only q in {{0, 1}} is supported, got {q}")


def left_vector(q: int) -> np.ndarray:
    return time_basis(q, 0.0)[0]


def right_vector(q: int) -> np.ndarray:
    return time_basis(q, 1.0)[0]


# ---------------------------------------------------------------------------
# slab solutions and trajectories


@dataclass
class SlabSolution:
    """Coefficients of one slab: ``u`` has shape (q + 1, ...), ``p`` likewise."""

    m: int
    q: int
    t0: float
    t1: float
    u: np.ndarray
    p: np.ndarray | None = None
    iterations: int = 0

    def basis(self, t) -> np.ndarray:
        return time_basis(self.q, (np.asarray(t, dtype=float) - self.t0) / (self.t1 - self.t0))

    def at(self, t: float) -> np.ndarray:
        return np.tensordot(self.basis(t)[0], self.u, axes=1)

    def pressure_at(self, t: float) -> np.ndarray:
        return np.tensordot(self.basis(t)[0], self.p, axes=1)

    @property
    def left(self) -> np.ndarray:
        """Right limit at t_{m-1}."""
        return self.u[0]

    @property
    def right(self) -> np.ndarray:
        """Left limit at t_m."""
        return self.u[-1]


@dataclass
class Trajectory:
    """Piecewise polynomial in time, one SlabSolution per slab.

    ``initial`` is the datum the first jump is measured against, either a
    coefficient array or None.
    """

    grid: TimeGrid
    q: int
    slabs: list[SlabSolution]
    space: MixedSpace | None = None
    initial: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.slabs) != self.grid.M:
            raise ValueError("trajectory needs one slab per grid interval")

    def __call__(self, t: float) -> np.ndarray:
        return self.slabs[self.grid.locate(t) - 1].at(t)

    def minus(self, m: int) -> np.ndarray:
        """u_m^- for m = 1..M (m = 0 returns the initial datum)."""
        if m == 0:
            return self.initial
        return self.slabs[m - 1].right

    def plus(self, m: int) -> np.ndarray:
        """u_m^+ for m = 0..M-1."""
        return self.slabs[m].left

    def jump(self, m: int) -> np.ndarray:
        """[u]_m = u_m^+ - u_m^- for m = 1..M-1 (m = 0 uses the initial datum)."""
        return self.plus(m) - self.minus(m)

    def coefficients(self) -> np.ndarray:
        return np.stack([s.u for s in self.slabs])


def pi_tau(v: Callable[[float], np.ndarray], grid: TimeGrid, q: int, nquad: int = 6, space=None) -> Trajectory:
    """dG time projection: endpoint value at t_m^- and, for q = 1, slab mean.

    ``v`` maps a time to an array (or scalar); evaluating at t_m must return
    the left limit there. Slab means use ``nquad``-point Gauss quadrature.
    """
    slabs = []
    for m in range(1, grid.M + 1):
        t0, t1 = grid.slab(m)
        end = np.asarray(v(t1), dtype=float)
        if q == 0:
            coeffs = end[None]
        elif q == 1:
            tq, wq = gauss_interval(nquad, t0, t1)
            mean = sum(w * np.asarray(v(t), dtype=float) for t, w in zip(tq, wq)) / (t1 - t0)
            coeffs = np.stack([2.0 * mean - end, end])
        else:
            raise ValueError(f"only q in {{0, 1}} is supported, got {q}")
        slabs.append(SlabSolution(m, q, t0, t1, coeffs))
    return Trajectory(grid, q, slabs, space=space)


# ---------------------------------------------------------------------------
# slab systems


def _nl_points(q: int):
    """Gauss points/weights on [0, 1] for the convection term (exact in time)."""
    s, w = gauss_interval(1 if q == 0 else 2, 0.0, 1.0)
    return s, w


class SlabSystem:
    """Nonlinear slab system of the primal dG(q) scheme.

    Unknown layout: velocity coefficients u^0..u^q, then pressures p^0..p^q.
    The zero-mean multipliers are appended by the saddle solver.
    """

    def __init__(self, space: MixedSpace, q: int, k: float, nu: float, rhs_u: np.ndarray, convection: bool = True):
        f = space.forms()
        self.space, self.q, self.k, self.nu = space, q, k, nu
        self.nt = q + 1
        self.convection = convection
        nu_, np_ = space.n_u, space.n_p
        self.n_u, self.n_p = nu_, np_
        if rhs_u.shape != (self.nt * nu_,):
            raise ValueError(
                f"right-hand side has shape {rhs_u.shape}, expected ({self.nt * nu_},) for this space"
            )
        TD, Mt = time_matrices(q, k)
        pin = sp.diags(space.dirichlet_mask.astype(float))
        self.blocks_uu = [
            [TD[i, j] * f.mass0 + nu * Mt[i, j] * f.stiffness0 for j in range(self.nt)]
            for i in range(self.nt)
        ]
        for i in range(self.nt):
            self.blocks_uu[i][i] = (self.blocks_uu[i][i] + pin).tocsr()
        self.A_up = sp.kron(sp.csr_matrix(-Mt), f.div.T, format="csr")
        self.A_pu = sp.kron(sp.identity(self.nt), f.div, format="csr")
        self.A_uu_lin = sp.bmat(self.blocks_uu, format="csr")
        self.rhs_u = rhs_u
        self.s_nl, self.w_nl = _nl_points(q)
        self.basis_nl = time_basis(q, self.s_nl)  # (ng, nt)

    def split(self, X: np.ndarray):
        nu_, np_, nt = self.n_u, self.n_p, self.nt
        u = X[: nt * nu_].reshape(nt, nu_)
        p = X[nt * nu_ : nt * (nu_ + np_)].reshape(nt, np_)
        return u, p

    def velocity_at_nl_points(self, u: np.ndarray) -> list[np.ndarray]:
        return [self.basis_nl[g] @ u for g in range(len(self.s_nl))]

    def residual(self, X: np.ndarray) -> np.ndarray:
        u, p = self.split(X)
        ru = self.A_uu_lin @ u.ravel() + self.A_up @ p.ravel() - self.rhs_u
        if self.convection:
            for g, ug in enumerate(self.velocity_at_nl_points(u)):
                r = chat_residual(self.space, ug)
                for i in range(self.nt):
                    ru[i * self.n_u : (i + 1) * self.n_u] += self.k * self.w_nl[g] * self.basis_nl[g, i] * r
        rp = self.A_pu @ u.ravel()
        return np.concatenate([ru, rp])

    def jacobian_uu(self, X: np.ndarray) -> sp.csr_matrix:
        if not self.convection:
            return self.A_uu_lin
        u, _ = self.split(X)
        ugs = self.velocity_at_nl_points(u)
        Js = [assemble_chat_jacobian(self.space, ug) for ug in ugs]
        blocks = [[None] * self.nt for _ in range(self.nt)]
        for i in range(self.nt):
            for j in range(self.nt):
                b = self.blocks_uu[i][j]
                for g, J in enumerate(Js):
                    b = b + (self.k * self.w_nl[g] * self.basis_nl[g, i] * self.basis_nl[g, j]) * J
                blocks[i][j] = b
        return sp.bmat(blocks, format="csr")


def slab_rhs(
    space: MixedSpace,
    q: int,
    t0: float,
    t1: float,
    prev: np.ndarray,
    f: Callable | None,
    nquad_f: int = 3,
) -> np.ndarray:
    """Right-hand side: time-weighted loads plus the upwind datum ``prev``.

    ``prev`` is the already assembled vector (u_{m-1}^-, phi) (or (u_0, phi)).
    """
    nt = q + 1
    rhs = np.zeros((nt, space.n_u))
    rhs[0] += prev
    if f is not None:
        tq, wq = gauss_interval(nquad_f, t0, t1)
        L = time_basis(q, (tq - t0) / (t1 - t0))
        for t, w, ell in zip(tq, wq, L):
            b = load_vector(space, f, t)
            rhs += w * ell[:, None] * b[None, :]
    return rhs.ravel()


def slab_system(
    q: int,
    m: int,
    grid: TimeGrid,
    space: MixedSpace,
    a_prev: np.ndarray,
    f: Callable | None,
    nu: float,
    convection: bool = True,
    nquad_f: int = 3,
    prev_is_load: bool = False,
) -> SlabSystem:
    """Slab ``m`` of the primal scheme.

    ``a_prev`` is u_{m-1}^- as a coefficient vector, or, with
    ``prev_is_load=True``, the assembled pairing (u_0, phi_i).
    """
    if a_prev.shape != (space.n_u,):
        raise ValueError(f"previous state has shape {a_prev.shape}, space expects ({space.n_u},)")
    t0, t1 = grid.slab(m)
    prev = a_prev if prev_is_load else space.forms().mass0 @ a_prev
    rhs = slab_rhs(space, q, t0, t1, prev, f, nquad_f)
    return SlabSystem(space, q, t1 - t0, nu, rhs, convection)


class DualSlabSystem:
    """Linear backward slab system of the discrete dual problem.

    Tested with phi on slab m, the dual form reads
    -(phi, d_t z) + nu (grad phi, grad z) + (phi_m^-, z_m^-) + convection
    = (g, phi) + (phi_m^-, z_m^+).
    The multiplier enters as +(div phi, rho).
    """

    def __init__(self, space, q, t0, t1, nu, lin, g, z_next, convection=True, nquad_g=3, nquad_lin=2):
        f = space.forms()
        self.space, self.q, self.nt = space, q, q + 1
        self.n_u, self.n_p = space.n_u, space.n_p
        k = t1 - t0
        self.k = k
        TD, Mt = time_matrices(q, k)
        TDd = TD.T  # adjoint time coupling
        pin = sp.diags(space.dirichlet_mask.astype(float))
        rule = error_rule()
        blocks = [[TDd[i, j] * f.mass0 + nu * Mt[i, j] * f.stiffness0 for j in range(self.nt)] for i in range(self.nt)]
        for i in range(self.nt):
            blocks[i][i] = blocks[i][i] + pin
        if convection and lin is not None:
            s, w = gauss_interval(nquad_lin, 0.0, 1.0)
            L = time_basis(q, s)
            for g_idx, sg in enumerate(s):
                a = lin(t0 + sg * k, rule)
                J = assemble_chat_jacobian(space, a, rule).T.tocsr()
                for i in range(self.nt):
                    for j in range(self.nt):
                        blocks[i][j] = blocks[i][j] + (k * w[g_idx] * L[g_idx, i] * L[g_idx, j]) * J
        self.A_uu = sp.bmat(blocks, format="csr")
        self.A_up = sp.kron(sp.csr_matrix(Mt), f.div.T, format="csr")
        self.A_pu = sp.kron(sp.identity(self.nt), f.div, format="csr")
        rhs = np.zeros((self.nt, self.n_u))
        if z_next is not None:
            rhs[-1] += f.mass0 @ z_next
        if g is not None:
            tq, wq = gauss_interval(nquad_g, t0, t1)
            Lg = time_basis(q, (tq - t0) / k)
            for t, wt, ell in zip(tq, wq, Lg):
                rhs += wt * ell[:, None] * load_vector(space, g, t)[None, :]
        self.rhs_u = rhs.ravel()


def dual_slab_system(q, m, grid, space, lin, g, z_next, nu, convection=True, nquad_g=3):
    """Slab ``m`` of the backward dual march.

    ``lin(t, rule)`` returns the linearization point at time ``t`` as
    quadrature data (values, gradients) on ``rule``; ``z_next`` is z_m^+
    (None on the last slab, i.e. zero terminal data).
    """
    t0, t1 = grid.slab(m)
    if z_next is not None and z_next.shape != (space.n_u,):
        raise ValueError("dual terminal datum does not match the space")
    return DualSlabSystem(space, q, t0, t1, nu, lin, g, z_next, convection, nquad_g)


# ---------------------------------------------------------------------------
# bilinear form in primal and dual representation


def frak_b_primal(space: MixedSpace, u: Trajectory, v: Trajectory, nu: float, u0=None) -> float:
    """sum (d_t u, v) + nu (grad u, grad v) + sum ([u]_{m-1}, v_{m-1}^+) + (u_0^+, v_0^+)."""
    f = space.forms()
    M, K = f.mass_full, f.stiffness_full
    total = 0.0
    for m in range(1, u.grid.M + 1):
        su, sv = u.slabs[m - 1], v.slabs[m - 1]
        TD, Mt = time_matrices(u.q, su.t1 - su.t0)
        # time derivative part only; the jump terms are added below
        Dt = (TD - np.array([[1.0, 0.0], [0.0, 0.0]])) if u.q == 1 else np.zeros((1, 1))
        for i in range(u.q + 1):
            for j in range(u.q + 1):
                total += Dt[i, j] * sv.u[i] @ (M @ su.u[j]) + nu * Mt[i, j] * sv.u[i] @ (K @ su.u[j])
        if m == 1:
            total += sv.left @ (M @ su.left)
        else:
            total += sv.left @ (M @ (su.left - u.slabs[m - 2].right))
    return float(total)


def frak_b_dual(space: MixedSpace, u: Trajectory, v: Trajectory, nu: float) -> float:
    """-sum (u, d_t v) + nu (grad u, grad v) - sum (u_m^-, [v]_m) + (u_M^-, v_M^-)."""
    f = space.forms()
    M, K = f.mass_full, f.stiffness_full
    total = 0.0
    Mn = u.grid.M
    for m in range(1, Mn + 1):
        su, sv = u.slabs[m - 1], v.slabs[m - 1]
        TD, Mt = time_matrices(u.q, su.t1 - su.t0)
        Dt = (TD - np.array([[1.0, 0.0], [0.0, 0.0]])) if u.q == 1 else np.zeros((1, 1))
        for i in range(u.q + 1):
            for j in range(u.q + 1):
                # (u_i, d_t v_j) weight = Dt[i, j] (test i, derivative on j)
                total += -Dt[i, j] * su.u[i] @ (M @ sv.u[j]) + nu * Mt[i, j] * su.u[i] @ (K @ sv.u[j])
        if m < Mn:
            total -= su.right @ (M @ (v.slabs[m].left - sv.right))
        else:
            total += su.right @ (M @ sv.right)
    return float(total)


def quadrature_in_time(traj_or_fn, grid: TimeGrid, npts: int = 4):
    """Yield (t, weight, m) for Gauss points of every slab."""
    for m in range(1, grid.M + 1):
        t0, t1 = grid.slab(m)
        tq, wq = gauss_interval(npts, t0, t1)
        for t, w in zip(tq, wq):
            yield t, w, m


__all__ = [
    "DualSlabSystem",
    "GridAssumptionError",
    "SlabSolution",
    "SlabSystem",
    "TimeGrid",
    "Trajectory",
    "dual_slab_system",
    "frak_b_dual",
    "frak_b_primal",
    "left_vector",
    "pi_tau",
    "right_vector",
    "slab_rhs",
    "slab_system",
    "time_basis",
    "time_matrices",
]
