"""Newton and direct saddle-point solvers, the primal and dual marches.

The augmented slab matrix carries one mean-value multiplier per pressure
time coefficient. It is factorized by SuperLU after a nested-dissection
ordering of the P2 node graph (velocity unknowns of a node before its
pressure unknown, multipliers last); generic column orderings produce far too
much fill on these indefinite systems.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import pymetis
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .forms import load_vector
from .quadrature import assembly_rule, error_rule, gauss_interval
from .spaces import MixedSpace, interpolate_velocity
from .timeslab import (
    SlabSolution,
    SlabSystem,
    TimeGrid,
    Trajectory,
    dual_slab_system,
    slab_system,
    time_basis,
    time_matrices,
)

log = logging.getLogger(__name__)


class NonConvergenceError(RuntimeError):
    """Newton failed on a slab; carries the slab index."""

    def __init__(self, message: str, slab: int | None = None, residual: float | None = None):
        super().__init__(message)
        self.slab = slab
        self.residual = residual


class SingularSystemError(RuntimeError):
    """The saddle factorization broke down or produced an inaccurate solve."""


@dataclass(frozen=True)
class NewtonConfig:
    abs_tol: float = 1e-11
    rel_tol: float = 1e-10
    max_iter: int = 25
    damping: float = 0.5
    max_halvings: int = 8
    frozen_jacobian: bool = False

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("Newton tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")
        if not 0 < self.damping < 1:
            raise ValueError("damping factor must lie in (0, 1)")


# ---------------------------------------------------------------------------
# linear saddle solver


def _node_ordering(space: MixedSpace) -> np.ndarray:
    """Nested-dissection rank of every scalar P2 node (cached on the space)."""
    rank = getattr(space, "_nd_rank", None)
    if rank is None:
        G = (abs(space.forms().mass_scalar) > 0).astype(np.int8).tocsr()
        G.setdiag(0)
        G.eliminate_zeros()
        ns = space.n_scalar
        if ns > 1 and G.nnz:
            adj = pymetis.CSRAdjacency(G.indptr, G.indices)
            perm, _ = pymetis.nested_dissection(adjacency=adj)
            perm = np.asarray(perm)
        else:
            perm = np.arange(ns)
        rank = np.empty(ns, dtype=np.int64)
        rank[perm] = np.arange(ns)
        space._nd_rank = rank
    return rank


def saddle_permutation(space: MixedSpace, nt: int, n_mult: int) -> np.ndarray:
    """Symmetric permutation for the layout [u^0..u^{nt-1}, p^0..p^{nt-1}, multipliers]."""
    rank = _node_ordering(space)
    ns, nv = space.n_scalar, space.n_p
    node = np.concatenate([np.tile(np.arange(ns), 2 * nt), np.tile(np.arange(nv), nt)])
    is_p = np.concatenate([np.zeros(2 * nt * ns, dtype=np.int64), np.ones(nt * nv, dtype=np.int64)])
    key = np.concatenate([rank[node] * 2 + is_p, np.full(n_mult, np.iinfo(np.int64).max)])
    return np.argsort(key, kind="stable")


class SaddleFactorization:
    """LU factorization of the augmented saddle system.

    Layout of the unknown: velocity blocks (``nt`` of length n_u), pressure
    blocks (``nt`` of length n_p), then ``nt`` scalar multipliers enforcing a
    zero mean of each pressure coefficient (omitted with ``mean_zero=False``).
    """

    def __init__(
        self,
        space: MixedSpace,
        A_uu: sp.spmatrix,
        A_up: sp.spmatrix,
        A_pu: sp.spmatrix,
        nt: int = 1,
        A_pp: sp.spmatrix | None = None,
        mean_zero: bool = True,
        pivot_threshold: float = 0.01,
        residual_tol: float = 1e-8,
    ):
        self.space, self.nt = space, nt
        self.residual_tol = residual_tol
        nu, npr = nt * space.n_u, nt * space.n_p
        if A_uu.shape != (nu, nu) or A_up.shape != (nu, npr) or A_pu.shape != (npr, nu):
            raise ValueError(
                f"block shapes {A_uu.shape}, {A_up.shape}, {A_pu.shape} do not match the space with nt={nt}"
            )
        self.n_u, self.n_p = nu, npr
        self.n_mult = nt if mean_zero else 0
        blocks = [[A_uu, A_up], [A_pu, A_pp]]
        if mean_zero:
            Mcol = sp.kron(sp.identity(nt), sp.csr_matrix(space.forms().pressure_mean[:, None]), format="csr")
            blocks = [[A_uu, A_up, None], [A_pu, A_pp, Mcol], [None, Mcol.T, None]]
        self.matrix = sp.bmat(blocks, format="csr")
        if A_pp is None and not mean_zero:
            # bmat drops an all-None block row/column; make the shape explicit
            self.matrix.resize((nu + npr, nu + npr))
        self.perm = saddle_permutation(space, nt, self.n_mult)
        Ap = self.matrix[self.perm][:, self.perm].tocsc()
        try:
            self.lu = spla.splu(
                Ap,
                permc_spec="NATURAL",
                diag_pivot_thresh=pivot_threshold,
                options=dict(SymmetricMode=True),
            )
        except RuntimeError as exc:
            raise SingularSystemError(f"saddle factorization failed: {exc}") from exc
        d = np.abs(self.lu.U.diagonal())
        self.pivot_ratio = float(d.min() / d.max()) if d.size and d.max() > 0 else 0.0

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def solve_full(self, rhs: np.ndarray, refine: int = 1, tol: float = 1e-11) -> np.ndarray:
        b = np.asarray(rhs, dtype=float)
        x = np.empty_like(b)
        x[self.perm] = self.lu.solve(b[self.perm])
        bn = max(np.linalg.norm(b), np.finfo(float).tiny)
        for _ in range(refine):
            r = b - self.matrix @ x
            if np.linalg.norm(r) <= tol * bn:
                break
            dx = np.empty_like(b)
            dx[self.perm] = self.lu.solve(r[self.perm])
            x += dx
        res = np.linalg.norm(b - self.matrix @ x) / bn
        if not np.isfinite(res) or res > self.residual_tol:
            raise SingularSystemError(
                f"saddle solve inaccurate: relative residual {res:.3e}, "
                f"pivot ratio min|U_ii|/max|U_ii| = {self.pivot_ratio:.3e}"
            )
        self.last_residual = float(res)
        return x

    def solve(self, rhs_u: np.ndarray, rhs_p: np.ndarray | None = None):
        """Return (velocity, pressure, multipliers) for the given right-hand sides."""
        b = np.zeros(self.size)
        b[: self.n_u] = rhs_u
        if rhs_p is not None:
            b[self.n_u : self.n_u + self.n_p] = rhs_p
        x = self.solve_full(b)
        return x[: self.n_u], x[self.n_u : self.n_u + self.n_p], x[self.n_u + self.n_p :]


def solve_linear_saddle(space: MixedSpace, K: sp.spmatrix, B: sp.spmatrix, rhs_u, rhs_p=None, nt: int = 1):
    """Solve [[K, B^T], [B, 0]] (u, p) = (rhs_u, rhs_p) with mean-zero pressures.

    ``K`` may be any (time-coupled) velocity block of size nt * n_u; ``B``
    acts blockwise on every time coefficient.
    """
    Bt = sp.kron(sp.identity(nt), B, format="csr")
    fac = SaddleFactorization(space, K, Bt.T.tocsr(), Bt, nt)
    return fac.solve(rhs_u, rhs_p)


# ---------------------------------------------------------------------------
# Newton


def newton_slab(system: SlabSystem, guess: np.ndarray, config: NewtonConfig | None = None, m: int | None = None):
    """Damped Newton for one slab; returns (X, iterations, residual history).

    ``guess`` is a velocity coefficient vector used for every time coefficient.
    """
    config = config or NewtonConfig()
    nt, nu_, np_ = system.nt, system.n_u, system.n_p
    X = np.zeros(nt * (nu_ + np_))
    X[: nt * nu_] = np.tile(np.asarray(guess, dtype=float), nt)
    R = system.residual(X)
    r0 = float(np.linalg.norm(R))
    history = [r0]
    target = max(config.abs_tol, config.rel_tol * r0)
    fac = None
    it = 0
    while history[-1] > target:
        if it >= config.max_iter:
            raise NonConvergenceError(
                f"Newton did not converge on slab {m} after {it} iterations "
                f"(residual {history[-1]:.3e}, target {target:.3e}); (k, h) may be too coarse",
                slab=m,
                residual=history[-1],
            )
        if fac is None or not config.frozen_jacobian:
            fac = SaddleFactorization(system.space, system.jacobian_uu(X), system.A_up, system.A_pu, nt)
        b = np.zeros(fac.size)
        b[: len(R)] = -R
        dX = fac.solve_full(b)[: len(R)]
        alpha, rn = 1.0, np.inf
        for _ in range(config.max_halvings + 1):
            Xn = X + alpha * dX
            Rn = system.residual(Xn)
            rn = float(np.linalg.norm(Rn))
            if rn < history[-1] or rn <= target:
                break
            alpha *= config.damping
        X, R = Xn, Rn
        history.append(rn)
        it += 1
    return X, it, history


# ---------------------------------------------------------------------------
# energy ledger


@dataclass
class EnergyLedger:
    """Per-slab terms of the discrete energy identity.

    Index m = 1..M is stored at position m - 1. ``initial`` is ||u_0||^2.
    """

    initial: float
    norm_minus: list[float] = field(default_factory=list)  # ||u_m^-||^2
    jump: list[float] = field(default_factory=list)  # ||[u]_{m-1}||^2
    dissipation: list[float] = field(default_factory=list)  # 2 nu int_{I_m} ||grad u||^2
    work: list[float] = field(default_factory=list)  # 2 int_{I_m} (f, u)
    divergence: list[float] = field(default_factory=list)  # max |B u^i| on the slab
    iterations: list[int] = field(default_factory=list)

    def residuals(self) -> np.ndarray:
        """Relative identity residual after every node n = 1..M."""
        lhs = np.asarray(self.norm_minus) + np.cumsum(self.jump) + np.cumsum(self.dissipation)
        rhs = self.initial + np.cumsum(self.work)
        return np.abs(lhs - rhs) / (1.0 + self.initial)

    @property
    def max_residual(self) -> float:
        r = self.residuals()
        return float(r.max()) if r.size else 0.0

    def to_dict(self) -> dict:
        return {
            "initial": self.initial,
            "norm_minus": list(map(float, self.norm_minus)),
            "jump": list(map(float, self.jump)),
            "dissipation": list(map(float, self.dissipation)),
            "work": list(map(float, self.work)),
            "residuals": self.residuals().tolist(),
            "max_residual": self.max_residual,
            "max_divergence": float(max(self.divergence, default=0.0)),
            "iterations": list(map(int, self.iterations)),
        }


def _closure_l2_squared(space: MixedSpace, g: Callable, t: float | None = None, rule=None) -> float:
    rule = rule or assembly_rule()
    tab = space.tabulate(rule)
    vals = np.asarray(g(tab.points) if t is None else g(tab.points, t))
    return float(np.einsum("cq,cqe,cqe->", tab.wdet, vals, vals))


def march_primal(
    case,
    grid: TimeGrid,
    space: MixedSpace,
    q: int,
    config: NewtonConfig | None = None,
    convection: bool = True,
    nquad_f: int = 3,
    forcing: bool = True,
    initial: np.ndarray | None = None,
):
    """Forward dG(q) march; returns (Trajectory, EnergyLedger).

    ``case`` needs attributes ``nu``, ``u0(x)`` and ``f(x, t)``. Slab 1 is
    driven by the pairing (u_0, phi) assembled from the closure, or by
    (u_0, phi) = M u_0 when a discrete ``initial`` coefficient vector is given.
    """
    config = config or NewtonConfig()
    f_mat = space.forms()
    M0, K0 = f_mat.mass0, f_mat.stiffness0
    nu = case.nu
    f = case.f if forcing else None
    if initial is None:
        u0_load = load_vector(space, case.u0)
        u0_sq = _closure_l2_squared(space, case.u0)
        u0_coeffs = interpolate_velocity(space, case.u0).coefficients
    else:
        u0_coeffs = np.asarray(initial, dtype=float)
        u0_load = M0 @ u0_coeffs
        u0_sq = float(u0_coeffs @ u0_load)
    ledger = EnergyLedger(initial=u0_sq)
    guess = u0_coeffs.copy()
    prev_minus = None
    slabs = []
    for m in range(1, grid.M + 1):
        if m == 1:
            system = slab_system(q, m, grid, space, u0_load, f, nu, convection, nquad_f, prev_is_load=True)
            prev_load = u0_load
        else:
            system = slab_system(q, m, grid, space, prev_minus, f, nu, convection, nquad_f)
            prev_load = M0 @ prev_minus
        X, its, hist = newton_slab(system, guess, config, m)
        u, p = system.split(X)
        t0, t1 = grid.slab(m)
        slabs.append(SlabSolution(m, q, t0, t1, u.copy(), p.copy(), its))
        # ledger terms, using exactly the loads of the solve
        _, Mt = time_matrices(q, t1 - t0)
        F = (system.rhs_u.reshape(q + 1, -1)).copy()
        F[0] -= prev_load
        up = u[0]
        if m == 1:
            jump_sq = up @ (M0 @ up) - 2.0 * (u0_load @ up) + u0_sq
        else:
            d = up - prev_minus
            jump_sq = d @ (M0 @ d)
        ledger.norm_minus.append(float(u[-1] @ (M0 @ u[-1])))
        ledger.jump.append(float(jump_sq))
        ledger.dissipation.append(float(2.0 * nu * sum(Mt[i, j] * u[i] @ (K0 @ u[j]) for i in range(q + 1) for j in range(q + 1))))
        ledger.work.append(float(2.0 * sum(F[i] @ u[i] for i in range(q + 1))))
        ledger.divergence.append(float(max(np.abs(f_mat.div @ u[i]).max() for i in range(q + 1))))
        ledger.iterations.append(its)
        log.debug("slab %d: %d Newton iterations, residual %.2e", m, its, hist[-1])
        prev_minus = u[-1].copy()
        guess = prev_minus
    traj = Trajectory(grid, q, slabs, space=space, initial=u0_coeffs, info={"nu": nu})
    return traj, ledger


# ---------------------------------------------------------------------------
# dual march


def linearization(case, traj: Trajectory, space: MixedSpace):
    """Closure t, rule -> quadrature data of the average (u(t) + u_kh(t)) / 2."""

    def lin(t, rule):
        tab = space.tabulate(rule)
        c = traj(t)
        v = 0.5 * (np.asarray(case.u(tab.points, t)) + space.velocity_values(c, rule))
        g = 0.5 * (np.asarray(case.grad_u(tab.points, t)) + space.velocity_gradients(c, rule))
        return v, g

    return lin


@dataclass
class DualResult:
    trajectory: Trajectory
    linf_l2: float
    l2_h1: float
    g_l1_l2: float

    @property
    def stability_ratio(self) -> float:
        return (self.linf_l2 + self.l2_h1) / self.g_l1_l2 if self.g_l1_l2 > 0 else 0.0


def trajectory_linf_l2(traj: Trajectory, space: MixedSpace, samples: int = 5) -> float:
    """Max of ||v(t)||_{L^2} over both one-sided limits and interior samples."""
    M = space.forms().mass_full
    best = 0.0
    for s in traj.slabs:
        L = time_basis(traj.q, np.concatenate([[0.0, 1.0], np.arange(1, samples + 1) / (samples + 1)]))
        for ell in L:
            v = np.tensordot(ell, s.u, axes=1)
            best = max(best, float(v @ (M @ v)))
    return float(np.sqrt(best))


def trajectory_l2_h1(traj: Trajectory, space: MixedSpace) -> float:
    """||grad v||_{L^2(I;L^2)}, exact in time."""
    K = space.forms().stiffness_full
    tot = 0.0
    for s in traj.slabs:
        _, Mt = time_matrices(traj.q, s.t1 - s.t0)
        tot += sum(Mt[i, j] * s.u[i] @ (K @ s.u[j]) for i in range(traj.q + 1) for j in range(traj.q + 1))
    return float(np.sqrt(max(tot, 0.0)))


def closure_l1_l2(space: MixedSpace, g: Callable, grid: TimeGrid, npts: int = 4) -> float:
    """int_0^T ||g(t)||_{L^2} dt with Gauss in time and the error rule in space."""
    tot = 0.0
    for m in range(1, grid.M + 1):
        tq, wq = gauss_interval(npts, *grid.slab(m))
        for t, w in zip(tq, wq):
            tot += w * np.sqrt(_closure_l2_squared(space, g, t, error_rule()))
    return float(tot)


def march_dual(
    case,
    traj: Trajectory | None,
    g: Callable | None,
    grid: TimeGrid,
    space: MixedSpace,
    q: int,
    nu: float | None = None,
    convection: bool = True,
    nquad_g: int = 3,
) -> DualResult:
    """Backward march of the discrete dual problem with zero terminal data.

    The convection terms are linearized at (u + u_kh) / 2, sampled at two
    Gauss points in time per slab and at the degree-10 rule in space.
    """
    nu = case.nu if nu is None else nu
    lin = linearization(case, traj, space) if (convection and traj is not None) else None
    slabs: list[SlabSolution | None] = [None] * grid.M
    z_next = None
    for m in range(grid.M, 0, -1):
        system = dual_slab_system(q, m, grid, space, lin, g, z_next, nu, convection and lin is not None, nquad_g)
        fac = SaddleFactorization(space, system.A_uu, system.A_up, system.A_pu, q + 1)
        z, rho, _ = fac.solve(system.rhs_u)
        t0, t1 = grid.slab(m)
        z = z.reshape(q + 1, -1)
        slabs[m - 1] = SlabSolution(m, q, t0, t1, z.copy(), rho.reshape(q + 1, -1).copy(), 1)
        z_next = z[0].copy()
    ztraj = Trajectory(grid, q, slabs, space=space)
    gnorm = closure_l1_l2(space, g, grid) if g is not None else 0.0
    return DualResult(ztraj, trajectory_linf_l2(ztraj, space), trajectory_l2_h1(ztraj, space), gnorm)


__all__ = [
    "DualResult",
    "EnergyLedger",
    "NewtonConfig",
    "NonConvergenceError",
    "SaddleFactorization",
    "SingularSystemError",
    "closure_l1_l2",
    "linearization",
    "march_dual",
    "march_primal",
    "newton_slab",
    "saddle_permutation",
    "solve_linear_saddle",
    "trajectory_l2_h1",
    "trajectory_linf_l2",
]
