"""Error norms, best-approximation terms, EOC tables, and study drivers."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from .cases import CASE_NAMES, ManufacturedCase, builtin_case
from .mesh import build_structured
from .projections import discrete_stokes_op, leray_project, stokes_ritz
from .quadrature import error_rule, gauss_interval
from .solver import NewtonConfig, march_dual, march_primal
from .spaces import MixedSpace, interpolate_velocity
from .timeslab import SlabSolution, TimeGrid, Trajectory, time_basis, time_matrices

__all__ = [
    "CASE_NAMES",
    "ErrorRecord",
    "ManufacturedCase",
    "best_approx_ratios",
    "best_approx_rhs",
    "builtin_case",
    "discrete_pi_tau",
    "dual_h2_ratio",
    "dual_stability_study",
    "eoc",
    "eoc_from_values",
    "error_norms",
    "exact_pi_tau_errors",
    "interpolation_errors",
    "primal_run",
    "refinement_study",
    "ritz_errors",
]

# interior samples per slab for L-infinity in time, in addition to both limits
LINF_SAMPLES = 5


@dataclass
class ErrorRecord:
    """Errors of one (k, h) configuration; extra terms live in ``terms``/``monitors``."""

    k: float
    h: float
    err_LinfL2: float
    err_L2H1: float
    err_L2L2: float
    terms: dict = field(default_factory=dict)
    monitors: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("err_LinfL2", "err_L2H1", "err_L2L2"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")

    def row(self) -> dict:
        out = {"k": self.k, "h": self.h, "err_LinfL2": self.err_LinfL2, "err_L2H1": self.err_L2H1, "err_L2L2": self.err_L2L2}
        out.update({f"rhs_{k}": v for k, v in self.terms.items()})
        return out

    def to_dict(self) -> dict:
        return asdict(self)


def _sample_times(q: int):
    """Reference times for L-infinity sampling: both limits plus interior points."""
    return np.concatenate([[0.0, 1.0], np.arange(1, LINF_SAMPLES + 1) / (LINF_SAMPLES + 1)])


def _space_errors(space, coeff, exact_u, exact_grad, t, rule):
    tab = space.tabulate(rule)
    e = space.velocity_values(coeff, rule) - exact_u(tab.points, t)
    ge = space.velocity_gradients(coeff, rule) - exact_grad(tab.points, t)
    l2 = float(np.einsum("cq,cqe,cqe->", tab.wdet, e, e))
    h1 = float(np.einsum("cq,cqed,cqed->", tab.wdet, ge, ge))
    return l2, h1


def error_norms(
    traj: Trajectory, case: ManufacturedCase, grid: TimeGrid, space: MixedSpace, nt_quad: int = 4, rule=None
) -> ErrorRecord:
    """L2(L2), L2(H1-seminorm) via Gauss in time x degree-10 rule in space,
    and L-infinity(L2) as a max over slab samples and one-sided limits."""
    rule = rule or error_rule()
    l2l2 = l2h1 = 0.0
    linf = 0.0
    s_lin = _sample_times(traj.q)
    for slab in traj.slabs:
        t0, t1 = slab.t0, slab.t1
        tq, wq = gauss_interval(nt_quad, t0, t1)
        L = time_basis(traj.q, (tq - t0) / (t1 - t0))
        for t, w, ell in zip(tq, wq, L):
            a, b = _space_errors(space, ell @ slab.u, case.u, case.grad_u, t, rule)
            l2l2 += w * a
            l2h1 += w * b
        for s, ell in zip(s_lin, time_basis(traj.q, s_lin)):
            tab = space.tabulate(rule)
            e = space.velocity_values(ell @ slab.u, rule) - case.u(tab.points, t0 + s * (t1 - t0))
            linf = max(linf, float(np.einsum("cq,cqe,cqe->", tab.wdet, e, e)))
    return ErrorRecord(grid.k_max, space.h, math.sqrt(linf), math.sqrt(l2h1), math.sqrt(l2l2))


def exact_pi_tau_errors(case: ManufacturedCase, grid: TimeGrid, space: MixedSpace, q: int, nt_quad: int = 4, nmean: int = 6):
    """Norms of u - pi_tau u for the exact (space-continuous) solution.

    pi_tau u is evaluated pointwise at the degree-10 quadrature points.
    Returns (Linf L2, L2 H1, L2 L2).
    """
    rule = error_rule()
    tab = space.tabulate(rule)
    X = tab.points
    l2l2 = l2h1 = linf = 0.0
    s_lin = _sample_times(q)
    for m in range(1, grid.M + 1):
        t0, t1 = grid.slab(m)
        end_u, end_g = case.u(X, t1), case.grad_u(X, t1)
        if q == 0:
            cu, cg = [end_u], [end_g]
        else:
            tm, wm = gauss_interval(nmean, t0, t1)
            mean_u = sum(w * case.u(X, t) for t, w in zip(tm, wm)) / (t1 - t0)
            mean_g = sum(w * case.grad_u(X, t) for t, w in zip(tm, wm)) / (t1 - t0)
            cu, cg = [2 * mean_u - end_u, end_u], [2 * mean_g - end_g, end_g]
        tq, wq = gauss_interval(nt_quad, t0, t1)
        for t, w, ell in zip(tq, wq, time_basis(q, (tq - t0) / (t1 - t0))):
            e = sum(l * c for l, c in zip(ell, cu)) - case.u(X, t)
            ge = sum(l * c for l, c in zip(ell, cg)) - case.grad_u(X, t)
            l2l2 += w * np.einsum("cq,cqe,cqe->", tab.wdet, e, e)
            l2h1 += w * np.einsum("cq,cqed,cqed->", tab.wdet, ge, ge)
        for s, ell in zip(s_lin, time_basis(q, s_lin)):
            e = sum(l * c for l, c in zip(ell, cu)) - case.u(X, t0 + s * (t1 - t0))
            linf = max(linf, float(np.einsum("cq,cqe,cqe->", tab.wdet, e, e)))
    return math.sqrt(linf), math.sqrt(l2h1), math.sqrt(l2l2)


def discrete_pi_tau(fn: Callable[[float], np.ndarray], grid: TimeGrid, q: int, space: MixedSpace, nmean: int = 6) -> Trajectory:
    """pi_tau of a map t -> coefficient vector (mean by ``nmean``-point Gauss)."""
    slabs = []
    for m in range(1, grid.M + 1):
        t0, t1 = grid.slab(m)
        end = fn(t1)
        if q == 0:
            u = end[None]
        else:
            tm, wm = gauss_interval(nmean, t0, t1)
            mean = sum(w * fn(t) for t, w in zip(tm, wm)) / (t1 - t0)
            u = np.stack([2 * mean - end, end])
        slabs.append(SlabSolution(m, q, t0, t1, u))
    return Trajectory(grid, q, slabs, space=space)


def ritz_errors(case: ManufacturedCase, grid: TimeGrid, space: MixedSpace, npts: int = 3):
    """Norms of u - R_h^S(u, p) sampled in time.

    L2-in-time norms use ``npts``-point Gauss per slab; the L-infinity norm
    is the max over those points and the slab endpoints. Returns
    (Linf L2, L2 H1, L2 L2).
    """
    rule = error_rule()
    l2l2 = l2h1 = linf = 0.0

    def at(t):
        R = stokes_ritz(
            space, lambda x: case.u(x, t), lambda x: case.grad_u(x, t), lambda x: case.p(x, t)
        )
        return _space_errors(space, R.velocity.coefficients, case.u, case.grad_u, t, rule)

    linf = at(0.0)[0]
    for m in range(1, grid.M + 1):
        t0, t1 = grid.slab(m)
        tq, wq = gauss_interval(npts, t0, t1)
        for t, w in zip(tq, wq):
            a, b = at(t)
            l2l2 += w * a
            l2h1 += w * b
            linf = max(linf, a)
        linf = max(linf, at(t1)[0])
    return math.sqrt(linf), math.sqrt(l2h1), math.sqrt(l2l2)


def best_approx_rhs(case: ManufacturedCase, grid: TimeGrid, space: MixedSpace, q: int) -> dict:
    """Right-hand side terms of the three best-approximation estimates.

    chi_kh = pi_tau(P_h i_h u) lies in V_kh and bounds the infimum from above.
    """
    chi = discrete_pi_tau(lambda t: leray_project(space, interpolate_velocity(space, lambda x: case.u(x, t))).coefficients, grid, q, space)
    rc = error_norms(chi, case, grid, space)
    pl, ph, p2 = exact_pi_tau_errors(case, grid, space, q)
    rl, rh, r2 = ritz_errors(case, grid, space)
    return {
        "chi_LinfL2": rc.err_LinfL2,
        "chi_L2H1": rc.err_L2H1,
        "chi_L2L2": rc.err_L2L2,
        "pitau_LinfL2": pl,
        "pitau_L2H1": ph,
        "pitau_L2L2": p2,
        "ritz_LinfL2": rl,
        "ritz_L2H1": rh,
        "ritz_L2L2": r2,
    }


def best_approx_ratios(rec: ErrorRecord, T: float) -> dict:
    """err / RHS for the three estimates (log factor ln(T/k) on the L-infinity one)."""
    t = rec.terms
    return {
        "l2h1": rec.err_L2H1 / (t["chi_L2H1"] + t["pitau_L2H1"] + t["ritz_L2H1"]),
        "linf": rec.err_LinfL2 / (math.log(T / rec.k) * (t["chi_LinfL2"] + t["ritz_LinfL2"])),
        "l2l2": rec.err_L2L2 / (t["chi_L2L2"] + t["pitau_L2L2"] + t["ritz_L2L2"]),
    }


def eoc(records: Sequence[ErrorRecord], varying: str = "h", norm: str = "err_L2L2") -> list[float]:
    """Experimental orders log(e_i / e_{i+1}) / log(r_i) with r_i the parameter ratio."""
    if varying not in ("k", "h"):
        raise ValueError("varying must be 'k' or 'h'")
    if len(records) < 2:
        raise ValueError("need at least two records")
    par = [getattr(r, varying) for r in records]
    if any(b >= a for a, b in zip(par, par[1:])):
        raise ValueError(f"parameter {varying} must decrease strictly along the records")
    err = [r.terms[norm] if norm in r.terms else getattr(r, norm) for r in records]
    return [math.log(e0 / e1) / math.log(p0 / p1) for e0, e1, p0, p1 in zip(err, err[1:], par, par[1:])]


def eoc_from_values(errors: Sequence[float], ratio: float = 2.0) -> list[float]:
    return [math.log(a / b) / math.log(ratio) for a, b in zip(errors, errors[1:])]


# ---------------------------------------------------------------------------
# drivers


def primal_run(case, n: int, M: int, q: int, config: NewtonConfig | None = None, with_rhs: bool = False) -> tuple[ErrorRecord, Trajectory]:
    """Solve one (n, M) configuration and evaluate its errors and monitors."""
    space = MixedSpace(build_structured(n))
    grid = TimeGrid.uniform(case.T, M)
    t = time.perf_counter()
    traj, ledger = march_primal(case, grid, space, q, config)
    elapsed = time.perf_counter() - t
    rec = error_norms(traj, case, grid, space)
    rec.monitors = {
        "energy_residual_max": ledger.max_residual,
        "divergence_max": float(max(ledger.divergence)),
        "newton_iterations_max": int(max(ledger.iterations)),
        "newton_iterations_mean": float(np.mean(ledger.iterations)),
        "solve_seconds": elapsed,
    }
    if with_rhs:
        rec.terms = best_approx_rhs(case, grid, space, q)
    return rec, traj


def refinement_study(case, q: int, levels: Sequence[tuple[int, int]], config=None, with_rhs=False, progress=None) -> list[ErrorRecord]:
    """Run every (n, M) pair of ``levels`` and return their records."""
    out = []
    for n, M in levels:
        rec, _ = primal_run(case, n, M, q, config, with_rhs)
        out.append(rec)
        if progress:
            progress(n, M, rec)
    return out


def default_dual_forcing(x, t):
    """Smooth dual datum g(x, t), not divergence free."""
    return np.stack([np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1]), x[..., 0] * (1 - x[..., 1])], axis=-1) * (1.0 + t)


def dual_h2_ratio(result, space: MixedSpace, g: Callable, grid: TimeGrid) -> float:
    """||A_h z||_{L2(L2)} / ||g||_{L2(L2)}."""
    Mfull = space.forms().mass_full
    num = 0.0
    for s in result.trajectory.slabs:
        A = [discrete_stokes_op(space, z).coefficients for z in s.u]
        _, Mt = time_matrices(result.trajectory.q, s.t1 - s.t0)
        num += sum(Mt[i, j] * A[i] @ (Mfull @ A[j]) for i in range(len(A)) for j in range(len(A)))
    rule = error_rule()
    tab = space.tabulate(rule)
    den = 0.0
    for m in range(1, grid.M + 1):
        tq, wq = gauss_interval(4, *grid.slab(m))
        for t, w in zip(tq, wq):
            v = g(tab.points, t)
            den += w * np.einsum("cq,cqe,cqe->", tab.wdet, v, v)
    return math.sqrt(num / den)


def dual_stability_study(case, q: int, levels: Sequence[tuple[int, int]], g: Callable = default_dual_forcing, config=None) -> list[dict]:
    """Primal solve, then backward dual march linearized at (u + u_kh)/2."""
    rows = []
    for n, M in levels:
        space = MixedSpace(build_structured(n))
        grid = TimeGrid.uniform(case.T, M)
        traj, _ = march_primal(case, grid, space, q, config)
        res = march_dual(case, traj, g, grid, space, q)
        rows.append(
            {
                "n": n,
                "M": M,
                "h": space.h,
                "k": grid.k_max,
                "z_LinfL2": res.linf_l2,
                "z_L2H1": res.l2_h1,
                "g_L1L2": res.g_l1_l2,
                "stability_ratio": res.stability_ratio,
                "h2_ratio": dual_h2_ratio(res, space, g, grid),
            }
        )
    return rows


def interpolation_errors(space: MixedSpace, u: Callable, grad_u: Callable, p: Callable | None = None) -> dict:
    """||grad(u - i_h u)|| and, optionally, ||p - r_h p|| with the degree-10 rule."""
    from .spaces import interpolate_pressure

    rule = error_rule()
    tab = space.tabulate(rule)
    iu = interpolate_velocity(space, u)
    ge = space.velocity_gradients(iu.coefficients, rule) - grad_u(tab.points)
    out = {"velocity_H1": math.sqrt(np.einsum("cq,cqed,cqed->", tab.wdet, ge, ge))}
    if p is not None:
        ip = interpolate_pressure(space, p)
        pv = p(tab.points)
        pv = pv - np.einsum("cq,cq->", tab.wdet, pv) / space.forms().area
        e = space.pressure_values(ip.coefficients, rule) - pv
        out["pressure_L2"] = math.sqrt(np.einsum("cq,cq->", tab.wdet, e * e))
    return out
