from types import SimpleNamespace

import numpy as np
import pytest

from conftest import random_velocity
from dgnse.cases import builtin_case
from dgnse.forms import load_vector
from dgnse.mesh import build_structured
from dgnse.projections import leray_project
from dgnse.quadrature import error_rule, gauss_interval
from dgnse.solver import (
    NewtonConfig,
    NonConvergenceError,
    SaddleFactorization,
    SingularSystemError,
    march_dual,
    march_primal,
    newton_slab,
    saddle_permutation,
    solve_linear_saddle,
    trajectory_l2_h1,
    trajectory_linf_l2,
)
from dgnse.spaces import MixedSpace
from dgnse.study import eoc_from_values
from dgnse.timeslab import TimeGrid, slab_system


def stokes_setup(space):
    f = space.forms()
    return f.stiffness, f.div


def test_zero_rhs(space4):
    K, B = stokes_setup(space4)
    u, p, mult = solve_linear_saddle(space4, K, B, np.zeros(space4.n_u))
    assert not np.abs(u).max() and not np.abs(p).max() and not np.abs(mult).max()


def test_permutation_is_a_permutation(space4):
    for nt in (1, 2):
        perm = saddle_permutation(space4, nt, nt)
        n = nt * (space4.n_u + space4.n_p) + nt
        assert np.array_equal(np.sort(perm), np.arange(n))
        assert np.array_equal(perm[-nt:], np.arange(n - nt, n))


def test_stationary_stokes_rates():
    case = builtin_case("steady")
    errs = []
    for n in (8, 16, 32):
        space = MixedSpace(build_structured(n))
        K, B = stokes_setup(space)
        rhs = load_vector(space, lambda x: -case.lap_u(x, 0.0))
        u, p, _ = solve_linear_saddle(space, K, B, rhs)
        assert abs(space.forms().pressure_mean @ p) <= 1e-12
        rule = error_rule()
        tab = space.tabulate(rule)
        d = space.velocity_gradients(u, rule) - case.grad_u(tab.points, 0.0)
        errs.append(np.sqrt(np.sum(tab.wdet[..., None, None] * d**2)))
    assert min(eoc_from_values(errs)) >= 1.9


def test_block_shape_mismatch(space4):
    K, B = stokes_setup(space4)
    with pytest.raises(ValueError, match="do not match"):
        SaddleFactorization(space4, K, B.T, B, nt=2)


def test_singular_system_detected(space4):
    # without the mean-zero row the constant pressure is a kernel vector
    K, B = stokes_setup(space4)
    with pytest.raises(SingularSystemError):
        fac = SaddleFactorization(space4, K, B.T.tocsr(), B, 1, mean_zero=False)
        # constants are orthogonal to the range of B, so this pressure datum is inconsistent
        fac.solve(np.zeros(space4.n_u), np.ones(space4.n_p))


def test_newton_config_validation():
    with pytest.raises(ValueError):
        NewtonConfig(max_iter=0)
    with pytest.raises(ValueError):
        NewtonConfig(damping=1.0)


@pytest.mark.parametrize("q", [0, 1])
def test_linear_newton_single_iteration(space8, vortex, q):
    grid = TimeGrid.uniform(1.0, 4)
    _, ledger = march_primal(vortex, grid, space8, q, convection=False)
    assert set(ledger.iterations) == {1}


def test_newton_iteration_count_regression():
    # recorded: 2 iterations on every slab for nu = 1, n = 16, k = 1/32
    space = MixedSpace(build_structured(16))
    grid = TimeGrid.uniform(0.25, 8)
    for q in (0, 1):
        _, ledger = march_primal(builtin_case("taylor-vortex-box"), grid, space, q)
        assert max(ledger.iterations) <= 5
        assert max(ledger.iterations) == 2


def test_zero_data_stays_zero(space8):
    case = SimpleNamespace(nu=1.0, u0=lambda x: np.zeros(x.shape), f=lambda x, t: np.zeros(x.shape))
    traj, ledger = march_primal(case, TimeGrid.uniform(1.0, 4), space8, 1)
    assert not np.abs(traj.coefficients()).max()
    assert set(ledger.iterations) == {0}


def test_nonconvergence_reports_slab(space8, vortex):
    cfg = NewtonConfig(max_iter=1, abs_tol=1e-300, rel_tol=1e-300)
    with pytest.raises(NonConvergenceError) as info:
        march_primal(vortex, TimeGrid.uniform(1.0, 4), space8, 1, cfg)
    assert info.value.slab == 1 and info.value.residual > 0


def test_newton_damping_keeps_residual_monotone(space8, vortex, rng):
    grid = TimeGrid.uniform(1.0, 4)
    sysm = slab_system(1, 1, grid, space8, 20 * random_velocity(space8, rng), vortex.f, 0.05)
    _, _, hist = newton_slab(sysm, np.zeros(space8.n_u))
    assert np.all(np.diff(hist) < 0)


@pytest.mark.parametrize("q", [0, 1])
@pytest.mark.parametrize("nu", [1.0, 0.1])
def test_energy_identity(space8, q, nu):
    case = builtin_case("taylor-vortex-box", nu=nu)
    _, ledger = march_primal(case, TimeGrid.uniform(1.0, 8), space8, q)
    assert ledger.max_residual <= 1e-8
    assert max(ledger.divergence) <= 1e-10


@pytest.mark.parametrize("q", [0, 1])
def test_unforced_discrete_data_decays(space8, vortex, q):
    u0 = leray_project(space8, vortex.u0).coefficients
    traj, ledger = march_primal(vortex.with_nu(0.1), TimeGrid.uniform(1.0, 8), space8, q, forcing=False, initial=u0)
    norms = np.array([u0 @ space8.forms().mass0 @ u0] + ledger.norm_minus)
    assert np.all(np.diff(norms) <= 1e-14)
    assert ledger.max_residual <= 1e-8


def test_stability_monitor_bounded(vortex):
    vals = []
    for n in (4, 8, 16):
        space = MixedSpace(build_structured(n))
        traj, _ = march_primal(vortex, TimeGrid.uniform(1.0, n), space, 1)
        vals.append(trajectory_linf_l2(traj, space) + np.sqrt(vortex.nu) * trajectory_l2_h1(traj, space))
    assert max(vals) / min(vals) - 1 < 0.05


@pytest.mark.parametrize("q", [0, 1])
def test_linear_adjoint_identity(space8, vortex, q):
    # Stokes primal u and dual z: (g, u) = (f, z) + (u_0, z_0^+)
    grid = TimeGrid.uniform(1.0, 4)
    traj, _ = march_primal(vortex, grid, space8, q, convection=False)
    g = lambda x, t: np.stack([np.sin(np.pi * x[..., 1]) * (1 + t), x[..., 0] ** 2], axis=-1)
    z = march_dual(vortex, None, g, grid, space8, q, convection=False).trajectory
    gu = fz = 0.0
    for m in range(1, grid.M + 1):
        for t, w in zip(*gauss_interval(3, *grid.slab(m))):
            gu += w * load_vector(space8, g, t) @ traj(t)
            fz += w * load_vector(space8, vortex.f, t) @ z(t)
    fz += load_vector(space8, vortex.u0) @ z.plus(0)
    assert abs(gu - fz) <= 1e-8 * abs(gu)
