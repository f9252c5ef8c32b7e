import math
from types import SimpleNamespace

import numpy as np
import pytest

from dgnse.cases import CASE_NAMES, builtin_case
from dgnse.mesh import build_structured
from dgnse.quadrature import collapsed_gauss, error_rule
from dgnse.spaces import MixedSpace, interpolate_velocity
from dgnse.study import (
    ErrorRecord,
    best_approx_rhs,
    discrete_pi_tau,
    eoc,
    eoc_from_values,
    error_norms,
    primal_run,
)
from dgnse.timeslab import TimeGrid, pi_tau


# --- manufactured cases ----------------------------------------------------------


@pytest.mark.parametrize("name", CASE_NAMES)
def test_case_divergence_and_trace(name, rng):
    case = builtin_case(name, nu=0.3)
    x = rng.uniform(0, 1, (1000, 2))
    for t in (0.0, 0.4, 1.0):
        G = case.grad_u(x, t)
        assert np.abs(G[:, 0, 0] + G[:, 1, 1]).max() <= 1e-13
    s = rng.uniform(0, 1, 25)
    edges = np.concatenate([np.c_[s, 0 * s], np.c_[s, 0 * s + 1], np.c_[0 * s, s], np.c_[0 * s + 1, s]])
    assert np.abs(case.u(edges, 0.7)).max() <= 1e-13


@pytest.mark.parametrize("name", CASE_NAMES)
def test_forcing_against_finite_differences(name, rng):
    case = builtin_case(name, nu=0.3)
    x = rng.uniform(0.05, 0.95, (50, 2))
    t, dt, dx = 0.5, 1e-5, 1e-4
    ex, ey = np.array([dx, 0.0]), np.array([0.0, dx])
    u = lambda y: case.u(y, t)
    dtu = (case.u(x, t + dt) - case.u(x, t - dt)) / (2 * dt)
    lap = (u(x + ex) + u(x - ex) + u(x + ey) + u(x - ey) - 4 * u(x)) / dx**2
    ux = (u(x + ex * 0.1) - u(x - ex * 0.1)) / (0.2 * dx)
    uy = (u(x + ey * 0.1) - u(x - ey * 0.1)) / (0.2 * dx)
    conv = u(x)[:, :1] * ux + u(x)[:, 1:] * uy
    gp = np.stack(
        [
            (case.p(x + ex * 0.1, t) - case.p(x - ex * 0.1, t)) / (0.2 * dx),
            (case.p(x + ey * 0.1, t) - case.p(x - ey * 0.1, t)) / (0.2 * dx),
        ],
        axis=-1,
    )
    fd = dtu - case.nu * lap + conv + gp
    f = case.f(x, t)
    assert np.abs(f - fd).max() <= 1e-6 * np.abs(f).max()


def test_dt_u_against_finite_differences():
    case = builtin_case("decaying")
    x = np.array([[0.3, 0.6], [0.8, 0.1]])
    fd = (case.u(x, 0.5 + 1e-5) - case.u(x, 0.5 - 1e-5)) / 2e-5
    assert np.abs(fd - case.dt_u(x, 0.5)).max() <= 1e-6 * np.abs(fd).max()


def test_pressure_mean_zero():
    case = builtin_case("taylor-vortex-box")
    rule = error_rule()
    tab = MixedSpace(build_structured(8)).tabulate(rule)
    assert abs(np.sum(tab.wdet * case.p(tab.points, 0.3))) <= 1e-14


def test_unknown_case():
    with pytest.raises(ValueError, match="unknown case"):
        builtin_case("lid-driven")


def test_with_nu():
    assert builtin_case("steady").with_nu(0.25).nu == 0.25


# --- error norms --------------------------------------------------------------------


def pi_tau_of_interpolant(case, grid, space, q):
    return discrete_pi_tau(lambda t: interpolate_velocity(space, lambda x: case.u(x, t)).coefficients, grid, q, space)


def test_error_norms_independent_quadrature(space8, vortex):
    grid = TimeGrid.uniform(1.0, 4)
    tr = pi_tau_of_interpolant(vortex, grid, space8, 0)
    a = error_norms(tr, vortex, grid, space8)
    b = error_norms(tr, vortex, grid, space8, nt_quad=6, rule=collapsed_gauss(12))
    for name in ("err_L2L2", "err_L2H1", "err_LinfL2"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-9)


def test_error_norms_two_paths_dg1(space8, vortex):
    grid = TimeGrid.uniform(1.0, 4)
    tr = pi_tau_of_interpolant(vortex, grid, space8, 1)
    a = error_norms(tr, vortex, grid, space8)
    b = error_norms(tr, vortex, grid, space8, nt_quad=6, rule=collapsed_gauss(12))
    for name in ("err_L2L2", "err_L2H1", "err_LinfL2"):
        assert getattr(a, name) == pytest.approx(getattr(b, name), rel=1e-8)


def test_exact_in_discrete_space(space8, rng):
    # u(x, t) = (1 - 2 t) w(x) with w in U_h lies in X_k^1(U_h)
    w = rng.standard_normal(space8.n_u) * space8.free
    rule = error_rule()
    wv, wg = space8.velocity_values(w, rule), space8.velocity_gradients(w, rule)
    case = SimpleNamespace(u=lambda x, t: (1 - 2 * t) * wv, grad_u=lambda x, t: (1 - 2 * t) * wg)
    grid = TimeGrid.uniform(1.0, 4)
    tr = pi_tau(lambda t: (1 - 2 * t) * w, grid, 1, space=space8)
    rec = error_norms(tr, case, grid, space8)
    assert max(rec.err_L2L2, rec.err_L2H1, rec.err_LinfL2) <= 1e-9


def test_norm_ordering(vortex):
    for q in (0, 1):
        rec, _ = primal_run(vortex, 4, 4, q)
        assert rec.err_L2L2 <= math.sqrt(vortex.T) * rec.err_LinfL2
        assert rec.monitors["energy_residual_max"] <= 1e-8


def test_error_record_rejects_negative():
    with pytest.raises(ValueError):
        ErrorRecord(0.1, 0.1, -1.0, 0.0, 0.0)


# --- EOC -------------------------------------------------------------------------------


def records(errors, h0=0.5):
    return [ErrorRecord(0.1, h0 / 2**i, e, e, e) for i, e in enumerate(errors)]


def test_eoc_examples():
    assert eoc(records([1, 0.5, 0.25])) == pytest.approx([1, 1])
    assert eoc(records([1, 1 / 4, 1 / 16])) == pytest.approx([2, 2])
    assert eoc_from_values([1, 1 / 8]) == pytest.approx([3])


def test_eoc_rejections():
    with pytest.raises(ValueError, match="decrease"):
        eoc([ErrorRecord(0.1, 0.5, 1, 1, 1), ErrorRecord(0.1, 0.5, 1, 1, 1)])
    with pytest.raises(ValueError, match="decrease"):
        eoc([ErrorRecord(0.1, 0.25, 1, 1, 1), ErrorRecord(0.1, 0.5, 1, 1, 1)])
    with pytest.raises(ValueError):
        eoc(records([1, 0.5]), varying="nu")
    with pytest.raises(ValueError):
        eoc(records([1]))


def test_eoc_in_k():
    recs = [ErrorRecord(1 / 2 ** (i + 2), 0.1, 0.0, 0.0, 3.0 / 4**i) for i in range(3)]
    assert eoc(recs, varying="k") == pytest.approx([2, 2])


# --- best approximation terms -----------------------------------------------------------


def test_best_approx_terms_decrease(vortex):
    terms = []
    for n in (4, 8, 16):
        space = MixedSpace(build_structured(n))
        terms.append(best_approx_rhs(vortex, TimeGrid.uniform(1.0, n), space, 1))
    for key in terms[0]:
        vals = [t[key] for t in terms]
        assert vals[0] > vals[1] > vals[2] > 0, key
