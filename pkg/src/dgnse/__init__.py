"""dG(q) in time / Taylor-Hood in space solver for the 2D instationary
Navier-Stokes equations, with a verification harness."""

from .cases import CASE_NAMES, ManufacturedCase, builtin_case
from .forms import (
    assemble_chat_jacobian,
    assemble_chat_operator,
    assemble_divergence,
    assemble_mass,
    assemble_newton_blocks,
    assemble_stiffness,
    convection_c,
    convection_chat,
    load_vector,
)
from .gronwall import GronwallInstance, gronwall_bound, gronwall_quadlinear_bound, oracle_recursion
from .mesh import Mesh, build_structured, refine_uniform
from .projections import RitzPair, discrete_laplacian, discrete_stokes_op, leray_project, stokes_ritz
from .quadrature import QuadratureRule, assembly_rule, error_rule
from .solver import (
    EnergyLedger,
    NewtonConfig,
    NonConvergenceError,
    SingularSystemError,
    march_dual,
    march_primal,
    newton_slab,
    solve_linear_saddle,
)
from .spaces import Field, MixedSpace, infsup_constant, interpolate_pressure, interpolate_velocity
from .study import ErrorRecord, best_approx_rhs, eoc, error_norms
from .timeslab import GridAssumptionError, SlabSolution, TimeGrid, Trajectory, pi_tau, slab_system

__version__ = "0.1.0"
