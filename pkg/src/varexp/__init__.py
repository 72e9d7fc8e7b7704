"""Variational solvers for -div(A(x, |grad u|) grad u) = f(x, u) with
variable exponents on boxes, discretized by finite differences."""

from varexp.energy import (
    EnergyBreakdown,
    Problem,
    directional_derivative,
    energy,
    grad_norm,
    gradient_vector,
    monotone_gap,
    ps_diagnostics,
)
from varexp.exponent import (
    AdmissibilityReport,
    ExponentField,
    build_exponent,
    check_admissibility,
    critical_exponent,
    log_holder_estimate,
)
from varexp.mesh import GridFunction, Mesh, build_mesh, enforce_zero_trace, gradient, integrate
from varexp.modular import holder_pairing_bound, luxemburg_norm, modular, sobolev0_norm
from varexp.problem import (
    custom_kernel,
    custom_reaction,
    kernel_eval,
    make_kernel,
    model_reaction,
    potential_phi,
    reaction_eval,
    reaction_primitive,
    simon_gap,
    verify_kernel_hypotheses,
    verify_reaction_hypotheses,
)
from varexp.solvers import (
    SolverConfig,
    build_subspace_ladder,
    fountain_search,
    global_minimize_at_lambda,
    lambda1_minimize,
    mountain_pass_solve,
    rayleigh_quotient,
    verify_mp_geometry,
)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
