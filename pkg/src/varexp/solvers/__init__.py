"""Mountain-pass, symmetric multi-solution and Rayleigh-quotient solvers."""

from varexp.solvers.common import SobolevPreconditioner, SolveReport, SolverConfig, TraceRecord, sign_changes
from varexp.solvers.fountain import FountainResult, SubspaceLadder, build_subspace_ladder, fountain_search
from varexp.solvers.mountain_pass import MPGeometry, mountain_pass_solve, verify_mp_geometry
from varexp.solvers.rayleigh import Lambda1Result, global_minimize_at_lambda, lambda1_minimize, rayleigh_quotient

__all__ = [
    "SolverConfig", "SolveReport", "TraceRecord", "SobolevPreconditioner", "sign_changes",
    "MPGeometry", "verify_mp_geometry", "mountain_pass_solve",
    "SubspaceLadder", "FountainResult", "build_subspace_ladder", "fountain_search",
    "Lambda1Result", "rayleigh_quotient", "lambda1_minimize", "global_minimize_at_lambda",
]
