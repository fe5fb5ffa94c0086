"""Advection-diffusion in a periodic cellular flow.

Finite-difference solvers for the cell problem (effective diffusivity), the
expected exit time and the principal Dirichlet eigenvalue of
-Lap + A v.grad with v = grad-perp of H = sin(pi x1) sin(pi x2) / pi, a
Monte Carlo sampler of the underlying diffusion, and the two-scale
approximation of the exit time on a disk.
"""

from .cellproblem import (
    CorrectorSet,
    EffectiveDiffusivity,
    effective_diffusivity,
    energy_identity_residual,
    fit_sigma0,
    interior_deviation,
    second_corrector,
    solve_correctors,
    symmetry_errors,
)
from .eigen import (
    Eigenpair,
    RegimeRecord,
    SignChange,
    heinze_diagnostic,
    principal_eigenpair,
    regime_scan_record,
    strong_flow_variational_bound,
)
from .exittime import (
    ExitTimeSolution,
    drift_independent_bound_check,
    homogenized_profile_deviation,
    separatrix_report,
    solve_exit_time,
    torsion_square_max,
)
from .expansion import MultiscaleApproximation, build_approximation, residual_check, sandwich_check
from .flow import Point2, separatrix_nodes, stream, velocity
from .grid import Grid, ScalarField, Topology, apply, assemble, build_grid
from .linsolve import IncompatibleRhs, SolveReport, Solver, SolverError, solve
from .sde import ExitStats, SdeConfig, dump_trajectories, estimate_exit_time, simulate_path

__all__ = [name for name in dir() if not name.startswith("_")]
