"""Numerical laboratory for the dyadic shell cascade.

The package builds, for shell ratio lam > 1 and coupling exponent beta > 2,
two distinct finite-energy solutions of the forced cascade driven by one and
the same forcing, and certifies the pair numerically: equation residuals,
energy balance with the truncation flux, continuity of the difference field
across the dyadic switching times, and geometric decay of the forcing norm.
For beta <= 2 it provides the matching rigidity experiment.  The layers are

    core           state types, right-hand side, energy bookkeeping
    spectral       the one-cycle amplification map and the search for q
    texp           time-ordered exponentials by product integration
    profiles       mollified plateau profiles and their calibration
    construction   time grid, cycle solution, split-field assembly
    solver         adaptive exponential integrator for the truncated system
    verify         certificates, energy checks, uniqueness experiments
    cli            command line front end and artifact export
"""

import os as _os

# Honor the thread cap before any BLAS pool spins up (effective when this
# package is the first importer of numpy in the process).
_cap = _os.environ.get("DYADIC_THREADS")
if _cap:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_var, _cap)
del _os, _cap

__version__ = "0.1.0"

from .core import (NumericError, Params, Trajectory, energy_balance,
                   forcing_from_scalar, nonlinear_energy_flux, shell_rhs)
from .spectral import (EigenBasis, SearchError, SpectralReport, char_poly_A0,
                       eig_A, eig_A0, evaluate_q, find_q, matrix_A, matrix_A0)
from .texp import (MatrixPath, constant_path, op_norm, texp,
                   texp_continuity_bound)
from .profiles import (CalibrationError, CalibrationResult, ConstantProfile,
                       SmoothProfile, calibrate_profiles, coefficient_matrix,
                       coefficient_matrix_path, make_profiles, smoothstep)
from .construction import (GaugePhase, HSolution, ShellGrid, SplitFields,
                           build_split_fields, forcing_norm_partials,
                           monodromy_block, solve_h, time_grid)
from .solver import (SolveConfig, constant_forcing, constructed_forcing,
                     energy_inequality_check, galerkin_solve,
                     local_existence_interval, output_grid, vector_forcing,
                     zero_forcing)
from .verify import (Certificate, EnergyBundle, PipelineError, ResidualReport,
                     UniquenessReport, certify_nonuniqueness, energy_check,
                     residual_report, uniqueness_experiment)

__all__ = [
    "__version__",
    # core
    "NumericError", "Params", "Trajectory", "energy_balance",
    "forcing_from_scalar", "nonlinear_energy_flux", "shell_rhs",
    # spectral
    "EigenBasis", "SearchError", "SpectralReport", "char_poly_A0", "eig_A",
    "eig_A0", "evaluate_q", "find_q", "matrix_A", "matrix_A0",
    # texp
    "MatrixPath", "constant_path", "op_norm", "texp",
    "texp_continuity_bound",
    # profiles
    "CalibrationError", "CalibrationResult", "ConstantProfile",
    "SmoothProfile", "calibrate_profiles", "coefficient_matrix",
    "coefficient_matrix_path", "make_profiles", "smoothstep",
    # construction
    "GaugePhase", "HSolution", "ShellGrid", "SplitFields",
    "build_split_fields", "forcing_norm_partials", "monodromy_block",
    "solve_h", "time_grid",
    # solver
    "SolveConfig", "constant_forcing", "constructed_forcing",
    "energy_inequality_check", "galerkin_solve", "local_existence_interval",
    "output_grid", "vector_forcing", "zero_forcing",
    # verify
    "Certificate", "EnergyBundle", "PipelineError", "ResidualReport",
    "UniquenessReport", "certify_nonuniqueness", "energy_check",
    "residual_report", "uniqueness_experiment",
]
