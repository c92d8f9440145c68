"""Singular Stokes solutions, method-of-reflections sums and effective active-stress
models for dilute suspensions of self-propelled particles."""
from __future__ import annotations

import warnings

import numba

# Prefer OpenMP / workqueue; older system TBB builds only produce a warning.
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]
warnings.filterwarnings("ignore", message=r"The TBB threading layer", category=numba.NumbaWarning)

__version__ = "0.1.0"

from .errors import (ActiveStokesError, AdmissibilityError, CalibrationError,  # noqa: E402
                     ConvergenceError, DomainError, PackingError, QuadratureError,
                     SingularityError)
from .kernels import (FluidParams, M_apply, grad_U_apply, laplacian_U, oseen_tilde_U,  # noqa: E402
                      oseen_U)
from .quadrature import BallQuadrature, SurfaceQuadrature, product_gauss  # noqa: E402
from .flow import FlowField  # noqa: E402
from .swimmer import (DipoleCoefficient, SwimmerParams, Jcal, dipole_decomposition,  # noqa: E402
                      elementary_flow, elementary_pressure, elementary_velocity,
                      passive_strain_velocity, taylor_remainder, traction_on_sphere,
                      v1_image_velocity)
from .density import Domain, OrientationDensity  # noqa: E402
from .suspension import (SeparationReport, SuspensionConfig, boundary_error_functional,  # noqa: E402
                         sample_configuration, separation_report, u_app_evaluate)
from .effective import (ActiveStress, EffectiveFlow, VolumeGrid, active_stress,  # noqa: E402
                        energy_dissipation, solve_effective, solve_w0)
from .fokker_planck import (SphericalDensity, anisotropy_condition,  # noqa: E402
                            stationary_orientation_density)
from .orientation_stats import MomentSummary, empirical_moments, stress_convergence  # noqa: E402
from .experiments import ExperimentSpec, run_all, run_experiment  # noqa: E402

__all__ = [
    "ActiveStokesError", "AdmissibilityError", "CalibrationError", "ConvergenceError",
    "DomainError", "PackingError", "QuadratureError", "SingularityError",
    "FluidParams", "M_apply", "grad_U_apply", "laplacian_U", "oseen_tilde_U", "oseen_U",
    "BallQuadrature", "SurfaceQuadrature", "product_gauss", "FlowField",
    "DipoleCoefficient", "SwimmerParams", "Jcal", "dipole_decomposition", "elementary_flow",
    "elementary_pressure", "elementary_velocity", "passive_strain_velocity", "taylor_remainder",
    "traction_on_sphere", "v1_image_velocity",
    "Domain", "OrientationDensity",
    "SeparationReport", "SuspensionConfig", "boundary_error_functional", "sample_configuration",
    "separation_report", "u_app_evaluate",
    "ActiveStress", "EffectiveFlow", "VolumeGrid", "active_stress", "energy_dissipation",
    "solve_effective", "solve_w0",
    "SphericalDensity", "anisotropy_condition", "stationary_orientation_density",
    "MomentSummary", "empirical_moments", "stress_convergence",
    "ExperimentSpec", "run_all", "run_experiment",
]
