"""mel: a numerical laboratory for semilinear elliptic equations with
Radon-measure data.

The package solves L u + g(u) = lambda with boundary data mu on lattice
approximations of smooth domains, provides a radial ODE laboratory for
isolated singularities, Sobolev-capacity estimators tied to removability,
and boundary-trace extraction for measure-valued boundary behavior.
"""

from .absorption import (Nonlinearity, RadialOperator, SolveOptions,
                         relaxation_sweep, solve_absorption,
                         solve_radial_absorption)
from .capacity import (CapacityProblem, capacity_scaling_study,
                       dual_capacity_lower, point_capacity_problem,
                       removability_predicate, sobolev_capacity)
from .errors import (ConfigError, DomainError, EllipticityError, MelError,
                     SolverError, UniquenessError)
from .experiments import (ExperimentConfig, ExperimentResult, list_experiments,
                          run_experiment)
from .grids import (CartesianGrid, GridFunction, build_masked_grid,
                    build_radial_grid)
from .measures import MeasureData, make_boundary_dirac, make_dirac
from .operators import (DiscreteOperator, adjoint, assemble,
                        ball_green_closed_form, green_potential,
                        poisson_potential, solve_very_weak, torsion)
from .radial import (cap_eigenproblem, classify_interior_singularity,
                     keller_osserman_certificate, shoot_radial)
from .source import (estimate_C0, sigma_threshold, sigma_threshold_scan,
                     solve_source, theta_star)
from .trace import classify_boundary, strong_singularity_minorant, trace_measure

__version__ = "0.1.0"

__all__ = [
    "Nonlinearity", "RadialOperator", "SolveOptions", "relaxation_sweep",
    "solve_absorption", "solve_radial_absorption",
    "CapacityProblem", "capacity_scaling_study", "dual_capacity_lower",
    "point_capacity_problem", "removability_predicate", "sobolev_capacity",
    "ConfigError", "DomainError", "EllipticityError", "MelError",
    "SolverError", "UniquenessError",
    "ExperimentConfig", "ExperimentResult", "list_experiments", "run_experiment",
    "CartesianGrid", "GridFunction", "build_masked_grid", "build_radial_grid",
    "MeasureData", "make_boundary_dirac", "make_dirac",
    "DiscreteOperator", "adjoint", "assemble", "ball_green_closed_form",
    "green_potential", "poisson_potential", "solve_very_weak", "torsion",
    "cap_eigenproblem", "classify_interior_singularity",
    "keller_osserman_certificate", "shoot_radial",
    "estimate_C0", "sigma_threshold", "sigma_threshold_scan", "solve_source",
    "theta_star",
    "classify_boundary", "strong_singularity_minorant", "trace_measure",
    "__version__",
]
