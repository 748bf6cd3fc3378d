"""Variational time-discrete geodesics and cubic splines on Riemannian manifolds."""

from .continuum import (
    ContinuousCurve,
    continuous_path_energy,
    continuous_spline_energy,
    convergence_study,
    euclidean_cubic_spline,
    hermite_interpolant,
    three_point_energy,
)
from .embedded import (
    EmbeddedManifold,
    Parameterization,
    builtin_surface,
    cylinder,
    cylinder_winding_energy,
    dirichlet_sweep,
    euclidean,
    sphere,
    torus,
)
from .manifold import (
    DegeneracyError,
    FeasibilityError,
    ManifoldError,
    ManifoldModel,
    covariant_accel,
    fd_derivatives,
)
from .rods import RodManifold, RodQuadrature, RodShape, rod_energy
from .shells import ShellManifold, ShellMesh, ShellParams, shell_energy
from .solver import (
    DiscretePath,
    InterpolationProblem,
    MidpointError,
    ProblemError,
    SolverSettings,
    SplineSolution,
    discrete_path_energy,
    discrete_spline_energy,
    geodesic_midpoint,
    gradient_check,
    solve_geodesic,
    solve_spline,
    spline_gradient,
)

__version__ = "0.1.0"

__all__ = [
    "ContinuousCurve", "DegeneracyError", "DiscretePath", "EmbeddedManifold",
    "FeasibilityError", "InterpolationProblem", "ManifoldError", "ManifoldModel",
    "MidpointError", "Parameterization", "ProblemError", "RodManifold", "RodQuadrature",
    "RodShape", "ShellManifold", "ShellMesh", "ShellParams", "SolverSettings",
    "SplineSolution", "builtin_surface", "continuous_path_energy",
    "continuous_spline_energy", "convergence_study", "covariant_accel", "cylinder",
    "cylinder_winding_energy", "dirichlet_sweep", "discrete_path_energy",
    "discrete_spline_energy", "euclidean", "euclidean_cubic_spline", "fd_derivatives",
    "geodesic_midpoint", "gradient_check", "hermite_interpolant", "rod_energy",
    "shell_energy", "solve_geodesic", "solve_spline", "sphere", "spline_gradient",
    "three_point_energy", "torus",
]
