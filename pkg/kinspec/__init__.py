"""
kinspec: numerical companion for the linearized Boltzmann operator with a cutoff soft potential.

Usage:
    # Kernel and operators
    from kinspec import KernelParams, build_grid, assemble_operators
    params = KernelParams(d=3, gamma=0.5)
    ops = assemble_operators(build_grid(3, "hermite", 8), params)

    # Spectral branches near the origin
    from kinspec import trace_branches
    branches = trace_branches(ops, np.geomspace(0.005, 0.1, 12))

    # Semigroup and nonlinear solver
    from kinspec import Propagator, SolverConfig, initial_state, solve_cauchy
    result = solve_cauchy(ops, initial_state(ops.grid, SolverConfig(), 1e-3), SolverConfig())

    # Command line
    kinspec branches --config run.cfg --out results/
"""

__version__ = "0.1.0"

from kinspec.config import ExperimentConfig, config_parse, load_config
from kinspec.discretize import (
    OperatorSet,
    VelocityGrid,
    assemble_K,
    assemble_L,
    assemble_operators,
    build_grid,
    build_projection,
)
from kinspec.errors import (
    ConfigError,
    DivergenceError,
    KinspecError,
    PreconditionError,
    ToleranceError,
)
from kinspec.kernel import KernelParams, KernelQuad, k1_eval, k2_eval, nu_of_xi
from kinspec.nonlinear import (
    CollisionIntegrator,
    SolverConfig,
    gamma_bilinear,
    initial_state,
    solve_cauchy,
)
from kinspec.semigroup import Propagator, decay_probe, xspace_decay
from kinspec.spectral import dispersion_matrix, eigen_eta, trace_branch, trace_branches

__all__ = [
    # Kernel
    "KernelParams",
    "KernelQuad",
    "k1_eval",
    "k2_eval",
    "nu_of_xi",
    # Discretization
    "VelocityGrid",
    "OperatorSet",
    "build_grid",
    "assemble_K",
    "assemble_L",
    "assemble_operators",
    "build_projection",
    # Spectral analysis
    "dispersion_matrix",
    "eigen_eta",
    "trace_branch",
    "trace_branches",
    # Semigroup
    "Propagator",
    "decay_probe",
    "xspace_decay",
    # Nonlinear
    "CollisionIntegrator",
    "SolverConfig",
    "gamma_bilinear",
    "initial_state",
    "solve_cauchy",
    # Configuration
    "ExperimentConfig",
    "config_parse",
    "load_config",
    # Errors
    "KinspecError",
    "ConfigError",
    "PreconditionError",
    "DivergenceError",
    "ToleranceError",
]
