"""Simulation and bound verification for noisy Cucker-Smale flocking."""
from .exceptions import FlockError, HypothesisError, InvalidInputError, NumericalError
from .flock_core import FlockState, diameter, dissimilarity, is_nearly_aligned, mean, project_perp
from .graph import (
    adjacency,
    apply_laplacian,
    fiedler_lower_bound,
    fiedler_number,
    laplacian,
    laplacian_norm_bound,
)
from .noise import GaussianIID, KernelSpec, NoNoise, SmoothedWiener, UniformBall, default_kernel
from .theory import ModelParams, bound_report, initial_quantities
from .dynamics import integrate_continuous, simulate_discrete, step_discrete
from .montecarlo import ExperimentSpec, compare_to_bound, run_experiment, wilson_interval

__version__ = "0.1.0"
