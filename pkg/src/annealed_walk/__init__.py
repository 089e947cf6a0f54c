"""Annealed random walk among Bernoulli obstacles.

Exact small-N enumeration, a Metropolis sampler of the annealed path law,
Dirichlet spectral tools on lattice domains, geometric diagnostics of sampled
ranges and a scaling-study harness.
"""

from ._backend import BACKEND
from .environment import (Environment, ModelParams, WalkPath, exact_mu_expectation,
                          exact_partition_function, sample_environment, survival_dp)
from .experiments import ExperimentConfig, load_config, run_scaling_experiment
from .geometry import (TrulyOpenConfig, balanced_radius, crossing_decomposition, gamma,
                       skeletal_set, truly_open_cluster)
from .lattice import LatticeSet, ball, empirical_center, external_boundary
from .mcmc import ChainState, MoveMix, MoveSpec, metropolis_step, propose, run_chain
from .spectral import (dirichlet_spectrum, faber_krahn_gap, green_visits, heat_kernel,
                       scaling_constants)
from .validation import run_validation_suite

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "Environment", "ModelParams", "WalkPath", "exact_mu_expectation",
    "exact_partition_function", "sample_environment", "survival_dp", "ExperimentConfig",
    "load_config", "run_scaling_experiment", "TrulyOpenConfig", "balanced_radius",
    "crossing_decomposition", "gamma", "skeletal_set", "truly_open_cluster", "LatticeSet",
    "ball", "empirical_center", "external_boundary", "ChainState", "MoveMix", "MoveSpec",
    "metropolis_step", "propose", "run_chain", "dirichlet_spectrum", "faber_krahn_gap",
    "green_visits", "heat_kernel", "scaling_constants", "run_validation_suite",
]
