"""Misspecified Markov decision processes and Berk-Nash equilibria.

Build a model with :func:`build_smdp` (or :func:`make_example`), discretise
it with :func:`discretize_smdp`, then search for an equilibrium with
:func:`solve_berk_nash` or diagnose non-existence with
:func:`ladder_diagnose`. :func:`simulate_learning` runs a Bayesian learner
on the same grid.
"""

__version__ = "0.1.0"

from .bellman import PolicyCorrespondence, ValueFunction, mix_kernel, optimal_actions, solve_bellman
from .discretize import FiniteSMDP, TransitionTensor, ModelTensor, discretize_smdp, dump_csv, truncation_bounds
from .divergence import KLProfile, closest_parameters, kl_profile, relative_entropy_row, weighted_kl
from .equilibrium import (
    EquilibriumReport,
    LadderReport,
    LyapunovResult,
    Tolerances,
    ladder_diagnose,
    lyapunov_check,
    solve_berk_nash,
    verify_equilibrium,
)
from .errors import (
    BerkNashError,
    ConfigError,
    ContractionError,
    DomainError,
    ImpossibleObservationError,
    NoDominatingParameterError,
    NonConvergenceError,
    TruncationError,
)
from .examples import ExampleOracle, make_example, oracle
from .learning import LearningTrace, bayes_update, identification_check, simulate_learning
from .model import SMDPSpec, build_smdp, kernel_mass
from .stationary import JointMeasure, stationary_distribution

__all__ = [
    "BerkNashError",
    "ConfigError",
    "ContractionError",
    "DomainError",
    "EquilibriumReport",
    "ExampleOracle",
    "FiniteSMDP",
    "ImpossibleObservationError",
    "JointMeasure",
    "KLProfile",
    "LadderReport",
    "LearningTrace",
    "LyapunovResult",
    "ModelTensor",
    "NoDominatingParameterError",
    "NonConvergenceError",
    "PolicyCorrespondence",
    "SMDPSpec",
    "Tolerances",
    "TransitionTensor",
    "TruncationError",
    "ValueFunction",
    "bayes_update",
    "build_smdp",
    "closest_parameters",
    "discretize_smdp",
    "dump_csv",
    "identification_check",
    "kernel_mass",
    "kl_profile",
    "ladder_diagnose",
    "lyapunov_check",
    "make_example",
    "mix_kernel",
    "optimal_actions",
    "oracle",
    "relative_entropy_row",
    "simulate_learning",
    "solve_bellman",
    "solve_berk_nash",
    "stationary_distribution",
    "truncation_bounds",
    "verify_equilibrium",
    "weighted_kl",
]
