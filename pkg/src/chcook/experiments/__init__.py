"""Experiment drivers; each returns an :class:`ExperimentReport`."""
from .control import build_control, control_residual, smoothing_check, steering_check
from .mixing import fit_decay, mixing_estimate, mixing_report
from .pathwise import (
    contraction_check,
    dt_self_convergence,
    energy_report,
    initial_ensemble,
    mass_conservation,
    resolution_invariance,
)
from .reflection import reflection_profile, reflection_report, stationary_reflection_terms
from .report import ExperimentReport
from .semigroup import random_pairs, semigroup_convergence, strong_feller_bound, strong_feller_check
from .stationary import gibbs_consistency, invariant_convergence, linear_covariance, sample_measure

__all__ = [
    "ExperimentReport", "build_control", "contraction_check", "control_residual",
    "dt_self_convergence", "energy_report", "fit_decay", "gibbs_consistency", "initial_ensemble",
    "invariant_convergence", "linear_covariance", "mass_conservation", "mixing_estimate",
    "mixing_report", "random_pairs", "reflection_profile", "reflection_report",
    "resolution_invariance", "sample_measure", "semigroup_convergence", "smoothing_check",
    "stationary_reflection_terms", "steering_check", "strong_feller_bound", "strong_feller_check",
]
