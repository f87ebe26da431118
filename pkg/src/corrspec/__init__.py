"""Correlation Ramsey spectroscopy: simulation and estimation for clock comparisons."""

__version__ = "0.1.0"

from corrspec.core import (
    ClockSpec,
    ContrastModel,
    PhasePair,
    averaged_correlation,
    duty_cycle_factor,
    instability,
    joint_correlation_probability,
    lifetime_contrast,
    q_coherence,
    q_spectroscopic,
    ramsey_transition_probability,
)

__all__ = [
    "ClockSpec",
    "ContrastModel",
    "PhasePair",
    "averaged_correlation",
    "duty_cycle_factor",
    "instability",
    "joint_correlation_probability",
    "lifetime_contrast",
    "q_coherence",
    "q_spectroscopic",
    "ramsey_transition_probability",
]
