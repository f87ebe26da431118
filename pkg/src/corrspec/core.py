"""Closed-form Ramsey and correlation-spectroscopy formulas.

Everything here is deterministic and vectorised over numpy arrays where it
makes sense. Phases are radians, times seconds, frequencies Hz.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Al+ clock transition frequency (Hz).
DEFAULT_NU = 1.121e15
#: Lifetime of the upper clock state (s).
DEFAULT_T_PRIME = 20.6
#: Per-probe dead time used for instability-vs-T curves (s).
DEFAULT_OVERHEAD = 0.1
#: Per-probe dead time that reproduces a 1126 s, 300-probe session at T = 3 s.
DEFAULT_SESSION_OVERHEAD = 0.753

#: Fisher-information penalty for scanning the differential phase uniformly
#: over [0, 2pi) instead of sitting at quadrature.
UNIFORM_PHASE_PENALTY = np.sqrt(2.0)


@dataclass(frozen=True)
class ClockSpec:
    """Parameters of one clock species.

    Attributes
    ----------
    nu : transition frequency, Hz
    t_prime : excited-state lifetime, s
    detection_fidelity : probability that one atom's readout is correct
    overhead : dead time per probe for duty-cycle curves, s
    session_overhead : dead time per probe for wall-clock session accounting, s
    """

    nu: float = DEFAULT_NU
    t_prime: float = DEFAULT_T_PRIME
    detection_fidelity: float = 0.99
    overhead: float = DEFAULT_OVERHEAD
    session_overhead: float = DEFAULT_SESSION_OVERHEAD

    def __post_init__(self):
        if not (np.isfinite(self.nu) and self.nu > 0):
            raise ValueError(f"nu must be positive, got {self.nu}")
        if not self.t_prime > 0:
            raise ValueError(f"t_prime must be positive, got {self.t_prime}")
        if not 0.5 <= self.detection_fidelity <= 1.0:
            raise ValueError(
                f"detection_fidelity must lie in [0.5, 1], got {self.detection_fidelity}"
            )
        if not (self.overhead >= 0 and self.session_overhead >= 0):
            raise ValueError("overheads must be non-negative")

    @property
    def detection_contrast(self) -> float:
        """Contrast reduction from symmetric readout errors on both atoms."""
        return (2.0 * self.detection_fidelity - 1.0) ** 2

    @classmethod
    def ideal(cls, **kw) -> "ClockSpec":
        """Perfect readout; every other field at its default unless overridden."""
        kw.setdefault("detection_fidelity", 1.0)
        return cls(**kw)


@dataclass(frozen=True)
class PhasePair:
    """Laser-minus-atom phases of the two atoms at the second pulse."""

    dphi_1: float
    dphi_2: float

    def __post_init__(self):
        if not (np.all(np.isfinite(self.dphi_1)) and np.all(np.isfinite(self.dphi_2))):
            raise ValueError("phases must be finite")


@dataclass(frozen=True)
class ContrastModel:
    """Exponential contrast decay c0 * exp(-t / t_c)."""

    c0: float = 0.5
    t_c: float = DEFAULT_T_PRIME

    def __post_init__(self):
        if not 0.0 <= self.c0 <= 0.5:
            raise ValueError(f"c0 must lie in [0, 0.5], got {self.c0}")
        if not self.t_c > 0:
            raise ValueError(f"t_c must be positive, got {self.t_c}")

    def __call__(self, t):
        return self.c0 * np.exp(-np.asarray(t, dtype=float) / self.t_c)


def _finite(x, name="value"):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    return arr


def _out(arr):
    return float(arr) if np.ndim(arr) == 0 else arr


def ramsey_transition_probability(dphi):
    """Probability (1 + cos dphi) / 2 that a Ramsey sequence flips the atom."""
    d = _finite(dphi, "dphi")
    return _out(0.5 * (1.0 + np.cos(d)))


def joint_correlation_probability(phases: PhasePair) -> float:
    """Probability that both atoms flip or neither does, for fixed laser phase."""
    a, b = phases.dphi_1, phases.dphi_2
    return 0.25 * (2.0 + np.cos(a - b) + np.cos(a + b))


def averaged_correlation(delta_phi, contrast):
    """Correlation probability after averaging over a uniform laser phase.

    Returns ``1/2 + contrast/2 * cos(delta_phi)``.
    """
    c = float(contrast)
    if not 0.0 <= c <= 0.5:
        raise ValueError(f"contrast must lie in [0, 0.5], got {contrast}")
    d = _finite(delta_phi, "delta_phi")
    return _out(0.5 + 0.5 * c * np.cos(d))


def lifetime_contrast(t, spec: ClockSpec):
    """Decay-limited pair contrast 0.5 * exp(-t / T')."""
    tt = _finite(t, "t")
    if np.any(tt < 0):
        raise ValueError("t must be non-negative")
    return _out(0.5 * np.exp(-tt / spec.t_prime))


def instability(spec: ClockSpec, contrast, t, tau):
    """Fractional frequency uncertainty 1 / (2 pi nu C sqrt(T tau)).

    Assumes operation near quadrature. Raises ``ValueError`` if the contrast is
    zero, since then the frequency difference is unmeasurable.
    """
    c = np.asarray(contrast, dtype=float)
    t = np.asarray(t, dtype=float)
    tau = np.asarray(tau, dtype=float)
    if np.any(c <= 0):
        raise ValueError("zero contrast: frequency difference is unmeasurable")
    if np.any(t <= 0) or np.any(tau <= 0):
        raise ValueError("t and tau must be positive")
    return _out(1.0 / (2.0 * np.pi * spec.nu * c * np.sqrt(t * tau)))


def lifetime_limited_instability(spec: ClockSpec, t, tau=1.0):
    """Instability at quadrature with contrast set by the upper-state lifetime."""
    return instability(spec, lifetime_contrast(t, spec), t, tau)


def optimal_probe_time(spec: ClockSpec) -> float:
    """Free-evolution time minimising the lifetime-limited instability."""
    return spec.t_prime / 2.0


def q_coherence(spec: ClockSpec, t_c: float) -> float:
    """Coherence Q-factor pi * nu * T_C."""
    if not t_c > 0:
        raise ValueError("t_c must be positive")
    return np.pi * spec.nu * t_c


def q_spectroscopic(spec: ClockSpec, t: float) -> float:
    """Ramsey-linewidth Q-factor 2 * nu * T."""
    if not t > 0:
        raise ValueError("t must be positive")
    return 2.0 * spec.nu * t


def duty_cycle_factor(t, spec: ClockSpec):
    """Fraction of wall-clock time spent in free evolution, t / (t + overhead)."""
    tt = np.asarray(t, dtype=float)
    if np.any(tt <= 0):
        raise ValueError("t must be positive")
    return _out(tt / (tt + spec.overhead))


def scanned_instability(spec: ClockSpec, contrast, t, tau=1.0, uniform_phase=True,
                        include_overhead=True):
    """Expected instability of a fringe scan with dead time.

    With ``uniform_phase`` the differential phase is spread over [0, 2pi) which
    halves the Fisher information relative to quadrature; ``include_overhead``
    inflates by ``1/sqrt(duty)`` using ``spec.overhead``.
    """
    s = np.asarray(instability(spec, contrast, t, tau))
    if uniform_phase:
        s = s * UNIFORM_PHASE_PENALTY
    if include_overhead:
        s = s / np.sqrt(duty_cycle_factor(t, spec))
    return _out(s)


def fractional_shift_from_slope(slope: float, spec: ClockSpec) -> float:
    """Convert a phase-drift slope (rad/s) into a fractional frequency offset."""
    return slope / (2.0 * np.pi * spec.nu)


def slope_from_fractional_shift(shift: float, spec: ClockSpec) -> float:
    return 2.0 * np.pi * spec.nu * shift
