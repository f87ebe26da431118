"""Synchronised Ramsey comparison of two many-atom clocks.

Both clocks are interrogated with the same laser phase, which is unknown
and may be scrambled from shot to shot. Each clock measures an excitation
fraction; with the laser phase offsets set near quadrature the two fractions
act as cosine and sine of the laser-atom phase and the atom-atom phase
difference follows from two arccos inversions.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from corrspec.core import ClockSpec
from corrspec.rng import substream

TWO_PI = 2.0 * np.pi
NOISE_KINDS = ("uniform-random", "random-walk", "flicker")
P_SLACK = 1e-9
BLOCK = 1024
_SIGNS = np.array([(1, 1), (1, -1), (-1, 1), (-1, -1)], dtype=float)


@dataclass(frozen=True)
class LaserNoiseModel:
    """Common laser phase across shots.

    ``uniform-random``: independent phase each shot, uniform over a window of
    width ``spread`` centred on ``center`` (the default window is the full
    circle). ``random-walk``: Gaussian steps of ``step`` rad per shot.
    ``flicker``: sum of ``n_components`` damped random walks with
    correlation times 1, 4, 16, ... shots, each driven with step ``step``.
    """

    kind: str = "uniform-random"
    step: float = 1.0
    n_components: int = 5
    spread: float = TWO_PI
    center: float = np.pi

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown laser noise kind {self.kind!r}; use one of {NOISE_KINDS}")
        if self.step < 0 or self.n_components < 1 or not 0 <= self.spread <= TWO_PI:
            raise ValueError("noise parameters must be non-negative")

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform-random":
            half = 0.5 * self.spread
            return self.center + rng.uniform(-half, half, size=n)
        start = rng.uniform(0.0, TWO_PI)
        if self.kind == "random-walk":
            steps = rng.normal(0.0, self.step, size=n)
            steps[0] = 0.0
            return start + np.cumsum(steps)
        out = np.full(n, start)
        for k in range(self.n_components):
            rho = np.exp(-1.0 / 4.0**k)
            out += lfilter([1.0], [1.0, -rho], rng.normal(0.0, self.step, size=n))
        return out


@dataclass(frozen=True)
class RemoteConfig:
    """Two-ensemble comparison.

    ``prior_dphi_ab`` is the calibration estimate of the phase difference and
    ``prior_var`` its variance; ``None`` means the prior equals the truth.
    """

    n_a: int = 100
    n_b: int = 100
    theta_a: float = 0.0
    theta_b: float = 0.0
    true_dphi_ab: float = 0.3
    laser_noise: LaserNoiseModel = field(default_factory=LaserNoiseModel)
    synchronized: bool = True
    t: float = 3.0
    prior_dphi_ab: float | None = None
    prior_var: float = 0.01
    guard_epsilon: float = 0.0

    def __post_init__(self):
        if self.n_a < 1 or self.n_b < 1:
            raise ValueError("atom numbers must be >= 1")
        for name in ("theta_a", "theta_b", "true_dphi_ab"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")
        if self.prior_var < 0:
            raise ValueError("prior_var must be non-negative")
        if not 0 <= self.guard_epsilon < 1:
            raise ValueError("guard_epsilon must lie in [0, 1)")
        if not self.t > 0:
            raise ValueError("t must be positive")

    @property
    def prior(self) -> float:
        return self.true_dphi_ab if self.prior_dphi_ab is None else self.prior_dphi_ab

    @property
    def projection_variance(self) -> float:
        return 1.0 / self.n_a + 1.0 / self.n_b


@dataclass
class RemoteRun:
    p_hat_a: np.ndarray
    p_hat_b: np.ndarray
    estimates: np.ndarray
    ambiguous: np.ndarray
    config: RemoteConfig

    @property
    def accepted(self) -> np.ndarray:
        return self.estimates[~self.ambiguous]

    @property
    def ambiguity_rate(self) -> float:
        return float(np.mean(self.ambiguous))

    @property
    def variance(self) -> float:
        return float(np.var(self.accepted, ddof=1))

    @property
    def bias(self) -> float:
        return float(np.mean(self.accepted) - self.config.true_dphi_ab)

    @property
    def standard_error(self) -> float:
        return float(np.sqrt(self.variance / self.accepted.size))

    def summary(self) -> dict:
        return {
            "n_shots": int(self.estimates.size),
            "n_accepted": int(self.accepted.size),
            "ambiguity_rate": self.ambiguity_rate,
            "mean_estimate_rad": float(np.mean(self.accepted)),
            "bias_rad": self.bias,
            "standard_error_rad": self.standard_error,
            "variance_rad2": self.variance,
            "predicted_variance_rad2": self.config.projection_variance,
        }


def clock_transition_probability(phi_x, phi_l, theta_x):
    """Excitation probability (1 + cos(phi_x - phi_l - theta_x)) / 2."""
    return 0.5 * (1.0 + np.cos(np.asarray(phi_x) - phi_l - theta_x))


def _arccos_checked(p):
    p = np.asarray(p, dtype=float)
    if np.any(p < -P_SLACK) or np.any(p > 1 + P_SLACK):
        raise ValueError("probabilities must lie in [0, 1]")
    return np.arccos(np.clip(2.0 * p - 1.0, -1.0, 1.0))


def invert_phase_difference(p_a, p_b, theta_a, theta_b):
    """Principal-branch phase difference arccos(2pA-1) - arccos(2pB-1) + thA - thB."""
    out = _arccos_checked(p_a) - _arccos_checked(p_b) + theta_a - theta_b
    return float(out) if np.ndim(out) == 0 else out


def calibrate_quadrature(config: RemoteConfig):
    """Offsets putting the expected phase difference at quadrature.

    Keeps ``theta_b`` and sets ``theta_a`` so that
    ``prior - (theta_a - theta_b) = pi/2``.
    """
    theta_b = config.theta_b
    return theta_b + config.prior - np.pi / 2, theta_b


def calibrated(config: RemoteConfig) -> RemoteConfig:
    ta, tb = calibrate_quadrature(config)
    return replace(config, theta_a=ta, theta_b=tb)


def operating_point_phase(config: RemoteConfig) -> float:
    """Laser phase that puts clock A at 3pi/4 and, once calibrated, B at pi/4.

    Both fractions then sit at mid-slope, where the first-order variance
    1/N_A + 1/N_B applies.
    """
    phi_a, _ = _atom_phases(config)
    return phi_a - config.theta_a - 0.75 * np.pi


def _wrap(x):
    return (x + np.pi) % TWO_PI - np.pi


def resolve_branches(p_hat_a, p_hat_b, config: RemoteConfig):
    """Pick the arccos branches and flag ambiguous shots.

    The four sign choices for the two inversions all reproduce the measured
    fractions, so only the calibration prior can separate them. Candidates
    within 3 predicted sigma of the prior are kept. A shot is ambiguous when
    two kept candidates differ by more than 3 projection-noise sigma, or when
    either fraction falls inside the optional guard band. The reported value
    is the candidate closest to the prior; near a fringe extremum this pulls
    the estimate towards the prior by at most the prior's own error.
    """
    a = _arccos_checked(p_hat_a)
    b = _arccos_checked(p_hat_b)
    dtheta = config.theta_a - config.theta_b
    prior = config.prior
    cand = _SIGNS[:, 0, None] * a - _SIGNS[:, 1, None] * b + dtheta
    dev = _wrap(cand - prior)
    sigma_meas = np.sqrt(config.projection_variance)
    sigma_pred = np.sqrt(config.prior_var + config.projection_variance)
    ok = np.abs(dev) < 3.0 * sigma_pred
    cols = np.arange(dev.shape[1])
    best = dev[np.argmin(np.abs(dev), axis=0), cols]
    estimate = prior + best
    far = np.abs(_wrap(dev[:, None, :] - dev[None, :, :])) > 3.0 * sigma_meas
    ambiguous = np.any(far & ok[:, None, :] & ok[None, :, :], axis=(0, 1))
    if config.guard_epsilon > 0:
        edge = 1.0 - config.guard_epsilon
        ambiguous |= (np.abs(2 * np.asarray(p_hat_a) - 1) > edge) | (
            np.abs(2 * np.asarray(p_hat_b) - 1) > edge)
    return estimate, ambiguous


def _atom_phases(config: RemoteConfig):
    return config.true_dphi_ab, 0.0


def _shots(config: RemoteConfig, phi_la, phi_lb, rng):
    phi_a, phi_b = _atom_phases(config)
    pa = clock_transition_probability(phi_a, phi_la, config.theta_a)
    pb = clock_transition_probability(phi_b, phi_lb, config.theta_b)
    pha = rng.binomial(config.n_a, pa) / config.n_a
    phb = rng.binomial(config.n_b, pb) / config.n_b
    est, amb = resolve_branches(pha, phb, config)
    return pha, phb, est, amb


def laser_phases(config: RemoteConfig, n_shots: int, seed: int):
    """Laser phase seen by each clock; identical arrays when synchronised."""
    phi_a = config.laser_noise.sample(n_shots, substream(seed, "laser", 0))
    if config.synchronized:
        return phi_a, phi_a
    return phi_a, config.laser_noise.sample(n_shots, substream(seed, "laser", 1))


def simulate_remote_shot(config: RemoteConfig, rng: np.random.Generator,
                         phi_l: float | None = None):
    """One comparison shot: ``(p_hat_a, p_hat_b, estimate, ambiguous)``."""
    if phi_l is None:
        phi_l = float(config.laser_noise.sample(1, rng)[0])
    phi_lb = phi_l if config.synchronized else float(config.laser_noise.sample(1, rng)[0])
    pha, phb, est, amb = _shots(config, np.array([phi_l]), np.array([phi_lb]), rng)
    return float(pha[0]), float(phb[0]), float(est[0]), bool(amb[0])


def _block(args):
    config, phi_a, phi_b, seed, k = args
    return _shots(config, phi_a, phi_b, substream(seed, "remote", k))


def simulate_remote(config: RemoteConfig, n_shots: int, seed: int,
                    workers: int = 1) -> RemoteRun:
    """Run ``n_shots`` shots; projection noise for block k uses substream k."""
    if n_shots < 1:
        raise ValueError("n_shots must be positive")
    phi_a, phi_b = laser_phases(config, n_shots, seed)
    jobs = [(config, phi_a[i:i + BLOCK], phi_b[i:i + BLOCK], seed, k)
            for k, i in enumerate(range(0, n_shots, BLOCK))]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_block, jobs))
    else:
        parts = [_block(j) for j in jobs]
    cols = [np.concatenate([p[i] for p in parts]) for i in range(4)]
    return RemoteRun(cols[0], cols[1], cols[2], cols[3].astype(bool), config)


def comparison_instability(config: RemoteConfig, tau: float, spec: ClockSpec) -> float:
    """Projection-noise-limited sigma_y(tau) of the two-clock comparison."""
    if not tau > 0:
        raise ValueError("tau must be positive")
    return float(np.sqrt(config.projection_variance)
                 / (TWO_PI * spec.nu * np.sqrt(config.t * tau)))
