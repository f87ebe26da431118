"""Recovering contrast, phase, coherence time and stability from counts."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq, minimize, minimize_scalar
from scipy.special import gammaln, log_ndtr

from corrspec.core import (UNIFORM_PHASE_PENALTY, ClockSpec, fractional_shift_from_slope,
                           instability)
from corrspec.protocol import FringeDataset, session_duration

C_MAX = 0.5
TWO_PI = 2.0 * np.pi
# half-width of a 68% interval in log-likelihood units
DELTA_LOGL = 0.5
DEFAULT_PRIOR_BOUNDS = (0.0, 25.0)


def wrap_phase(phi):
    """Map to [-pi, pi)."""
    return (np.asarray(phi) + np.pi) % TWO_PI - np.pi


@dataclass
class FringeFit:
    contrast: float
    phase0: float
    log_likelihood: float
    contrast_ci: tuple
    phase_ci: tuple
    phase_identifiable: bool = True
    t: float | None = None
    n_total: int = 0

    @property
    def contrast_err(self) -> float:
        """Symmetrised 1-sigma error, taking the larger side."""
        lo, hi = self.contrast_ci
        return max(hi - self.contrast, self.contrast - lo)

    @property
    def phase_err(self) -> float:
        lo, hi = self.phase_ci
        return 0.5 * (hi - lo)

    def to_dict(self) -> dict:
        return {
            "t_s": self.t,
            "contrast": self.contrast,
            "contrast_ci": list(self.contrast_ci),
            "phase0_rad": self.phase0,
            "phase_ci_rad": list(self.phase_ci),
            "phase_identifiable": self.phase_identifiable,
            "log_likelihood": self.log_likelihood,
            "n_total": self.n_total,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FringeFit":
        return cls(contrast=d["contrast"], phase0=d["phase0_rad"],
                   log_likelihood=d["log_likelihood"],
                   contrast_ci=tuple(d["contrast_ci"]), phase_ci=tuple(d["phase_ci_rad"]),
                   phase_identifiable=d["phase_identifiable"], t=d["t_s"],
                   n_total=d.get("n_total", 0))


@dataclass
class CoherenceFit:
    t_c: float
    ci_lower: float
    ci_upper: float
    prior_bounds: tuple
    c0: float
    grid: np.ndarray = field(default=None, repr=False)
    density: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {"t_c_s": self.t_c, "ci_lower_s": self.ci_lower,
                "ci_upper_s": self.ci_upper, "prior_bounds_s": list(self.prior_bounds),
                "c0": self.c0}


@dataclass(frozen=True)
class DriftFit:
    slope: float
    slope_err: float
    fractional_shift: float
    intercept: float = 0.0
    intercept_err: float = 0.0

    @property
    def fractional_shift_err(self) -> float:
        return self.slope_err * self.fractional_shift / self.slope if self.slope else 0.0


# --------------------------------------------------------------------------
# fringe fit


class _FringeLikelihood:
    def __init__(self, data: FringeDataset):
        self.x = data.delta_phi_z
        self.k = data.n_correlated.astype(float)
        self.n = data.n_total.astype(float)
        self.const = float(np.sum(gammaln(self.n + 1) - gammaln(self.k + 1)
                                  - gammaln(self.n - self.k + 1)))

    def __call__(self, c, phi):
        """Log-likelihood; broadcasts over array-valued ``c`` and ``phi``."""
        c = np.asarray(c, dtype=float)[..., None]
        phi = np.asarray(phi, dtype=float)[..., None]
        p = 0.5 + 0.5 * c * np.cos(self.x + phi)
        return np.sum(self.k * np.log(p) + (self.n - self.k) * np.log1p(-p), axis=-1)

    def profile_over_phase(self, c, phi_hint):
        phis = phi_hint + np.linspace(-np.pi, np.pi, 65)[:-1]
        vals = self(c, phis)
        j = int(np.argmax(vals))
        step = TWO_PI / 64
        res = minimize_scalar(lambda f: -self(c, f), bounds=(phis[j] - step, phis[j] + step),
                              method="bounded", options={"xatol": 1e-9})
        return max(-res.fun, vals[j])

    def profile_over_contrast(self, phi):
        res = minimize_scalar(lambda c: -self(c, phi), bounds=(0.0, C_MAX),
                              method="bounded", options={"xatol": 1e-10})
        ends = self(np.array([0.0, C_MAX]), phi)
        return max(-res.fun, float(ends.max()))


def _crossing(f, x0, x1, target, steps=24):
    """First point between x0 and x1 where f drops below target, else None."""
    xs = np.linspace(x0, x1, steps + 1)
    prev = x0
    for x in xs[1:]:
        if f(x) < target:
            return brentq(lambda u: f(u) - target, prev, x, xtol=1e-10)
        prev = x
    return None


def fit_fringe_mle(data: FringeDataset, grid_shape=(50, 64)) -> FringeFit:
    """Binomial maximum-likelihood fit of ``1/2 + C/2 cos(dphi_z + phase0)``.

    Grid-seeded over C in [0, 1/2] and phase0 in [0, 2pi), refined locally.
    Confidence intervals come from the profile likelihood at a drop of 1/2.
    """
    x = data.delta_phi_z
    if len(x) < 4 or np.ptp(x) <= np.pi:
        raise ValueError("need at least 4 points spanning more than pi")
    ll = _FringeLikelihood(data)
    frac = data.fractions
    if np.allclose(frac, frac[0]):
        val = float(ll(0.0, 0.0)) + ll.const
        return FringeFit(0.0, 0.0, val, (0.0, 0.0), (-np.pi, np.pi), False,
                         data.t, data.total_probes)

    cs = np.linspace(0.0, C_MAX, grid_shape[0])
    phis = np.linspace(0.0, TWO_PI, grid_shape[1], endpoint=False)
    surface = ll(cs[:, None], phis[None, :])
    i, j = np.unravel_index(np.argmax(surface), surface.shape)
    res = minimize(lambda v: -ll(v[0], v[1]), x0=[max(cs[i], 1e-3), phis[j]],
                   method="L-BFGS-B", bounds=[(0.0, C_MAX), (None, None)])
    c_hat, phi_hat = float(res.x[0]), float(res.x[1])
    l_max = -float(res.fun)
    if surface[i, j] > l_max:
        c_hat, phi_hat, l_max = float(cs[i]), float(phis[j]), float(surface[i, j])
    target = l_max - DELTA_LOGL

    prof_c = lambda c: ll.profile_over_phase(c, phi_hat)
    lo = _crossing(prof_c, c_hat, 0.0, target)
    hi = _crossing(prof_c, c_hat, C_MAX, target)
    c_ci = (0.0 if lo is None else lo, C_MAX if hi is None else hi)

    identifiable = c_hat > 0
    phase0 = float(wrap_phase(phi_hat))
    if identifiable:
        prof_p = lambda f: ll.profile_over_contrast(f)
        plo = _crossing(prof_p, phi_hat, phi_hat - np.pi, target)
        phi_ = _crossing(prof_p, phi_hat, phi_hat + np.pi, target)
        identifiable = plo is not None and phi_ is not None
    if identifiable:
        p_ci = (phase0 + (plo - phi_hat), phase0 + (phi_ - phi_hat))
    else:
        p_ci = (phase0 - np.pi, phase0 + np.pi)
    return FringeFit(c_hat, phase0, l_max + ll.const, c_ci, p_ci, identifiable,
                     data.t, data.total_probes)


def phase_to_fractional_sigma(phase_err: float, t: float, spec: ClockSpec) -> float:
    """Fractional frequency uncertainty implied by a phase error after time t."""
    return phase_err / (TWO_PI * spec.nu * t)


# --------------------------------------------------------------------------
# contrast decay


def _log_diff_ndtr(a, b):
    """log(Phi(b) - Phi(a)) for b > a, stable in both tails."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    flip = a > 0
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)
    lb = log_ndtr(b2)
    la = log_ndtr(a2)
    return lb + np.log1p(-np.exp(np.minimum(la - lb, -1e-300)))


def _decay_log_marginal(tc, t, c, w, c0=None):
    """Log-likelihood of T_C with C0 fixed or integrated over a flat [0, 1/2] prior."""
    tc = np.atleast_1d(np.asarray(tc, dtype=float))
    g = np.exp(-t[None, :] / tc[:, None])
    if c0 is not None:
        r = c[None, :] - c0 * g
        return -0.5 * np.sum(w * r * r, axis=1)
    a = np.sum(w * g * g, axis=1)
    b = np.sum(w * g * c, axis=1)
    flat = a < 1e-12 * np.sum(w)
    a = np.where(flat, 1.0, a)
    chat = b / a
    base = -0.5 * (np.sum(w * c * c) - b * b / a)
    sa = np.sqrt(a)
    mass = _log_diff_ndtr(-chat * sa, (C_MAX - chat) * sa)
    out = base + 0.5 * np.log(TWO_PI / a) + mass
    # model has decayed to zero at every t: likelihood no longer depends on C0
    return np.where(flat, -0.5 * np.sum(w * c * c) + np.log(C_MAX), out)


def fit_contrast_decay(points, prior_bounds=DEFAULT_PRIOR_BOUNDS, c0: float | None = None,
                       n_grid: int = 4000, interval: float = 0.68) -> CoherenceFit:
    """Bayesian fit of C(t) = C0 exp(-t / T_C) with a flat prior on T_C.

    Each fringe contributes a Gaussian term with its symmetrised profile
    error. C0 is marginalised over [0, 1/2] unless given. Reports the
    posterior mode and the central ``interval`` credible range.
    """
    pts = sorted(points, key=lambda p: p[0])
    t = np.array([p[0] for p in pts], dtype=float)
    if len(np.unique(t)) < 3:
        raise ValueError("need at least 3 distinct Ramsey times")
    c = np.array([p[1].contrast for p in pts], dtype=float)
    sig = np.array([max(p[1].contrast_err, 1e-9) for p in pts])
    w = 1.0 / sig**2
    lo_b, hi_b = float(prior_bounds[0]), float(prior_bounds[1])
    if not 0 <= lo_b < hi_b:
        raise ValueError("prior bounds must satisfy 0 <= lower < upper")

    logp = lambda tc: _decay_log_marginal(tc, t, c, w, c0)
    eps = (hi_b - lo_b) * 1e-6
    grid = np.linspace(max(lo_b, eps), hi_b, n_grid)
    lp = logp(grid)
    # zoom onto the region carrying mass, for sharply peaked posteriors
    keep = np.nonzero(lp > lp.max() - 40.0)[0]
    a_i, b_i = max(keep[0] - 1, 0), min(keep[-1] + 1, n_grid - 1)
    if b_i - a_i < n_grid // 20:
        grid = np.linspace(grid[a_i], grid[b_i], n_grid)
        lp = logp(grid)
    dens = np.exp(lp - lp.max())
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    dens /= cdf[-1]
    cdf /= cdf[-1]
    tail = 0.5 * (1.0 - interval)
    ci_lo = float(np.interp(tail, cdf, grid))
    ci_hi = float(np.interp(1.0 - tail, cdf, grid))

    k = int(np.argmax(lp))
    lo_k, hi_k = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if hi_k > lo_k:
        res = minimize_scalar(lambda u: -logp(u)[0], bounds=(lo_k, hi_k), method="bounded",
                              options={"xatol": 1e-10 * hi_b})
        mode = float(res.x) if -res.fun >= lp[k] else float(grid[k])
    else:
        mode = float(grid[k])
    ci_lo, ci_hi = min(ci_lo, mode), max(ci_hi, mode)

    g = np.exp(-t / mode)
    c0_hat = c0 if c0 is not None else float(np.clip(np.sum(w * g * c) / np.sum(w * g * g),
                                                     0.0, C_MAX))
    return CoherenceFit(mode, ci_lo, ci_hi, (lo_b, hi_b), c0_hat, grid, dens)


def posterior_mass_outside(fit: CoherenceFit) -> float:
    """Posterior probability outside the prior support (zero by construction)."""
    lo, hi = fit.prior_bounds
    inside = (fit.grid >= lo) & (fit.grid <= hi)
    return float(np.trapezoid(np.where(inside, 0.0, fit.density), fit.grid))


# --------------------------------------------------------------------------
# phase drift


def unwrap_phase_series(times, phases):
    """Sort by time and unwrap, assuming steps of less than pi between neighbours."""
    order = np.argsort(times)
    return np.asarray(times, float)[order], np.unwrap(np.asarray(phases, float)[order])


def fit_phase_drift(points, spec: ClockSpec) -> DriftFit:
    """Weighted straight-line fit of differential phase against Ramsey time.

    ``points`` are ``(t, phase, err)`` with phases already unwrapped. Errors
    are treated as absolute, so the slope error does not rescale by chi^2.
    """
    arr = np.asarray(points, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise ValueError("need at least two (t, phase, err) points")
    t, y, e = arr.T
    if np.ptp(t) == 0:
        raise ValueError("all points share one Ramsey time; slope undefined")
    w = 1.0 / e**2
    design = np.stack([np.ones_like(t), t], axis=1)
    fisher = design.T @ (w[:, None] * design)
    cov = np.linalg.inv(fisher)
    beta = cov @ (design.T @ (w * y))
    slope = float(beta[1])
    return DriftFit(slope=slope, slope_err=float(np.sqrt(cov[1, 1])),
                    fractional_shift=fractional_shift_from_slope(slope, spec),
                    intercept=float(beta[0]), intercept_err=float(np.sqrt(cov[0, 0])))


# --------------------------------------------------------------------------
# stability


def extrapolate_sigma1s(sigma: float, duration: float) -> float:
    """Scale an uncertainty reached after ``duration`` seconds to 1 s averaging."""
    if not duration > 0:
        raise ValueError("duration must be positive")
    return sigma * np.sqrt(duration)


def sigma1s_from_contrast(contrast: float, t: float, n_probes: int, spec: ClockSpec) -> float:
    """1 s uncertainty implied by the fitted contrast of a uniformly scanned session.

    The session's frequency uncertainty follows from the contrast over the
    integrated free-evolution time ``n_probes * t``, with the uniform-phase
    penalty; it is then scaled to 1 s using the wall-clock session length.
    """
    if not contrast > 0:
        raise ValueError("zero contrast: frequency difference is unmeasurable")
    sigma = UNIFORM_PHASE_PENALTY * instability(spec, contrast, t, n_probes * t)
    return extrapolate_sigma1s(float(sigma), session_duration(t, n_probes, spec))


def allan_deviation(series, sample_period: float):
    """Overlapping Allan deviation of fractional-frequency data at octave taus.

    Returns a list of ``(tau, sigma_y)``. A tau is dropped when fewer than one
    second difference fits in the record.
    """
    y = np.asarray(series, dtype=float)
    if y.size < 3:
        raise ValueError("need at least 3 samples")
    x = np.concatenate([[0.0], np.cumsum(y)]) * sample_period
    out = []
    m = 1
    while x.size - 2 * m >= 1:
        d = x[2 * m:] - 2 * x[m:-m] + x[:-2 * m]
        tau = m * sample_period
        out.append((tau, float(np.sqrt(np.mean(d * d) / (2 * tau * tau)))))
        m *= 2
    return out
