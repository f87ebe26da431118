from dataclasses import replace

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import binom

from corrspec.core import ClockSpec, ramsey_transition_probability
from corrspec.remote import (LaserNoiseModel, RemoteConfig, calibrate_quadrature, calibrated,
                             clock_transition_probability, comparison_instability,
                             invert_phase_difference, operating_point_phase, resolve_branches,
                             simulate_remote, simulate_remote_shot)
from corrspec.rng import substream

angles = st.floats(-20, 20)


def at_operating_point(**kw):
    cfg = calibrated(RemoteConfig(**kw))
    noise = LaserNoiseModel(spread=0.0, center=operating_point_phase(cfg))
    return replace(cfg, laser_noise=noise)


# ---- forward model and inversion -----------------------------------------

def test_transition_probability_points():
    assert clock_transition_probability(1.3, 1.0, 0.3) == pytest.approx(1.0)
    assert clock_transition_probability(np.pi / 2 + 0.2, 0.2, 0.0) == pytest.approx(0.5)


@given(angles, angles, angles)
def test_transition_probability_is_ramsey(phi_x, phi_l, theta):
    got = clock_transition_probability(phi_x, phi_l, theta)
    assert got == pytest.approx(ramsey_transition_probability(phi_x - phi_l - theta), abs=1e-14)


def test_inversion_points():
    assert invert_phase_difference(0.5, 0.5, np.pi / 2, 0.0) == pytest.approx(np.pi / 2)
    assert invert_phase_difference(1.0, 0.5, 0.0, 0.0) == pytest.approx(-np.pi / 2)


def test_inversion_slack():
    assert invert_phase_difference(1.0 + 5e-10, 0.5, 0.0, 0.0) == pytest.approx(-np.pi / 2)
    with pytest.raises(ValueError):
        invert_phase_difference(1.01, 0.5, 0.0, 0.0)
    with pytest.raises(ValueError):
        invert_phase_difference(0.5, -1e-6, 0.0, 0.0)


def test_forward_inverse_round_trip():
    rng = np.random.default_rng(8)
    n = 10_000
    phi_a, phi_b = rng.uniform(0, 2 * np.pi, (2, n))
    phi_l = rng.uniform(-np.pi, np.pi, n)
    theta_a, theta_b = rng.uniform(-1, 1, (2, n))
    xa, xb = phi_a - phi_l - theta_a, phi_b - phi_l - theta_b
    keep = (xa >= 0) & (xa <= np.pi) & (xb >= 0) & (xb <= np.pi)
    pa = clock_transition_probability(phi_a, phi_l, theta_a)
    pb = clock_transition_probability(phi_b, phi_l, theta_b)
    est = invert_phase_difference(pa[keep], pb[keep], theta_a[keep], theta_b[keep])
    assert keep.sum() > 1000
    np.testing.assert_allclose(est, (phi_a - phi_b)[keep], atol=1e-12)


# ---- calibration and branches --------------------------------------------

def test_calibration_points():
    ta, tb = calibrate_quadrature(RemoteConfig(true_dphi_ab=0.0))
    assert ta - tb == pytest.approx(-np.pi / 2)
    cfg = RemoteConfig(true_dphi_ab=np.pi / 2)
    ta, tb = calibrate_quadrature(cfg)
    assert cfg.prior - (ta - tb) == pytest.approx(np.pi / 2)
    assert ta - tb == pytest.approx(0.0)


def test_calibrated_ambiguity_rate_small():
    run = simulate_remote(calibrated(RemoteConfig(prior_var=0.01)), 10_000, seed=3)
    assert run.ambiguity_rate < 0.05


def test_ambiguity_rate_rises_with_prior_variance():
    rates = [simulate_remote(calibrated(RemoteConfig(prior_var=v)), 10_000, seed=4).ambiguity_rate
             for v in (0.01, 0.05, 0.2)]
    assert rates[0] < rates[1] < rates[2]


def test_guard_band_flags_fringe_extremes():
    cfg = calibrated(RemoteConfig(guard_epsilon=0.05))
    _, amb = resolve_branches(np.array([0.999, 0.5]), np.array([0.5, 0.5]), cfg)
    assert amb[0]


def test_large_atom_number_limit():
    cfg = calibrated(RemoteConfig(n_a=10**6, n_b=10**6))
    run = simulate_remote(cfg, 100, seed=6)
    assert np.all(np.abs(run.accepted - cfg.true_dphi_ab) < 1e-2)


def test_single_shot_api():
    cfg = calibrated(RemoteConfig())
    pa, pb, est, amb = simulate_remote_shot(cfg, substream(1, "shot"))
    assert 0 <= pa <= 1 and 0 <= pb <= 1 and isinstance(amb, bool)
    pa2, *_ = simulate_remote_shot(cfg, substream(1, "shot"), phi_l=operating_point_phase(cfg))
    assert 0 <= pa2 <= 1


# ---- variance --------------------------------------------------------------

def test_variance_at_quadrature_operating_point():
    run = simulate_remote(at_operating_point(), 10_000, seed=10)
    assert run.variance == pytest.approx(0.02, rel=0.05)


def exact_variance(cfg, phi_l, width=8.0):
    """Variance of the branch-resolved estimator by summing over the binomial support."""
    pa = clock_transition_probability(cfg.true_dphi_ab, phi_l, cfg.theta_a)
    pb = clock_transition_probability(0.0, phi_l, cfg.theta_b)
    axes = []
    for n, p in ((cfg.n_a, pa), (cfg.n_b, pb)):
        s = width * np.sqrt(n * p * (1 - p))
        k = np.arange(max(0, int(n * p - s)), min(n, int(n * p + s)) + 1)
        axes.append((k / n, binom.pmf(k, n, p)))
    (xa, wa), (xb, wb) = axes
    ga, gb = np.meshgrid(xa, xb, indexing="ij")
    est, amb = resolve_branches(ga.ravel(), gb.ravel(), cfg)
    w = np.outer(wa, wb).ravel() * ~amb
    w /= w.sum()
    mean = np.sum(w * est)
    return float(np.sum(w * (est - mean) ** 2))


@pytest.mark.parametrize("n, rel", [(100, 0.05), (10_000, 0.01)])
def test_variance_converges_to_projection_formula(n, rel):
    cfg = at_operating_point(n_a=n, n_b=n)
    var = exact_variance(cfg, operating_point_phase(cfg))
    assert var == pytest.approx(cfg.projection_variance, rel=rel)


def test_variance_formula_single_atom():
    assert RemoteConfig(n_a=1, n_b=1).projection_variance == 2.0


# ---- common mode -----------------------------------------------------------

@pytest.mark.parametrize("kind", ["uniform-random", "random-walk", "flicker"])
def test_synchronised_estimate_is_unbiased(kind):
    cfg = calibrated(RemoteConfig(laser_noise=LaserNoiseModel(kind=kind)))
    run = simulate_remote(cfg, 10_000, seed=12)
    assert abs(run.bias) < 3 * run.standard_error


@given(st.floats(0.1, 3.0))
def test_synchronised_bias_independent_of_noise_size(step):
    cfg = calibrated(RemoteConfig(laser_noise=LaserNoiseModel(kind="random-walk", step=step)))
    run = simulate_remote(cfg, 2000, seed=13)
    assert abs(run.bias) < 4 * run.standard_error


def test_desynchronised_noise_restores_laser_noise():
    cfg = calibrated(RemoteConfig(synchronized=False,
                                  laser_noise=LaserNoiseModel(kind="random-walk", step=1.0)))
    run = simulate_remote(cfg, 10_000, seed=14)
    assert run.variance >= 2 * cfg.projection_variance


def test_parallel_matches_serial():
    cfg = calibrated(RemoteConfig())
    a = simulate_remote(cfg, 5000, seed=15)
    b = simulate_remote(cfg, 5000, seed=15, workers=2)
    np.testing.assert_array_equal(a.estimates, b.estimates)


def test_laser_noise_validation():
    with pytest.raises(ValueError):
        LaserNoiseModel(kind="pink")
    with pytest.raises(ValueError):
        RemoteConfig(n_a=0)


# ---- instability -----------------------------------------------------------

def test_comparison_instability_points():
    spec = ClockSpec(nu=1 / (2 * np.pi))
    cfg = RemoteConfig(n_a=2, n_b=2, t=1.0)
    assert comparison_instability(cfg, 1.0, spec) == pytest.approx(1.0)
    big = RemoteConfig(n_a=4, n_b=4, t=1.0)
    assert comparison_instability(cfg, 1.0, spec) / comparison_instability(big, 1.0, spec) == \
        pytest.approx(np.sqrt(2))


def test_comparison_instability_against_mpmath():
    oracle = mpmath.sqrt(mpmath.mpf("0.02")) / (2 * mpmath.pi * mpmath.mpf("1.121e15")
                                                 * mpmath.sqrt(3))
    assert float(oracle) == pytest.approx(1.16e-17, rel=0.005)
    got = comparison_instability(RemoteConfig(t=3.0), 1.0, ClockSpec())
    assert got == pytest.approx(float(oracle), rel=1e-12)
