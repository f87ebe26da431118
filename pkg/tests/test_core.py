import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from corrspec.core import (ClockSpec, ContrastModel, PhasePair, averaged_correlation,
                           duty_cycle_factor, fractional_shift_from_slope, instability,
                           joint_correlation_probability, lifetime_contrast,
                           lifetime_limited_instability, optimal_probe_time, q_coherence,
                           q_spectroscopic, ramsey_transition_probability,
                           scanned_instability, slope_from_fractional_shift)

mpmath.mp.dps = 40

phases = st.floats(-50.0, 50.0, allow_nan=False)
contrasts = st.floats(0.0, 0.5)


# ---- oracle values -------------------------------------------------------

@pytest.mark.parametrize("dphi, expected", [(0.0, 1.0), (np.pi, 0.0), (np.pi / 2, 0.5)])
def test_ramsey_probability_points(dphi, expected):
    assert ramsey_transition_probability(dphi) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("pair, expected", [((0, 0), 1.0), ((0, np.pi), 0.0),
                                            ((np.pi / 2, 0), 0.5)])
def test_joint_probability_points(pair, expected):
    assert joint_correlation_probability(PhasePair(*pair)) == pytest.approx(expected, abs=1e-15)


def test_averaged_correlation_points():
    assert averaged_correlation(0.0, 0.5) == pytest.approx(0.75)
    for c in (0.0, 0.2, 0.5):
        assert averaged_correlation(np.pi / 2, c) == pytest.approx(0.5)


# the quoted 0.43232 is a rounding slip; the oracle gives 0.4322383
@pytest.mark.parametrize("t, expected, tol", [(20.6, "0.18394", 5e-6), (3.0, "0.43232", 2e-4)])
def test_lifetime_contrast_against_mpmath(t, expected, tol):
    oracle = mpmath.mpf("0.5") * mpmath.exp(-mpmath.mpf(t) / mpmath.mpf("20.6"))
    assert float(oracle) == pytest.approx(float(expected), abs=tol)
    assert lifetime_contrast(t, ClockSpec()) == pytest.approx(float(oracle), rel=1e-14)
    assert lifetime_contrast(0.0, ClockSpec()) == 0.5


def test_instability_at_optimum(spec):
    t = optimal_probe_time(spec)
    assert t == pytest.approx(10.3)
    sigma = instability(spec, 0.5 * math.exp(-0.5), t, 1.0)
    assert sigma == pytest.approx(1.4e-16, abs=0.1e-16)
    assert lifetime_limited_instability(spec, t) == pytest.approx(sigma, rel=1e-14)


def test_instability_session_value_against_mpmath(spec):
    nu, c, t, tau = mpmath.mpf("1.121e15"), mpmath.mpf("0.43232"), 3, 900
    oracle = 1 / (2 * mpmath.pi * nu * c * mpmath.sqrt(t * tau))
    assert float(oracle) == pytest.approx(6.3e-18, rel=0.01)
    assert instability(spec, 0.43232, 3.0, 900.0) == pytest.approx(float(oracle), rel=1e-12)


def test_instability_halving_contrast_doubles(spec):
    assert instability(spec, 0.2, 3.0, 1.0) == pytest.approx(2 * instability(spec, 0.4, 3.0, 1.0))


def test_q_factors_reference_values():
    spec = ClockSpec(nu=1.12e15)
    assert q_coherence(spec, 9.7) == pytest.approx(3.4e16, rel=0.02)
    assert q_spectroscopic(spec, 3.0) == pytest.approx(6.7e15, rel=0.02)
    assert q_coherence(ClockSpec(nu=1 / np.pi), 1.0) == pytest.approx(1.0)


def test_duty_cycle_points():
    assert duty_cycle_factor(3.0, ClockSpec(overhead=0.0)) == 1.0
    oracle = mpmath.mpf(3) / mpmath.mpf("3.1")
    assert float(oracle) == pytest.approx(0.96774, abs=5e-6)
    assert duty_cycle_factor(3.0, ClockSpec(overhead=0.1)) == pytest.approx(float(oracle))
    assert duty_cycle_factor(0.1, ClockSpec(overhead=0.1)) == pytest.approx(0.5)


def test_slope_shift_conversion_both_ways(spec):
    assert fractional_shift_from_slope(0.84, spec) == pytest.approx(1.19e-16, abs=0.08e-16)
    assert slope_from_fractional_shift(1.19e-16, spec) == pytest.approx(0.84, rel=0.07)
    assert slope_from_fractional_shift(fractional_shift_from_slope(0.84, spec), spec) == \
        pytest.approx(0.84)


def test_scanned_instability_factors(spec):
    base = instability(spec, 0.4, 3.0, 1.0)
    assert scanned_instability(spec, 0.4, 3.0, include_overhead=False) == \
        pytest.approx(np.sqrt(2) * base)
    assert scanned_instability(spec, 0.4, 3.0) == \
        pytest.approx(np.sqrt(2) * base / np.sqrt(3.0 / 3.1))


# ---- error handling ------------------------------------------------------

@pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
def test_non_finite_rejected(bad):
    with pytest.raises(ValueError):
        ramsey_transition_probability(bad)
    with pytest.raises(ValueError):
        PhasePair(bad, 0.0)


@pytest.mark.parametrize("c", [-0.01, 0.51])
def test_contrast_out_of_bounds(c):
    with pytest.raises(ValueError):
        averaged_correlation(0.0, c)


def test_negative_time_and_zero_contrast(spec):
    with pytest.raises(ValueError):
        lifetime_contrast(-1.0, spec)
    with pytest.raises(ValueError, match="unmeasurable"):
        instability(spec, 0.0, 3.0, 1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        ClockSpec(nu=-1.0)
    with pytest.raises(ValueError):
        ClockSpec(detection_fidelity=0.3)
    with pytest.raises(ValueError):
        ContrastModel(c0=0.7)
    assert ClockSpec.ideal().detection_contrast == 1.0
    assert ClockSpec().detection_contrast == pytest.approx(0.9604)


# ---- properties ----------------------------------------------------------

def test_joint_probability_product_identity_on_grid():
    d = np.linspace(-2 * np.pi, 2 * np.pi, 100)
    d1, d2 = np.meshgrid(d, d)
    p1, p2 = ramsey_transition_probability(d1), ramsey_transition_probability(d2)
    got = joint_correlation_probability(PhasePair(d1, d2))
    np.testing.assert_allclose(got, p1 * p2 + (1 - p1) * (1 - p2), atol=1e-14)


@given(phases, phases)
def test_joint_probability_identity(d1, d2):
    p1, p2 = ramsey_transition_probability(d1), ramsey_transition_probability(d2)
    got = joint_correlation_probability(PhasePair(d1, d2))
    assert got == pytest.approx(p1 * p2 + (1 - p1) * (1 - p2), abs=1e-14)
    assert 0.0 <= got <= 1.0


@given(phases)
def test_marginal_matches_quadrature_over_laser_phase(dphi):
    phi_l = np.linspace(0, 2 * np.pi, 10_000, endpoint=False)
    joint = joint_correlation_probability(PhasePair(phi_l, phi_l + dphi))
    assert abs(joint.mean() - averaged_correlation(dphi, 0.5)) < 1e-6


def test_marginal_matches_monte_carlo_over_laser_phase(rng):
    # brute force: draw phi_L, then correlated outcomes, for each grid phase
    n = 10**6
    for dphi in np.linspace(0, 2 * np.pi, 7):
        phi_l = rng.uniform(0, 2 * np.pi, n)
        p = joint_correlation_probability(PhasePair(phi_l, phi_l + dphi))
        frac = np.mean(rng.random(n) < p)
        expect = averaged_correlation(dphi, 0.5)
        assert abs(frac - expect) < 3 * np.sqrt(expect * (1 - expect) / n) + 1e-12


@given(phases, contrasts)
def test_probabilities_in_unit_interval(dphi, c):
    assert 0.0 <= ramsey_transition_probability(dphi) <= 1.0
    assert 0.0 <= averaged_correlation(dphi, c) <= 1.0


@given(st.floats(0.0, 500.0), st.floats(0.1, 100.0))
def test_contrast_bounded(t, t_prime):
    assert 0.0 <= lifetime_contrast(t, ClockSpec(t_prime=t_prime)) <= 0.5


@given(st.floats(0.01, 0.49), st.floats(0.01, 0.49), st.floats(0.1, 20), st.floats(1, 1e4))
def test_instability_monotone_in_contrast(c1, c2, t, tau):
    spec = ClockSpec()
    lo, hi = sorted((c1, c2))
    assert instability(spec, hi, t, tau) <= instability(spec, lo, t, tau)


@given(st.floats(1, 1e4), st.floats(1, 1e4))
def test_instability_monotone_in_tau(tau1, tau2):
    spec = ClockSpec()
    lo, hi = sorted((tau1, tau2))
    assert instability(spec, 0.3, 3.0, hi) <= instability(spec, 0.3, 3.0, lo)


@given(st.floats(1.0, 100.0))
def test_lifetime_instability_minimum_at_half_lifetime(t_prime):
    spec = ClockSpec(t_prime=t_prime)
    grid = np.linspace(0.01, 3 * t_prime, 3000)
    k = int(np.argmin(lifetime_limited_instability(spec, grid)))
    assert abs(grid[k] - optimal_probe_time(spec)) <= grid[1] - grid[0]
