from dataclasses import replace

import numpy as np
import pytest
from scipy import integrate

from app.bounds import (
    HealthyBounds,
    asymptotic_limits,
    attack_envelope,
    detectability,
    e1_healthy_bounds,
    e2dot_healthy_bounds,
    healthy_bounds,
    r_delta_convolution,
)
from app.errors import ConfigurationError
from app.observer import ObserverGains
from app.vehicle import AttackSignal

M_DIAG = [0.5, 11.5, 0.2, 2.0]
HOLD = 0.01


@pytest.fixture
def gains():
    return ObserverGains.from_diagonals(-0.1, M_DIAG, [1.0, 1.0, 1.0, 1.0])


@pytest.fixture
def bounds(canonical, gains):
    return healthy_bounds(canonical, gains, 0.5, HOLD)


def test_e1_bounds_start_at_initial_bound(canonical):
    upper, lower = e1_healthy_bounds(canonical, canonical.zeta_bar, canonical.eta_bar, 0.5, 0.0)
    np.testing.assert_allclose(upper, [0.5])
    np.testing.assert_allclose(lower, [-0.5])


def test_e1_bounds_reach_limit(canonical):
    upper, lower = e1_healthy_bounds(canonical, canonical.zeta_bar, canonical.eta_bar, 0.5, 10.0)
    np.testing.assert_allclose(upper, [1.0], atol=1e-9)
    np.testing.assert_allclose(lower, [-1.0], atol=1e-9)


def test_e1_bounds_vanish_without_uncertainty(canonical):
    upper, lower = e1_healthy_bounds(canonical, np.zeros(4), 0.0, 0.0, 3.0)
    np.testing.assert_array_equal(upper, [0.0])
    np.testing.assert_array_equal(lower, [0.0])


def test_e1_upper_bound_matches_ode_solution(canonical):
    drive = np.abs(canonical.A12) @ canonical.zeta_bar + np.abs(canonical.E1) * canonical.eta_bar
    times = np.linspace(0.0, 2.0, 100)
    sol = integrate.solve_ivp(
        lambda _t, e: canonical.A11 @ e + drive, (0.0, 2.0), [0.5], t_eval=times, rtol=1e-11, atol=1e-12
    )
    for t, expected in zip(times, sol.y[0]):
        upper, _ = e1_healthy_bounds(canonical, canonical.zeta_bar, canonical.eta_bar, 0.5, t)
        assert upper[0] == pytest.approx(expected, abs=1e-6)


def test_confinement_and_rate_band_values(bundle):
    healthy, limits = bundle.healthy, bundle.limits
    np.testing.assert_allclose(healthy.e2_tilde, [0.1596, 0.4277, 0.0340, 0.1889], atol=2e-4)
    np.testing.assert_allclose(healthy.w, [0.4597, 0.2744, 0.1957, 1.8889], atol=2e-4)
    np.testing.assert_allclose(limits.lower_inf, [0.0403, 10.2256, 0.0043, 0.1111], atol=2e-4)
    np.testing.assert_allclose(limits.upper_inf, [0.9597, 12.7744, 0.3957, 3.8889], atol=2e-4)
    np.testing.assert_allclose(limits.nu_fil_bar, [0.4999, 1.1279, 0.2000, 1.9834], atol=2e-4)


def test_detectability_threshold(bundle):
    assert bundle.detectability.delta[1] == pytest.approx(2.5488, abs=2e-4)
    assert bundle.detectability.min_constant_attack == pytest.approx(2.5488, abs=2e-4)


def test_continuous_time_confinement_is_noise_bound(canonical, gains):
    b = healthy_bounds(canonical, gains, 0.5, 0.0)
    np.testing.assert_allclose(b.e2_tilde, canonical.zeta_bar)


def test_rate_bounds_collapse_to_gain_without_uncertainty(canonical, gains):
    quiet = replace(canonical, zeta_bar=np.zeros(4), eta_bar=0.0)
    b = HealthyBounds(quiet, gains, 0.0, 0.0)
    upper, lower = e2dot_healthy_bounds(quiet, gains, b, 1.0)
    np.testing.assert_allclose(upper, M_DIAG)
    np.testing.assert_allclose(lower, M_DIAG)


def test_rate_bounds_widen_with_mismatch(canonical, gains):
    narrow = healthy_bounds(canonical, gains, 0.5, HOLD)
    wide = healthy_bounds(replace(canonical, eta_bar=2.0), gains, 0.5, HOLD)
    for t in (0.0, 0.05, 1.0):
        assert np.all(wide.e2dot_upper0(t) >= narrow.e2dot_upper0(t))
        assert np.all(wide.e2dot_lower0(t) <= narrow.e2dot_lower0(t))


def test_tabulated_rates_match_closed_form(bounds):
    up, lo = bounds.tabulate(0.001, 300)
    assert up.shape == lo.shape == (301, 4)
    for k in (0, 1, 17, 300):
        np.testing.assert_allclose(up[k], bounds.e2dot_upper0(k * 0.001), atol=1e-9)
        np.testing.assert_allclose(lo[k], bounds.e2dot_lower0(k * 0.001), atol=1e-9)
    assert np.all(lo >= 0)


def test_long_hold_period_rejected(canonical, gains):
    with pytest.raises(ConfigurationError):
        healthy_bounds(canonical, gains, 0.5, 0.2)
    with pytest.raises(ConfigurationError):
        healthy_bounds(canonical, gains, 0.5, -0.01)


def test_r_delta_zero_attack(canonical):
    response = r_delta_convolution(canonical, AttackSignal(), 2.0, 0.001)
    np.testing.assert_array_equal(response.r_delta, 0.0)
    np.testing.assert_array_equal(response.r, 0.0)


def test_r_delta_constant_attack_limit(canonical):
    attack = AttackSignal(kind="step", onset=0.0, magnitude=3.0)
    response = r_delta_convolution(canonical, attack, 3.0, 0.001)
    assert response.r_delta[-1, 0] == pytest.approx(-3.0, abs=1e-4)
    np.testing.assert_allclose(response.r[-1], [0.0, 3.0, 0.0, 0.0], atol=1e-4)


def test_r_delta_rejects_bad_step(canonical):
    with pytest.raises(ConfigurationError):
        r_delta_convolution(canonical, AttackSignal(), 1.0, 0.0)


def test_attack_envelope(canonical):
    np.testing.assert_allclose(attack_envelope(canonical), [10.0], rtol=1e-6)


def test_eoi_threshold_tends_to_gain_for_fast_filter(canonical, bounds):
    fast = ObserverGains.from_diagonals(-0.1, M_DIAG, [1e6] * 4)
    limits = asymptotic_limits(canonical, fast, healthy_bounds(canonical, fast, 0.5, HOLD))
    np.testing.assert_allclose(limits.nu_fil_bar, M_DIAG, rtol=1e-9)


def test_eoi_threshold_tends_to_disturbance_for_slow_filter(canonical):
    slow = ObserverGains.from_diagonals(-0.1, M_DIAG, [1e-9] * 4)
    limits = asymptotic_limits(canonical, slow, healthy_bounds(canonical, slow, 0.5, HOLD))
    np.testing.assert_allclose(limits.nu_fil_bar, limits.U_bar, atol=1e-6)


def test_weak_switching_gain_rejected(canonical):
    weak = ObserverGains.from_diagonals(-0.1, [0.5, 1.0, 0.2, 2.0], [1.0] * 4)
    with pytest.raises(ConfigurationError):
        asymptotic_limits(canonical, weak, healthy_bounds(canonical, weak, 0.5, HOLD))


def test_detectability_without_attack_path(canonical, bounds, gains):
    limits = asymptotic_limits(canonical, gains, bounds)
    blind = replace(canonical, F1=np.zeros(1), F2=np.zeros(4))
    assert detectability(blind, limits).min_constant_attack == float("inf")
