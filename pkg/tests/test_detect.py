import numpy as np
import pytest

from app.detect import (
    AlarmTracker,
    EoiDetectorState,
    NovelDetectorState,
    check_novel_detection,
    eoi_threshold_check,
    propagate_bounds,
    reset_bounds_at_measurement,
)

ZETA = np.array([0.15, 0.3, 0.03, 0.15])


def _reset(e_y, state=None, **kwargs):
    state = state or NovelDetectorState.initial(4)
    return reset_bounds_at_measurement(state, np.asarray(e_y, dtype=float), ZETA, **kwargs)


def test_reset_clamps_to_noise_band():
    state = _reset([0.1, 0.0, 0.0, 0.0])
    assert state.e2_upper[0] == pytest.approx(0.15)
    assert state.e2_lower[0] == pytest.approx(-0.05)
    assert not check_novel_detection(state)[0]


def test_reset_zero_innovation_is_symmetric():
    state = _reset(np.zeros(4))
    np.testing.assert_allclose(state.e2_upper, ZETA)
    np.testing.assert_allclose(state.e2_lower, -ZETA)


def test_large_innovation_alarms_immediately():
    state = _reset([0.4, 0.0, 0.0, 0.0])
    assert state.e2_upper[0] == pytest.approx(0.15)
    assert state.e2_lower[0] == pytest.approx(0.25)
    np.testing.assert_array_equal(check_novel_detection(state), [True, False, False, False])


def test_reset_uses_confinement_band_when_given():
    state = _reset([0.1, 0.0, 0.0, 0.0], e2_tilde=ZETA + 0.05, t=0.01)
    assert state.e2_upper[0] == pytest.approx(0.2)
    assert state.e2_lower[0] == pytest.approx(-0.05)
    assert state.last_measurement_time == 0.01


def test_reset_intersects_with_transported_bounds():
    state = _reset([-0.1, 0.1, 0.0, 0.0])
    state.e2_upper = np.array([-0.2, 0.5, 1.0, 1.0])
    state.e2_lower = np.array([-1.0, 0.2, -1.0, -1.0])
    state = _reset([-0.1, 0.1, 0.0, 0.0], state=state)
    assert state.e2_upper[0] == pytest.approx(-0.2)
    assert state.e2_lower[1] == pytest.approx(0.2)
    # channels that never saw a nonzero innovation are rebuilt from scratch
    np.testing.assert_allclose(state.e2_upper[2:], ZETA[2:])


def test_propagate_constant_rates():
    state = _reset([-0.1, -0.1, -0.1, -0.1])
    upper, lower = state.e2_upper.copy(), state.e2_lower.copy()
    m = np.array([0.5, 11.5, 0.2, 2.0])
    for _ in range(10):
        propagate_bounds(state, (m, m), 0.001)
    np.testing.assert_allclose(state.e2_upper - upper, 0.01 * m)
    np.testing.assert_allclose(state.e2_lower - lower, 0.01 * m)


def test_propagate_sign_symmetry():
    up, lo = np.array([3.0, 3.0, 3.0, 3.0]), np.array([1.0, 1.0, 1.0, 1.0])
    neg = _reset(-0.01 * np.ones(4))
    pos = _reset(0.01 * np.ones(4))
    n_up, n_lo = neg.e2_upper.copy(), neg.e2_lower.copy()
    p_up, p_lo = pos.e2_upper.copy(), pos.e2_lower.copy()
    propagate_bounds(neg, (up, lo), 0.01)
    propagate_bounds(pos, (up, lo), 0.01)
    np.testing.assert_allclose(pos.e2_upper - p_up, -(neg.e2_lower - n_lo))
    np.testing.assert_allclose(pos.e2_lower - p_lo, -(neg.e2_upper - n_up))


def test_propagate_trapezoid():
    state = _reset(-0.01 * np.ones(4))
    before = state.e2_upper.copy()
    propagate_bounds(state, (np.ones(4), np.zeros(4)), 0.1, rates_next=(3 * np.ones(4), np.zeros(4)))
    np.testing.assert_allclose(state.e2_upper - before, 0.2)


def test_propagate_holds_without_sign():
    state = _reset(np.zeros(4))
    before = (state.e2_upper.copy(), state.e2_lower.copy())
    propagate_bounds(state, (np.ones(4), np.ones(4)), 0.1)
    np.testing.assert_array_equal(state.e2_upper, before[0])
    np.testing.assert_array_equal(state.e2_lower, before[1])


def test_zero_innovation_keeps_previous_sign():
    state = _reset([-0.1, 0.1, 0.0, 0.0])
    state = _reset([0.0, 0.0, 0.0, 0.0], state=state)
    np.testing.assert_array_equal(state.last_sign, [-1, 1, 0, 0])


def test_equal_bounds_do_not_alarm():
    state = NovelDetectorState.initial(4)
    state.e2_upper = np.array([0.1, 0.0, 0.0, 0.0])
    state.e2_lower = np.array([0.1, -1.0, -1.0, -1.0])
    assert not check_novel_detection(state).any()


def test_eoi_threshold_is_strict():
    thresholds = EoiDetectorState(nu_fil_upper=np.array([0.5, 1.1, 0.2, 2.0]))
    assert not eoi_threshold_check(np.zeros(4), thresholds).any()
    assert not eoi_threshold_check(thresholds.nu_fil_upper, thresholds).any()
    assert not eoi_threshold_check(thresholds.nu_fil_lower, thresholds).any()
    np.testing.assert_array_equal(
        eoi_threshold_check([0.0, -1.2, 0.0, 2.5], thresholds), [False, True, False, True]
    )


def _feed(tracker, samples):
    for t, flag in samples:
        tracker.update(t, [flag, False])
    return tracker.finish()


def test_tracker_separates_blips_from_persistent_alarms():
    tracker = AlarmTracker("novel", 2, dwell=0.05)
    samples = [(round(0.01 * k, 2), 10 <= k <= 11 or 20 <= k <= 30) for k in range(40)]
    events = _feed(tracker, samples)
    assert [(e.time, e.persisted) for e in events] == [(0.1, False), (0.2, True)]
    assert tracker.first_alarm_time == 0.1
    assert tracker.first_persistent_time == 0.2
    assert tracker.first_persistent_channel() == 0
    assert events[1].last_seen == pytest.approx(0.3)


def test_tracker_closes_open_event_on_finish():
    tracker = AlarmTracker("eoi", 2, dwell=0.05)
    events = _feed(tracker, [(0.0, False), (1.0, True), (1.1, True)])
    assert len(events) == 1
    assert events[0].persisted
    assert events[0].to_dict() == {
        "detector": "eoi",
        "channel": 0,
        "time": 1.0,
        "persisted": True,
        "last_seen": 1.1,
    }


def test_tracker_without_alarms():
    tracker = AlarmTracker("novel", 4)
    for k in range(10):
        tracker.update(k * 0.01, np.zeros(4, dtype=bool))
    assert tracker.finish() == []
    assert tracker.first_alarm_time is None
    assert tracker.first_persistent_channel() is None
