import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deadreckon.motion import (
    MotionState,
    MotionThresholds,
    MotionWindow,
    classify_motion,
    compute_motion_windows,
    states_at,
    zero_velocity_update,
)

from conftest import simulated_bundle


def window(var_accel, var_gyro=0.0001):
    return MotionWindow(t_start=0.0, t_end=1.0, var_accel=var_accel, var_gyro=var_gyro)


class TestClassifyMotion:
    def test_stopped_variance_level(self):
        assert classify_motion(window(0.01)) is MotionState.STOPPED

    @pytest.mark.parametrize("var_accel", [0.6, 0.4])
    def test_driving_and_cruise_variance_levels(self, var_accel):
        assert classify_motion(window(var_accel)) is MotionState.MOVING

    def test_gyro_alone_can_indicate_motion(self):
        assert classify_motion(window(0.01, var_gyro=0.02)) is MotionState.MOVING

    @settings(max_examples=50, deadline=None)
    @given(
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=0.01),
        st.floats(min_value=0.0, max_value=1.0),
        st.floats(min_value=0.0, max_value=1.0),
    )
    def test_monotonicity(self, va, vg, fa, fg):
        # shrinking both variances can never flip Stopped back to Moving
        base = window(va, vg)
        if classify_motion(base) is MotionState.STOPPED:
            smaller = window(va * fa, vg * fg)
            assert classify_motion(smaller) is MotionState.STOPPED


class TestZeroVelocityUpdate:
    def test_stopped_clamps_to_zero(self):
        assert zero_velocity_update(3.2, MotionState.STOPPED) == 0.0

    def test_moving_passes_through(self):
        assert zero_velocity_update(3.2, MotionState.MOVING) == 3.2

    def test_negative_speed_rejected(self):
        with pytest.raises(ValueError):
            zero_velocity_update(-0.1, MotionState.MOVING)


class TestWindows:
    def test_window_invariants(self):
        with pytest.raises(ValueError):
            MotionWindow(t_start=0.0, t_end=0.3, var_accel=0.0, var_gyro=0.0)
        with pytest.raises(ValueError):
            MotionWindow(t_start=0.0, t_end=1.0, var_accel=-0.1, var_gyro=0.0)

    def test_compute_windows_separates_still_and_shaky(self):
        rng = np.random.default_rng(0)
        rate = 20.0
        t = np.arange(int(20 * rate)) / rate
        accel = np.tile([0.0, 0.0, 9.81], (len(t), 1))
        gyro = np.zeros((len(t), 3))
        moving = t >= 10.0
        accel[moving] += rng.normal(0.0, 0.65, (int(moving.sum()), 3))
        gyro[moving] += rng.normal(0.0, 0.09, (int(moving.sum()), 3))
        windows = compute_motion_windows(t, accel, gyro)
        states = [classify_motion(w) for w in windows]
        for w, s in zip(windows, states):
            if w.t_end <= 10.0:
                assert s is MotionState.STOPPED
            elif w.t_start >= 10.5:
                assert s is MotionState.MOVING

    def test_simulator_agreement_rate(self):
        # classification matches ground-truth motion on >= 99% of windows,
        # excluding windows that straddle a stop/start transition
        _, truth, trace, _ = simulated_bundle("downtown")
        windows = compute_motion_windows(trace.imu_t, trace.imu_accel, trace.imu_gyro)
        agree = total = 0
        for w in windows:
            lo, hi = np.searchsorted(truth.t, [w.t_start, w.t_end])
            span = truth.moving[lo:hi]
            if span.size == 0 or (span.any() and not span.all()):
                continue  # transition window
            total += 1
            expected = MotionState.MOVING if span.all() else MotionState.STOPPED
            if classify_motion(w) is expected:
                agree += 1
        assert total > 100
        assert agree / total >= 0.99

    def test_states_at_nearest_window(self):
        windows = [
            MotionWindow(0.0, 1.0, 0.0, 0.0),
            MotionWindow(1.0, 2.0, 0.5, 0.0),
        ]
        states = [MotionState.STOPPED, MotionState.MOVING]
        out = states_at(windows, states, np.array([0.0, 0.4, 1.2, 2.5]))
        assert out == [MotionState.STOPPED, MotionState.STOPPED,
                       MotionState.MOVING, MotionState.MOVING]
