import math

import numpy as np
import pytest

from deadreckon.orientation import (
    FrameAccel,
    HeadingState,
    WarmupError,
    earth_frame_accel,
    estimate_forward_axis,
    initial_state,
    mag_heading_deg,
    smooth_heading,
    update_orientation,
)
from deadreckon.simulator import NoiseSpec, generate_ground_truth, synthesize_imu
from deadreckon.trace import ImuSample

from conftest import simulated_bundle

G = 9.80665


def sample(t, accel=(0.0, 0.0, G), gyro=(0.0, 0.0, 0.0), heading_for_mag=0.0):
    h = math.radians(heading_for_mag)
    return ImuSample(
        t=t,
        accel=np.array(accel, dtype=float),
        gyro=np.array(gyro, dtype=float),
        mag=50.0 * np.array([math.cos(h), math.sin(h), 0.0]),
    )


def run_filter(samples, state, **kw):
    for s in samples[1:]:
        state = update_orientation(state, s, **kw)
    return state


class TestHeadingFilter:
    def test_pure_gyro_integration_quarter_turn(self):
        rate = 20.0
        samples = [sample(i / rate, gyro=(0.0, 0.0, math.pi / 6)) for i in range(int(3 * rate) + 1)]
        state = initial_state(samples[0], heading_deg=0.0)
        state = run_filter(samples, state, mag_blend_k=0.0)
        assert state.heading == pytest.approx(90.0, abs=0.5)

    def test_full_mag_blend_snaps_to_north(self):
        samples = [sample(i / 20.0, heading_for_mag=0.0) for i in range(41)]
        state = initial_state(samples[0], heading_deg=137.0)
        state = run_filter(samples, state, mag_blend_k=1.0)
        assert state.heading == pytest.approx(0.0, abs=1e-9)

    def test_gyro_bias_bounded_by_mag_correction(self):
        # constant 0.01 rad/s bias, truth heading 0; error settles below 5 deg
        rate = 20.0
        samples = [sample(i / rate, gyro=(0.0, 0.0, 0.01)) for i in range(int(60 * rate) + 1)]
        state = initial_state(samples[0], heading_deg=0.0)
        state = run_filter(samples, state, mag_blend_k=0.02)
        err = min(state.heading, 360.0 - state.heading)
        assert err < 5.0

    def test_non_monotonic_time_rejected(self):
        state = initial_state(sample(1.0), heading_deg=0.0)
        with pytest.raises(ValueError, match="non-monotonic"):
            update_orientation(state, sample(1.0))

    def test_heading_always_normalized(self):
        rng = np.random.default_rng(7)
        state = initial_state(sample(0.0), heading_deg=0.0)
        t = 0.0
        for _ in range(500):
            t += 0.05
            s = sample(t, gyro=(0.0, 0.0, rng.uniform(-2.0, 2.0)), heading_for_mag=rng.uniform(0, 360))
            state = update_orientation(state, s, mag_blend_k=0.05)
            assert 0.0 <= state.heading < 360.0


class TestEarthFrameAccel:
    def test_stationary_cancels_gravity(self):
        s = sample(0.0)
        state = initial_state(s, heading_deg=0.0)
        out = earth_frame_accel(state, s)
        assert out == pytest.approx((0.0, 0.0, 0.0), abs=0.05)

    def test_forward_acceleration_extracted(self):
        state = initial_state(sample(0.0), heading_deg=0.0)
        moving = sample(0.05, accel=(2.0, 0.0, G))
        out = earth_frame_accel(state, moving)
        assert out.forward == pytest.approx(2.0, abs=1e-9)
        assert out.lateral == pytest.approx(0.0, abs=1e-9)

    def test_lateral_sign_is_leftward(self):
        state = initial_state(sample(0.0), heading_deg=0.0)
        out = earth_frame_accel(state, sample(0.05, accel=(0.0, 1.5, G)))
        assert out.lateral == pytest.approx(1.5, abs=1e-9)

    def test_warmup_required(self):
        state = HeadingState(heading=0.0, gravity_est=np.array([0.0, 0.0, 0.5]), t_last=0.0)
        with pytest.raises(WarmupError):
            earth_frame_accel(state, sample(1.0))

    def test_noiseless_simulator_recovery(self):
        # commanded forward accel recovered through the filter, RMSE < 0.1
        _, truth, _, _ = simulated_bundle("cruise")
        from deadreckon.scenarios import cruise_scenario
        imu = synthesize_imu(truth, NoiseSpec.noiseless())
        state = initial_state(imu[0])
        recovered = [earth_frame_accel(state, imu[0]).forward]
        for s in imu[1:]:
            state = update_orientation(state, s)
            recovered.append(earth_frame_accel(state, s).forward)
        rmse = float(np.sqrt(np.mean((np.array(recovered) - truth.accel) ** 2)))
        assert rmse < 0.1


class TestSmoothHeading:
    def test_window_one_is_identity(self):
        series = [10.0, 350.0, 90.0]
        assert smooth_heading(series, 1) == pytest.approx(series)

    def test_constant_series_unchanged(self):
        assert smooth_heading([42.0] * 10, 5) == pytest.approx([42.0] * 10)

    def test_wraparound_average(self):
        out = smooth_heading([358.0, 0.0, 2.0], 3)
        assert out[1] == pytest.approx(0.0, abs=1e-9)
        assert len(out) == 3

    @pytest.mark.parametrize("window", [0, 2, 4, -1])
    def test_even_or_nonpositive_window_rejected(self, window):
        with pytest.raises(ValueError):
            smooth_heading([0.0, 1.0], window)

    def test_length_preserved(self):
        rng = np.random.default_rng(5)
        series = rng.uniform(0, 360, 47)
        assert len(smooth_heading(series, 9)) == 47


class TestMountCalibration:
    def test_recovers_yawed_mount_axis(self):
        # phone yawed 30 deg clockwise: vehicle-forward accel appears rotated
        yaw = math.radians(30.0)
        rate = 20.0
        samples = [sample(i / rate) for i in range(20)]
        for i in range(20, 80):
            ax = 2.0 * math.cos(yaw)
            ay = 2.0 * math.sin(yaw)
            samples.append(sample(i / rate, accel=(ax, ay, G)))
        axis = estimate_forward_axis(samples)
        assert axis[0] == pytest.approx(math.cos(yaw), abs=1e-6)
        assert axis[1] == pytest.approx(math.sin(yaw), abs=1e-6)

    def test_no_event_raises(self):
        samples = [sample(i / 20.0) for i in range(100)]
        with pytest.raises(ValueError, match="no sustained"):
            estimate_forward_axis(samples)


def test_mag_heading_convention():
    gravity = np.array([0.0, 0.0, G])
    for heading in (0.0, 90.0, 180.0, 271.5):
        h = math.radians(heading)
        mag = 50.0 * np.array([math.cos(h), math.sin(h), 0.0])
        assert mag_heading_deg(mag, gravity) == pytest.approx(heading, abs=1e-9)
