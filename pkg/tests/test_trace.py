import json

import numpy as np
import pytest

from deadreckon.simulator import NoiseSpec, generate_ground_truth, synthesize_gps, synthesize_imu
from deadreckon.trace import (
    EmptyTraceError,
    GpsFix,
    ImuSample,
    Trace,
    TraceFormatError,
    TraceOrderError,
    load_trace,
    partition_slots,
    save_trace,
)

from conftest import simulated_bundle


def imu_line(t, ax=0.0, ay=0.0, az=9.81):
    return json.dumps({"type": "imu", "t": t, "ax": ax, "ay": ay, "az": az,
                       "gx": 0.0, "gy": 0.0, "gz": 0.0, "mx": 50.0, "my": 0.0, "mz": 0.0})


def gps_line(t, lat=41.9, lon=-87.6, acc=5.0, speed=None):
    rec = {"type": "gps", "t": t, "lat": lat, "lon": lon, "acc": acc}
    if speed is not None:
        rec["speed"] = speed
    return json.dumps(rec)


def make_imu_series(t0, t1, rate=20.0):
    times = np.arange(round(t0 * rate), round(t1 * rate) + 1) / rate
    return [
        ImuSample(t=float(t), accel=np.array([0.0, 0.0, 9.81]),
                  gyro=np.zeros(3), mag=np.array([50.0, 0.0, 0.0]))
        for t in times
    ]


class TestLoadTrace:
    def test_small_file_round_trip_counts(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("\n".join([imu_line(0.0), imu_line(0.05), gps_line(1.0)]) + "\n")
        trace = load_trace(path)
        assert len(trace.imu) == 2
        assert len(trace.gps) == 1

    def test_decreasing_timestamps_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("\n".join([imu_line(1.0), imu_line(0.5)]) + "\n")
        with pytest.raises(TraceOrderError, match="line 2"):
            load_trace(path)

    def test_parse_error_reports_line_number(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(imu_line(0.0) + "\n{not json\n")
        with pytest.raises(TraceFormatError, match="line 2"):
            load_trace(path)

    def test_missing_field_reports_line_number(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({"type": "imu", "t": 0.0}) + "\n")
        with pytest.raises(TraceFormatError, match="line 1"):
            load_trace(path)

    def test_unknown_type_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({"type": "wifi", "t": 0.0}) + "\n")
        with pytest.raises(TraceFormatError, match="wifi"):
            load_trace(path)

    def test_empty_trace_rejected(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(gps_line(0.0) + "\n")
        with pytest.raises(EmptyTraceError):
            load_trace(path)

    def test_emit_load_identity_bit_exact(self, tmp_path):
        # the simulator-emitted file must load back to the in-memory trace
        _, truth, trace, _ = simulated_bundle("cruise")
        path = tmp_path / "trace.jsonl"
        save_trace(trace, path)
        loaded = load_trace(path)
        assert len(loaded.imu) == len(trace.imu)
        assert len(loaded.gps) == len(trace.gps)
        np.testing.assert_array_equal(loaded.imu_t, trace.imu_t)
        np.testing.assert_array_equal(loaded.imu_accel, trace.imu_accel)
        np.testing.assert_array_equal(loaded.imu_gyro, trace.imu_gyro)
        np.testing.assert_array_equal(loaded.imu_mag, trace.imu_mag)
        for a, b in zip(loaded.gps, trace.gps):
            assert (a.t, a.lat, a.lon, a.accuracy, a.speed) == (b.t, b.lat, b.lon, b.accuracy, b.speed)

    def test_speed_optional_round_trip(self, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("\n".join([imu_line(0.0), gps_line(0.5), gps_line(1.0, speed=3.25)]) + "\n")
        trace = load_trace(path)
        assert trace.gps[0].speed is None
        assert trace.gps[1].speed == 3.25
        out = tmp_path / "t2.jsonl"
        save_trace(trace, out)
        again = load_trace(out)
        assert again.gps[0].speed is None
        assert again.gps[1].speed == 3.25


class TestValidation:
    def test_gps_fix_invariants(self):
        with pytest.raises(ValueError):
            GpsFix(t=0.0, lat=95.0, lon=0.0, accuracy=5.0)
        with pytest.raises(ValueError):
            GpsFix(t=0.0, lat=0.0, lon=0.0, accuracy=0.0)
        with pytest.raises(ValueError):
            GpsFix(t=0.0, lat=0.0, lon=0.0, accuracy=5.0, speed=-1.0)

    def test_imu_sample_invariants(self):
        with pytest.raises(ValueError):
            ImuSample(t=-1.0, accel=np.zeros(3), gyro=np.zeros(3), mag=np.zeros(3))

    def test_trace_rejects_nonfinite(self):
        bad = [ImuSample(t=0.0, accel=np.array([0.0, 0.0, np.inf]),
                         gyro=np.zeros(3), mag=np.zeros(3))]
        with pytest.raises(ValueError, match="non-finite"):
            Trace(imu=bad, gps=[])

    def test_trace_rejects_unordered_imu(self):
        samples = make_imu_series(0.0, 1.0)
        with pytest.raises(TraceOrderError):
            Trace(imu=[samples[1], samples[0]], gps=[])


class TestPartitionSlots:
    def test_ten_second_trace_five_slots(self):
        trace = Trace(imu=make_imu_series(0.0, 10.0), gps=[])
        slots = partition_slots(trace, 2.0)
        assert len(slots) == 5
        assert all(s.duration == pytest.approx(2.0) for s in slots)

    def test_partition_exhaustive_and_disjoint(self):
        trace = Trace(imu=make_imu_series(0.0, 13.3), gps=[])
        slots = partition_slots(trace, 2.0)
        covered = []
        for s in slots:
            covered.extend(range(*s.imu_span))
        assert covered == list(range(len(trace.imu)))

    def test_gps_at_every_boundary(self):
        gps = [GpsFix(t=float(t), lat=41.9, lon=-87.6, accuracy=5.0) for t in (2, 4, 6, 8, 10)]
        trace = Trace(imu=make_imu_series(0.0, 10.0), gps=gps)
        slots = partition_slots(trace, 2.0)
        assert all(s.gps_at_end is not None for s in slots)
        assert [s.gps_at_end.t for s in slots] == [2.0, 4.0, 6.0, 8.0, 10.0]

    def test_fix_outside_half_slot_ignored(self):
        gps = [GpsFix(t=0.9, lat=41.9, lon=-87.6, accuracy=5.0)]
        trace = Trace(imu=make_imu_series(0.0, 2.0), gps=gps)
        (slot,) = partition_slots(trace, 2.0)
        assert slot.gps_at_end is None  # 1.1 s from the slot end > slot_s/2

    def test_dropout_slots_have_no_fix(self):
        scenario, truth, trace, _ = simulated_bundle("downtown")
        slots = partition_slots(trace, 2.0)
        for lo, hi in truth.dropouts:
            inside = [s for s in slots if lo + 1.0 <= s.t_end <= hi - 1.0]
            assert inside, "dropout should cover at least one slot"
            assert all(s.gps_at_end is None for s in inside)

    def test_invalid_slot_duration(self):
        trace = Trace(imu=make_imu_series(0.0, 2.0), gps=[])
        with pytest.raises(ValueError):
            partition_slots(trace, 0.0)
