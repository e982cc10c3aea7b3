"""Parsing, alignment, and aligned-CSV round trips."""

import numpy as np
import pytest

from flowstate.errors import (
    EmptyStream,
    MalformedRow,
    NoReferenceBefore,
    NonFiniteValue,
    NonMonotonicTime,
    UnknownStateToken,
)
from flowstate.records import (
    Dataset,
    LabelSample,
    SensorSample,
    SpeedSample,
    TrafficState,
    align_streams,
    class_distribution,
    parse_aligned_csv,
    parse_label_csv,
    parse_motion_csv,
    parse_speed_csv,
    write_aligned_csv,
)

MOTION_HEADER = "t,ax,ay,az,gx,gy,gz"


class TestParseMotion:
    def test_flat_rest_pose_row(self):
        # phone flat on its back: (ax, ay, az) = (0, 0, -1)
        text = MOTION_HEADER + "\n0.00,0,0,-1,0,0,0\n"
        samples = parse_motion_csv(text)
        assert samples == [SensorSample(0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0)]

    def test_header_only_gives_empty_list(self):
        assert parse_motion_csv(MOTION_HEADER + "\n") == []

    def test_non_monotonic_time_reports_line(self):
        text = MOTION_HEADER + "\n0.02,0,0,-1,0,0,0\n0.01,0,0,-1,0,0,0\n"
        with pytest.raises(NonMonotonicTime) as exc:
            parse_motion_csv(text)
        assert exc.value.line == 3

    def test_wrong_arity(self):
        with pytest.raises(MalformedRow) as exc:
            parse_motion_csv(MOTION_HEADER + "\n0.0,1,2\n")
        assert exc.value.line == 2

    def test_non_numeric_field(self):
        with pytest.raises(MalformedRow):
            parse_motion_csv(MOTION_HEADER + "\n0.0,a,0,0,0,0,0\n")

    def test_non_finite_value(self):
        with pytest.raises(NonFiniteValue):
            parse_motion_csv(MOTION_HEADER + "\n0.0,nan,0,0,0,0,0\n")

    def test_bad_header(self):
        with pytest.raises(MalformedRow) as exc:
            parse_motion_csv("time,ax,ay,az,gx,gy,gz\n")
        assert exc.value.line == 1


class TestParseSpeedAndLabels:
    def test_speed_row(self):
        assert parse_speed_csv("t,v\n0,12.5\n") == [SpeedSample(0.0, 12.5)]

    def test_state_tokens_case_insensitive(self):
        assert parse_label_csv("t,state\n0,FREE\n")[0].state is TrafficState.FREE
        assert parse_label_csv("t,state\n0,Congested\n")[0].state is TrafficState.CONGESTED

    def test_unknown_state_token(self):
        with pytest.raises(UnknownStateToken):
            parse_label_csv("t,state\n0,jam\n")

    def test_negative_speed_rejected(self):
        with pytest.raises(MalformedRow):
            parse_speed_csv("t,v\n0,-1\n")


def _motion(ts):
    return [SensorSample(t, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0) for t in ts]


class TestAlign:
    def test_single_hold_value(self):
        ds = align_streams(
            _motion([1.00, 1.02]),
            [SpeedSample(1.0, 5.0)],
            [LabelSample(1.0, TrafficState.FREE)],
        )
        assert len(ds) == 2
        assert np.all(ds.v == 5.0)
        assert np.all(ds.state == int(TrafficState.FREE))

    def test_most_recent_at_or_before(self):
        ds = align_streams(
            _motion([2.5]),
            [SpeedSample(1.0, 3.0), SpeedSample(2.0, 7.0)],
            [LabelSample(1.0, TrafficState.STEADY)],
        )
        assert ds.v[0] == 7.0

    def test_no_reference_before(self):
        with pytest.raises(NoReferenceBefore) as exc:
            align_streams(
                _motion([0.5, 1.5]),
                [SpeedSample(1.0, 3.0)],
                [LabelSample(1.0, TrafficState.FREE)],
            )
        assert exc.value.t == 0.5

    def test_drop_leading(self):
        ds = align_streams(
            _motion([0.5, 1.5]),
            [SpeedSample(1.0, 3.0)],
            [LabelSample(1.0, TrafficState.FREE)],
            drop_leading=True,
        )
        assert len(ds) == 1 and ds.t[0] == 1.5

    def test_empty_stream(self):
        with pytest.raises(EmptyStream):
            align_streams([], [SpeedSample(0, 1)], [LabelSample(0, TrafficState.FREE)])

    def test_output_length_matches_motion_when_no_drops(self):
        ts = np.arange(100) * 0.02 + 1.0
        ds = align_streams(
            _motion(ts),
            [SpeedSample(1.0, 3.0), SpeedSample(2.0, 4.0)],
            [LabelSample(1.0, TrafficState.FREE)],
        )
        assert len(ds) == 100

    def test_hold_is_most_recent_sample(self):
        # no speed sample may sit between the held one and the record
        rng = np.random.default_rng(5)
        speed_ts = np.cumsum(rng.uniform(0.5, 1.5, 20))
        speeds = [SpeedSample(float(t), float(i)) for i, t in enumerate(speed_ts)]
        motion_ts = np.sort(rng.uniform(speed_ts[0], speed_ts[-1] + 1, 200))
        motion_ts = np.unique(motion_ts)
        ds = align_streams(
            _motion(motion_ts), speeds, [LabelSample(float(speed_ts[0]), TrafficState.FREE)]
        )
        for i in range(len(ds)):
            held = int(ds.v[i])
            assert speeds[held].t <= ds.t[i]
            if held + 1 < len(speeds):
                assert speeds[held + 1].t > ds.t[i]


class TestClassDistribution:
    def test_counting(self):
        ds = align_streams(
            _motion([1.0, 1.02, 1.04, 1.06]),
            [SpeedSample(1.0, 5.0)],
            [
                LabelSample(1.0, TrafficState.FREE),
                LabelSample(1.03, TrafficState.STEADY),
                LabelSample(1.05, TrafficState.CONGESTED),
            ],
        )
        dist = class_distribution(ds)
        assert dist[TrafficState.FREE] == 0.5
        assert dist[TrafficState.STEADY] == 0.25
        assert dist[TrafficState.CONGESTED] == 0.25

    def test_degenerate_all_free(self):
        ds = align_streams(
            _motion([1.0, 1.02]),
            [SpeedSample(1.0, 5.0)],
            [LabelSample(1.0, TrafficState.FREE)],
        )
        dist = class_distribution(ds)
        assert dist[TrafficState.FREE] == 1.0
        assert dist[TrafficState.STEADY] == 0.0

    def test_fractions_sum_to_one(self):
        rng = np.random.default_rng(0)
        n = 997
        ds = Dataset.from_arrays(
            np.arange(n) * 0.02,
            *[rng.standard_normal(n) for _ in range(6)],
            rng.uniform(0, 30, n),
            rng.integers(0, 3, n),
        )
        assert abs(sum(class_distribution(ds).values()) - 1.0) < 1e-12


class TestAlignedRoundTrip:
    def test_bit_exact_round_trip(self):
        rng = np.random.default_rng(11)
        n = 300
        ds = Dataset.from_arrays(
            np.cumsum(rng.uniform(0.001, 0.05, n)),
            *[rng.standard_normal(n) for _ in range(6)],
            rng.uniform(0, 30, n),
            rng.integers(0, 3, n),
        )
        again = parse_aligned_csv(write_aligned_csv(ds))
        for col in ("t", "ax", "ay", "az", "gx", "gy", "gz", "v"):
            assert np.array_equal(getattr(ds, col), getattr(again, col))
        assert np.array_equal(ds.state, again.state)
