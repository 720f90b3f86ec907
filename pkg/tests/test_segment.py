import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import STA, STA2, frame, trace_at
from oracles import segment_oracle
from macprint.segment import build_trace_set, dump_traces, group_by_station, load_traces, segment_traces, trace_duration


def stream_from_bin_counts(counts, station=STA):
    frames = []
    for b, c in enumerate(counts):
        frames.extend(frame(b * 1_000_000 + i * 1000, station=station) for i in range(c))
    return frames


def test_group_by_station_partitions_and_keeps_order():
    recs = [frame(i, station=STA if i in (0, 2, 4) else STA2) for i in range(5)]
    groups = group_by_station(recs)
    assert [r.timestamp_us for r in groups[STA]] == [0, 2, 4]
    assert [r.timestamp_us for r in groups[STA2]] == [1, 3]
    assert group_by_station([]) == {}


def test_segment_example_two_runs():
    traces = segment_traces(stream_from_bin_counts([5, 4, 1, 6, 7]), 3)
    assert [len(t) for t in traces] == [9, 13]
    assert [t.trace_index for t in traces] == [0, 1]
    assert traces[1].frames[0].timestamp_us == 3_000_000


def test_segment_below_threshold_everywhere():
    assert segment_traces(stream_from_bin_counts([2, 2, 2, 2]), 3) == []


def test_segment_single_dense_bin():
    traces = segment_traces(stream_from_bin_counts([100]), 3)
    assert len(traces) == 1 and len(traces[0]) == 100


def test_segment_gap_bin_splits_runs():
    frames = [frame(t) for t in (0, 1, 2, 3_000_000, 3_000_001, 3_000_002)]
    assert [len(t) for t in segment_traces(frames, 3)] == [3, 3]


def test_segment_rejects_bad_gamma():
    with pytest.raises(ValueError):
        segment_traces(stream_from_bin_counts([5]), 0)


@pytest.mark.parametrize("times, expected", [((0.0, 9.5), 9.5), ((3.0,), 0.0), ((1.25, 2.0, 4.75), 3.5)])
def test_trace_duration(times, expected):
    assert trace_duration(trace_at(times)) == pytest.approx(expected)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(0, 8_000_000), min_size=0, max_size=80), st.sampled_from([1, 2, 3, 4.5]))
def test_segment_matches_bin_run_oracle(times, gamma):
    times = sorted(times)
    frames = [frame(t) for t in times]
    got = [[f.timestamp_us for f in t.frames] for t in segment_traces(frames, gamma)]
    want = [[times[i] for i in idx] for idx in segment_oracle(times, gamma)]
    assert got == want


def test_trace_set_bookkeeping_and_dump(tmp_path):
    recs = sorted(stream_from_bin_counts([5, 0, 5]) + stream_from_bin_counts([4, 4], STA2), key=lambda r: r.timestamp_us)
    ts = build_trace_set(recs, 3)
    assert ts.total == 3 and len(ts.stations) == 2
    assert sum(len(v) for v in ts.traces.values()) == ts.total
    dump_traces(ts, tmp_path)
    loaded = load_traces(tmp_path)
    assert [t for _, t in loaded] == list(ts)
    assert (tmp_path / "index.csv").read_text().splitlines()[0].startswith("station,")
