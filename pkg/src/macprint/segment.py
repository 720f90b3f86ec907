"""Per-station grouping and frame-rate based trace segmentation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from macprint.wire import FrameRecord, read_frames, write_frames

DEFAULT_GAMMA = 3.0
US_PER_S = 1_000_000


@dataclass(frozen=True)
class TrafficTrace:
    station: str
    trace_index: int
    frames: tuple[FrameRecord, ...]

    def __post_init__(self):
        if not self.frames:
            raise ValueError("a trace holds at least one frame")

    @property
    def duration_s(self) -> float:
        return trace_duration(self)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass
class TraceSet:
    """Traces indexed by (station index, trace index)."""

    stations: list[str] = field(default_factory=list)
    traces: dict[str, list[TrafficTrace]] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(len(v) for v in self.traces.values())

    def __iter__(self):
        for station in self.stations:
            yield from self.traces[station]

    def __len__(self) -> int:
        return self.total


def group_by_station(records: Iterable[FrameRecord]) -> dict[str, list[FrameRecord]]:
    groups: dict[str, list[FrameRecord]] = {}
    for rec in records:
        groups.setdefault(rec.station, []).append(rec)
    return groups


def trace_duration(trace: TrafficTrace) -> float:
    return (trace.frames[-1].timestamp_us - trace.frames[0].timestamp_us) / US_PER_S


def segment_traces(frames: Sequence[FrameRecord], gamma: float = DEFAULT_GAMMA) -> list[TrafficTrace]:
    """Cut one station's frames into user-active traces.

    Frames fall into 1-second bins anchored at the first frame. Each maximal
    run of consecutive bins that all hold at least ``gamma`` frames becomes
    one trace.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if not frames:
        return []
    t0 = frames[0].timestamp_us
    station = frames[0].station

    # bins are contiguous slices of the sorted frame list
    bins: list[tuple[int, int, int]] = []  # (bin id, start, stop)
    start = 0
    current = (frames[0].timestamp_us - t0) // US_PER_S
    for i in range(1, len(frames) + 1):
        b = (frames[i].timestamp_us - t0) // US_PER_S if i < len(frames) else None
        if b != current:
            bins.append((current, start, i))
            start, current = i, b

    traces: list[TrafficTrace] = []
    run_start = run_stop = None
    prev_bin = None
    for b, lo, hi in bins:
        qualifies = hi - lo >= gamma
        contiguous = prev_bin is not None and b == prev_bin + 1 and run_start is not None
        if qualifies and contiguous:
            run_stop = hi
        else:
            if run_start is not None:
                traces.append(TrafficTrace(station, len(traces), tuple(frames[run_start:run_stop])))
                run_start = None
            if qualifies:
                run_start, run_stop = lo, hi
        prev_bin = b
    if run_start is not None:
        traces.append(TrafficTrace(station, len(traces), tuple(frames[run_start:run_stop])))
    return traces


def build_trace_set(records: Iterable[FrameRecord], gamma: float = DEFAULT_GAMMA) -> TraceSet:
    groups = group_by_station(records)
    ts = TraceSet()
    for station, frames in groups.items():
        ts.stations.append(station)
        ts.traces[station] = segment_traces(frames, gamma)
    return ts


def station_dirname(station: str) -> str:
    return station.replace(":", "-")


def trace_filename(station_idx: int, trace_idx: int) -> str:
    return f"trace_{station_idx}_{trace_idx}.frames"


def dump_traces(trace_set: TraceSet, out_dir) -> list[Path]:
    """Write one canonical file per trace and an ``index.csv`` listing them."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    rows = ["station,station_index,trace_index,frames,duration_s,path"]
    for i, station in enumerate(trace_set.stations):
        for trace in trace_set.traces[station]:
            rel = Path(station_dirname(station)) / trace_filename(i, trace.trace_index)
            write_frames(out_dir / rel, trace.frames)
            paths.append(out_dir / rel)
            rows.append(f"{station},{i},{trace.trace_index},{len(trace)},{trace.duration_s:.6f},{rel.as_posix()}")
    (out_dir / "index.csv").write_text("\n".join(rows) + "\n")
    return paths


def load_traces(trace_dir) -> list[tuple[str, TrafficTrace]]:
    """Load a trace dump; returns ``(relative path, trace)`` in index order."""
    trace_dir = Path(trace_dir)
    lines = (trace_dir / "index.csv").read_text().splitlines()[1:]
    out = []
    for line in lines:
        if not line.strip():
            continue
        station, _, trace_idx, _, _, rel = line.split(",")
        frames = read_frames(trace_dir / rel)
        out.append((rel, TrafficTrace(station, int(trace_idx), tuple(frames))))
    return out
