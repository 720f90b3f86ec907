"""Frame-window app samples, 1-second bursts, burst statistics and
burst-window action samples."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from macprint.segment import TrafficTrace, US_PER_S
from macprint.wire import Direction, FrameRecord

DEFAULT_WS = 31
DEFAULT_WA = 5
SIZE_SCALE = 2048.0
MAX_GAP_S = 1.0
SUBSLOTS = 10

FEATURE_NAMES = [f"p_{i}" for i in range(1, 23)]


class ConfigError(ValueError):
    """Invalid window or model configuration."""


def check_window(w: int, minimum: int, name: str) -> None:
    if w % 2 == 0 or w < minimum:
        raise ConfigError(f"{name} must be odd and >= {minimum}, got {w}")


def valid_centers(n: int, w: int) -> np.ndarray:
    """0-based centers whose full window fits in a sequence of length n."""
    half = (w - 1) // 2
    if n < w:
        return np.empty(0, dtype=np.int64)
    return np.arange(half, n - half, dtype=np.int64)


# ---------------------------------------------------------------- app level

def frame_triples(frames: Sequence[FrameRecord]) -> np.ndarray:
    """Per-frame (gap to previous frame [s], scaled size, direction)."""
    ts = np.fromiter((f.timestamp_us for f in frames), dtype=np.int64, count=len(frames))
    gaps = np.zeros(len(frames))
    gaps[1:] = np.diff(ts) / US_PER_S
    out = np.empty((len(frames), 3))
    out[:, 0] = np.clip(gaps, 0.0, MAX_GAP_S)
    out[:, 1] = np.minimum(np.fromiter((f.size_bytes for f in frames), dtype=float, count=len(frames)) / SIZE_SCALE, 1.0)
    out[:, 2] = np.fromiter((int(f.direction) for f in frames), dtype=float, count=len(frames))
    return out


@dataclass
class AppSamples:
    """Windows of ``ws`` frame triples centered on ``centers`` (0-based)."""

    station: str
    trace_index: int
    centers: np.ndarray
    windows: np.ndarray  # (n, ws, 3)

    def __len__(self) -> int:
        return len(self.centers)


def app_samples(trace: TrafficTrace, ws: int = DEFAULT_WS, stride: int = 1) -> AppSamples:
    check_window(ws, 3, "W_s")
    triples = frame_triples(trace.frames)
    centers = valid_centers(len(triples), ws)[::stride]
    if len(centers):
        half = (ws - 1) // 2
        view = sliding_window_view(triples, ws, axis=0)  # (M-ws+1, 3, ws)
        windows = np.ascontiguousarray(view[centers - half].transpose(0, 2, 1))
    else:
        windows = np.empty((0, ws, 3))
    return AppSamples(trace.station, trace.trace_index, centers, windows)


# -------------------------------------------------------------- burst level

@dataclass(frozen=True)
class Burst:
    index: int
    start_us: int
    frames: tuple[FrameRecord, ...]

    @property
    def end_us(self) -> int:
        return self.start_us + US_PER_S


def _anchor(trace: TrafficTrace, phase_us: int) -> int:
    if not 0 <= phase_us < US_PER_S:
        raise ValueError("burst phase must lie in [0, 1 s)")
    return trace.frames[0].timestamp_us - phase_us


def burst_count(trace: TrafficTrace, phase_us: int = 0) -> int:
    span = trace.frames[-1].timestamp_us - _anchor(trace, phase_us)
    return span // US_PER_S + 1


def burstify(trace: TrafficTrace, phase_us: int = 0) -> list[Burst]:
    """Split a trace into consecutive 1-second bursts anchored at its first
    frame; empty bursts are kept.

    ``phase_us`` moves the grid that far before the first frame. Inference
    always uses 0; shifted grids give extra training windows.
    """
    t0 = _anchor(trace, phase_us)
    members: list[list[FrameRecord]] = [[] for _ in range(burst_count(trace, phase_us))]
    for f in trace.frames:
        members[(f.timestamp_us - t0) // US_PER_S].append(f)
    return [Burst(n, t0 + n * US_PER_S, tuple(m)) for n, m in enumerate(members)]


def burst_of_frame(trace: TrafficTrace) -> np.ndarray:
    ts = np.fromiter((f.timestamp_us for f in trace.frames), dtype=np.int64, count=len(trace))
    return (ts - ts[0]) // US_PER_S


def _mean_gap(ts_us: np.ndarray) -> float:
    if len(ts_us) < 2:
        return 0.0
    return float(ts_us[-1] - ts_us[0]) / (len(ts_us) - 1) / US_PER_S


def _split_stats(sizes: np.ndarray) -> tuple[list[float], list[float]]:
    """Means and population variances of the low 20 / mid 60 / high 20 %
    slices of the sorted sizes."""
    s = np.sort(sizes)
    k = int(np.floor(0.2 * len(s)))
    parts = (s[:k], s[k:len(s) - k], s[len(s) - k:])
    means = [float(p.mean()) if len(p) else 0.0 for p in parts]
    variances = [float(p.var()) if len(p) else 0.0 for p in parts]
    return means, variances


def _link_stats(sizes: np.ndarray, ts_us: np.ndarray) -> list[float]:
    means, variances = _split_stats(sizes)
    avg = float(sizes.mean()) if len(sizes) else 0.0
    return [avg, *means, *variances, _mean_gap(ts_us)]


def _rate_moments(offsets_us: np.ndarray) -> tuple[float, float]:
    slot = np.minimum(offsets_us // (US_PER_S // SUBSLOTS), SUBSLOTS - 1)
    counts = np.bincount(slot, minlength=SUBSLOTS).astype(float)
    dev = counts - counts.mean()
    m2 = np.mean(dev**2)
    if m2 == 0:
        return 0.0, 0.0
    kurt = np.mean(dev**4) / m2**2 - 3.0
    skew = np.mean(dev**3) / m2**1.5
    return float(kurt), float(skew)


def burst_features(burst: Burst) -> np.ndarray:
    """The 22 burst statistics ``p_1 .. p_22`` (index 0 holds p_1)."""
    if not burst.frames:
        return np.zeros(22)
    ts = np.fromiter((f.timestamp_us for f in burst.frames), dtype=np.int64)
    sizes = np.fromiter((f.size_bytes for f in burst.frames), dtype=float)
    up = np.fromiter((f.direction == Direction.UPLINK for f in burst.frames), dtype=bool)
    n_up = int(up.sum())
    n_down = len(up) - n_up
    kurt, skew = _rate_moments(ts - burst.start_us)
    head = [
        float(len(ts)),
        float(sizes.mean()),
        _mean_gap(ts),
        n_up / max(n_down, 1),
        kurt,
        skew,
    ]
    return np.array(head + _link_stats(sizes[up], ts[up]) + _link_stats(sizes[~up], ts[~up]))


def trace_burst_features(trace: TrafficTrace, phase_us: int = 0) -> np.ndarray:
    return np.array([burst_features(b) for b in burstify(trace, phase_us)]).reshape(-1, 22)


# ------------------------------------------------------------- action level

@dataclass
class ActionSamples:
    centers: np.ndarray
    windows: np.ndarray  # (n, wa, 22)

    def __len__(self) -> int:
        return len(self.centers)


def action_samples(features: np.ndarray, wa: int = DEFAULT_WA) -> ActionSamples:
    check_window(wa, 1, "W_a")
    features = np.asarray(features, dtype=float).reshape(-1, 22)
    centers = valid_centers(len(features), wa)
    if len(centers):
        half = (wa - 1) // 2
        view = sliding_window_view(features, wa, axis=0)  # (N-wa+1, 22, wa)
        windows = np.ascontiguousarray(view[centers - half].transpose(0, 2, 1))
    else:
        windows = np.empty((0, wa, 22))
    return ActionSamples(centers, windows)


def write_feature_table(path, rows: Sequence[tuple[str, int, np.ndarray]]) -> None:
    """Delimited dump: ``trace,burst,p_1..p_22``."""
    with open(path, "w") as fh:
        fh.write(",".join(["trace", "burst", *FEATURE_NAMES]) + "\n")
        for trace_id, n, vec in rows:
            fh.write(",".join([trace_id, str(n), *(repr(float(v)) for v in vec)]) + "\n")
