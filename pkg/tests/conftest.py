import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from macprint.segment import TrafficTrace  # noqa: E402
from macprint.wire import Direction, FrameRecord  # noqa: E402

STA = "02:00:00:00:00:aa"
STA2 = "02:00:00:00:00:bb"
AP = "02:00:00:00:00:01"


def frame(t_us, size=100, d=1, station=STA, bssid=AP):
    return FrameRecord(int(t_us), int(size), Direction(d), station, bssid)


def trace_at(times_s, sizes=None, dirs=None, station=STA):
    sizes = sizes if sizes is not None else [100] * len(times_s)
    dirs = dirs if dirs is not None else [1] * len(times_s)
    frames = tuple(frame(round(t * 1e6), s, d, station) for t, s, d in zip(times_s, sizes, dirs))
    return TrafficTrace(station, 0, frames)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
