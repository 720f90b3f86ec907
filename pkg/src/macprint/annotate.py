"""Automatic labeling from interaction logs.

Frames get the foreground app of the log interval they fall in; bursts get
the action whose on-screen region was tapped during the burst.
"""

from __future__ import annotations

import bisect
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from macprint.catalog import UNKNOWN
from macprint.features import Burst
from macprint.wire import FormatError, FrameRecord

log = logging.getLogger(__name__)

LOG_HEADER = "#macprint-log v1"
UI_HEADER = "#macprint-ui v1"
GRACE_US = 1_000_000
MAX_MALFORMED = 0.10


@dataclass(frozen=True)
class InteractionRecord:
    tap_time_us: int
    app: str
    x: float
    y: float


# ----------------------------------------------------------------- log I/O

def _parse_log_line(line: str) -> InteractionRecord:
    t, app, x, y = line.split("\t")
    rec = InteractionRecord(int(t), app.strip(), float(x), float(y))
    if not rec.app or rec.app == UNKNOWN:
        raise ValueError("bad app id")
    if not (0.0 <= rec.x <= 1.0 and 0.0 <= rec.y <= 1.0):
        raise ValueError("tap location outside the screen")
    return rec


def parse_log(path, stats: Optional[Counter] = None) -> list[InteractionRecord]:
    """Read an interaction log; malformed lines are skipped and counted.

    More than 10% malformed lines is fatal.
    """
    stats = Counter() if stats is None else stats
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if lines and lines[0].strip() == LOG_HEADER:
        lines = lines[1:]
    elif lines and lines[0].startswith("#"):
        raise FormatError(f"{path}: unexpected header {lines[0]!r}")
    records = []
    body = [ln for ln in lines if ln.strip()]
    for line in body:
        try:
            records.append(_parse_log_line(line))
        except ValueError:
            stats["malformed"] += 1
    if body and stats["malformed"] > MAX_MALFORMED * len(body):
        raise FormatError(f"{path}: {stats['malformed']} of {len(body)} log lines are malformed")
    records.sort(key=lambda r: r.tap_time_us)
    return records


def write_log(path, records: Iterable[InteractionRecord]) -> None:
    with open(path, "w") as fh:
        fh.write(LOG_HEADER + "\n")
        for r in records:
            fh.write(f"{r.tap_time_us}\t{r.app}\t{r.x!r}\t{r.y!r}\n")


def shift_log(records: Sequence[InteractionRecord], offset_us: int) -> list[InteractionRecord]:
    """Move log times onto the sniffer clock."""
    if not offset_us:
        return list(records)
    return [InteractionRecord(r.tap_time_us + offset_us, r.app, r.x, r.y) for r in records]


# ---------------------------------------------------------------- UI table

Rect = tuple[float, float, float, float, str]


def load_ui_table(path) -> dict[str, list[Rect]]:
    """Parse a UI table::

        #macprint-ui v1
        [app_id]
        x0 y0 x1 y1 action_id
    """
    table: dict[str, list[Rect]] = {}
    current = None
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].strip() != UI_HEADER:
        raise FormatError(f"{path}: missing '{UI_HEADER}' header")
    for lineno, line in enumerate(lines[1:], start=2):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            table.setdefault(current, [])
            continue
        parts = line.split()
        if current is None or len(parts) != 5:
            raise FormatError(f"{path}:{lineno}: expected 'x0 y0 x1 y1 action_id' under an [app] section")
        x0, y0, x1, y1 = map(float, parts[:4])
        if not (x0 < x1 and y0 < y1):
            raise FormatError(f"{path}:{lineno}: degenerate rectangle")
        table[current].append((x0, y0, x1, y1, parts[4]))
    return table


def write_ui_table(path, table: dict[str, list[Rect]]) -> None:
    with open(path, "w") as fh:
        fh.write(UI_HEADER + "\n")
        for app, rects in table.items():
            fh.write(f"[{app}]\n")
            for x0, y0, x1, y1, action in rects:
                fh.write(f"{x0!r} {y0!r} {x1!r} {y1!r} {action}\n")


def lookup_action(table: dict[str, list[Rect]], app: str, x: float, y: float) -> Optional[str]:
    for x0, y0, x1, y1, action in table.get(app, ()):
        if x0 <= x < x1 and y0 <= y < y1:
            return action
    return None


# ---------------------------------------------------------------- labeling

def app_intervals(records: Sequence[InteractionRecord], grace_us: int = GRACE_US) -> list[tuple[int, int, str]]:
    """Half-open ``[start, end)`` foreground intervals.

    Each maximal run of records with the same app opens an interval at its
    first tap; it ends where the next run starts, the last one ``grace_us``
    after the final record.
    """
    runs: list[tuple[int, str]] = []
    for r in records:
        if not runs or runs[-1][1] != r.app:
            runs.append((r.tap_time_us, r.app))
    out = []
    for i, (start, app) in enumerate(runs):
        end = runs[i + 1][0] if i + 1 < len(runs) else records[-1].tap_time_us + grace_us
        out.append((start, end, app))
    return out


def label_frames(frames: Sequence[FrameRecord], intervals: Sequence[tuple[int, int, str]]) -> list[str]:
    starts = [iv[0] for iv in intervals]
    labels = []
    for f in frames:
        i = bisect.bisect_right(starts, f.timestamp_us) - 1
        if i >= 0 and intervals[i][0] <= f.timestamp_us < intervals[i][1]:
            labels.append(intervals[i][2])
        else:
            labels.append(UNKNOWN)
    return labels


def label_bursts(
    bursts: Sequence[Burst],
    records: Sequence[InteractionRecord],
    table: dict[str, list[Rect]],
    hold: bool = False,
    stats: Optional[Counter] = None,
) -> list[str]:
    """Action label per burst.

    Default: the action of the latest tap inside the burst that lands in a
    known UI region, else unknown. With ``hold=True`` the state at the end
    of the burst is used instead: the latest tap before the burst ends
    decides, so an action persists until the next tap (a tap outside every
    region resets it to unknown).
    """
    stats = Counter() if stats is None else stats
    times = [r.tap_time_us for r in records]
    missing = set()
    out = []
    for b in bursts:
        hi = bisect.bisect_left(times, b.end_us)
        lo = 0 if hold else bisect.bisect_left(times, b.start_us)
        label = UNKNOWN
        for j in range(hi - 1, lo - 1, -1):
            r = records[j]
            if r.app not in table:
                missing.add(r.app)
                stats["taps_app_missing"] += 1
                if hold:
                    break
                continue
            action = lookup_action(table, r.app, r.x, r.y)
            if action is not None:
                label = action
                break
            if hold:
                break
        out.append(label)
    if missing:
        log.info("apps without UI table entries: %s", ", ".join(sorted(missing)))
    return out


# ------------------------------------------------------- labeled manifests

FRAME_LABELS = "frame_labels.csv"
BURST_LABELS = "burst_labels.csv"


def write_frame_labels(path, rows: Iterable[tuple[str, int, str]]) -> None:
    """Delimited ``trace,frame,app`` rows; ``trace`` is the trace file path
    relative to its dump directory."""
    with open(path, "w") as fh:
        fh.write("trace,frame,app\n")
        for trace, i, app in rows:
            fh.write(f"{trace},{i},{app}\n")


def write_burst_labels(path, rows: Iterable[tuple[str, int, str, str]]) -> None:
    with open(path, "w") as fh:
        fh.write("trace,burst,app,action\n")
        for trace, n, app, action in rows:
            fh.write(f"{trace},{n},{app},{action}\n")


def _read_rows(path, width: int) -> dict[str, list[list[str]]]:
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    out: dict[str, list[list[str]]] = {}
    for no, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise FormatError(f"{path}:{no}: expected {width} fields")
        rows = out.setdefault(parts[0], [])
        if int(parts[1]) != len(rows):
            raise FormatError(f"{path}:{no}: rows of {parts[0]} out of order")
        rows.append(parts[2:])
    return out


def read_frame_labels(path) -> dict[str, list[str]]:
    """Per trace, the app label of every frame in order."""
    return {k: [r[0] for r in rows] for k, rows in _read_rows(path, 3).items()}


def read_burst_labels(path) -> dict[str, tuple[list[str], list[str]]]:
    """Per trace, the (app labels, action labels) of every burst in order."""
    return {k: ([r[0] for r in rows], [r[1] for r in rows]) for k, rows in _read_rows(path, 4).items()}
