"""802.11 frame metadata: frame-control decoding, link direction and the
canonical ``#macprint-frames v1`` record format."""

from __future__ import annotations

import enum
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

log = logging.getLogger(__name__)

CANONICAL_HEADER = "#macprint-frames v1"
MIN_FRAME_SIZE = 24
MAX_FRAME_SIZE = 65535


class FrameType(enum.IntEnum):
    MANAGEMENT = 0
    CONTROL = 1
    DATA = 2
    EXTENSION = 3


class Direction(enum.IntEnum):
    UPLINK = 1
    DOWNLINK = -1


class FormatError(ValueError):
    """Raised for unreadable or malformed input files."""


def mac_to_str(mac: bytes) -> str:
    return ":".join(f"{b:02x}" for b in mac)


def mac_from_str(text: str) -> bytes:
    parts = text.strip().split(":")
    if len(parts) != 6:
        raise ValueError(f"bad MAC address {text!r}")
    return bytes(int(p, 16) for p in parts)


def normalize_mac(text: str) -> str:
    return mac_to_str(mac_from_str(text))


@dataclass(frozen=True)
class FrameControl:
    version: int
    frame_type: FrameType
    subtype: int
    to_ds: int
    from_ds: int
    # remaining flag bits of the second byte (more-frag, retry, ...), kept
    # so that encode() is lossless
    flags: int = 0

    def encode(self) -> bytes:
        b0 = (self.version & 0x3) | ((int(self.frame_type) & 0x3) << 2) | ((self.subtype & 0xF) << 4)
        b1 = (self.to_ds & 1) | ((self.from_ds & 1) << 1) | (self.flags & 0xFC)
        return bytes((b0, b1))

    @property
    def retry(self) -> bool:
        return bool(self.flags & 0x08)


def parse_frame_control(raw: bytes) -> FrameControl:
    if len(raw) != 2:
        raise ValueError("frame control is exactly 2 bytes")
    b0, b1 = raw[0], raw[1]
    return FrameControl(
        version=b0 & 0x3,
        frame_type=FrameType((b0 >> 2) & 0x3),
        subtype=(b0 >> 4) & 0xF,
        to_ds=b1 & 1,
        from_ds=(b1 >> 1) & 1,
        flags=b1 & 0xFC,
    )


@dataclass(frozen=True, slots=True)
class FrameRecord:
    """Plaintext metadata of one captured data frame."""

    timestamp_us: int
    size_bytes: int
    direction: Direction
    station: str
    bssid: str

    def __post_init__(self):
        if not MIN_FRAME_SIZE <= self.size_bytes <= MAX_FRAME_SIZE:
            raise ValueError(f"frame size {self.size_bytes} out of range")
        if self.station == self.bssid:
            raise ValueError("station address equals BSSID")

    @property
    def time_s(self) -> float:
        return self.timestamp_us / 1e6


def infer_direction(
    fc: FrameControl, addr1: str, addr2: str, addr3: str, bssid: Optional[str]
) -> Optional[tuple[Direction, str, str]]:
    """Return ``(direction, station, bssid)`` for an AP-bound data frame.

    Returns None for frames not exchanged with the AP (WDS, ad hoc) and for
    frames whose BSSID field does not match ``bssid``. ``bssid=None`` accepts
    any AP.
    """
    if fc.to_ds and not fc.from_ds:
        frame_bssid, direction, station = addr1, Direction.UPLINK, addr2
    elif fc.from_ds and not fc.to_ds:
        frame_bssid, direction, station = addr2, Direction.DOWNLINK, addr1
    else:
        return None
    if bssid is not None and frame_bssid != bssid:
        return None
    if station == frame_bssid:
        return None
    return direction, station, frame_bssid


def format_record(rec: FrameRecord) -> str:
    sign = "+1" if rec.direction == Direction.UPLINK else "-1"
    return f"{rec.timestamp_us},{rec.size_bytes},{sign},{rec.station},{rec.bssid}"


def parse_record(line: str) -> FrameRecord:
    fields = line.strip().split(",")
    if len(fields) != 5:
        raise ValueError(f"expected 5 fields, got {len(fields)}")
    ts, size, sign, station, bssid = fields
    if sign not in ("+1", "-1", "1"):
        raise ValueError(f"bad direction {sign!r}")
    return FrameRecord(
        timestamp_us=int(ts),
        size_bytes=int(size),
        direction=Direction(int(sign)),
        station=normalize_mac(station),
        bssid=normalize_mac(bssid),
    )


def write_frames(path, records: Iterable[FrameRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        fh.write(CANONICAL_HEADER + "\n")
        for rec in records:
            fh.write(format_record(rec) + "\n")


def read_frames(path) -> list[FrameRecord]:
    """Read a canonical record file exactly as written (no filtering)."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    if not lines or lines[0].strip() != CANONICAL_HEADER:
        raise FormatError(f"{path}: missing '{CANONICAL_HEADER}' header")
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            records.append(parse_record(line))
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from exc
    return records


def is_canonical(path) -> bool:
    with open(path, "rb") as fh:
        return fh.read(len(CANONICAL_HEADER)) == CANONICAL_HEADER.encode()


def read_capture(path, bssid: Optional[str] = None, stats: Optional[Counter] = None) -> list[FrameRecord]:
    """Load data frames exchanged with ``bssid`` from a capture file.

    Accepts the canonical record format or a pcap file (radiotap or raw
    802.11 link type). Output is sorted by timestamp (stable). Drop reasons
    are tallied into ``stats`` when given.
    """
    from macprint import pcap

    stats = Counter() if stats is None else stats
    bssid = normalize_mac(bssid) if bssid else None
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"cannot read {path}")

    if is_canonical(path):
        records = []
        for rec in read_frames(path):
            if bssid is not None and rec.bssid != bssid:
                stats["other_bssid"] += 1
                continue
            records.append(rec)
    else:
        records = list(pcap.decode_capture(path, bssid, stats))

    records.sort(key=lambda r: r.timestamp_us)
    stats["kept"] += len(records)
    dropped = {k: v for k, v in stats.items() if k != "kept"}
    if dropped:
        log.info("%s: kept %d frames, dropped %s", path, stats["kept"], dict(sorted(dropped.items())))
    return records
