"""Minimal pcap reader/writer for 802.11 captures.

Only the per-packet timestamp, the original frame length and the first 24
bytes of the 802.11 header are consumed. Link types 105 (raw 802.11) and
127 (radiotap) are supported.
"""

from __future__ import annotations

import struct
from collections import Counter
from typing import Iterable, Iterator, Optional

from macprint.wire import (
    FormatError,
    FrameControl,
    FrameRecord,
    FrameType,
    Direction,
    infer_direction,
    mac_from_str,
    mac_to_str,
    parse_frame_control,
    MIN_FRAME_SIZE,
    MAX_FRAME_SIZE,
)

LINKTYPE_IEEE802_11 = 105
LINKTYPE_RADIOTAP = 127

# magic -> (byte order, divisor turning the fractional field into us)
_MAGIC = {
    b"\xd4\xc3\xb2\xa1": ("<", 1),
    b"\xa1\xb2\xc3\xd4": (">", 1),
    b"\x4d\x3c\xb2\xa1": ("<", 1000),
    b"\xa1\xb2\x3c\x4d": (">", 1000),
}

# radiotap header we emit: version, pad, length, present=flags only, flags byte + pad
_RADIOTAP = struct.pack("<BBHIBxxx", 0, 0, 12, 1 << 1, 0)


def iter_packets(path) -> Iterator[tuple[int, int, bytes, int]]:
    """Yield ``(timestamp_us, orig_len, captured_bytes, linktype)``."""
    try:
        fh = open(path, "rb")
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc
    with fh:
        header = fh.read(24)
        if len(header) < 24 or header[:4] not in _MAGIC:
            raise FormatError(f"{path}: not a pcap file")
        endian, frac_div = _MAGIC[header[:4]]
        linktype = struct.unpack(endian + "I", header[20:24])[0] & 0x0FFFFFFF
        rec_fmt = endian + "IIII"
        while True:
            rec = fh.read(16)
            if not rec:
                return
            if len(rec) < 16:
                raise EOFError("truncated packet record header")
            sec, frac, incl_len, orig_len = struct.unpack(rec_fmt, rec)
            data = fh.read(incl_len)
            if len(data) < incl_len:
                raise EOFError("truncated packet data")
            ts_us = sec * 1_000_000 + frac // frac_div
            yield ts_us, orig_len, data, linktype


def decode_capture(path, bssid: Optional[str], stats: Counter) -> Iterator[FrameRecord]:
    packets = iter_packets(path)
    while True:
        try:
            ts_us, orig_len, data, linktype = next(packets)
        except StopIteration:
            return
        except EOFError:
            stats["truncated"] += 1
            return
        if linktype == LINKTYPE_RADIOTAP:
            if len(data) < 4:
                stats["truncated"] += 1
                continue
            rt_len = struct.unpack_from("<H", data, 2)[0]
            frame = data[rt_len:]
            frame_len = orig_len - rt_len
        elif linktype == LINKTYPE_IEEE802_11:
            frame, frame_len = data, orig_len
        else:
            raise FormatError(f"{path}: unsupported link type {linktype}")

        if len(frame) < 2:
            stats["truncated"] += 1
            continue
        fc = parse_frame_control(frame[:2])
        if fc.frame_type != FrameType.DATA:
            stats[fc.frame_type.name.lower()] += 1
            continue
        if len(frame) < MIN_FRAME_SIZE:
            stats["truncated"] += 1
            continue
        if fc.to_ds and fc.from_ds:
            stats["wds"] += 1
            continue
        addr1, addr2, addr3 = (mac_to_str(frame[o:o + 6]) for o in (4, 10, 16))
        hit = infer_direction(fc, addr1, addr2, addr3, bssid)
        if hit is None:
            stats["other_bssid" if (fc.to_ds or fc.from_ds) else "not_ap"] += 1
            continue
        if not MIN_FRAME_SIZE <= frame_len <= MAX_FRAME_SIZE:
            stats["bad_length"] += 1
            continue
        direction, station, frame_bssid = hit
        yield FrameRecord(ts_us, frame_len, direction, station, frame_bssid)


def data_frame_header(direction: Direction, station: str, bssid: str, subtype: int = 0) -> bytes:
    if direction == Direction.UPLINK:
        fc = FrameControl(0, FrameType.DATA, subtype, to_ds=1, from_ds=0)
        addr1, addr2 = bssid, station
    else:
        fc = FrameControl(0, FrameType.DATA, subtype, to_ds=0, from_ds=1)
        addr1, addr2 = station, bssid
    return (
        fc.encode()
        + b"\x00\x00"
        + mac_from_str(addr1)
        + mac_from_str(addr2)
        + mac_from_str(bssid)
        + b"\x00\x00"
    )


def beacon_header(bssid: str) -> bytes:
    fc = FrameControl(0, FrameType.MANAGEMENT, 8, 0, 0)
    return fc.encode() + b"\x00\x00" + b"\xff" * 6 + mac_from_str(bssid) * 2 + b"\x00\x00"


class PcapWriter:
    """Write radiotap pcap files with truncated (header-only) frames.

    ``snaplen`` bytes of each frame are stored; the original length field
    carries the full on-air size, which is what the reader reports.
    """

    def __init__(self, path, snaplen: int = 64):
        self.fh = open(path, "wb")
        self.snaplen = snaplen
        self.fh.write(struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, 65535, LINKTYPE_RADIOTAP))

    def write(self, timestamp_us: int, frame_bytes: bytes, frame_len: Optional[int] = None) -> None:
        frame_len = len(frame_bytes) if frame_len is None else frame_len
        body = frame_bytes[: self.snaplen]
        data = _RADIOTAP + body
        sec, usec = divmod(timestamp_us, 1_000_000)
        self.fh.write(struct.pack("<IIII", sec, usec, len(data), len(_RADIOTAP) + frame_len))
        self.fh.write(data)

    def write_record(self, rec: FrameRecord) -> None:
        self.write(rec.timestamp_us, data_frame_header(rec.direction, rec.station, rec.bssid), rec.size_bytes)

    def close(self) -> None:
        self.fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def write_pcap(path, records: Iterable[FrameRecord]) -> None:
    with PcapWriter(path) as writer:
        for rec in records:
            writer.write_record(rec)
