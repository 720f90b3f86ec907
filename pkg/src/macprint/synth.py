"""Seeded synthetic 802.11 metadata traffic with matching interaction logs.

A session is a Markov schedule of (app, action) dwell segments. Each
segment starts with a tap inside the action's UI region (or outside every
region for undefined actions); frames are Poisson arrivals per link with
log-normal sizes. The session closes with a tap outside every region.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from macprint.annotate import InteractionRecord, Rect, write_log, write_ui_table
from macprint.catalog import UNKNOWN, actions_for
from macprint.features import Burst
from macprint.wire import Direction, FrameRecord, MIN_FRAME_SIZE, write_frames

MAX_SYNTH_SIZE = 2346
MIN_DWELL_S = 1.0
PROFILES_FORMAT = "macprint-profiles v1"
DEFAULT_BSSID = "02:00:00:00:00:01"

# tap targets: four buttons along the bottom edge; the top area is inert
BUTTON_ROW = (0.8, 1.0)
INERT_AREA = (0.05, 0.7)
MARGIN = 0.02


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class TrafficModel:
    up_rate: float
    down_rate: float
    up_size: tuple[float, float]  # log-normal (mu, sigma)
    down_size: tuple[float, float]
    dwell_mean: float = 5.0
    dwell_shape: float = 4.0

    @classmethod
    def from_dict(cls, d: dict, dwell: dict) -> "TrafficModel":
        dwell = {**dwell, **d.get("dwell", {})}
        m = cls(
            up_rate=float(d["up_rate"]),
            down_rate=float(d["down_rate"]),
            up_size=tuple(map(float, d["up_size"])),
            down_size=tuple(map(float, d["down_size"])),
            dwell_mean=float(dwell.get("mean", 5.0)),
            dwell_shape=float(dwell.get("shape", 4.0)),
        )
        if m.up_rate < 0 or m.down_rate < 0:
            raise ProfileError("frame rates must be >= 0")
        if m.up_size[1] <= 0 or m.down_size[1] <= 0:
            raise ProfileError("size sigma must be > 0")
        if m.dwell_mean <= 0 or m.dwell_shape <= 0:
            raise ProfileError("dwell parameters must be > 0")
        return m


@dataclass(frozen=True)
class AppProfile:
    app: str
    category: str
    actions: dict[str, TrafficModel]
    idle_rate: float = 0.0
    undefined: Optional[TrafficModel] = None

    @classmethod
    def from_dict(cls, d: dict) -> "AppProfile":
        category = d["category"]
        expected = set(actions_for(category))
        dwell = d.get("dwell", {})
        actions = {a: TrafficModel.from_dict(m, dwell) for a, m in d["actions"].items()}
        if set(actions) != expected:
            raise ProfileError(f"app {d['id']}: actions {sorted(actions)} do not match category {category} {sorted(expected)}")
        undefined = TrafficModel.from_dict(d["undefined"], dwell) if "undefined" in d else None
        idle = float(d.get("idle_rate", 0.0))
        if idle < 0:
            raise ProfileError("idle rate must be >= 0")
        return cls(d["id"], category, {a: actions[a] for a in actions_for(category)}, idle, undefined)


@dataclass
class ProfileSet:
    apps: list[AppProfile]
    switch_app_prob: float = 0.3
    undefined_prob: float = 0.0
    onset_s: float = 0.0  # length of the request/response surge after each tap
    onset_boost: float = 0.0  # surge rate as a multiple of the action's rates

    def by_id(self) -> dict[str, AppProfile]:
        return {p.app: p for p in self.apps}

    def subset(self, ids: Sequence[str]) -> "ProfileSet":
        index = self.by_id()
        return replace(self, apps=[index[i] for i in ids])

    @property
    def categories(self) -> dict[str, str]:
        return {p.app: p.category for p in self.apps}


def parse_profiles(doc: dict) -> tuple[ProfileSet, dict]:
    """Return the profile set and the raw document (for its extra keys)."""
    if doc.get("format") != PROFILES_FORMAT:
        raise ProfileError(f"profiles must declare format '{PROFILES_FORMAT}'")
    apps = [AppProfile.from_dict(a) for a in doc["apps"]]
    if not apps:
        raise ProfileError("no app profiles")
    if len({a.app for a in apps}) != len(apps):
        raise ProfileError("duplicate app ids")
    ps = ProfileSet(
        apps,
        switch_app_prob=float(doc.get("switch_app_prob", 0.3)),
        undefined_prob=float(doc.get("undefined_prob", 0.0)),
        onset_s=float(doc.get("onset_s", 0.0)),
        onset_boost=float(doc.get("onset_boost", 0.0)),
    )
    if ps.onset_s < 0 or ps.onset_boost < 0:
        raise ProfileError("onset parameters must be >= 0")
    return ps, doc


def load_profiles(path=None) -> tuple[ProfileSet, dict]:
    if path is None:
        text = resources.files("macprint").joinpath("data/profiles.json").read_text()
    else:
        text = Path(path).read_text()
    return parse_profiles(json.loads(text))


def default_profiles() -> tuple[ProfileSet, list[str], list[str]]:
    """Packaged profiles plus the ids of the known and held-out apps."""
    ps, doc = load_profiles()
    return ps, list(doc["known"]), list(doc["held_out"])


def ui_layout(category: str) -> list[Rect]:
    acts = actions_for(category)
    width = 1.0 / len(acts)
    return [(i * width, BUTTON_ROW[0], (i + 1) * width, BUTTON_ROW[1], a) for i, a in enumerate(acts)]


def ui_table(profiles: ProfileSet) -> dict[str, list[Rect]]:
    return {p.app: ui_layout(p.category) for p in profiles.apps}


# ------------------------------------------------------------------ session

@dataclass(frozen=True)
class Segment:
    start_us: int
    end_us: int
    app: str
    action: Optional[str]  # None: undefined action


@dataclass
class GroundTruth:
    segments: list[Segment]
    frame_apps: list[str]
    log: list[InteractionRecord]
    end_us: int

    def app_at(self, t_us: int) -> str:
        starts = [s.start_us for s in self.segments]
        i = bisect.bisect_right(starts, t_us) - 1
        return self.segments[i].app if i >= 0 and t_us < self.end_us else UNKNOWN

    def burst_actions(self, bursts: Sequence[Burst]) -> list[str]:
        """Action in progress at the end of each burst."""
        starts = [s.start_us for s in self.segments] + [self.end_us]
        labels = []
        for b in bursts:
            i = bisect.bisect_left(starts, b.end_us) - 1
            if i < 0 or i >= len(self.segments):
                labels.append(UNKNOWN)
            else:
                labels.append(self.segments[i].action or UNKNOWN)
        return labels

    def tap_bursts(self, bursts: Sequence[Burst]) -> list[bool]:
        times = [r.tap_time_us for r in self.log]
        return [bisect.bisect_left(times, b.end_us) > bisect.bisect_left(times, b.start_us) for b in bursts]


@dataclass
class Session:
    station: str
    bssid: str
    frames: list[FrameRecord]
    truth: GroundTruth
    profiles: ProfileSet = field(repr=False)


def station_for(seed: int) -> str:
    rng = np.random.default_rng([seed, 0x5EED])
    tail = rng.integers(0, 256, size=5)
    return ":".join(["02"] + [f"{b:02x}" for b in tail])


def _arrivals(rng, rate: float, start_us: int, end_us: int) -> np.ndarray:
    """Poisson process on [start, end): exponential inter-arrival gaps."""
    if rate <= 0:
        return np.empty(0, dtype=np.int64)
    span = (end_us - start_us) / 1e6
    times = []
    t = rng.exponential(1.0 / rate)
    while t < span:
        times.append(t)
        t += rng.exponential(1.0 / rate)
    out = start_us + np.floor(np.array(times) * 1e6).astype(np.int64)
    return out[out < end_us]


def _sizes(rng, mu_sigma, n: int) -> np.ndarray:
    mu, sigma = mu_sigma
    return np.clip(np.rint(rng.lognormal(mu, sigma, size=n)), MIN_FRAME_SIZE, MAX_SYNTH_SIZE).astype(np.int64)


def _tap_location(rng, rect: Optional[Rect]) -> tuple[float, float]:
    if rect is None:
        return float(rng.uniform(MARGIN, 1 - MARGIN)), float(rng.uniform(*INERT_AREA))
    x0, y0, x1, y1, _ = rect
    return float(rng.uniform(x0 + MARGIN, x1 - MARGIN)), float(rng.uniform(y0 + MARGIN, y1 - MARGIN))


def _schedule(rng, profiles: ProfileSet, start_us: int, end_us: int) -> list[Segment]:
    apps = profiles.apps
    segments: list[Segment] = []
    current = apps[int(rng.integers(len(apps)))]
    t = start_us
    while t < end_us:
        if segments and len(apps) > 1 and rng.random() < profiles.switch_app_prob:
            others = [a for a in apps if a.app != current.app]
            current = others[int(rng.integers(len(others)))]
        if current.undefined is not None and rng.random() < profiles.undefined_prob:
            action, model = None, current.undefined
        else:
            names = list(current.actions)
            action = names[int(rng.integers(len(names)))]
            model = current.actions[action]
        dwell = max(MIN_DWELL_S, rng.gamma(model.dwell_shape, model.dwell_mean / model.dwell_shape))
        stop = min(t + int(round(dwell * 1e6)), end_us)
        if stop - t < MIN_DWELL_S * 1e6:
            break
        segments.append(Segment(t, stop, current.app, action))
        t = stop
    return segments


def generate_session(
    profiles: ProfileSet,
    duration_s: float,
    seed: int,
    station: Optional[str] = None,
    bssid: str = DEFAULT_BSSID,
    start_us: int = 0,
) -> Session:
    """Generate one station's traffic, its interaction log and ground truth.

    Consecutive taps are at least 1 s apart, so no 1-second burst holds
    more than one tap.
    """
    if not profiles.apps:
        raise ProfileError("need at least one app profile")
    if duration_s <= 0:
        raise ProfileError("duration must be positive")
    rng = np.random.default_rng(seed)
    station = station or station_for(seed)
    index = profiles.by_id()
    layout = {p.app: ui_layout(p.category) for p in profiles.apps}

    segments = _schedule(rng, profiles, start_us, start_us + int(round(duration_s * 1e6)))
    if not segments:
        raise ProfileError("duration too short for a single segment")
    end_us = segments[-1].end_us

    log: list[InteractionRecord] = []
    times, sizes, dirs, apps = [], [], [], []
    for seg in segments:
        prof = index[seg.app]
        if seg.action is None:
            model, rect = prof.undefined, None
        else:
            model = prof.actions[seg.action]
            rect = next(r for r in layout[seg.app] if r[4] == seg.action)
        log.append(InteractionRecord(seg.start_us, seg.app, *_tap_location(rng, rect)))
        surge_end = min(seg.start_us + int(profiles.onset_s * 1e6), seg.end_us)
        for rate, size, d, surge in (
            (model.up_rate, model.up_size, Direction.UPLINK, True),
            (model.down_rate, model.down_size, Direction.DOWNLINK, True),
            (prof.idle_rate / 2, (4.5, 0.3), Direction.UPLINK, False),
            (prof.idle_rate / 2, (4.5, 0.3), Direction.DOWNLINK, False),
        ):
            ts = _arrivals(rng, rate, seg.start_us, seg.end_us)
            if surge and profiles.onset_boost:
                ts = np.sort(np.concatenate([ts, _arrivals(rng, rate * profiles.onset_boost, seg.start_us, surge_end)]))
            times.append(ts)
            sizes.append(_sizes(rng, size, len(ts)))
            dirs.append(np.full(len(ts), int(d)))
            apps.extend([seg.app] * len(ts))
    log.append(InteractionRecord(end_us, segments[-1].app, *_tap_location(rng, None)))

    t = np.concatenate(times)
    order = np.argsort(t, kind="stable")
    s = np.concatenate(sizes)[order]
    d = np.concatenate(dirs)[order]
    frames = [
        FrameRecord(int(ti), int(si), Direction(int(di)), station, bssid)
        for ti, si, di in zip(t[order], s, d)
    ]
    frame_apps = [apps[i] for i in order]
    truth = GroundTruth(segments, frame_apps, log, end_us)
    return Session(station, bssid, frames, truth, profiles)


def write_session(out_dir, session: Session, pcap: bool = False) -> Path:
    """Write frames, log, UI table, categories and ground-truth files."""
    from macprint import pcap as pcap_mod

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_frames(out / "frames.frames", session.frames)
    if pcap:
        pcap_mod.write_pcap(out / "capture.pcap", session.frames)
    write_log(out / "interaction.log", session.truth.log)
    write_ui_table(out / "ui_table.txt", ui_table(session.profiles))
    (out / "categories.json").write_text(json.dumps(session.profiles.categories, indent=2, sort_keys=True) + "\n")
    with open(out / "truth_frames.csv", "w") as fh:
        fh.write("timestamp_us,station,app\n")
        for f, app in zip(session.frames, session.truth.frame_apps):
            fh.write(f"{f.timestamp_us},{f.station},{app}\n")
    with open(out / "truth_segments.csv", "w") as fh:
        fh.write("start_us,end_us,app,action\n")
        for seg in session.truth.segments:
            fh.write(f"{seg.start_us},{seg.end_us},{seg.app},{seg.action or UNKNOWN}\n")
    return out
