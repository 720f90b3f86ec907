"""End-to-end inference: per-frame app labels, per-burst vote, category
routed action labels and behavior records."""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from macprint.catalog import UNKNOWN, actions_for
from macprint.features import Burst, ConfigError, app_samples, valid_centers
from macprint.model import ClassifierModel
from macprint.segment import TrafficTrace

log = logging.getLogger(__name__)


def inherit_edges(native: Sequence, n: int, w: int) -> list:
    """Spread predictions made at valid centers over all ``n`` positions.

    Positions before the first valid center copy its label, positions after
    the last copy the last label.
    """
    if len(native) != len(valid_centers(n, w)):
        raise ValueError("native prediction count does not match the valid centers")
    if not len(native):
        return []
    half = (w - 1) // 2
    idx = np.clip(np.arange(n) - half, 0, len(native) - 1)
    return [native[i] for i in idx]


def output_labels(model: ClassifierModel) -> list[str]:
    return list(model.classes) + [UNKNOWN]


def predict_app_sequence(
    trace: TrafficTrace,
    app_model: ClassifierModel,
    use_openset: bool = True,
    delta: Optional[float] = None,
) -> list[str]:
    """One app label per frame, or ``[]`` when the trace is shorter than
    the model window."""
    ws = app_model.window
    if len(trace) < ws:
        log.warning("trace %s#%d has %d frames, fewer than W_s=%d; no app prediction",
                    trace.station, trace.trace_index, len(trace), ws)
        return []
    samples = app_samples(trace, ws)
    labels = output_labels(app_model)
    pred = app_model.predict(samples.windows, use_openset=use_openset, delta=delta)
    return inherit_edges([labels[i] for i in pred], len(trace), ws)


def _rank(order: Sequence[str]):
    pos = {lab: i for i, lab in enumerate(order)}
    return lambda lab: (lab == UNKNOWN, pos.get(lab, len(pos)), lab)


def vote(labels: Sequence[str], order: Sequence[str] = ()) -> str:
    """Most frequent label; ties go to the earliest class in ``order``
    (then alphabetical), with unknown last. Empty input is unknown."""
    if not labels:
        return UNKNOWN
    counts = Counter(labels)
    top = max(counts.values())
    return min((lab for lab, c in counts.items() if c == top), key=_rank(order))


def majority_vote(frame_labels: Sequence[str], bursts: Sequence[Burst], order: Sequence[str] = ()) -> list[str]:
    """Per-burst app label from per-frame labels laid out in trace order."""
    if not frame_labels:
        return [UNKNOWN] * len(bursts)
    total = sum(len(b.frames) for b in bursts)
    if len(frame_labels) != total:
        raise ValueError(f"{len(frame_labels)} frame labels for {total} burst frames")
    out, pos = [], 0
    for b in bursts:
        out.append(vote(frame_labels[pos:pos + len(b.frames)], order))
        pos += len(b.frames)
    return out


def predict_actions(
    features: np.ndarray,
    burst_apps: Sequence[str],
    action_models: Mapping[str, ClassifierModel],
    categories: Mapping[str, str],
    use_openset: bool = True,
    delta: Optional[float] = None,
) -> list[str]:
    """Action label per burst.

    Bursts voted unknown stay unknown. The rest are routed to the action
    model of their app's category; bursts without a full window use the
    window of the nearest valid center.
    """
    n = len(features)
    if n != len(burst_apps):
        raise ValueError(f"{n} burst feature rows for {len(burst_apps)} app labels")
    out = [UNKNOWN] * n
    routes: dict[str, list[int]] = {}
    for i, app in enumerate(burst_apps):
        if app == UNKNOWN:
            continue
        if app not in categories:
            raise ConfigError(f"app {app!r} has no category")
        routes.setdefault(categories[app], []).append(i)
    for category, members in sorted(routes.items()):
        model = action_models.get(category)
        if model is None:
            raise ConfigError(f"no action model for category {category!r}")
        wa = model.window
        if n < wa:
            log.warning("trace has %d bursts, fewer than W_a=%d; actions left unknown", n, wa)
            continue
        half = (wa - 1) // 2
        centers = np.clip(np.array(members), half, n - 1 - half)
        windows = np.stack([features[c - half:c + half + 1] for c in centers])
        labels = output_labels(model)
        for i, p in zip(members, model.predict(windows, use_openset=use_openset, delta=delta)):
            out[i] = labels[p]
    return out


@dataclass(frozen=True)
class BehaviorRecord:
    """One burst of a behavior sequence: one-hot app and action labels."""

    burst: int
    app: str
    action: str
    y: np.ndarray
    x: np.ndarray

    @property
    def b(self) -> np.ndarray:
        return np.concatenate([self.y, self.x])


def assemble_behavior(
    burst_apps: Sequence[str],
    burst_actions: Sequence[str],
    app_classes: Sequence[str],
    categories: Mapping[str, str],
) -> list[BehaviorRecord]:
    """Concatenate one-hot app (H+1) and action (G+1) vectors per burst.

    The action slot is the action's position within its app category, so G
    is the per-category action count; unknown takes the final slot of each.
    """
    if len(burst_apps) != len(burst_actions):
        raise ValueError(f"{len(burst_apps)} app labels but {len(burst_actions)} action labels")
    apps = list(app_classes)
    g = max((len(actions_for(c)) for c in set(categories.values())), default=0)
    records = []
    for n, (app, action) in enumerate(zip(burst_apps, burst_actions)):
        y = np.zeros(len(apps) + 1)
        y[apps.index(app) if app in apps else len(apps)] = 1.0
        x = np.zeros(g + 1)
        acts = actions_for(categories[app]) if app in apps and app in categories else ()
        x[acts.index(action) if action in acts else g] = 1.0
        records.append(BehaviorRecord(n, app if app in apps else UNKNOWN, action if action in acts else UNKNOWN, y, x))
    return records


def behavior_matrix(records: Sequence[BehaviorRecord]) -> np.ndarray:
    if not records:
        return np.empty((0, 0))
    return np.stack([r.b for r in records])


# --------------------------------------------------------------- datasets

def app_dataset(
    items: Sequence[tuple[TrafficTrace, Sequence[str]]],
    classes: Sequence[str],
    ws: int,
    stride: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Windows and center labels; samples whose center label is not a
    training class are dropped."""
    index = {c: i for i, c in enumerate(classes)}
    xs, ys = [], []
    for trace, labels in items:
        s = app_samples(trace, ws, stride)
        keep = [k for k, c in enumerate(s.centers) if labels[c] in index]
        if keep:
            xs.append(s.windows[keep])
            ys.append([index[labels[s.centers[k]]] for k in keep])
    if not xs:
        return np.empty((0, ws, 3)), np.empty(0, dtype=np.int64)
    return np.concatenate(xs), np.concatenate(ys).astype(np.int64)


def action_dataset(
    items: Sequence[tuple[np.ndarray, Sequence[str]]],
    classes: Sequence[str],
    wa: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Burst-feature windows centered on every burst labeled with one of
    ``classes`` (edge bursts use the nearest full window)."""
    index = {c: i for i, c in enumerate(classes)}
    xs, ys = [], []
    half = (wa - 1) // 2
    for features, labels in items:
        n = len(features)
        if n < wa:
            continue
        for i, lab in enumerate(labels):
            if lab in index:
                c = min(max(i, half), n - 1 - half)
                xs.append(features[c - half:c + half + 1])
                ys.append(index[lab])
    if not xs:
        return np.empty((0, wa, 22)), np.empty(0, dtype=np.int64)
    return np.stack(xs), np.array(ys, dtype=np.int64)
