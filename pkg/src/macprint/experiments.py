"""Synthetic benchmarks: closed world, open world and window sweeps.

Sessions come from the traffic generator. Training labels are produced by
the annotation path (interaction log + UI table), test scores are computed
against the generator's ground truth.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from macprint import annotate, pipeline
from macprint.catalog import UNKNOWN, actions_for
from macprint.evaluation import EvalReport, evaluate
from macprint.features import DEFAULT_WA, DEFAULT_WS, Burst, burstify, trace_burst_features
from macprint.model import ClassifierModel, TrainConfig, train
from macprint.openset import DEFAULT_DELTA, DEFAULT_ETA, fit_openset
from macprint.segment import DEFAULT_GAMMA, TrafficTrace, segment_traces
from macprint.synth import ProfileSet, Session, default_profiles, generate_session, ui_table

log = logging.getLogger(__name__)


@dataclass
class BenchConfig:
    sessions: int = 20
    session_s: float = 90.0
    split: tuple[int, int, int] = (14, 3, 3)
    ws: int = DEFAULT_WS
    wa: int = DEFAULT_WA
    gamma: float = DEFAULT_GAMMA
    app_epochs: int = 8
    action_epochs: int = 60
    app_stride: int = 9
    action_dropout: float = 0.3
    action_phases: int = 8  # shifted burst grids used as extra action training windows
    eta: int = DEFAULT_ETA
    delta: float = DEFAULT_DELTA
    seed: int = 7

    def __post_init__(self):
        if sum(self.split) != self.sessions:
            raise ValueError("split must add up to the session count")


@dataclass
class LabeledTrace:
    """A trace with annotated training labels and generator ground truth."""

    session: int
    trace: TrafficTrace
    bursts: list[Burst]
    features: np.ndarray
    frame_apps: list[str]
    burst_apps: list[str]
    burst_actions: list[str]
    truth_frame_apps: list[str]
    truth_burst_apps: list[str]
    truth_burst_actions: list[str]
    shifted: list[tuple[np.ndarray, list[str], list[str]]] = field(default_factory=list)

    def action_views(self):
        """(features, annotated burst apps, annotated actions) for the
        inference grid followed by any shifted grids."""
        return [(self.features, self.burst_apps, self.burst_actions)] + self.shifted


def label_session(
    session: Session,
    index: int,
    gamma: float = DEFAULT_GAMMA,
    order: Sequence[str] = (),
    phases: int = 1,
) -> list[LabeledTrace]:
    """Segment a session and attach annotated and true labels to each trace.

    With ``phases > 1`` the trace is also cut on burst grids shifted by
    multiples of ``1 s / phases`` and those annotated views are kept for
    training.
    """
    truth_of = {id(f): a for f, a in zip(session.frames, session.truth.frame_apps)}
    intervals = annotate.app_intervals(session.truth.log)
    table = ui_table(session.profiles)
    out = []
    for trace in segment_traces(session.frames, gamma):
        bursts = burstify(trace)
        frame_apps = annotate.label_frames(trace.frames, intervals)
        truth_frames = [truth_of[id(f)] for f in trace.frames]
        shifted = []
        for k in range(1, phases):
            grid = burstify(trace, k * 1_000_000 // phases)
            shifted.append((
                trace_burst_features(trace, k * 1_000_000 // phases),
                pipeline.majority_vote(frame_apps, grid, order),
                annotate.label_bursts(grid, session.truth.log, table, hold=True),
            ))
        out.append(
            LabeledTrace(
                session=index,
                trace=trace,
                bursts=bursts,
                features=trace_burst_features(trace),
                frame_apps=frame_apps,
                burst_apps=pipeline.majority_vote(frame_apps, bursts, order),
                burst_actions=annotate.label_bursts(bursts, session.truth.log, table, hold=True),
                truth_frame_apps=truth_frames,
                truth_burst_apps=pipeline.majority_vote(truth_frames, bursts, order),
                truth_burst_actions=session.truth.burst_actions(bursts),
                shifted=shifted,
            )
        )
    return out


def make_corpus(
    profiles: ProfileSet,
    seeds: Sequence[int],
    duration_s: float,
    gamma: float,
    order: Sequence[str],
    phases: int = 1,
) -> list[LabeledTrace]:
    items = []
    for i, s in enumerate(seeds):
        items.extend(label_session(generate_session(profiles, duration_s, seed=s), i, gamma, order, phases))
    return items


@dataclass
class Models:
    app: ClassifierModel
    actions: dict[str, ClassifierModel]
    categories: dict[str, str]


def attach_openset(model: ClassifierModel, x: np.ndarray, y: np.ndarray, eta: int, delta: float) -> None:
    """Fit per-class Weibull tails on correctly classified training samples."""
    probs, acts = model.forward(x)
    model.openset = fit_openset(acts, y, probs.argmax(axis=-1), len(model.classes), eta=eta, delta=delta)


def fit_app_model(train_items, val_items, classes, cfg: BenchConfig, ws: Optional[int] = None) -> ClassifierModel:
    ws = ws or cfg.ws
    x, y = pipeline.app_dataset([(t.trace, t.frame_apps) for t in train_items], classes, ws, cfg.app_stride)
    val = pipeline.app_dataset([(t.trace, t.frame_apps) for t in val_items], classes, ws, cfg.app_stride)
    log.info("app model: %d training windows of %d frames", len(x), ws)
    model = train(x, y, classes, TrainConfig(epochs=cfg.app_epochs, seed=cfg.seed), kind="app", validation=val)
    attach_openset(model, x, y, cfg.eta, cfg.delta)
    return model


def action_items(items: Sequence[LabeledTrace], categories: dict[str, str], category: str):
    """Per-view (features, labels) with labels kept only on bursts whose
    annotated app belongs to ``category``."""
    out = []
    for t in items:
        for features, apps, actions in t.action_views():
            labels = [a if categories.get(app) == category else UNKNOWN for app, a in zip(apps, actions)]
            out.append((features, labels))
    return out


def fit_action_models(train_items, val_items, categories, cfg: BenchConfig, wa: Optional[int] = None) -> dict[str, ClassifierModel]:
    wa = wa or cfg.wa
    models = {}
    for category in sorted(set(categories.values())):
        classes = list(actions_for(category))
        x, y = pipeline.action_dataset(action_items(train_items, categories, category), classes, wa)
        val = pipeline.action_dataset(action_items(val_items, categories, category), classes, wa)
        log.info("%s action model: %d training windows", category, len(x))
        model = train(
            x, y, classes, TrainConfig(epochs=cfg.action_epochs, seed=cfg.seed, keep_best=False),
            net_config={"dropout": cfg.action_dropout}, kind=f"action:{category}", validation=val,
        )
        attach_openset(model, x, y, cfg.eta, cfg.delta)
        models[category] = model
    return models


@dataclass
class Prediction:
    frame_apps: list[str]
    burst_apps: list[str]
    burst_actions: list[str]


def run_pipeline(models: Models, items: Sequence[LabeledTrace], use_openset: bool = True) -> list[Prediction]:
    out = []
    for t in items:
        frames = pipeline.predict_app_sequence(t.trace, models.app, use_openset=use_openset)
        bursts = pipeline.majority_vote(frames, t.bursts, models.app.classes)
        actions = pipeline.predict_actions(t.features, bursts, models.actions, models.categories, use_openset=use_openset)
        out.append(Prediction(frames, bursts, actions))
    return out


def _known(label: str, classes: Sequence[str]) -> str:
    return label if label in classes else UNKNOWN


def app_burst_scores(items, preds, classes, config=None) -> EvalReport:
    """Per-burst app labels against the truth; held-out apps count as
    unknown and empty bursts are skipped."""
    truth, pred = [], []
    for t, p in zip(items, preds):
        for b, ta, pa in zip(t.bursts, t.truth_burst_apps, p.burst_apps):
            if b.frames:
                truth.append(_known(ta, classes))
                pred.append(pa)
    labels = list(classes) + [UNKNOWN]
    return evaluate(truth, pred, labels, config)


def app_frame_scores(items, preds, classes, config=None) -> EvalReport:
    truth, pred = [], []
    for t, p in zip(items, preds):
        if p.frame_apps:
            truth.extend(_known(a, classes) for a in t.truth_frame_apps)
            pred.extend(p.frame_apps)
    return evaluate(truth, pred, list(classes) + [UNKNOWN], config)


def action_scores(items, preds, categories, config=None) -> EvalReport:
    """Per-burst action labels on bursts with a known app and a defined
    action. A prediction only counts when the routed category is right too,
    since action names repeat across categories."""
    truth, pred = [], []
    for t, p in zip(items, preds):
        for ta, tx, pa, px in zip(t.truth_burst_apps, t.truth_burst_actions, p.burst_apps, p.burst_actions):
            if ta not in categories or tx == UNKNOWN:
                continue
            cat = categories[ta]
            truth.append(f"{cat}/{tx}")
            pred.append(f"{categories[pa]}/{px}" if pa in categories and px != UNKNOWN else UNKNOWN)
    labels = sorted({f"{c}/{a}" for c in set(categories.values()) for a in actions_for(c)} | set(truth) | set(pred) - {UNKNOWN})
    return evaluate(truth, pred, labels + [UNKNOWN], config)


@dataclass
class BenchResult:
    name: str
    reports: dict[str, EvalReport]
    metrics: dict[str, float]
    models: Optional[Models] = None
    seconds: float = 0.0
    config: dict = field(default_factory=dict)


def _split_seeds(cfg: BenchConfig) -> tuple[list[int], list[int], list[int]]:
    seeds = [cfg.seed * 1000 + i for i in range(cfg.sessions)]
    a, b, _ = cfg.split
    return seeds[:a], seeds[a:a + b], seeds[a + b:]


def prepare(cfg: BenchConfig):
    """Generate the known-app corpus and train app and action models."""
    profiles, known, _ = default_profiles()
    closed = profiles.subset(known)
    tr, va, te = _split_seeds(cfg)
    train_items = make_corpus(closed, tr, cfg.session_s, cfg.gamma, known, cfg.action_phases)
    val_items = make_corpus(closed, va, cfg.session_s, cfg.gamma, known)
    test_items = make_corpus(closed, te, cfg.session_s, cfg.gamma, known)
    categories = closed.categories
    app = fit_app_model(train_items, val_items, known, cfg)
    actions = fit_action_models(train_items, val_items, categories, cfg)
    return Models(app, actions, categories), train_items, val_items, test_items


def closed_world(cfg: Optional[BenchConfig] = None, prepared=None) -> BenchResult:
    """Known apps only; OpenMax disabled."""
    cfg = cfg or BenchConfig()
    t0 = time.perf_counter()
    models, _, _, test_items = prepared or prepare(cfg)
    classes = models.app.classes
    preds = run_pipeline(models, test_items, use_openset=False)
    echo = asdict(cfg)
    reports = {
        "closed_app": app_burst_scores(test_items, preds, classes, echo),
        "closed_action": action_scores(test_items, preds, models.categories, echo),
    }
    metrics = {
        "app_accuracy": reports["closed_app"].accuracy,
        "action_accuracy": reports["closed_action"].accuracy,
        "test_bursts": reports["closed_app"].total,
    }
    return BenchResult("closed_world", reports, metrics, models, time.perf_counter() - t0, echo)


def open_world(cfg: Optional[BenchConfig] = None, prepared=None) -> BenchResult:
    """Known-app models tested on sessions that also use held-out apps,
    with and without OpenMax."""
    cfg = cfg or BenchConfig()
    t0 = time.perf_counter()
    models, _, _, _ = prepared or prepare(cfg)
    profiles, known, _ = default_profiles()
    _, _, te = _split_seeds(cfg)
    test_items = make_corpus(profiles, [s + 500 for s in te], cfg.session_s, cfg.gamma, known)
    echo = asdict(cfg)
    with_os = app_burst_scores(test_items, run_pipeline(models, test_items, True), known, echo)
    without = app_burst_scores(test_items, run_pipeline(models, test_items, False), known, echo)
    metrics = {
        "combined_accuracy": with_os.accuracy,
        "unknown_recall": with_os.unknown_recall or 0.0,
        "known_accuracy": with_os.known_accuracy or 0.0,
        "combined_accuracy_no_openmax": without.accuracy,
        "unknown_recall_no_openmax": without.unknown_recall or 0.0,
        "test_bursts": with_os.total,
    }
    reports = {"open_app": with_os, "open_app_no_openmax": without}
    return BenchResult("open_world", reports, metrics, models, time.perf_counter() - t0, echo)


@dataclass
class SweepResult:
    ws_points: list[int]
    ws_accuracy: list[float]
    wa_points: list[int]
    wa_accuracy: list[float]
    seconds: float = 0.0

    def to_rows(self) -> list[tuple[str, int, float]]:
        return [("ws", w, a) for w, a in zip(self.ws_points, self.ws_accuracy)] + [
            ("wa", w, a) for w, a in zip(self.wa_points, self.wa_accuracy)
        ]


def window_sweep(
    cfg: Optional[BenchConfig] = None,
    ws_points: Sequence[int] = (5, 31, 51),
    wa_points: Sequence[int] = (1, 5, 9),
) -> SweepResult:
    """Frame-level app accuracy per W_s and burst-level action accuracy per
    W_a, closed world, everything else fixed."""
    cfg = cfg or BenchConfig()
    t0 = time.perf_counter()
    profiles, known, _ = default_profiles()
    closed = profiles.subset(known)
    tr, va, te = _split_seeds(cfg)
    train_items = make_corpus(closed, tr, cfg.session_s, cfg.gamma, known, cfg.action_phases)
    val_items = make_corpus(closed, va, cfg.session_s, cfg.gamma, known)
    test_items = make_corpus(closed, te, cfg.session_s, cfg.gamma, known)
    categories = closed.categories

    ws_acc = []
    for ws in ws_points:
        model = fit_app_model(train_items, val_items, known, cfg, ws=ws)
        preds = [Prediction(pipeline.predict_app_sequence(t.trace, model, use_openset=False), [], []) for t in test_items]
        ws_acc.append(app_frame_scores(test_items, preds, known).accuracy)
        log.info("W_s=%d frame accuracy %.4f", ws, ws_acc[-1])

    # action sweep routes on true apps so only the action window varies
    wa_acc = []
    for wa in wa_points:
        actions = fit_action_models(train_items, val_items, categories, cfg, wa=wa)
        preds = []
        for t in test_items:
            apps = [a if a in categories else UNKNOWN for a in t.truth_burst_apps]
            preds.append(Prediction([], apps, pipeline.predict_actions(t.features, apps, actions, categories, use_openset=False)))
        wa_acc.append(action_scores(test_items, preds, categories).accuracy)
        log.info("W_a=%d action accuracy %.4f", wa, wa_acc[-1])
    return SweepResult(list(ws_points), ws_acc, list(wa_points), wa_acc, time.perf_counter() - t0)


def scaled(cfg: BenchConfig, **changes) -> BenchConfig:
    return replace(cfg, **changes)
