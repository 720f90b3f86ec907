"""Command-line interface: ``macprint <command> [options]``.

Every command reads and writes plain files so the stages can be chained:

    synth-gen -> ingest -> segment -> label-align -> train-app / train-action
    -> calibrate-openmax -> predict -> evaluate

``bench`` runs the synthetic closed-world, open-world and window-sweep
benchmarks end to end.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from collections import Counter
from dataclasses import asdict
from pathlib import Path
from typing import Optional, Sequence

from macprint import __version__, annotate, pipeline
from macprint.catalog import UNKNOWN, actions_for
from macprint.evaluation import evaluate
from macprint.features import DEFAULT_WA, DEFAULT_WS, ConfigError, burstify, check_window, trace_burst_features, write_feature_table
from macprint.model import ClassifierModel, TrainConfig, train
from macprint.modelio import ContainerError
from macprint.openset import DEFAULT_DELTA, DEFAULT_ETA, OpenSetError, fit_openset
from macprint.segment import DEFAULT_GAMMA, build_trace_set, dump_traces, load_traces
from macprint.synth import ProfileError, generate_session, load_profiles, write_session
from macprint.wire import FormatError, read_capture, read_frames, write_frames

log = logging.getLogger("macprint")

FATAL = (FormatError, ConfigError, ContainerError, OpenSetError, ProfileError, ValueError, OSError, KeyError)


# ------------------------------------------------------------------ helpers

def _load_dirs(dirs: Sequence[str]):
    """Traces of every dump directory as ``(dir, rel path, trace)``."""
    out = []
    for d in dirs:
        out.extend((Path(d), rel, trace) for rel, trace in load_traces(d))
    return out


def _frame_labels(trace_dir: Path) -> dict[str, list[str]]:
    return annotate.read_frame_labels(trace_dir / annotate.FRAME_LABELS)


def _burst_labels(trace_dir: Path) -> dict[str, tuple[list[str], list[str]]]:
    return annotate.read_burst_labels(trace_dir / annotate.BURST_LABELS)


def _train_config(args) -> TrainConfig:
    return TrainConfig(epochs=args.epochs, lr=args.lr, batch=args.batch, seed=args.seed)


def _categories(path) -> dict[str, str]:
    try:
        cats = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    if not isinstance(cats, dict):
        raise FormatError(f"{path}: expected an app -> category mapping")
    return {str(k): str(v) for k, v in cats.items()}


def _write_csv(path, header: Sequence[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


# ----------------------------------------------------------------- commands

def cmd_ingest(args) -> int:
    stats: Counter = Counter()
    records = read_capture(args.input, args.bssid, stats)
    write_frames(args.out, records)
    print(f"kept {len(records)} data frames")
    for key, value in sorted(stats.items()):
        if key != "kept":
            print(f"dropped {key}: {value}")
    return 0


def cmd_segment(args) -> int:
    if args.gamma <= 0:
        raise ConfigError("gamma must be > 0")
    trace_set = build_trace_set(read_frames(args.frames), args.gamma)
    dump_traces(trace_set, args.out)
    print(f"{trace_set.total} traces from {len(trace_set.stations)} stations")
    return 0


def cmd_featurize(args) -> int:
    rows = []
    for _, rel, trace in _load_dirs([args.traces]):
        for n, vec in enumerate(trace_burst_features(trace)):
            rows.append((rel, n, vec))
    write_feature_table(args.out, rows)
    print(f"{len(rows)} bursts")
    return 0


def cmd_label_align(args) -> int:
    stats: Counter = Counter()
    records = annotate.shift_log(annotate.parse_log(args.log, stats), args.clock_offset_us)
    table = annotate.load_ui_table(args.ui)
    intervals = annotate.app_intervals(records)
    out = Path(args.out or args.traces)
    out.mkdir(parents=True, exist_ok=True)
    frame_rows, burst_rows = [], []
    for _, rel, trace in _load_dirs([args.traces]):
        apps = annotate.label_frames(trace.frames, intervals)
        bursts = burstify(trace)
        burst_apps = pipeline.majority_vote(apps, bursts, sorted(table))
        actions = annotate.label_bursts(bursts, records, table, hold=args.hold_actions, stats=stats)
        frame_rows.extend((rel, i, a) for i, a in enumerate(apps))
        burst_rows.extend((rel, n, a, x) for n, (a, x) in enumerate(zip(burst_apps, actions)))
    annotate.write_frame_labels(out / annotate.FRAME_LABELS, frame_rows)
    annotate.write_burst_labels(out / annotate.BURST_LABELS, burst_rows)
    labeled = sum(1 for r in burst_rows if r[3] != UNKNOWN)
    print(f"{len(frame_rows)} frames, {len(burst_rows)} bursts ({labeled} with an action)")
    for key, value in sorted(stats.items()):
        print(f"{key}: {value}")
    return 0


def _app_data(dirs):
    items = []
    for d, rel, trace in _load_dirs(dirs):
        labels = _frame_labels(d)
        if rel not in labels:
            raise FormatError(f"{d}: no frame labels for {rel}; run label-align first")
        items.append((trace, labels[rel]))
    return items


def cmd_train_app(args) -> int:
    check_window(args.ws, 1, "W_s")
    items = _app_data(args.traces)
    classes = args.classes.split(",") if args.classes else sorted({a for _, labels in items for a in labels} - {UNKNOWN})
    x, y = pipeline.app_dataset(items, classes, args.ws, args.stride)
    validation = None
    if args.val:
        validation = pipeline.app_dataset(_app_data(args.val), classes, args.ws, args.stride)
    model = train(x, y, classes, _train_config(args), net_config={"dropout": args.dropout}, kind="app", validation=validation)
    model.save(args.out)
    print(f"app model: {len(classes)} classes, {len(x)} samples, final loss {model.meta['loss_curve'][-1]:.4f}")
    return 0


def _action_data(dirs, categories, category):
    items = []
    for d, rel, trace in _load_dirs(dirs):
        labels = _burst_labels(d)
        if rel not in labels:
            raise FormatError(f"{d}: no burst labels for {rel}; run label-align first")
        apps, actions = labels[rel]
        keep = [a if categories.get(app) == category else UNKNOWN for app, a in zip(apps, actions)]
        items.append((trace_burst_features(trace), keep))
    return items


def cmd_train_action(args) -> int:
    check_window(args.wa, 1, "W_a")
    categories = _categories(args.categories)
    classes = list(actions_for(args.category))
    x, y = pipeline.action_dataset(_action_data(args.traces, categories, args.category), classes, args.wa)
    validation = None
    if args.val:
        validation = pipeline.action_dataset(_action_data(args.val, categories, args.category), classes, args.wa)
    model = train(x, y, classes, _train_config(args), net_config={"dropout": args.dropout},
                  kind=f"action:{args.category}", validation=validation)
    model.meta["category"] = args.category
    model.save(args.out)
    print(f"{args.category} action model: {len(x)} samples, final loss {model.meta['loss_curve'][-1]:.4f}")
    return 0


def cmd_calibrate(args) -> int:
    model = ClassifierModel.load(args.model)
    if model.kind == "app":
        x, y = pipeline.app_dataset(_app_data(args.traces),
                                    model.classes, model.window, args.stride)
    else:
        categories = _categories(args.categories) if args.categories else None
        if categories is None:
            raise ConfigError("action models need --categories")
        category = model.meta.get("category", model.kind.partition(":")[2])
        x, y = pipeline.action_dataset(_action_data(args.traces, categories, category), model.classes, model.window)
    probs, acts = model.forward(x)
    model.openset = fit_openset(acts, y, probs.argmax(axis=-1), len(model.classes), eta=args.eta, delta=args.delta)
    model.save(args.out or args.model)
    print(f"calibrated {model.kind} model on {len(x)} samples (eta={args.eta}, delta={args.delta})")
    return 0


def cmd_predict(args) -> int:
    app_model = ClassifierModel.load(args.app_model)
    categories = _categories(args.categories)
    action_models = {}
    for path in args.action_model:
        m = ClassifierModel.load(path)
        action_models[m.meta.get("category", m.kind.partition(":")[2])] = m
    use_openset = not args.no_openmax
    delta = args.delta
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    frame_rows, burst_rows, behavior_rows = [], [], []
    g = max((len(actions_for(c)) for c in set(categories.values())), default=0)
    for _, rel, trace in _load_dirs([args.traces]):
        bursts = burstify(trace)
        frames = pipeline.predict_app_sequence(trace, app_model, use_openset, delta)
        burst_apps = pipeline.majority_vote(frames, bursts, app_model.classes)
        actions = pipeline.predict_actions(trace_burst_features(trace), burst_apps, action_models, categories, use_openset, delta)
        frame_rows.extend((rel, i, a) for i, a in enumerate(frames))
        burst_rows.extend((rel, n, a, x) for n, (a, x) in enumerate(zip(burst_apps, actions)))
        for r in pipeline.assemble_behavior(burst_apps, actions, app_model.classes, categories):
            behavior_rows.append([rel, r.burst, r.app, r.action, *(int(v) for v in r.b)])
    annotate.write_frame_labels(out / "frame_predictions.csv", frame_rows)
    annotate.write_burst_labels(out / "burst_predictions.csv", burst_rows)
    header = ["trace", "burst", "app", "action"]
    header += [f"y_{c}" for c in app_model.classes] + [f"y_{UNKNOWN}"]
    header += [f"x_{i}" for i in range(g)] + [f"x_{UNKNOWN}"]
    _write_csv(out / "behavior.csv", header, behavior_rows)
    print(f"{len(frame_rows)} frames, {len(burst_rows)} bursts predicted")
    return 0


def _aligned(pred_path, truth_path, column: str):
    first = Path(pred_path).read_text().split("\n", 1)[0]
    if first.startswith("trace,frame"):
        if column != "app":
            raise ConfigError("frame-level files only carry app labels")
        pred, truth = annotate.read_frame_labels(pred_path), annotate.read_frame_labels(truth_path)
        pick = lambda rows: rows  # noqa: E731
    else:
        pred, truth = annotate.read_burst_labels(pred_path), annotate.read_burst_labels(truth_path)
        pick = (lambda rows: rows[0]) if column == "app" else (lambda rows: rows[1])  # noqa: E731
    y_true, y_pred = [], []
    for key in sorted(truth):
        if key not in pred:
            raise FormatError(f"no predictions for {key}")
        t, p = pick(truth[key]), pick(pred[key])
        if p and len(p) != len(t):
            raise FormatError(f"{key}: {len(p)} predictions for {len(t)} labels")
        if p:
            y_true.extend(t)
            y_pred.extend(p)
    return y_true, y_pred


def cmd_evaluate(args) -> int:
    y_true, y_pred = _aligned(args.predictions, args.truth, args.column)
    if args.skip_unknown_truth:
        keep = [i for i, t in enumerate(y_true) if t != UNKNOWN]
        y_true, y_pred = [y_true[i] for i in keep], [y_pred[i] for i in keep]
    config = {"predictions": str(args.predictions), "truth": str(args.truth), "column": args.column}
    report = evaluate(y_true, y_pred, config=config)
    report.write(args.out, args.name, figure=not args.no_figure)
    print(report.to_text(args.name), end="")
    return 0


def cmd_synth_gen(args) -> int:
    profiles, doc = load_profiles(args.profiles)
    if args.apps:
        profiles = profiles.subset(args.apps.split(","))
    elif args.known_only and "known" in doc:
        profiles = profiles.subset(doc["known"])
    session = generate_session(profiles, args.duration, seed=args.seed)
    write_session(args.out, session, pcap=args.pcap)
    print(f"{len(session.frames)} frames, {len(session.truth.log)} taps, station {session.station}")
    return 0


def cmd_bench(args) -> int:
    from macprint import experiments, plotting

    cfg = experiments.BenchConfig(
        sessions=args.sessions, session_s=args.session_s, split=tuple(args.split), ws=args.ws, wa=args.wa,
        gamma=args.gamma, eta=args.eta, delta=args.delta, seed=args.seed,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    metrics: dict[str, dict] = {}
    if args.which in ("closed", "open", "all"):
        t0 = time.perf_counter()
        prepared = experiments.prepare(cfg)
        models = prepared[0]
        curves = {"app": models.app.meta["loss_curve"]}
        curves.update({f"action:{c}": m.meta["loss_curve"] for c, m in models.actions.items()})
        plotting.loss_figure(curves, out / "loss_curves.png")
        prep_s = time.perf_counter() - t0
        runs = []
        if args.which in ("closed", "all"):
            runs.append(experiments.closed_world(cfg, prepared))
        if args.which in ("open", "all"):
            runs.append(experiments.open_world(cfg, prepared))
        for res in runs:
            for name, report in res.reports.items():
                report.write(out, name)
            metrics[res.name] = dict(res.metrics, seconds=res.seconds + prep_s)
    if args.which in ("sweep", "all"):
        res = experiments.window_sweep(cfg)
        _write_csv(out / "window_sweep.csv", ["window", "size", "accuracy"], res.to_rows())
        plotting.sweep_figure(res.ws_points, res.ws_accuracy, res.wa_points, res.wa_accuracy, out / "window_sweep.png")
        metrics["window_sweep"] = {f"{k}_{w}": a for k, w, a in res.to_rows()} | {"seconds": res.seconds}
    (out / "metrics.json").write_text(json.dumps({"config": asdict(cfg), "results": metrics}, indent=2, sort_keys=True) + "\n")
    _write_csv(out / "metrics.csv", ["benchmark", "metric", "value"],
               [(b, k, v) for b, m in metrics.items() for k, v in sorted(m.items())])
    for b, m in metrics.items():
        print(b + ": " + ", ".join(f"{k}={v:.4f}" for k, v in sorted(m.items())))
    return 0


# ------------------------------------------------------------------- parser

def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    g.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="active-trace frame-rate threshold, frames/s")
    g.add_argument("--ws", type=int, default=DEFAULT_WS, help="app sample window, frames (odd)")
    g.add_argument("--wa", type=int, default=DEFAULT_WA, help="action sample window, bursts (odd)")
    g.add_argument("--delta", type=float, default=DEFAULT_DELTA, help="unknown-probability threshold")
    g.add_argument("-v", "--verbose", action="store_true", help="log progress")
    return p


def _training(p: argparse.ArgumentParser, epochs: int) -> None:
    p.add_argument("--epochs", type=int, default=epochs)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=64)
    p.add_argument("--dropout", type=float, default=0.0)
    p.add_argument("--val", nargs="+", metavar="TRACES", help="validation trace dumps")


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="macprint", description="Encrypted Wi-Fi traffic app and action classification.")
    parser.add_argument("--version", action="version", version=f"macprint {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_, description=help_)
        p.set_defaults(func=func)
        return p

    p = add("ingest", cmd_ingest, "decode a pcap or canonical file into canonical data-frame records")
    p.add_argument("input")
    p.add_argument("--bssid", help="keep only frames of this access point")
    p.add_argument("--out", required=True)

    p = add("segment", cmd_segment, "split canonical frames into per-station active traces")
    p.add_argument("frames")
    p.add_argument("--out", required=True, help="trace dump directory")

    p = add("featurize", cmd_featurize, "write the 22 burst features of every trace")
    p.add_argument("traces", help="trace dump directory")
    p.add_argument("--out", required=True, help="delimited feature table")

    p = add("label-align", cmd_label_align, "label traces from an interaction log and UI table")
    p.add_argument("traces")
    p.add_argument("--log", required=True)
    p.add_argument("--ui", required=True)
    p.add_argument("--clock-offset-us", type=int, default=0, help="added to log times")
    p.add_argument("--hold-actions", action="store_true", help="label bursts with the action in progress")
    p.add_argument("--out", help="label directory (default: the trace directory)")

    p = add("train-app", cmd_train_app, "train the app classifier on labeled trace dumps")
    p.add_argument("traces", nargs="+")
    p.add_argument("--classes", help="comma-separated app ids (default: all labeled apps)")
    p.add_argument("--stride", type=int, default=1, help="sample every n-th window center")
    p.add_argument("--out", required=True)
    _training(p, 20)

    p = add("train-action", cmd_train_action, "train one category's action classifier")
    p.add_argument("traces", nargs="+")
    p.add_argument("--category", required=True)
    p.add_argument("--categories", required=True, help="JSON app -> category map")
    p.add_argument("--out", required=True)
    _training(p, 60)

    p = add("calibrate-openmax", cmd_calibrate, "fit open-set statistics on a model's training data")
    p.add_argument("model")
    p.add_argument("traces", nargs="+")
    p.add_argument("--eta", type=int, default=DEFAULT_ETA, help="Weibull tail size")
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--categories", help="JSON app -> category map (action models)")
    p.add_argument("--out", help="output model (default: overwrite)")

    p = add("predict", cmd_predict, "predict per-frame apps, per-burst apps and actions")
    p.add_argument("traces")
    p.add_argument("--app-model", required=True)
    p.add_argument("--action-model", nargs="+", required=True)
    p.add_argument("--categories", required=True)
    p.add_argument("--no-openmax", action="store_true", help="closed-world argmax decisions")
    p.add_argument("--out", required=True)

    p = add("evaluate", cmd_evaluate, "score predictions against reference labels")
    p.add_argument("predictions")
    p.add_argument("truth")
    p.add_argument("--column", choices=("app", "action"), default="app")
    p.add_argument("--skip-unknown-truth", action="store_true", help="ignore units whose reference label is unknown")
    p.add_argument("--name", default="report")
    p.add_argument("--no-figure", action="store_true")
    p.add_argument("--out", required=True)

    p = add("synth-gen", cmd_synth_gen, "generate a synthetic session with log and ground truth")
    p.add_argument("--profiles", help="profile file (default: packaged profiles)")
    p.add_argument("--duration", type=float, default=90.0, help="seconds")
    p.add_argument("--apps", help="comma-separated subset of app ids")
    p.add_argument("--known-only", action="store_true", help="use only the profile file's known apps")
    p.add_argument("--pcap", action="store_true", help="also write a radiotap pcap")
    p.add_argument("--out", required=True)

    p = add("bench", cmd_bench, "run the synthetic benchmarks")
    p.add_argument("which", choices=("closed", "open", "sweep", "all"))
    p.add_argument("--sessions", type=int, default=20)
    p.add_argument("--session-s", type=float, default=90.0)
    p.add_argument("--split", type=int, nargs=3, default=[14, 3, 3])
    p.add_argument("--eta", type=int, default=DEFAULT_ETA)
    p.add_argument("--out", required=True)
    p.set_defaults(seed=7)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except FATAL as exc:
        print(f"macprint {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
