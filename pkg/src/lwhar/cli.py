"""``har`` command line: stats, train, eval, predict, export-plots, gradcheck.

Exit codes: 0 success, 1 domain error, 2 usage error.
"""
from __future__ import annotations

import argparse
import logging
import os
import re
import sys
import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import kernels
from .dataset import (
    LABEL_NAMES,
    ActivityLabel,
    build_runs,
    class_distribution,
    load_windows,
    parse_raw,
    prepare,
    segment_all,
    split_windows,
    stack_windows,
    write_windows,
)
from .metrics import MetricsReport, confusion_matrix, format_matrix
from .modelfile import ModelFileError, load_model, save_model
from .plots import export_history_curves, export_signal_series
from .recurrent import AGGREGATIONS, forward_batch, parameter_count
from .training import Hyperparameters, evaluate, gradient_check, network_backward, random_small_case, train

DATA_ENV = "HAR_DATA_DIR"
DEFAULT_DATA_FILE = "WISDM_ar_v1.1_raw.txt"
GRADCHECK_TOL = 1e-5

log = logging.getLogger("lwhar")


class CommandError(Exception):
    """A domain failure reported to the user with exit code 1."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage


@dataclass
class RunConfig:
    data: str | None = None
    model: str | None = None
    out_dir: str = "."
    hp: Hyperparameters = field(default_factory=Hyperparameters)


def default_data_path():
    base = os.environ.get(DATA_ENV)
    return os.path.join(base, DEFAULT_DATA_FILE) if base else None


def _data_path(arg):
    path = arg or default_data_path()
    if path is None:
        raise CommandError("config", f"no data file given (pass --data or set {DATA_ENV})")
    return path


def _stage(name, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (OSError, ValueError, ModelFileError, FloatingPointError) as exc:
        raise CommandError(name, str(exc)) from exc


def _write(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w") as fh:
        fh.write(text)


# -- stats -------------------------------------------------------------------

def cmd_stats(args, out=sys.stdout):
    samples, report = _stage("parse", parse_raw, _data_path(args.data))
    dist = class_distribution(samples)
    out.write(f"Total Number of Samples: {dist.total:,}\n")
    out.write(f"Total Number of Subjects: {len(np.unique(samples.subject))}\n")
    out.write(f"{'Activity':<12}{'Samples':>12}{'Percentage':>12}\n")
    for name, count, pct in dist.rows():
        out.write(f"{name:<12}{count:>12,}{pct:>11.1f}%\n")
    out.write(f"records read: {report.lines_read}, accepted: {report.accepted}, "
              f"skipped: {report.skipped_total}")
    if report.skipped:
        out.write(" (" + ", ".join(f"{k}={v}" for k, v in sorted(report.skipped.items())) + ")")
    out.write("\n")
    if args.out:
        lines = ["activity,samples,percentage"]
        lines += [f"{name},{count},{pct!r}" for name, count, pct in dist.rows()]
        lines.append(f"total,{dist.total},100.0")
        _write(args.out, "\n".join(lines) + "\n")
    return 0


# -- train -------------------------------------------------------------------

def _config_from_args(args) -> RunConfig:
    base = Hyperparameters()
    overrides = {}
    for name in ("window_size", "stride", "batch_size", "epochs", "learning_rate", "l2_coeff",
                 "hidden", "seed", "aggregation", "split_ratio"):
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if getattr(args, "no_normalize", False):
        overrides["normalize"] = False
    if getattr(args, "subject_split", False):
        overrides["subject_split"] = True
    try:
        hp = replace(base, **overrides)
    except ValueError as exc:
        raise CommandError("config", str(exc)) from exc
    return RunConfig(getattr(args, "data", None), getattr(args, "model", None),
                     getattr(args, "out_dir", "."), hp)


def cmd_train(args, out=sys.stdout):
    cfg = _config_from_args(args)
    hp = cfg.hp
    data = _stage("prepare", prepare, _data_path(cfg.data), hp)
    out.write(f"windows: {len(data.windows)} (train {data.train[0].shape[0]}, "
              f"test {data.test[0].shape[0]}); kernel backend: {kernels.BACKEND}\n")
    params, report = _stage("train", train, data.train, data.test, hp)
    os.makedirs(cfg.out_dir, exist_ok=True)
    model_path = cfg.model or os.path.join(cfg.out_dir, "model.lwhar")
    history_path = args.history or os.path.join(cfg.out_dir, "history.csv")
    _stage("save", save_model, params, hp, model_path, data.norm)
    _stage("save", _write, history_path, "\n".join(report.history_lines()) + "\n")
    out.write(f"trained {len(report.epochs)} epochs in {report.wall_time:.1f}s; "
              f"{parameter_count(params)} parameters\n")
    if report.epochs:
        last = report.epochs[-1]
        out.write(f"final train_loss={last.train_loss:.4f} train_acc={last.train_acc:.4f} "
                  f"test_loss={last.test_loss:.4f} test_acc={last.test_acc:.4f}\n")
    Xte, yte = data.test
    if Xte.shape[0]:
        _, _, preds = evaluate(params, Xte, yte, hp.aggregation)
        rep = MetricsReport.from_matrix(confusion_matrix(yte, preds))
        out.write(f"test accuracy={rep.accuracy:.4f} precision={rep.precision:.4f} "
                  f"recall={rep.recall:.4f} f1={rep.f1:.4f}\n")
    out.write(f"model: {model_path}\nhistory: {history_path}\n")
    return 0


# -- eval --------------------------------------------------------------------

def evaluate_model_on(data_path, params, hp, norm, subset="all"):
    """Predictions for the windows of ``subset`` under the model's own windowing."""
    _, _, _, windows = _stage("prepare", load_windows, data_path, hp)
    if subset != "all":
        train_w, test_w = split_windows(windows, hp)
        windows = train_w if subset == "train" else test_w
    if not windows:
        raise CommandError("eval", f"no windows in subset {subset!r}")
    X, y = stack_windows(windows)
    X = norm.apply(X)
    loss, acc, preds = evaluate(params, X, y, hp.aggregation)
    return y, preds, loss


def cmd_eval(args, out=sys.stdout):
    params, hp, norm = _stage("load", load_model, args.model)
    y, preds, loss = evaluate_model_on(_data_path(args.data), params, hp, norm, args.split)
    M = confusion_matrix(y, preds)
    rep = MetricsReport.from_matrix(M)
    out.write(f"windows={M.sum()} loss={loss:.6f}\n")
    out.write(rep.key_values())
    out.write("per-class recall: " + ", ".join(
        f"{n}={r:.4f}" for n, r in zip(LABEL_NAMES, rep.per_class_recall)) + "\n")
    out.write(format_matrix(M, LABEL_NAMES, sep="\t"))
    os.makedirs(args.out_dir, exist_ok=True)
    _write(os.path.join(args.out_dir, "confusion_matrix.csv"), format_matrix(M, LABEL_NAMES))
    _write(os.path.join(args.out_dir, "metrics.txt"), rep.key_values())
    _write(os.path.join(args.out_dir, "per_class.csv"), rep.table(LABEL_NAMES))
    if args.predictions:
        _write(args.predictions, "".join(f"{int(t)},{int(p)}\n" for t, p in zip(y, preds)))
    return 0


# -- predict -----------------------------------------------------------------

_SPLIT = re.compile(r"[,\s;]+")


def read_xyz_rows(text: str) -> np.ndarray:
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p for p in _SPLIT.split(line) if p]
        if len(parts) != 3:
            raise ValueError(f"line {lineno}: expected 3 values (x, y, z), got {len(parts)}")
        rows.append([float(p) for p in parts])
    return np.array(rows, dtype=np.float64).reshape(-1, 3)


def predict_window(params, hp, norm, rows):
    """Classify the last ``window_size`` rows; returns ``(label, probs, seconds)``."""
    rows = np.asarray(rows, dtype=np.float64)
    if rows.shape[0] < hp.window_size:
        raise ValueError(f"need at least {hp.window_size} rows, got {rows.shape[0]}")
    window = rows[-hp.window_size:]
    t0 = time.perf_counter()
    probs = forward_batch(params, norm.apply(window), hp.aggregation).probs[0]
    label = int(np.argmax(probs))
    elapsed = time.perf_counter() - t0
    return ActivityLabel(label), probs, elapsed


def cmd_predict(args, out=sys.stdout):
    params, hp, norm = _stage("load", load_model, args.model)
    if args.input == "-":
        text = sys.stdin.read()
    else:
        text = _stage("read", lambda p: open(p).read(), args.input)
    rows = _stage("read", read_xyz_rows, text)
    label, probs, elapsed = _stage("predict", predict_window, params, hp, norm, rows)
    out.write(f"label: {label.display}\n")
    out.write("probabilities: " + ", ".join(
        f"{n}={p:.6f}" for n, p in zip(LABEL_NAMES, probs)) + "\n")
    out.write(f"latency_ms: {elapsed * 1e3:.3f}\n")
    return 0


# -- export-plots ------------------------------------------------------------

def cmd_export_plots(args, out=sys.stdout):
    if not args.data and not args.history:
        raise CommandError("config", "give --data and/or --history")
    os.makedirs(args.out_dir, exist_ok=True)
    if args.data:
        samples, _ = _stage("parse", parse_raw, args.data)
        runs = build_runs(samples)
        files = export_signal_series(runs, args.out_dir, args.cap)
        out.write(f"wrote {len(files)} signal series to {args.out_dir}\n")
        if args.windows_out:
            hp = _config_from_args(args).hp
            write_windows(args.windows_out, segment_all(runs, hp.window_size, hp.stride))
            out.write(f"windows: {args.windows_out}\n")
    if args.history:
        name = _stage("export", export_history_curves, args.history, args.out_dir)
        out.write(f"wrote {name}\n")
    return 0


# -- gradcheck ---------------------------------------------------------------

def _corrupted_backward(params, trace, label):
    grads = network_backward(params, trace, label)
    grads.layer1.w_h.flat[0] += 1e-3
    return grads


def cmd_gradcheck(args, out=sys.stdout):
    params, window, label = random_small_case(args.seed, hidden=args.hidden, steps=args.steps)
    backward = _corrupted_backward if args.corrupt_backward else network_backward
    err = gradient_check(params, window, label, step=args.step, aggregation=args.aggregation,
                         backward=backward)
    out.write(f"max_rel_error={err:.6e}\n")
    return 0 if err < GRADCHECK_TOL else 1


# -- wiring ------------------------------------------------------------------

def _add_hp_flags(p):
    p.add_argument("--window-size", type=int)
    p.add_argument("--stride", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--l2", dest="l2_coeff", type=float, help="L2 weight-decay coefficient")
    p.add_argument("--hidden", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--aggregation", choices=AGGREGATIONS)
    p.add_argument("--split-ratio", type=float)
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--subject-split", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="har", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="dataset composition")
    p.add_argument("--data")
    p.add_argument("--out", help="also write a CSV table here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="full pipeline: parse, window, split, train")
    p.add_argument("--data")
    p.add_argument("--model")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--history")
    _add_hp_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics and confusion matrix")
    p.add_argument("--model", required=True)
    p.add_argument("--data")
    p.add_argument("--split", choices=("all", "train", "test"), default="all")
    p.add_argument("--out-dir", default=".")
    p.add_argument("--predictions", help="write truth,prediction pairs here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one window of x,y,z rows")
    p.add_argument("--model", required=True)
    p.add_argument("input", help="text file of x,y,z rows, or - for stdin")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("export-plots", help="plot-ready signal and history data")
    p.add_argument("--data")
    p.add_argument("--history")
    p.add_argument("--out-dir", default="plots")
    p.add_argument("--cap", type=int, default=500)
    p.add_argument("--windows-out", help="also dump all windows as flat text")
    _add_hp_flags(p)
    p.set_defaults(func=cmd_export_plots)

    p = sub.add_parser("gradcheck", help="finite-difference check of backpropagation")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=4)
    p.add_argument("--steps", type=int, default=6)
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--aggregation", choices=AGGREGATIONS, default="sum")
    p.add_argument("--corrupt-backward", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_gradcheck)
    return parser


def main(argv=None, out=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, out=out or sys.stdout)
    except CommandError as exc:
        print(f"har: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
