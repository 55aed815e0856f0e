"""Plot-ready delimited exports: per-activity axis traces and training curves."""
from __future__ import annotations

import csv
import os

from .dataset import ActivityLabel

AXES = ("x", "y", "z")


def export_signal_series(runs, out_dir, cap: int = 500):
    """Write the first run of each activity as one file per axis.

    Returns the list of files written; ``manifest.csv`` records which
    activities were absent.
    """
    os.makedirs(out_dir, exist_ok=True)
    first = {}
    for run in runs:
        first.setdefault(run.label, run)
    written = []
    manifest = [("activity", "axis", "status", "file", "samples")]
    for act in ActivityLabel:
        run = first.get(act)
        for k, axis in enumerate(AXES):
            if run is None:
                manifest.append((act.display, axis, "absent", "", "0"))
                continue
            name = f"signal_{act.display.lower()}_{axis}.csv"
            n = min(cap, len(run))
            with open(os.path.join(out_dir, name), "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(("index", "timestamp", "value"))
                for i in range(n):
                    w.writerow((i, int(run.timestamp[i]), repr(float(run.accel[i, k]))))
            written.append(name)
            manifest.append((act.display, axis, "present", name, str(n)))
    with open(os.path.join(out_dir, "manifest.csv"), "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(manifest)
    return written


def read_history(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def export_history_curves(history_path, out_dir) -> str:
    """Loss and accuracy curves, one row per epoch."""
    rows = read_history(history_path)
    os.makedirs(out_dir, exist_ok=True)
    name = "training_curves.csv"
    with open(os.path.join(out_dir, name), "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "train_loss", "test_loss", "train_acc", "test_acc"))
        for r in rows:
            w.writerow((r["epoch"], r["train_loss"], r["test_loss"], r["train_acc"], r["test_acc"]))
    return name
