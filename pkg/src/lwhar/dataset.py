"""WISDM-format ingestion, run building, windowing, normalisation and splitting.

Raw records look like ``subject,activity,timestamp,x,y,z;``.  A record
ends at a newline or a ``;`` (the public raw file has a few physical lines
carrying several records), so the parser counts records rather than
physical lines.
"""
from __future__ import annotations

import enum
import math
import os
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .numerics import SeededRng

MAX_MAGNITUDE = 80.0
STD_FLOOR = 1e-8


class ActivityLabel(enum.IntEnum):
    WALKING = 0
    JOGGING = 1
    UPSTAIRS = 2
    DOWNSTAIRS = 3
    SITTING = 4
    STANDING = 5

    @property
    def display(self) -> str:
        return self.name.capitalize()

    @classmethod
    def parse(cls, text: str) -> "ActivityLabel":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown activity label {text!r}") from None


LABEL_NAMES = [a.display for a in ActivityLabel]


@dataclass(frozen=True)
class Sample:
    subject: int
    label: ActivityLabel
    timestamp: int
    accel: tuple


class SampleTable:
    """Column store of parsed samples, in file order."""

    def __init__(self, subject, label, timestamp, accel):
        self.subject = np.asarray(subject, dtype=np.int64)
        self.label = np.asarray(label, dtype=np.int8)
        self.timestamp = np.asarray(timestamp, dtype=np.int64)
        self.accel = np.asarray(accel, dtype=np.float64).reshape(-1, 3)

    def __len__(self):
        return self.subject.shape[0]

    def __getitem__(self, k) -> Sample:
        return Sample(int(self.subject[k]), ActivityLabel(int(self.label[k])),
                      int(self.timestamp[k]), tuple(float(v) for v in self.accel[k]))

    def __iter__(self):
        return (self[k] for k in range(len(self)))

    @classmethod
    def from_samples(cls, samples) -> "SampleTable":
        samples = list(samples)
        return cls([s.subject for s in samples], [int(s.label) for s in samples],
                   [s.timestamp for s in samples],
                   np.array([s.accel for s in samples], dtype=np.float64).reshape(-1, 3))


@dataclass
class ParseReport:
    lines_read: int = 0
    accepted: int = 0
    skipped: Counter = field(default_factory=Counter)

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped.values())


def _read_text(source) -> str:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            data = fh.read()
    else:
        data = source.read()
    if isinstance(data, bytes):
        data = data.decode("utf-8", errors="replace")
    return data


def _parse_record(rec: str):
    """Return a 6-tuple or a skip-reason string."""
    parts = [p.strip() for p in rec.split(",")]
    if len(parts) != 6:
        return "malformed"
    try:
        subject = int(parts[0])
        timestamp = int(parts[2])
        x, y, z = float(parts[3]), float(parts[4]), float(parts[5])
    except ValueError:
        return "malformed"
    try:
        label = ActivityLabel.parse(parts[1])
    except ValueError:
        return "unknown_label"
    if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
        return "non_finite"
    if math.sqrt(x * x + y * y + z * z) >= MAX_MAGNITUDE:
        return "out_of_range"
    return subject, int(label), timestamp, x, y, z


def parse_raw(source):
    """Parse a WISDM-style stream (path, bytes or text file object).

    Returns ``(SampleTable, ParseReport)``.  Bad records are counted by
    reason and skipped; only an unreadable source raises.
    """
    text = _read_text(source)
    report = ParseReport()
    rows = []
    for line in text.splitlines():
        for rec in line.split(";"):
            rec = rec.strip()
            if not rec:
                continue
            report.lines_read += 1
            parsed = _parse_record(rec)
            if isinstance(parsed, str):
                report.skipped[parsed] += 1
            else:
                rows.append(parsed)
    report.accepted = len(rows)
    if rows:
        cols = list(zip(*rows))
        table = SampleTable(cols[0], cols[1], cols[2], np.column_stack(cols[3:6]))
    else:
        table = SampleTable([], [], [], np.zeros((0, 3)))
    return table, report


@dataclass
class Run:
    subject: int
    label: ActivityLabel
    start: int  # index of first sample in the source table
    accel: np.ndarray  # (n, 3)
    timestamp: np.ndarray

    def __len__(self):
        return self.accel.shape[0]


def build_runs(samples) -> list:
    """Split samples into maximal stretches of constant (subject, label)."""
    table = samples if isinstance(samples, SampleTable) else SampleTable.from_samples(samples)
    n = len(table)
    if n == 0:
        return []
    change = (table.subject[1:] != table.subject[:-1]) | (table.label[1:] != table.label[:-1])
    bounds = np.concatenate(([0], np.flatnonzero(change) + 1, [n]))
    return [
        Run(int(table.subject[a]), ActivityLabel(int(table.label[a])), int(a),
            table.accel[a:b], table.timestamp[a:b])
        for a, b in zip(bounds[:-1], bounds[1:])
    ]


@dataclass
class Window:
    label: ActivityLabel
    values: np.ndarray  # (window_size, 3)
    subject: int
    start: int = 0  # sample index in the source table


def window_count(length: int, window_size: int, stride: int) -> int:
    return (length - window_size) // stride + 1 if length >= window_size else 0


def segment(run: Run, window_size: int = 180, stride: int = 100) -> list:
    if window_size < 1 or stride < 1:
        raise ValueError("window_size and stride must be >= 1")
    return [
        Window(run.label, run.accel[off:off + window_size], run.subject, run.start + off)
        for off in range(0, len(run) - window_size + 1, stride)
    ]


def segment_all(runs, window_size=180, stride=100) -> list:
    out = []
    for run in runs:
        out.extend(segment(run, window_size, stride))
    return out


def stack_windows(windows):
    """``(X, y)`` arrays from a list of windows."""
    windows = list(windows)
    if not windows:
        return np.zeros((0, 0, 3)), np.zeros(0, dtype=np.intp)
    return (np.stack([w.values for w in windows]).astype(np.float64),
            np.array([int(w.label) for w in windows], dtype=np.intp))


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.std

    @classmethod
    def identity(cls, channels=3) -> "NormStats":
        return cls(np.zeros(channels), np.ones(channels))


def normalize(train_X, test_X, enabled: bool = True):
    """Per-channel z-score with statistics from the training windows only.

    Returns ``(train, test, NormStats)``; with ``enabled=False`` the data
    pass through and the stats are the identity transform.
    """
    train_X = np.asarray(train_X, dtype=np.float64)
    test_X = np.asarray(test_X, dtype=np.float64)
    if train_X.shape[0] == 0:
        raise ValueError("cannot normalise against an empty training set")
    channels = train_X.shape[-1]
    if not enabled:
        return train_X, test_X, NormStats.identity(channels)
    flat = train_X.reshape(-1, channels)
    # shifted by the first sample: a constant channel gets its mean exactly
    pivot = flat[0]
    dev = flat - pivot
    stats = NormStats(pivot + dev.mean(axis=0), np.maximum(dev.std(axis=0), STD_FLOOR))
    test_out = stats.apply(test_X) if test_X.size else test_X
    return stats.apply(train_X), test_out, stats


def split(windows, ratio: float = 0.7, seed: int = 0):
    """Seeded shuffle; the first ``floor(ratio * N)`` windows train."""
    windows = list(windows)
    if not windows:
        raise ValueError("cannot split an empty window set")
    if not 0 < ratio < 1:
        raise ValueError("ratio must lie strictly between 0 and 1")
    order = SeededRng(seed).permutation(len(windows))
    k = int(math.floor(ratio * len(windows)))
    return [windows[i] for i in order[:k]], [windows[i] for i in order[k:]]


def split_by_subject(windows, ratio: float = 0.7, seed: int = 0):
    """Like :func:`split` but whole subjects go to one side."""
    windows = list(windows)
    if not windows:
        raise ValueError("cannot split an empty window set")
    subjects = sorted({w.subject for w in windows})
    order = SeededRng(seed).permutation(len(subjects))
    k = int(math.floor(ratio * len(subjects)))
    train_subjects = {subjects[i] for i in order[:k]}
    return ([w for w in windows if w.subject in train_subjects],
            [w for w in windows if w.subject not in train_subjects])


@dataclass
class ClassDistribution:
    counts: dict
    total: int

    def percent(self, label) -> float:
        return 100.0 * self.counts[ActivityLabel(label)] / self.total if self.total else 0.0

    def rows(self):
        for a in ActivityLabel:
            yield a.display, self.counts[a], self.percent(a)


def class_distribution(samples) -> ClassDistribution:
    if isinstance(samples, SampleTable):
        labels = samples.label
    else:
        labels = np.array([int(s.label) for s in samples], dtype=np.int64)
    binc = np.bincount(np.asarray(labels, dtype=np.int64), minlength=len(ActivityLabel))
    return ClassDistribution({a: int(binc[a]) for a in ActivityLabel}, int(binc.sum()))


# -- flat window text export ------------------------------------------------

def write_windows(path, windows) -> None:
    """One window per line: label index then the ``T x 3`` values row-major."""
    with open(path, "w") as fh:
        for w in windows:
            vals = " ".join(repr(float(v)) for v in np.asarray(w.values).ravel())
            fh.write(f"{int(w.label)} {vals}\n")


def read_windows(path, channels: int = 3) -> list:
    out = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            vals = np.array([float(v) for v in parts[1:]]).reshape(-1, channels)
            out.append(Window(ActivityLabel(int(parts[0])), vals, subject=-1))
    return out


# -- full pipeline -------------------------------------------------------------

@dataclass
class PreparedData:
    samples: SampleTable
    report: ParseReport
    runs: list
    windows: list
    train: tuple  # (X, y) normalised
    test: tuple
    norm: NormStats


def load_windows(source, hp):
    """parse -> runs -> segment; returns ``(samples, report, runs, windows)``."""
    samples, report = parse_raw(source)
    runs = build_runs(samples)
    windows = segment_all(runs, hp.window_size, hp.stride)
    if not windows:
        raise ValueError(f"no run is long enough for a {hp.window_size}-sample window")
    return samples, report, runs, windows


def split_windows(windows, hp):
    splitter = split_by_subject if hp.subject_split else split
    return splitter(windows, hp.split_ratio, hp.seed)


def prepare(source, hp) -> PreparedData:
    """parse -> runs -> segment -> split -> normalise, per ``hp``."""
    samples, report, runs, windows = load_windows(source, hp)
    train_w, test_w = split_windows(windows, hp)
    if not train_w:
        raise ValueError("split left the training set empty")
    Xtr, ytr = stack_windows(train_w)
    Xte, yte = stack_windows(test_w)
    if Xte.shape[0] == 0:
        Xte = np.zeros((0, hp.window_size, 3))
    Xtr, Xte, norm = normalize(Xtr, Xte, hp.normalize)
    return PreparedData(samples, report, runs, windows, (Xtr, ytr), (Xte, yte), norm)
