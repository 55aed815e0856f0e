"""Synthetic accelerometer streams in the WISDM raw text format.

Good enough to exercise the whole pipeline offline; not a stand-in for
the real recordings.
"""
from __future__ import annotations

import numpy as np

from .dataset import ActivityLabel
from .numerics import SeededRng

RATE_HZ = 20.0

# (dominant frequency Hz, amplitude, resting gravity vector)
_PROFILES = {
    ActivityLabel.WALKING: (1.8, 3.0, (0.5, 9.6, 0.8)),
    ActivityLabel.JOGGING: (2.7, 8.0, (-1.0, 9.0, 1.5)),
    ActivityLabel.UPSTAIRS: (1.3, 2.5, (1.5, 9.2, -1.8)),
    ActivityLabel.DOWNSTAIRS: (1.6, 4.0, (-1.5, 9.4, 2.2)),
    ActivityLabel.SITTING: (0.0, 0.0, (1.0, 2.5, 9.3)),
    ActivityLabel.STANDING: (0.0, 0.0, (-0.4, 9.7, 0.6)),
}


def activity_signal(label: ActivityLabel, n: int, rng: SeededRng) -> np.ndarray:
    """``(n, 3)`` accelerations for one bout of an activity."""
    freq, amp, rest = _PROFILES[ActivityLabel(label)]
    t = np.arange(n) / RATE_HZ
    phase = rng.uniform(0, 2 * np.pi, size=3)
    out = np.tile(np.asarray(rest, dtype=np.float64), (n, 1))
    if amp:
        f = freq * rng.uniform(0.9, 1.1)
        out[:, 0] += 0.6 * amp * np.sin(2 * np.pi * f * t + phase[0])
        out[:, 1] += amp * np.sin(2 * np.pi * f * t + phase[1])
        out[:, 2] += 0.4 * amp * np.sin(2 * np.pi * 0.5 * f * t + phase[2])
    out += rng.normal(0.0, 0.35 if amp else 0.08, size=out.shape)
    return out


def wisdm_lines(bouts, seed: int = 0, start_ts: int = 10**12):
    """Yield raw lines for ``bouts``: an iterable of ``(subject, label, n_samples)``."""
    rng = SeededRng(seed)
    ts = start_ts
    for subject, label, n in bouts:
        sig = activity_signal(label, n, rng)
        name = ActivityLabel(label).display
        for x, y, z in sig:
            yield f"{subject},{name},{ts},{x:.6f},{y:.6f},{z:.6f};"
            ts += 50_000_000


def synthetic_text(subjects=3, samples_per_bout=400, bouts_per_activity=1, seed: int = 0) -> str:
    bouts = [(s, a, samples_per_bout)
             for s in range(1, subjects + 1)
             for _ in range(bouts_per_activity)
             for a in ActivityLabel]
    return "\n".join(wisdm_lines(bouts, seed)) + "\n"
