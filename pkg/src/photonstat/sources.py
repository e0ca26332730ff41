"""Reference tag-stream generators with known click statistics.

These bypass the trajectory engine entirely: photon numbers are drawn
per window from the target law and split on a balanced splitter. They
serve as ground truth for estimator validation and as cheap demo inputs.
"""

from __future__ import annotations

import numpy as np

from .timetags import CHANNEL_A, CHANNEL_B, TimeTagStream


def _scatter_tags(rng, counts, window_ps: int, channel: int) -> TimeTagStream:
    """Place counts[i] tags uniformly inside window i. Sorted output."""
    n_bins = counts.size
    total = int(counts.sum())
    starts = np.repeat(np.arange(n_bins, dtype=np.int64) * window_ps, counts)
    offsets = rng.integers(0, window_ps, total, dtype=np.int64)
    ts = np.sort(starts + offsets, kind="stable")
    meta = {"duration_ps": str(n_bins * window_ps)}
    return TimeTagStream(np.full(total, channel, dtype=np.uint8), ts, meta)


def thermal_pair_streams(n_bar: float, n_bins: int, window: float, seed: int):
    """Single-mode thermal light on a 50/50 splitter, one draw per window.

    Photon numbers follow the Bose-Einstein law with mean n_bar per
    window of width ``window`` seconds; each photon picks a detector
    independently. Returns the (A, B) streams. Click statistics follow
    ``click_stats("thermal_single_mode", n_bar)``.
    """
    if n_bar < 0:
        raise ValueError("n_bar must be nonnegative")
    if n_bins < 1:
        raise ValueError("n_bins must be at least 1")
    window_ps = int(round(window * 1e12))
    if window_ps < 1:
        raise ValueError("window must be at least 1 ps")
    rng = np.random.default_rng(seed)
    # geometric on {1, 2, ...} with p = 1/(1+n_bar), shifted to {0, 1, ...}
    n = rng.geometric(1.0 / (1.0 + n_bar), n_bins) - 1 if n_bar > 0 else np.zeros(
        n_bins, dtype=np.int64
    )
    n_a = rng.binomial(n, 0.5)
    n_b = n - n_a
    a = _scatter_tags(rng, n_a, window_ps, CHANNEL_A)
    b = _scatter_tags(rng, n_b, window_ps, CHANNEL_B)
    for s in (a, b):
        s.metadata["source"] = "thermal_single_mode"
        s.metadata["n_bar"] = repr(float(n_bar))
        s.metadata["seed"] = str(seed)
    return a, b


def poisson_pair_streams(rate: float, duration: float, seed: int):
    """Two independent Poisson processes of ``rate`` counts/s each.

    alpha = beta = 1 for any window choice. Returns the (A, B) streams.
    """
    if rate < 0:
        raise ValueError("rate must be nonnegative")
    if duration <= 0:
        raise ValueError("duration must be positive")
    rng = np.random.default_rng(seed)
    dur_ps = int(round(duration * 1e12))
    out = []
    for code in (CHANNEL_A, CHANNEL_B):
        count = rng.poisson(rate * duration)
        ts = np.sort(rng.integers(0, dur_ps, count, dtype=np.int64), kind="stable")
        meta = {
            "duration_ps": str(dur_ps),
            "source": "poisson",
            "rate_hz": repr(float(rate)),
            "seed": str(seed),
        }
        out.append(TimeTagStream(np.full(count, code, dtype=np.uint8), ts, meta))
    return tuple(out)
