"""Click-statistics estimators for paired time-tag streams.

All window estimators binarize each stream into width-T bins ("did at
least one tag land here") and work from four integer counts: clicks on
A, clicks on B, coincidences, and occupied-bin unions. The inclusion-
exclusion identity P_c = 1 - P_0A - P_0B + P_00 therefore holds exactly
at the integer level for every analyzed stream pair.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import timetags
from .timetags import CHANNEL_A, CHANNEL_B, TimeTagStream


class UndefinedEstimateError(RuntimeError):
    """The requested ratio is 0/0 on this data (no clicks, or all clicks)."""


@dataclass(frozen=True)
class BinCounts:
    """Integer click-bin tallies of one stream pair at one window."""

    n_pairs: int       # number of aligned bin pairs considered
    clicks_a: int      # bins with >= 1 tag on A
    clicks_b: int
    coincidences: int  # bins clicked on both
    occupied: int      # bins clicked on at least one

    def __post_init__(self):
        # inclusion-exclusion at the integer level; fails only on bugs
        if self.coincidences != self.clicks_a + self.clicks_b - self.occupied:
            raise ValueError("inconsistent bin tallies")


@dataclass(frozen=True)
class G2Histogram:
    """Normalized pair-correlation histogram vs lag."""

    lags: np.ndarray      # bin centers, seconds (symmetric around 0)
    values: np.ndarray    # g2 estimate per bin
    stderr: np.ndarray    # Poisson standard error per bin
    bin_width: float

    def value_at(self, lag: float) -> float:
        return float(self.values[int(np.argmin(np.abs(self.lags - lag)))])


@dataclass(frozen=True)
class Verdicts:
    """Significance flags at a fixed 3-sigma policy."""

    super_poissonian: bool
    sub_poissonian: bool
    bunched: bool
    significance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CorrelationReport:
    """Everything ``analyze_streams`` extracts from one stream pair."""

    window: float
    n_segments: int
    alpha: float
    alpha_stderr: float
    beta: float
    beta_stderr: float
    counts: BinCounts
    histogram: G2Histogram = None
    verdicts: Verdicts = None
    metadata: dict = field(default_factory=dict)


def _click_bin_ids(ts_ps: np.ndarray, window_ps: int) -> np.ndarray:
    """Sorted unique indices of occupied width-T bins."""
    return np.unique(ts_ps // window_ps)


def bin_click_counts(
    a: TimeTagStream,
    b: TimeTagStream,
    window: float,
    lag: float = 0.0,
) -> BinCounts:
    """Tally clicked bins for two streams at a window, with optional lag.

    ``lag`` shifts which B bin is compared against each A bin (rounded to
    whole bins). Only complete bins inside the common duration count.
    """
    window_ps = int(round(window * 1e12))
    if window_ps < 1:
        raise ValueError("window must be at least 1 ps")
    dur = a.duration_ps
    if dur != b.duration_ps:
        raise ValueError(
            f"streams cover different durations ({dur} vs {b.duration_ps} ps)"
        )
    n_bins = dur // window_ps
    if n_bins < 1:
        raise ValueError("window exceeds the stream duration")
    lag_bins = int(round(lag * 1e12 / window_ps))
    if abs(lag_bins) >= n_bins:
        raise ValueError("lag exceeds the acquisition length")

    ia = _click_bin_ids(a.timestamps, window_ps)
    ib = _click_bin_ids(b.timestamps, window_ps) - lag_bins
    # valid aligned pairs: A bin j and B bin j+lag both inside [0, n_bins)
    lo = max(0, -lag_bins)
    hi = min(n_bins, n_bins - lag_bins)
    ia = ia[(ia >= lo) & (ia < hi)]
    ib = ib[(ib >= lo) & (ib < hi)]
    n_pairs = int(hi - lo)
    both = np.intersect1d(ia, ib, assume_unique=True)
    return BinCounts(
        n_pairs=n_pairs,
        clicks_a=int(ia.size),
        clicks_b=int(ib.size),
        coincidences=int(both.size),
        occupied=int(ia.size + ib.size - both.size),
    )


def _alpha_from_counts(c: BinCounts) -> float:
    if c.clicks_a == 0 or c.clicks_b == 0:
        raise UndefinedEstimateError("no clicks on one channel; alpha undefined")
    ps_a = c.clicks_a / c.n_pairs
    ps_b = c.clicks_b / c.n_pairs
    return (c.coincidences / c.n_pairs) / (ps_a * ps_b)


def _beta_from_counts(c: BinCounts) -> float:
    empty_a = c.n_pairs - c.clicks_a
    empty_b = c.n_pairs - c.clicks_b
    if empty_a == 0 or empty_b == 0:
        raise UndefinedEstimateError("a channel clicked in every bin; beta undefined")
    p00 = (c.n_pairs - c.occupied) / c.n_pairs
    return p00 / ((empty_a / c.n_pairs) * (empty_b / c.n_pairs))


def _segmented(a, b, window, lag, n_segments, from_counts):
    value = from_counts(bin_click_counts(a, b, window, lag))
    # cuts snap to the bin grid so every segment bins on the same phase
    window_ps = max(1, int(round(window * 1e12)))
    seg_a = timetags.segment(a, n_segments, align_ps=window_ps)
    seg_b = timetags.segment(b, n_segments, align_ps=window_ps)
    pieces = [
        from_counts(bin_click_counts(sa, sb, window, lag))
        for sa, sb in zip(seg_a, seg_b)
    ]
    spread = float(np.std(pieces, ddof=1))
    return float(value), float(spread / np.sqrt(n_segments))


def estimate_alpha(
    a: TimeTagStream,
    b: TimeTagStream,
    window: float,
    lag: float = 0.0,
    n_segments: int = 6,
):
    """Coincidence click ratio alpha = P_c / (P_sA * P_sB).

    Bins both streams into width-``window`` slots (click = at least one
    tag) and forms the ratio of the coincidence probability to the product
    of singles probabilities. Returns (alpha, stderr) where the
    uncertainty is the spread over ``n_segments`` contiguous sub-
    acquisitions divided by sqrt(n_segments).

    Poisson streams give 1 at any occupancy; thermal light gives
    (2+n_bar)/(1+n_bar); emitter ensembles interpolate per the windowed
    prediction. Raises UndefinedEstimateError when a channel never clicks.
    """
    if n_segments < 2:
        raise ValueError("n_segments must be at least 2")
    return _segmented(a, b, window, lag, n_segments, _alpha_from_counts)


def estimate_beta(
    a: TimeTagStream,
    b: TimeTagStream,
    window: float,
    lag: float = 0.0,
    n_segments: int = 6,
):
    """Double-vacuum ratio beta = P_00 / (P_0A * P_0B), with stderr.

    Estimated exactly like alpha but on empty bins; it is insensitive to
    independent Poisson background overlaid on the signal. Raises
    UndefinedEstimateError when some channel clicks in every bin.
    """
    if n_segments < 2:
        raise ValueError("n_segments must be at least 2")
    return _segmented(a, b, window, lag, n_segments, _beta_from_counts)


def g2_histogram(
    a: TimeTagStream,
    b: TimeTagStream,
    bin_width: float,
    max_lag: float,
) -> G2Histogram:
    """Normalized A-B pair correlation vs lag.

    Counts tag pairs (t_b - t_a) into bins of ``bin_width`` centered on
    multiples of it out to +-``max_lag``, normalized by the uncorrelated
    expectation rate_a * rate_b * bin_width * duration so a flat Poisson
    pair sits at 1. Standard errors are Poisson (sqrt of raw counts).
    """
    if bin_width <= 0 or max_lag < bin_width:
        raise ValueError("need bin_width > 0 and max_lag >= bin_width")
    dur = a.duration_ps
    if dur != b.duration_ps:
        raise ValueError("streams cover different durations")
    ta = a.timestamps
    tb = b.timestamps
    if ta.size == 0 or tb.size == 0:
        raise UndefinedEstimateError("empty channel; histogram undefined")
    bw_ps = bin_width * 1e12
    n_side = int(round(max_lag / bin_width))
    half_span = (n_side + 0.5) * bw_ps
    counts = np.zeros(2 * n_side + 1, dtype=np.int64)
    # chunked two-pointer sweep keeps memory bounded on dense streams
    chunk = 1 << 16
    for start in range(0, ta.size, chunk):
        seg = ta[start : start + chunk]
        lo = np.searchsorted(tb, seg - half_span, side="left")
        hi = np.searchsorted(tb, seg + half_span, side="right")
        m = hi - lo
        total = int(m.sum())
        if total == 0:
            continue
        take = np.repeat(lo, m) + (
            np.arange(total) - np.repeat(np.cumsum(m) - m, m)
        )
        diffs = tb[take] - np.repeat(seg, m)
        idx = np.rint(diffs / bw_ps).astype(np.int64) + n_side
        np.add.at(counts, np.clip(idx, 0, 2 * n_side), 1)
    duration_s = dur * 1e-12
    rate_a = ta.size / duration_s
    rate_b = tb.size / duration_s
    norm = rate_a * rate_b * bin_width * duration_s
    lags = (np.arange(2 * n_side + 1) - n_side) * bin_width
    return G2Histogram(
        lags=lags,
        values=counts / norm,
        stderr=np.sqrt(counts) / norm,
        bin_width=bin_width,
    )


def verdicts(
    alpha: float,
    alpha_stderr: float,
    hist: G2Histogram = None,
    threshold: float = 3.0,
) -> Verdicts:
    """Classify a measurement at a fixed significance threshold (3 sigma).

    super/sub-Poissonian compare alpha against 1; bunched compares the
    zero-lag histogram value against the largest-lag value when a
    histogram is supplied.
    """
    if alpha_stderr <= 0:
        raise ValueError("alpha_stderr must be positive")
    sig_super = (alpha - 1.0) / alpha_stderr
    significance = {"super_poissonian": sig_super, "sub_poissonian": -sig_super}
    bunched = False
    if hist is not None:
        zero = hist.value_at(0.0)
        tail_idx = int(np.argmax(np.abs(hist.lags)))
        tail = float(hist.values[tail_idx])
        e0 = float(hist.stderr[int(np.argmin(np.abs(hist.lags)))])
        e1 = float(hist.stderr[tail_idx])
        denom = float(np.hypot(e0, e1))
        sig_bunched = (zero - tail) / denom if denom > 0 else np.inf
        significance["bunched"] = sig_bunched
        bunched = sig_bunched > threshold
    return Verdicts(
        super_poissonian=sig_super > threshold,
        sub_poissonian=-sig_super > threshold,
        bunched=bunched,
        significance=significance,
    )


def analyze_streams(
    a: TimeTagStream,
    b: TimeTagStream,
    window: float,
    n_segments: int = 6,
    hist_bin: float = None,
    max_lag: float = None,
    metadata: dict = None,
) -> CorrelationReport:
    """Full click-statistics workup of one stream pair.

    Computes alpha and beta with segment-spread uncertainties, optionally
    a pair-correlation histogram (when ``hist_bin`` and ``max_lag`` are
    given), and the verdict flags.
    """
    alpha, alpha_err = estimate_alpha(a, b, window, n_segments=n_segments)
    beta, beta_err = estimate_beta(a, b, window, n_segments=n_segments)
    counts = bin_click_counts(a, b, window)
    hist = None
    if hist_bin is not None and max_lag is not None:
        hist = g2_histogram(a, b, hist_bin, max_lag)
    flags = verdicts(alpha, alpha_err, hist)
    return CorrelationReport(
        window=window,
        n_segments=n_segments,
        alpha=alpha,
        alpha_stderr=alpha_err,
        beta=beta,
        beta_stderr=beta_err,
        counts=counts,
        histogram=hist,
        verdicts=flags,
        metadata=dict(metadata or {}),
    )


def report_to_text(report: CorrelationReport) -> str:
    """Key-value rendering of a report, stable across runs."""
    lines = []
    for k, v in report.metadata.items():
        lines.append(f"# {k} = {v}")
    lines.append(f"window_s = {report.window!r}")
    lines.append(f"n_segments = {report.n_segments}")
    lines.append(f"alpha = {report.alpha!r}")
    lines.append(f"alpha_stderr = {report.alpha_stderr!r}")
    lines.append(f"beta = {report.beta!r}")
    lines.append(f"beta_stderr = {report.beta_stderr!r}")
    c = report.counts
    lines.append(f"bin_pairs = {c.n_pairs}")
    lines.append(f"clicks_a = {c.clicks_a}")
    lines.append(f"clicks_b = {c.clicks_b}")
    lines.append(f"coincidences = {c.coincidences}")
    v = report.verdicts
    if v is not None:
        lines.append(f"super_poissonian = {v.super_poissonian}")
        lines.append(f"sub_poissonian = {v.sub_poissonian}")
        lines.append(f"bunched = {v.bunched}")
        for name, sig in v.significance.items():
            lines.append(f"significance_{name} = {sig:.4f}")
    return "\n".join(lines) + "\n"


def histogram_to_csv(hist: G2Histogram, header_lines=()) -> str:
    """CSV rendering (lag_s, g2, stderr) with '#' provenance lines."""
    lines = [f"# {h}" for h in header_lines]
    lines.append("lag_s,g2,stderr")
    for lag, val, err in zip(hist.lags, hist.values, hist.stderr):
        lines.append(f"{float(lag)!r},{float(val)!r},{float(err)!r}")
    return "\n".join(lines) + "\n"
