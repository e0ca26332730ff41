"""Closed-form predictions for ensemble photon statistics.

Collective second-order correlation, indistinguishability of the detected
modes, click-ratio statistics for reference sources, and the minimum
emitter number implied by a measured click ratio.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .emitter import (
    EmitterModel,
    MotionModel,
    motional_coherence,
    single_emitter_g1,
    single_emitter_g2,
)


class InfeasibleAlphaError(ValueError):
    """Measured click ratio exceeds what any emitter number can produce."""


@dataclass(frozen=True)
class ModeMatrix:
    """Complex coupling amplitudes of N emitters into M detection modes.

    ``amplitudes[i, k]`` couples emitter i to mode k. Per emitter the mode
    amplitudes satisfy sum_k |u|^2 = eta * w_i where eta is the overall
    collection efficiency and w_i the emitter weight (1e-12 relative).
    """

    amplitudes: np.ndarray
    eta: float
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        u = np.asarray(self.amplitudes, dtype=complex)
        if u.ndim != 2 or u.shape[0] < 1 or u.shape[1] < 1:
            raise ValueError("amplitudes must be a nonempty 2-d array")
        if not 0.0 < self.eta <= 1.0:
            raise ValueError("eta must lie in (0, 1]")
        w = self.weights
        if w is None:
            w = np.ones(u.shape[0])
        w = np.asarray(w, dtype=float)
        if w.shape != (u.shape[0],):
            raise ValueError("weights must have one entry per emitter")
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        power = np.sum(np.abs(u) ** 2, axis=1)
        expected = self.eta * w
        if np.any(np.abs(power - expected) > 1e-12 * np.maximum(expected, 1e-300)):
            worst = int(np.argmax(np.abs(power - expected) / np.maximum(expected, 1e-300)))
            raise ValueError(
                "mode amplitudes violate per-emitter normalization "
                f"sum_k |u|^2 = eta*w (emitter {worst}: {power[worst]:.17g} "
                f"vs {expected[worst]:.17g})"
            )
        object.__setattr__(self, "amplitudes", u)
        object.__setattr__(self, "weights", w)

    @property
    def n_emitters(self) -> int:
        return self.amplitudes.shape[0]

    @property
    def n_modes(self) -> int:
        return self.amplitudes.shape[1]


@dataclass(frozen=True)
class G2Prediction:
    """Sampled collective g2 curve with the parameters that produced it."""

    tau_grid: np.ndarray
    g2_values: np.ndarray
    g2_zero: float
    c_factor: float
    n_effective: float

    def __post_init__(self):
        t = np.asarray(self.tau_grid, dtype=float)
        g = np.asarray(self.g2_values, dtype=float)
        if t.shape != g.shape or t.ndim != 1:
            raise ValueError("tau_grid and g2_values must be matching 1-d arrays")
        if np.any(g < 0):
            raise ValueError("g2 values must be nonnegative")
        object.__setattr__(self, "tau_grid", t)
        object.__setattr__(self, "g2_values", g)


@dataclass(frozen=True)
class ClickStats:
    """Per-window click probabilities and ratios for a reference source."""

    alpha: float
    beta: float
    p_single: float       # per-channel click probability
    p_coincidence: float  # both channels click


def predict_g2(tau, n, em: EmitterModel, mm: MotionModel, c_factor: float = 1.0):
    """Collective second-order correlation of n independent emitters.

    The single-emitter antibunching term enters diluted by 1/n; the pair
    term carries the interference contrast c_factor * |g1|^2 * chi on top
    of the incoherent floor:

        g2 = g2_single/n + (n-1)/n * (c_factor * |g1|^2 * chi + 1)

    Parameters
    ----------
    tau : scalar or array
        Delay in seconds, tau >= 0.
    n : float
        Emitter number, n >= 1. Fractional values are allowed so the same
        form covers effective emitter numbers from unequal weights.
    em, mm : EmitterModel, MotionModel
        Single-emitter and motional parameters.
    c_factor : float
        Mode indistinguishability in [0, 1] (see ``compute_C``).

    At tau = 0 with c_factor = 1 this reduces to 2*(n-1)/n: 0, 1, 4/3 for
    n = 1, 2, 3 and 1.98 for n = 100. Smaller c_factor lowers the
    zero-delay value toward the incoherent floor (n-1)/n.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    if not 0.0 <= c_factor <= 1.0:
        raise ValueError("c_factor must lie in [0, 1]")
    g2s = single_emitter_g2(tau, em)
    g1sq = np.abs(single_emitter_g1(tau, em)) ** 2
    chi = motional_coherence(tau, mm)
    return g2s / n + (n - 1.0) / n * (c_factor * g1sq * chi + 1.0)


def predict_g2_curve(
    tau_grid,
    n,
    em: EmitterModel,
    mm: MotionModel,
    c_factor: float = 1.0,
) -> G2Prediction:
    """Evaluate ``predict_g2`` on a delay grid and package the result.

    The grid may include negative delays; the curve is even in tau, so
    values are computed at |tau|.
    """
    tau_grid = np.asarray(tau_grid, dtype=float)
    values = predict_g2(np.abs(tau_grid), n, em, mm, c_factor)
    zero = predict_g2(0.0, n, em, mm, c_factor)
    return G2Prediction(
        tau_grid=tau_grid,
        g2_values=np.asarray(values, dtype=float),
        g2_zero=float(zero),
        c_factor=float(c_factor),
        n_effective=float(n),
    )


def compute_C(modes: ModeMatrix) -> float:
    """Indistinguishability factor of a mode matrix.

    Pairwise contraction of mode-space overlaps, normalized by the same
    contraction of the per-emitter powers,

        C = sum_{i != j} |B_ij|^2 / sum_{i != j} B_ii * B_jj,
        B_ij = sum_k u_{i,k} * conj(u_{j,k}),

    which is 1 when all emitters radiate into one common mode (any phases
    or weights), 0 when each emitter owns a private mode, and 1/M for M
    balanced random modes on average. Dividing by the power products
    rather than a weight count keeps C a pure measure of mode overlap:
    unequal emitter weights cancel out. Cauchy-Schwarz bounds every term
    by its normalizer, so C lies in [0, 1] up to rounding; anything
    outside is reported as computed with a warning.
    """
    u = modes.amplitudes
    n = modes.n_emitters
    if n < 2:
        raise ValueError("indistinguishability needs at least two emitters")
    b = u @ u.conj().T
    power = np.real(np.diagonal(b)).copy()
    overlap2 = np.abs(b) ** 2
    np.fill_diagonal(overlap2, 0.0)
    norm = np.outer(power, power)
    np.fill_diagonal(norm, 0.0)
    c = float(overlap2.sum()) / float(norm.sum())
    if not 0.0 <= c <= 1.0 + 1e-10:
        warnings.warn(f"indistinguishability C={c:.6g} outside [0, 1]", stacklevel=2)
    return c


def effective_n(weights) -> float:
    """Effective emitter number (sum w)^2 / sum w^2 of positive weights.

    Equals the count for equal weights and degrades toward 1 as the
    distribution becomes lopsided.
    """
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise ValueError("weights must be nonempty")
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    return float(w.sum() ** 2 / np.sum(w**2))


def click_stats(kind: str, n_bar: float) -> ClickStats:
    """Window click statistics of a reference source on a balanced splitter.

    ``kind`` selects the per-window photon-number law:

    - "poisson": coherent/background light. alpha = beta = 1 exactly at
      any mean occupancy.
    - "thermal_single_mode": Bose-Einstein occupancy split 50/50. With
      mean n_bar per window, P(no click on one channel) = 2/(2+n_bar) and
      P(no click on both) = 1/(1+n_bar), giving

          alpha = (2+n_bar)/(1+n_bar),  beta = 1 + (n_bar^2/4)/(1+n_bar),

      i.e. alpha -> 2 and beta -> 1 as n_bar -> 0.

    alpha is the coincidence ratio P_c/(P_sA*P_sB) and beta the
    double-vacuum ratio P_00/(P_0A*P_0B) of threshold (click/no-click)
    detectors.
    """
    if n_bar < 0:
        raise ValueError("n_bar must be nonnegative")
    if kind == "poisson":
        p0 = float(np.exp(-0.5 * n_bar))
        ps = 1.0 - p0
        return ClickStats(alpha=1.0, beta=1.0, p_single=ps, p_coincidence=ps * ps)
    if kind == "thermal_single_mode":
        p0 = 2.0 / (2.0 + n_bar)
        p00 = 1.0 / (1.0 + n_bar)
        ps = 1.0 - p0
        pc = 1.0 - 2.0 * p0 + p00
        alpha = (2.0 + n_bar) / (1.0 + n_bar)
        beta = 1.0 + (n_bar**2 / 4.0) / (1.0 + n_bar)
        return ClickStats(alpha=alpha, beta=beta, p_single=ps, p_coincidence=pc)
    raise ValueError(f"unknown source kind {kind!r}")


def nmin_alpha(n_min: int, n_tot: int) -> float:
    """Smallest coincidence ratio compatible with n_min saturable emitters.

    Out of n_tot contributing scatterers, n_min are ideal antibunched
    emitters and the rest form a Poisson-like background of equal
    brightness. The floor is

        alpha = 1 + (n_min^2 - 2*n_min) / n_tot^2,

    which is below 1 only for n_min in {1, 2} and reaches 2 - 2/n_tot when
    all scatterers are emitters.
    """
    if n_tot < 1:
        raise ValueError("n_tot must be at least 1")
    if not 0 <= n_min <= n_tot:
        raise ValueError("n_min must lie in [0, n_tot]")
    return 1.0 + (n_min * n_min - 2 * n_min) / float(n_tot * n_tot)


def invert_nmin(alpha_measured: float, n_tot: int) -> int:
    """Minimum emitter number whose click floor reaches a measured alpha.

    Returns 0 when alpha_measured < 1 (no super-Poissonian evidence of
    multiple emitters). Otherwise returns the smallest x >= 2 with
    ``nmin_alpha(x, n_tot) >= alpha_measured``. Raises
    InfeasibleAlphaError when alpha_measured exceeds the x = n_tot
    ceiling 2 - 2/n_tot.
    """
    if n_tot < 1:
        raise ValueError("n_tot must be at least 1")
    if alpha_measured < 1.0:
        return 0
    if n_tot < 2 or alpha_measured > nmin_alpha(n_tot, n_tot):
        raise InfeasibleAlphaError(
            f"alpha={alpha_measured:.6g} exceeds the n_tot={n_tot} ceiling "
            f"{2.0 - 2.0 / n_tot if n_tot >= 2 else 0.0:.6g}"
        )
    # nmin_alpha is strictly increasing for x >= 2 at fixed n_tot
    lo, hi = 2, n_tot
    while lo < hi:
        mid = (lo + hi) // 2
        if nmin_alpha(mid, n_tot) >= alpha_measured:
            hi = mid
        else:
            lo = mid + 1
    return lo


def predict_alpha_windowed(
    pred: G2Prediction,
    window: float,
    jitter_sigma: float = 0.0,
    rate: float = 0.0,
) -> float:
    """Predicted click coincidence ratio for width-``window`` bins.

    In the small-occupancy limit the binned click ratio equals the g2
    curve averaged over the triangular lag kernel of two aligned windows,

        alpha = integral g2(D) * max(window - |D|, 0) / window^2 dD,

    after smearing g2 with a Gaussian of std sqrt(2)*jitter_sigma for the
    independent tag jitter of the two detectors.

    Parameters
    ----------
    pred : G2Prediction
        Curve sampled on a grid spanning at least
        +-(window + 6*jitter_sigma); a narrower grid raises ValueError.
    window : float
        Coincidence window in seconds, > 0.
    jitter_sigma : float
        Per-detector timing jitter std in seconds.
    rate : float
        Expected per-channel count rate in 1/s. Only used to warn when
        rate*window is large enough (> 0.05) that the at-least-one-click
        binarization biases the comparison beyond first order.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    if jitter_sigma < 0:
        raise ValueError("jitter_sigma must be nonnegative")
    need = window + 6.0 * jitter_sigma
    t = pred.tau_grid
    slop = 1e-9 * need
    if t.min() > -need + slop or t.max() < need - slop:
        raise ValueError(
            f"tau_grid must span at least +-{need:.4g} s, "
            f"got [{t.min():.4g}, {t.max():.4g}]"
        )
    if rate * window > 0.05:
        warnings.warn(
            f"rate*window = {rate * window:.3g} is outside the "
            "small-occupancy regime; binned clicks will deviate from this "
            "prediction at first order",
            stacklevel=2,
        )

    # uniform resampling fine enough for both the triangle and the jitter kernel
    h = window / 256.0
    if jitter_sigma > 0:
        h = min(h, jitter_sigma / 16.0)
    grid = np.arange(-need, need + 0.5 * h, h)
    order = np.argsort(t, kind="stable")
    vals = np.interp(grid, t[order], pred.g2_values[order])

    if jitter_sigma > 0:
        # kernel std sqrt(2)*jitter (two independent detectors), truncated
        # at the 6*jitter tail the grid contract guarantees (4.2 sigma)
        sj = np.sqrt(2.0) * jitter_sigma
        half = int(np.ceil(6.0 * jitter_sigma / h))
        kx = np.arange(-half, half + 1) * h
        kernel = np.exp(-0.5 * (kx / sj) ** 2)
        kernel /= kernel.sum()
        vals = np.convolve(vals, kernel, mode="same")

    triangle = np.clip(1.0 - np.abs(grid) / window, 0.0, None) / window
    return float(np.trapezoid(vals * triangle, grid))
