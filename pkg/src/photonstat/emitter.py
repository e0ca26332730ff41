"""Single-emitter physics: parameter types and correlation closed forms.

The weak-driving two-level closed forms used across the package live here,
so the analytic predictions and the Monte Carlo engine cannot drift apart.
All functions are pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class EmitterModel:
    """Radiative parameters of one weakly driven two-level emitter.

    Parameters
    ----------
    gamma : float
        Excited-state decay rate in 1/s. Default is a typical dipole
        transition scale, 2*pi*20 MHz.
    saturation : float
        Dimensionless drive saturation parameter s. The closed forms and
        the trajectory engine are only valid for s well below 1.
    detuning : float
        Laser detuning in rad/s. Enters only the first-order coherence
        phase.
    wavelength : float
        Scattered-light wavelength in meters.
    elastic_fraction : float
        Fraction of elastically scattered light in the first-order
        coherence, in [0, 1].
    """

    gamma: float = TWO_PI * 20e6
    saturation: float = 0.01
    detuning: float = 0.0
    wavelength: float = 397e-9
    elastic_fraction: float = 1.0

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if self.saturation < 0:
            raise ValueError("saturation must be nonnegative")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        if not 0.0 <= self.elastic_fraction <= 1.0:
            raise ValueError("elastic_fraction must lie in [0, 1]")

    @property
    def k_mag(self) -> float:
        """Wave-vector magnitude 2*pi/wavelength, 1/m."""
        return TWO_PI / self.wavelength

    @property
    def steady_amplitude(self) -> float:
        """Steady-state conditional dipole amplitude, sqrt(s/2), phase 0."""
        return float(np.sqrt(0.5 * self.saturation))


@dataclass(frozen=True)
class MotionModel:
    """1-D Ornstein-Uhlenbeck position process along the detection wave vector.

    Transverse motion is not modeled here; it is absorbed into the emitter
    weights (see the geometry module). Only the phase k*r along the
    observation direction matters for interference.
    """

    sigma_r: float = 0.0          # stationary position spread, m
    tau_m: float = 1e-6           # motional correlation time, s
    k_mag: float = TWO_PI / 397e-9  # wave-vector magnitude, 1/m

    def __post_init__(self):
        if self.sigma_r < 0:
            raise ValueError("sigma_r must be nonnegative")
        if self.tau_m <= 0:
            raise ValueError("tau_m must be positive")
        if self.k_mag <= 0:
            raise ValueError("k_mag must be positive")

    @property
    def is_phase_randomizing(self) -> bool:
        """True when k*sigma_r >= 2*pi (position spread on the wavelength scale)."""
        return self.k_mag * self.sigma_r >= TWO_PI


@dataclass(frozen=True)
class EnsembleSpec:
    """Emitter count plus per-emitter relative contributions.

    Weights are normalized so the strongest emitter has weight 1.
    """

    n_emitters: int
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.n_emitters < 1:
            raise ValueError("n_emitters must be at least 1")
        w = self.weights
        if w is None:
            w = np.ones(self.n_emitters)
        w = np.asarray(w, dtype=float)
        if w.shape != (self.n_emitters,):
            raise ValueError(
                f"weights must have length {self.n_emitters}, got shape {w.shape}"
            )
        if np.any(w <= 0):
            raise ValueError("all weights must be positive")
        w = w / w.max()
        object.__setattr__(self, "weights", w)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tau must be nonnegative")
    return tau


def single_emitter_g2(tau, em: EmitterModel):
    """Normalized second-order correlation of a single emitter.

    Weak-driving two-level closed form (1 - exp(-gamma*tau/2))**2: exactly
    zero at tau = 0 (ideal antibunching), recovering to 1 over ~2/gamma.
    Accepts scalar or array tau in seconds, tau >= 0.
    """
    tau = _check_tau(tau)
    out = (1.0 - np.exp(-0.5 * em.gamma * tau)) ** 2
    return float(out) if out.ndim == 0 else out


def single_emitter_g1(tau, em: EmitterModel):
    """First-order coherence of a single emitter (complex).

    Elastic-dominated weak driving: a constant elastic part of weight
    ``elastic_fraction`` plus an inelastic part relaxing at gamma/2, under
    an overall detuning phase. Modulus is 1 at tau = 0 and nonincreasing.
    """
    tau = _check_tau(tau)
    p = em.elastic_fraction
    envelope = p + (1.0 - p) * np.exp(-0.5 * em.gamma * tau)
    out = envelope * np.exp(-1j * em.detuning * tau)
    return complex(out) if out.ndim == 0 else out


def motional_coherence(tau, mm: MotionModel):
    """Squared modulus of the two-emitter relative-phase coherence factor.

    For independent stationary OU motion the relative phase k*(r_i - r_j)
    dephases as chi(tau) = exp(-2 k^2 sigma_r^2 (1 - exp(-tau/tau_m))):
    1 at tau = 0, monotone down to exp(-2 k^2 sigma_r^2).
    """
    tau = _check_tau(tau)
    ks2 = (mm.k_mag * mm.sigma_r) ** 2
    out = np.exp(-2.0 * ks2 * (1.0 - np.exp(-tau / mm.tau_m)))
    return float(out) if out.ndim == 0 else out
