"""Detection-volume weighting, crystal position generators, mode matrices.

Conventions: coordinates are (x, y, z) in meters with z the optical axis
of the collection optics. Emitter weights are the Gaussian detection
response evaluated at the emitter position.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .analytic import ModeMatrix

FOUR_LN2 = 4.0 * np.log(2.0)

MODE_SCHEMES = ("single_mode", "two_polarization_random", "per_emitter_private")


class PositionFileError(ValueError):
    """Malformed emitter-position file."""


@dataclass(frozen=True)
class DetectionVolume:
    """Gaussian collection response, FWHM-parameterized.

    Transverse (x, y) and axial (z) full widths at half maximum, in
    meters. Defaults describe a weakly focusing collection setup: a wide
    transverse acceptance and a few-micron depth of focus.
    """

    fwhm_transverse: float = 180e-6
    fwhm_axial: float = 3e-6
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.fwhm_transverse <= 0 or self.fwhm_axial <= 0:
            raise ValueError("FWHM values must be positive")
        c = tuple(float(v) for v in self.center)
        if len(c) != 3:
            raise ValueError("center must be a 3-vector")
        object.__setattr__(self, "center", c)


@dataclass(frozen=True)
class CrystalSpec:
    """Recipe for generating emitter positions.

    kind is one of "linear_chain", "shell_ellipsoid" or "from_file".
    spacing applies to chains; semi_axes (in meters, (a, b, c) along
    x, y, z) and seed apply to ellipsoids; path applies to files.
    """

    kind: str
    n_ions: int = 1
    spacing: float = 5e-6
    semi_axes: tuple = (10e-6, 10e-6, 6e-6)
    seed: int = 0
    path: str = None

    def __post_init__(self):
        if self.kind not in ("linear_chain", "shell_ellipsoid", "from_file"):
            raise ValueError(f"unknown crystal kind {self.kind!r}")
        if self.kind != "from_file" and self.n_ions < 1:
            raise ValueError("n_ions must be at least 1")
        if self.spacing <= 0:
            raise ValueError("spacing must be positive")
        ax = tuple(float(v) for v in self.semi_axes)
        if len(ax) != 3 or any(v <= 0 for v in ax):
            raise ValueError("semi_axes must be 3 positive lengths")
        object.__setattr__(self, "semi_axes", ax)
        if self.kind == "from_file" and not self.path:
            raise ValueError("kind='from_file' requires a path")


def gaussian_weight(pos, vol: DetectionVolume):
    """Detection weight exp(-4 ln2 (rho^2/Ft^2 + z^2/Fa^2)) at position(s).

    rho is the transverse distance from the volume center and z the axial
    offset. Accepts one position (shape (3,)) or a stack (n, 3); returns
    a float or an array accordingly. 1 at the center, 0.5 at one half
    width (FWHM/2) along any principal direction.
    """
    p = np.asarray(pos, dtype=float)
    single = p.ndim == 1
    p = np.atleast_2d(p) - np.asarray(vol.center)
    if p.shape[1] != 3:
        raise ValueError("positions must be 3-vectors")
    rho2 = p[:, 0] ** 2 + p[:, 1] ** 2
    w = np.exp(
        -FOUR_LN2 * (rho2 / vol.fwhm_transverse**2 + p[:, 2] ** 2 / vol.fwhm_axial**2)
    )
    return float(w[0]) if single else w


def _fibonacci_sphere(n: int) -> np.ndarray:
    """n near-uniform unit vectors, golden-angle spiral. Deterministic."""
    i = np.arange(n, dtype=float)
    z = 1.0 - (2.0 * i + 1.0) / n
    phi = i * np.pi * (3.0 - np.sqrt(5.0))
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    return np.column_stack([rho * np.cos(phi), rho * np.sin(phi), z])


def _random_rotation(rng) -> np.ndarray:
    # QR of a Gaussian matrix, sign-fixed for a proper uniform rotation
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def generate_positions(spec: CrystalSpec) -> np.ndarray:
    """Emitter positions (n, 3) in meters for a crystal recipe.

    - "linear_chain": n_ions equally spaced along z, centered on the
      origin.
    - "shell_ellipsoid": concentric ellipsoidal shells scaled from
      semi_axes, point counts proportional to shell area, golden-angle
      points with an independent seeded random rotation per shell. All
      points lie within the semi_axes ellipsoid; pairwise distances are
      positive.
    - "from_file": whitespace-separated x y z per line from spec.path,
      '#' comments allowed.
    """
    if spec.kind == "linear_chain":
        z = (np.arange(spec.n_ions) - 0.5 * (spec.n_ions - 1)) * spec.spacing
        out = np.zeros((spec.n_ions, 3))
        out[:, 2] = z
        return out

    if spec.kind == "shell_ellipsoid":
        n = spec.n_ions
        rng = np.random.default_rng(spec.seed)
        n_shells = max(1, int(round(n ** (1.0 / 3.0))))
        fractions = (np.arange(n_shells) + 1.0) / n_shells
        area = fractions**2
        counts = np.floor(n * area / area.sum()).astype(int)
        # distribute the rounding remainder outward, largest shells first
        for k in range(n - counts.sum()):
            counts[n_shells - 1 - (k % n_shells)] += 1
        pts = []
        axes = np.asarray(spec.semi_axes)
        for frac, cnt in zip(fractions, counts):
            if cnt == 0:
                continue
            sphere = _fibonacci_sphere(cnt) @ _random_rotation(rng).T
            pts.append(sphere * axes * frac)
        out = np.vstack(pts)
        if len(out) != n:  # pragma: no cover - accounting guard
            raise RuntimeError("shell point accounting failed")
        return out

    return parse_positions_file(spec.path)


def parse_positions_file(path) -> np.ndarray:
    """Read x y z rows (meters) from a text file.

    Blank lines and '#' comments are ignored. Malformed rows raise
    PositionFileError naming the 1-based line number.
    """
    rows = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 3:
                raise PositionFileError(
                    f"{path}: line {lineno}: expected 3 coordinates, got {len(parts)}"
                )
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                raise PositionFileError(
                    f"{path}: line {lineno}: non-numeric coordinate in {line!r}"
                ) from None
    if not rows:
        raise PositionFileError(f"{path}: no positions found")
    return np.asarray(rows, dtype=float)


def write_positions_file(path, positions, header_lines=()) -> None:
    """Write positions as x y z rows, with optional '#' header lines."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    with open(path, "w", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        for x, y, z in positions:
            f.write(f"{float(x)!r} {float(y)!r} {float(z)!r}\n")


def build_mode_matrix(
    positions,
    vol: DetectionVolume,
    scheme: str,
    eta: float,
    seed: int = 0,
) -> ModeMatrix:
    """Mode matrix for emitters at ``positions`` seen through ``vol``.

    Per emitter the total coupled power is eta times its Gaussian
    detection weight. Schemes:

    - "single_mode": one common mode, all amplitudes real positive
      (fully indistinguishable, C = 1).
    - "two_polarization_random": two modes with equal power and an
      independent uniform relative phase per emitter (C -> 1/2 for large
      N).
    - "per_emitter_private": one dedicated mode per emitter (fully
      distinguishable, C = 0).
    """
    if not 0.0 < eta <= 1.0:
        raise ValueError("eta must lie in (0, 1]")
    pos = np.atleast_2d(np.asarray(positions, dtype=float))
    n = pos.shape[0]
    if n == 0:
        raise ValueError("need at least one emitter position")
    # floor keeps far-out emitters representable instead of underflowing to 0
    w = np.maximum(np.atleast_1d(gaussian_weight(pos, vol)), 1e-200)

    if scheme == "single_mode":
        u = np.sqrt(eta * w)[:, None].astype(complex)
    elif scheme == "two_polarization_random":
        rng = np.random.default_rng(seed)
        theta = rng.uniform(0.0, 2.0 * np.pi, n)
        amp = np.sqrt(0.5 * eta * w)
        u = np.column_stack([amp.astype(complex), amp * np.exp(1j * theta)])
    elif scheme == "per_emitter_private":
        u = np.zeros((n, n), dtype=complex)
        np.fill_diagonal(u, np.sqrt(eta * w))
    else:
        raise ValueError(f"unknown mode scheme {scheme!r}; expected one of {MODE_SCHEMES}")
    return ModeMatrix(amplitudes=u, eta=eta, weights=w)
