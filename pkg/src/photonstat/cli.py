"""Command-line interface.

Subcommands: predict, simulate, analyze, sweep, invert-nmin, gen-crystal.
Run configuration is a flat key-value file, one ``section.key = value``
per line with '#' comments, e.g.::

    emitter.gamma_hz = 1.257e8
    crystal.kind = shell_ellipsoid
    crystal.n_ions = 55
    sim.duration_s = 2.0

Every output file starts with '#' provenance lines (tool version, sha256
digest of the resolved configuration, seed) and contains no timestamps,
so reruns are byte-identical. Exit codes: 0 success, 1 configuration
problem, 2 runtime/estimation failure. PHOTONSTAT_THREADS controls how
many worker processes a sweep may use.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__, estimators, sources, timetags
from .analytic import (
    InfeasibleAlphaError,
    effective_n,
    invert_nmin,
    predict_alpha_windowed,
    predict_g2_curve,
)
from .emitter import EmitterModel, EnsembleSpec, MotionModel
from .estimators import UndefinedEstimateError
from .geometry import (
    CrystalSpec,
    DetectionVolume,
    PositionFileError,
    build_mode_matrix,
    generate_positions,
    write_positions_file,
)
from .montecarlo import ConfigurationError, DetectorParams, SimConfig, simulate
from .timetags import FormatError


class ConfigError(ValueError):
    """Unreadable or inconsistent run configuration."""


def _tuple3(text: str):
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 3:
        raise ValueError(f"expected 3 comma-separated numbers, got {text!r}")
    return tuple(parts)


def _int_list(text: str):
    return [int(v) for v in text.split(",") if v.strip()]


# key -> (caster, default as string); the single source of truth for keys
CONFIG_SCHEMA = {
    "emitter.gamma_hz": (float, repr(2.0 * np.pi * 20e6)),
    "emitter.saturation": (float, "0.004"),
    "emitter.detuning_hz": (float, "0.0"),
    "emitter.wavelength_m": (float, "397e-9"),
    "emitter.elastic_fraction": (float, "1.0"),
    "motion.sigma_r_m": (float, "200e-9"),
    "motion.tau_m_s": (float, "1e-5"),
    "crystal.kind": (str, "linear_chain"),
    "crystal.n_ions": (int, "1"),
    "crystal.spacing_m": (float, "5e-6"),
    "crystal.semi_axes_m": (_tuple3, "1e-5,1e-5,6e-6"),
    "crystal.seed": (int, "0"),
    "crystal.path": (str, ""),
    "volume.fwhm_transverse_m": (float, "180e-6"),
    "volume.fwhm_axial_m": (float, "3e-6"),
    "volume.center_m": (_tuple3, "0,0,0"),
    "modes.scheme": (str, "single_mode"),
    "modes.eta": (float, "1e-4"),
    "modes.seed": (int, "0"),
    "detector.jitter_sigma_s": (float, "1e-9"),
    "detector.dead_time_s": (float, "25e-9"),
    "detector.dark_rate_hz": (float, "100.0"),
    "detector.splitter_ratio": (float, "0.5"),
    "sim.duration_s": (float, "1.0"),
    "sim.dt_s": (float, "0"),
    "sim.detection_gain": (float, "0"),
    "sim.target_rate_hz": (float, "0"),
    "sim.seed": (int, "1"),
    "analysis.window_ps": (int, "1000"),
    "analysis.segments": (int, "6"),
    "analysis.hist_bin_ps": (int, "0"),
    "analysis.max_lag_ps": (int, "0"),
    "sweep.n_list": (_int_list, "1,2,3,14,55,202"),
    "sweep.chain_max_n": (int, "3"),
    "sweep.chain_spacing_m": (float, "2.2e-6"),
    "sweep.ellipsoid_pitch_m": (float, "2.0e-6"),
    "sweep.ellipsoid_aspect": (float, "0.6"),
    "output.tags_path": (str, "tags.pttg"),
    "output.report_path": (str, ""),
    "output.histogram_path": (str, ""),
}


@dataclass(frozen=True)
class RunConfig:
    """Resolved flat configuration: every schema key has a string value."""

    values: dict

    def __getitem__(self, key: str):
        caster, _ = CONFIG_SCHEMA[key]
        try:
            return caster(self.values[key])
        except (ValueError, KeyError) as e:
            raise ConfigError(f"bad value for {key}: {e}") from None

    def digest(self) -> str:
        text = "".join(f"{k} = {self.values[k]}\n" for k in sorted(self.values))
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, pairs) -> "RunConfig":
        vals = dict(self.values)
        for key, value in pairs:
            if key not in CONFIG_SCHEMA:
                raise ConfigError(f"unknown configuration key {key!r}")
            vals[key] = value
        return RunConfig(vals)


def default_config() -> RunConfig:
    return RunConfig({k: d for k, (_, d) in CONFIG_SCHEMA.items()})


def load_config(path) -> RunConfig:
    """Parse a key-value config file against the schema."""
    values = {k: d for k, (_, d) in CONFIG_SCHEMA.items()}
    try:
        with open(path, "r", encoding="utf-8") as f:
            for lineno, raw in enumerate(f, start=1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                key, sep, value = line.partition("=")
                if not sep:
                    raise ConfigError(f"{path}: line {lineno}: expected 'key = value'")
                key = key.strip()
                if key not in CONFIG_SCHEMA:
                    raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
                values[key] = value.strip()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from None
    cfg = RunConfig(values)
    for key in values:
        cfg[key]  # force a cast so typos fail at load time
    return cfg


def _parse_set_overrides(items):
    pairs = []
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {item!r}")
        pairs.append((key.strip(), value.strip()))
    return pairs


def provenance_lines(cfg: RunConfig, seed) -> list:
    return [
        f"tool = photonstat {__version__}",
        f"config_sha256 = {cfg.digest()}",
        f"seed = {seed}",
    ]


# ---------------------------------------------------------------- builders


def build_emitter(cfg: RunConfig) -> EmitterModel:
    return EmitterModel(
        gamma=cfg["emitter.gamma_hz"],
        saturation=cfg["emitter.saturation"],
        detuning=cfg["emitter.detuning_hz"],
        wavelength=cfg["emitter.wavelength_m"],
        elastic_fraction=cfg["emitter.elastic_fraction"],
    )


def build_motion(cfg: RunConfig, em: EmitterModel) -> MotionModel:
    return MotionModel(
        sigma_r=cfg["motion.sigma_r_m"],
        tau_m=cfg["motion.tau_m_s"],
        k_mag=em.k_mag,
    )


def build_volume(cfg: RunConfig) -> DetectionVolume:
    return DetectionVolume(
        fwhm_transverse=cfg["volume.fwhm_transverse_m"],
        fwhm_axial=cfg["volume.fwhm_axial_m"],
        center=cfg["volume.center_m"],
    )


def build_crystal(cfg: RunConfig) -> CrystalSpec:
    return CrystalSpec(
        kind=cfg["crystal.kind"],
        n_ions=cfg["crystal.n_ions"],
        spacing=cfg["crystal.spacing_m"],
        semi_axes=cfg["crystal.semi_axes_m"],
        seed=cfg["crystal.seed"],
        path=cfg["crystal.path"] or None,
    )


def build_sim_config(cfg: RunConfig) -> SimConfig:
    em = build_emitter(cfg)
    mm = build_motion(cfg, em)
    positions = generate_positions(build_crystal(cfg))
    modes = build_mode_matrix(
        positions,
        build_volume(cfg),
        cfg["modes.scheme"],
        cfg["modes.eta"],
        seed=cfg["modes.seed"],
    )
    ensemble = EnsembleSpec(n_emitters=len(positions), weights=modes.weights)
    detector = DetectorParams(
        jitter_sigma=cfg["detector.jitter_sigma_s"],
        dead_time=cfg["detector.dead_time_s"],
        dark_rate=cfg["detector.dark_rate_hz"],
        splitter_ratio=cfg["detector.splitter_ratio"],
    )
    gain = cfg["sim.detection_gain"]
    target = cfg["sim.target_rate_hz"]
    if target > 0:
        rate_unit = em.gamma * em.steady_amplitude**2 * float(np.sum(modes.weights))
        rate_unit *= modes.eta
        if rate_unit <= 0:
            raise ConfigError("cannot size detection_gain: zero emission rate")
        gain = target / rate_unit
    elif gain <= 0:
        raise ConfigError("set sim.detection_gain or sim.target_rate_hz")
    dt = cfg["sim.dt_s"]
    try:
        return SimConfig(
            emitter=em,
            motion=mm,
            ensemble=ensemble,
            modes=modes,
            detector=detector,
            duration=cfg["sim.duration_s"],
            dt=dt if dt > 0 else None,
            detection_gain=gain,
            seed=cfg["sim.seed"],
        )
    except ConfigurationError:
        raise
    except ValueError as e:
        raise ConfigError(str(e)) from None


# ---------------------------------------------------------------- commands


def _write_lines(path, text: str):
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)


def _gnuplot_script(csv_path, xlabel, ylabel, columns, out_png) -> str:
    lines = [
        "set datafile separator ','",
        f"set xlabel '{xlabel}'",
        f"set ylabel '{ylabel}'",
        "set key top right",
        f"set output '{out_png}'",
        "set terminal pngcairo size 800,600",
    ]
    plots = [
        f"'{csv_path}' using {x}:{y} with linespoints title '{t}'"
        for (x, y, t) in columns
    ]
    lines.append("plot " + ", \\\n     ".join(plots))
    return "\n".join(lines) + "\n"


def cmd_predict(args) -> int:
    cfg = default_config().with_overrides(_parse_set_overrides(args.set))
    em = EmitterModel(
        gamma=args.gamma_hz,
        saturation=cfg["emitter.saturation"],
        detuning=cfg["emitter.detuning_hz"],
        wavelength=args.wavelength_m,
        elastic_fraction=args.elastic_fraction,
    )
    mm = MotionModel(sigma_r=args.sigma_r_m, tau_m=args.tau_m_s, k_mag=em.k_mag)
    if args.tau is not None:
        value = float(
            np.asarray(
                predict_g2_curve([abs(args.tau)], args.n, em, mm, args.c_factor).g2_values
            )[0]
        )
        print(value)
        return 0

    window = args.window_ps * 1e-12
    jitter = args.jitter_ps * 1e-12
    span = max(args.tau_max_ps * 1e-12, window + 6.0 * jitter)
    grid = np.linspace(-span, span, args.points)
    pred = predict_g2_curve(grid, args.n, em, mm, args.c_factor)
    alpha = predict_alpha_windowed(pred, window, jitter_sigma=jitter)
    print(f"g2_zero = {pred.g2_zero!r}")
    print(f"alpha_windowed = {alpha!r}")
    if args.out:
        prov = RunConfig(
            {
                "n": repr(args.n),
                "c_factor": repr(args.c_factor),
                "gamma_hz": repr(args.gamma_hz),
                "sigma_r_m": repr(args.sigma_r_m),
                "tau_m_s": repr(args.tau_m_s),
                "window_ps": repr(args.window_ps),
                "jitter_ps": repr(args.jitter_ps),
            }
        )
        header = [
            f"# tool = photonstat {__version__}",
            f"# config_sha256 = {prov.digest()}",
            f"# alpha_windowed = {alpha!r}",
            f"# g2_zero = {pred.g2_zero!r}",
        ]
        rows = [
            f"{float(t)!r},{float(g)!r}"
            for t, g in zip(pred.tau_grid, pred.g2_values)
        ]
        _write_lines(args.out, "\n".join(header + ["tau_s,g2"] + rows) + "\n")
        if args.gnuplot:
            _write_lines(
                args.gnuplot,
                _gnuplot_script(
                    args.out, "tau (s)", "g2", [(1, 2, "g2")], args.out + ".png"
                ),
            )
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config).with_overrides(_parse_set_overrides(args.set))
    if args.seed is not None:
        cfg = cfg.with_overrides([("sim.seed", str(args.seed))])
    sim_cfg = build_sim_config(cfg)
    a, b = simulate(sim_cfg)
    merged = timetags.merge(a, b)
    merged.metadata["config_sha256"] = cfg.digest()
    merged.metadata["tool"] = f"photonstat {__version__}"
    out = args.out or cfg["output.tags_path"]
    if out.endswith(".csv"):
        timetags.write_stream_csv(merged, out)
    else:
        timetags.write_stream(merged, out)
    print(f"tags = {out}")
    print(f"counts_a = {len(a)}")
    print(f"counts_b = {len(b)}")
    print(f"duration_s = {sim_cfg.duration!r}")
    print(f"config_sha256 = {cfg.digest()}")
    return 0


def _read_any(path) -> timetags.TimeTagStream:
    with open(path, "rb") as f:
        magic = f.read(4)
    if magic == timetags.MAGIC:
        return timetags.read_stream(path)
    return timetags.read_stream_csv(path)


def cmd_analyze(args) -> int:
    cfg = default_config().with_overrides(_parse_set_overrides(args.set))
    stream = _read_any(args.input)
    a, b = timetags.split(stream)
    window = args.window_ps * 1e-12
    hist_bin = args.hist_bin_ps * 1e-12 if args.hist_bin_ps else None
    max_lag = args.max_lag_ps * 1e-12 if args.max_lag_ps else None
    meta = dict(
        zip(
            ("tool", "config_sha256", "input"),
            (f"photonstat {__version__}", cfg.digest(), str(args.input)),
        )
    )
    report = estimators.analyze_streams(
        a,
        b,
        window,
        n_segments=args.segments,
        hist_bin=hist_bin,
        max_lag=max_lag,
        metadata=meta,
    )
    text = estimators.report_to_text(report)
    sys.stdout.write(text)
    if args.report:
        _write_lines(args.report, text)
    if report.histogram is not None and args.hist_out:
        _write_lines(
            args.hist_out,
            estimators.histogram_to_csv(
                report.histogram, [f"{k} = {v}" for k, v in meta.items()]
            ),
        )
        if args.gnuplot:
            _write_lines(
                args.gnuplot,
                _gnuplot_script(
                    args.hist_out,
                    "lag (s)",
                    "g2",
                    [(1, 2, "g2")],
                    args.hist_out + ".png",
                ),
            )
    return 0


def _sweep_point(payload):
    values, n, index = payload
    cfg = RunConfig(values)
    overrides = [("sim.seed", str(cfg["sim.seed"] + index))]
    if n <= cfg["sweep.chain_max_n"]:
        overrides += [
            ("crystal.kind", "linear_chain"),
            ("crystal.n_ions", str(n)),
            ("crystal.spacing_m", repr(cfg["sweep.chain_spacing_m"])),
        ]
    else:
        pitch = cfg["sweep.ellipsoid_pitch_m"]
        aspect = cfg["sweep.ellipsoid_aspect"]
        a_axis = (3.0 * n * pitch**3 / (4.0 * np.pi * aspect)) ** (1.0 / 3.0)
        overrides += [
            ("crystal.kind", "shell_ellipsoid"),
            ("crystal.n_ions", str(n)),
            (
                "crystal.semi_axes_m",
                f"{a_axis!r},{a_axis!r},{aspect * a_axis!r}",
            ),
            ("crystal.seed", str(cfg["crystal.seed"] + index)),
        ]
    cfg = cfg.with_overrides(overrides)
    sim_cfg = build_sim_config(cfg)
    a, b = simulate(sim_cfg)
    window = cfg["analysis.window_ps"] * 1e-12
    alpha, alpha_err = estimators.estimate_alpha(
        a, b, window, n_segments=cfg["analysis.segments"]
    )
    beta, beta_err = estimators.estimate_beta(
        a, b, window, n_segments=cfg["analysis.segments"]
    )
    n_eff = effective_n(sim_cfg.ensemble.weights)
    return index, n, n_eff, alpha, alpha_err, beta, beta_err


def cmd_sweep(args) -> int:
    cfg = load_config(args.config).with_overrides(_parse_set_overrides(args.set))
    n_list = _int_list(args.n_list) if args.n_list else cfg["sweep.n_list"]
    if not n_list or any(n < 1 for n in n_list):
        raise ConfigError("sweep needs a list of positive emitter counts")
    payloads = [(cfg.values, n, i) for i, n in enumerate(n_list)]
    threads = int(os.environ.get("PHOTONSTAT_THREADS", "1"))
    if threads > 1 and len(payloads) > 1:
        # one process per point: keeps compiled-kernel RNG streams isolated
        with ProcessPoolExecutor(max_workers=min(threads, len(payloads))) as pool:
            rows = list(pool.map(_sweep_point, payloads))
    else:
        rows = [_sweep_point(p) for p in payloads]
    rows.sort()
    header = [f"# {line}" for line in provenance_lines(cfg, cfg["sim.seed"])]
    body = ["n,n_eff,alpha,alpha_stderr,beta,beta_stderr"]
    for _, n, n_eff, alpha, alpha_err, beta, beta_err in rows:
        body.append(f"{n},{n_eff!r},{alpha!r},{alpha_err!r},{beta!r},{beta_err!r}")
    text = "\n".join(header + body) + "\n"
    sys.stdout.write(text)
    if args.out:
        _write_lines(args.out, text)
        if args.gnuplot:
            _write_lines(
                args.gnuplot,
                _gnuplot_script(
                    args.out,
                    "emitter number",
                    "alpha",
                    [(1, 3, "alpha")],
                    args.out + ".png",
                ),
            )
    return 0


def cmd_invert_nmin(args) -> int:
    print(invert_nmin(args.alpha, args.n_tot))
    return 0


def cmd_gen_crystal(args) -> int:
    spec = CrystalSpec(
        kind=args.kind,
        n_ions=args.n,
        spacing=args.spacing_m,
        semi_axes=_tuple3(args.semi_axes_m),
        seed=args.seed,
        path=args.path,
    )
    positions = generate_positions(spec)
    prov = RunConfig(
        {
            "kind": spec.kind,
            "n_ions": str(spec.n_ions),
            "spacing_m": repr(spec.spacing),
            "semi_axes_m": repr(spec.semi_axes),
            "seed": str(spec.seed),
        }
    )
    header = [
        f"tool = photonstat {__version__}",
        f"config_sha256 = {prov.digest()}",
        "columns = x_m y_m z_m",
    ]
    write_positions_file(args.out, positions, header)
    print(f"positions = {args.out}")
    print(f"n = {len(positions)}")
    return 0


# ---------------------------------------------------------------- plumbing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="photonstat",
        description="Photon correlation statistics of trapped-emitter ensembles",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("predict", help="closed-form g2 curve and windowed alpha")
    p.add_argument("--n", type=float, required=True, help="emitter number (>= 1)")
    p.add_argument("--c-factor", "--c", dest="c_factor", type=float, default=1.0)
    p.add_argument("--tau", type=float, default=None, help="print g2 at one delay, s")
    p.add_argument("--gamma-hz", type=float, default=2.0 * np.pi * 20e6)
    p.add_argument("--wavelength-m", type=float, default=397e-9)
    p.add_argument("--elastic-fraction", type=float, default=1.0)
    p.add_argument("--sigma-r-m", type=float, default=0.0)
    p.add_argument("--tau-m-s", type=float, default=1e-6)
    p.add_argument("--window-ps", type=float, default=1000.0)
    p.add_argument("--jitter-ps", type=float, default=0.0)
    p.add_argument("--tau-max-ps", type=float, default=0.0)
    p.add_argument("--points", type=int, default=4001)
    p.add_argument("--out", default="", help="write the curve as CSV")
    p.add_argument("--gnuplot", default="", help="write a gnuplot script")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("simulate", help="run the trajectory engine, write tags")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="", help="tag file (.pttg binary, .csv text)")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("analyze", help="estimate alpha/beta/g2 from a tag file")
    p.add_argument("--input", required=True)
    p.add_argument("--window-ps", type=int, default=1000)
    p.add_argument("--segments", type=int, default=6)
    p.add_argument("--hist-bin-ps", type=int, default=0)
    p.add_argument("--max-lag-ps", type=int, default=0)
    p.add_argument("--report", default="", help="also write the report to a file")
    p.add_argument("--hist-out", default="", help="histogram CSV path")
    p.add_argument("--gnuplot", default="")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", help="alpha vs emitter number")
    p.add_argument("--config", required=True)
    p.add_argument("--n-list", default="", help="comma-separated emitter counts")
    p.add_argument("--out", default="", help="table CSV path")
    p.add_argument("--gnuplot", default="")
    p.add_argument("--set", action="append", metavar="KEY=VALUE")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("invert-nmin", help="minimum emitter number from alpha")
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--n-tot", "--ntot", dest="n_tot", type=int, required=True)
    p.set_defaults(func=cmd_invert_nmin)

    p = sub.add_parser("gen-crystal", help="write an emitter position file")
    p.add_argument("--kind", default="shell_ellipsoid")
    p.add_argument("--n", type=int, default=55)
    p.add_argument("--spacing-m", type=float, default=5e-6)
    p.add_argument("--semi-axes-m", default="1e-5,1e-5,6e-6")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--path", default=None, help="input file for kind=from_file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_crystal)

    return parser


def run(argv=None) -> int:
    """Parse arguments and execute one subcommand; returns the exit code."""
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, PositionFileError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except FileNotFoundError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return 1
    except (
        InfeasibleAlphaError,
        UndefinedEstimateError,
        FormatError,
        RuntimeError,
        ValueError,
    ) as e:
        print(f"runtime error: {e}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run())
