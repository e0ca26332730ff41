"""Photon correlation statistics of trapped-emitter ensembles.

Analytic predictions for collective second-order coherence, a
conditional-amplitude Monte Carlo producing detector time tags, and
click-statistics estimators that close the loop between the two.
"""

__version__ = "0.1.0"

from .analytic import (
    ClickStats,
    G2Prediction,
    InfeasibleAlphaError,
    ModeMatrix,
    click_stats,
    compute_C,
    effective_n,
    invert_nmin,
    nmin_alpha,
    predict_alpha_windowed,
    predict_g2,
    predict_g2_curve,
)
from .emitter import (
    EmitterModel,
    EnsembleSpec,
    MotionModel,
    motional_coherence,
    single_emitter_g1,
    single_emitter_g2,
)
from .estimators import (
    CorrelationReport,
    G2Histogram,
    UndefinedEstimateError,
    Verdicts,
    analyze_streams,
    bin_click_counts,
    estimate_alpha,
    estimate_beta,
    g2_histogram,
    verdicts,
)
from .geometry import (
    CrystalSpec,
    DetectionVolume,
    PositionFileError,
    build_mode_matrix,
    gaussian_weight,
    generate_positions,
    parse_positions_file,
    write_positions_file,
)
from .montecarlo import (
    ConfigurationError,
    DetectorParams,
    SimConfig,
    TrajectoryState,
    collapse_amplitudes,
    collective_field,
    detector_effects,
    initial_state,
    ou_step,
    relax_amplitude,
    simulate,
)
from .sources import poisson_pair_streams, thermal_pair_streams
from .timetags import (
    FormatError,
    TimeTagStream,
    inject_poisson,
    merge,
    read_stream,
    read_stream_csv,
    segment,
    split,
    thin,
    write_stream,
    write_stream_csv,
)

__all__ = [
    "ClickStats",
    "ConfigurationError",
    "CorrelationReport",
    "CrystalSpec",
    "DetectionVolume",
    "DetectorParams",
    "EmitterModel",
    "EnsembleSpec",
    "FormatError",
    "G2Histogram",
    "G2Prediction",
    "InfeasibleAlphaError",
    "ModeMatrix",
    "MotionModel",
    "PositionFileError",
    "SimConfig",
    "TimeTagStream",
    "TrajectoryState",
    "UndefinedEstimateError",
    "Verdicts",
    "analyze_streams",
    "bin_click_counts",
    "build_mode_matrix",
    "click_stats",
    "collapse_amplitudes",
    "collective_field",
    "compute_C",
    "detector_effects",
    "effective_n",
    "estimate_alpha",
    "estimate_beta",
    "g2_histogram",
    "gaussian_weight",
    "generate_positions",
    "initial_state",
    "inject_poisson",
    "invert_nmin",
    "merge",
    "motional_coherence",
    "nmin_alpha",
    "ou_step",
    "parse_positions_file",
    "poisson_pair_streams",
    "predict_alpha_windowed",
    "predict_g2",
    "predict_g2_curve",
    "read_stream",
    "read_stream_csv",
    "relax_amplitude",
    "segment",
    "simulate",
    "single_emitter_g1",
    "single_emitter_g2",
    "split",
    "thermal_pair_streams",
    "thin",
    "verdicts",
    "write_positions_file",
    "write_stream",
    "write_stream_csv",
]
