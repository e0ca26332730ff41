"""End-to-end checks tying the three layers of the package together.

Analytic limits, estimator closed forms, and full Monte Carlo runs are
compared against each other at fixed seeds. Every test emits exactly one
summary line (PASS or FAIL plus detail), printed outside pytest's
capture so the outcome is visible in any run.
"""

import csv

import numpy as np
import pytest

import photonstat as ps
from photonstat.cli import run as cli_run

GAMMA_SLOW = 2.0 * np.pi * 20e6
SAT = 0.004
WL = 397e-9
ETA = 1e-4
WINDOW = 1e-9


@pytest.fixture
def report(capsys):
    def _report(name, failures, detail):
        ok = not failures
        text = detail if ok else "; ".join(failures)
        with capsys.disabled():
            print(f"[check] {name}: {'PASS' if ok else 'FAIL'} ({text})",
                  flush=True)
        assert ok, f"{name}: {text}"

    return _report


def _slow_emitter():
    em = ps.EmitterModel(gamma=GAMMA_SLOW, saturation=SAT, wavelength=WL)
    mo = ps.MotionModel(sigma_r=WL, tau_m=1e-5, k_mag=em.k_mag)
    return em, mo


def _single_mode(n):
    amps = np.full((n, 1), np.sqrt(ETA), dtype=complex)
    return ps.ModeMatrix(amplitudes=amps, eta=ETA, weights=np.ones(n))


def _sized_config(n, em, mo, modes, rate, duration, seed):
    # detection_gain chosen so the detected rate lands on `rate`
    gain = rate / (em.gamma * em.steady_amplitude**2 * ETA * n)
    return ps.SimConfig(
        emitter=em,
        motion=mo,
        ensemble=ps.EnsembleSpec(n_emitters=n),
        modes=modes,
        detector=ps.DetectorParams(jitter_sigma=0.0, dead_time=0.0, dark_rate=0.0),
        duration=duration,
        dt=5e-4 / em.gamma,
        detection_gain=gain,
        seed=seed,
    )


def test_zero_delay_limits(report):
    em, mo = _slow_emitter()
    targets = [(1, 0.0), (2, 1.0), (3, 4.0 / 3.0), (100, 1.98)]
    failures = []
    for n, want in targets:
        got = ps.predict_g2(0.0, n, em, mo, c_factor=1.0)
        if abs(got - want) > 1e-12:
            failures.append(f"n={n}: got {got!r}, want {want!r}")
    report("zero-delay limits", failures,
            "g2(0) = 0, 1, 4/3, 1.98 at n = 1, 2, 3, 100 within 1e-12")


def test_mode_overlap_factor(report):
    vol = ps.DetectionVolume()
    failures = []

    rng = np.random.default_rng(20)
    pos = rng.uniform(-3e-6, 3e-6, size=(7, 3))
    c_single = ps.compute_C(ps.build_mode_matrix(pos, vol, "single_mode", eta=ETA))
    if abs(c_single - 1.0) > 1e-10:
        failures.append(f"single mode: C={c_single!r}")

    # every emitter radiating the same three-mode superposition is as
    # indistinguishable as a genuine single mode
    u = np.array([1.0, 1.0j, -1.0]) / np.sqrt(3.0)
    amps = np.tile(np.sqrt(ETA) * u, (5, 1))
    same = ps.ModeMatrix(amplitudes=amps, eta=ETA, weights=np.ones(5))
    c_same = ps.compute_C(same)
    if abs(c_same - 1.0) > 1e-10:
        failures.append(f"shared superposition: C={c_same!r}")

    c_priv = ps.compute_C(
        ps.build_mode_matrix(np.zeros((9, 3)), vol, "per_emitter_private", eta=ETA)
    )
    if abs(c_priv) > 1e-12:
        failures.append(f"private modes: C={c_priv!r}")

    vals = [
        ps.compute_C(
            ps.build_mode_matrix(np.zeros((100, 3)), vol,
                                 "two_polarization_random", eta=ETA, seed=s)
        )
        for s in range(100)
    ]
    c_pol = float(np.mean(vals))
    if abs(c_pol - 0.5) > 0.06:
        failures.append(f"two-polarization mean over 100 seeds: {c_pol:.4f}")

    report("mode overlap factor", failures,
            f"single/shared = 1, private = 0, "
            f"two-polarization mean = {c_pol:.3f}")


def test_emitter_bound_inversion(report):
    failures = []
    for n_tot in range(2, 1001):
        for x in range(2, n_tot + 1):
            back = ps.invert_nmin(ps.nmin_alpha(x, n_tot), n_tot)
            if back != x:
                failures.append(f"({x}, {n_tot}) -> {back}")
                if len(failures) >= 5:
                    break
        if len(failures) >= 5:
            break
    got = ps.invert_nmin(1.56, 202)
    if got != 153:
        failures.append(f"invert_nmin(1.56, 202) = {got}, want 153")
    report("emitter bound inversion", failures,
            "round trip exact for 2 <= x <= n_tot <= 1000; "
            "alpha 1.56 of 202 emitters needs 153")


def test_thermal_click_statistics(report):
    cases = [(0.2, 2_000_000, 51), (0.02, 10_000_000, 52)]
    failures = []
    seen = []
    for n_bar, n_bins, seed in cases:
        a, b = ps.thermal_pair_streams(n_bar, n_bins, WINDOW, seed=seed)
        want = ps.click_stats("thermal_single_mode", n_bar)
        av, ae = ps.estimate_alpha(a, b, WINDOW)
        bv, be = ps.estimate_beta(a, b, WINDOW)
        seen.append(f"n_bar={n_bar}: alpha {av:.3f} vs {want.alpha:.3f}, "
                    f"beta {bv:.5f} vs {want.beta:.5f}")
        if abs(av - want.alpha) > 3.0 * ae:
            failures.append(
                f"alpha at n_bar={n_bar}: {av:.4f}+-{ae:.4f} vs {want.alpha:.4f}")
        if abs(bv - want.beta) > 3.0 * be:
            failures.append(
                f"beta at n_bar={n_bar}: {bv:.5f}+-{be:.5f} vs {want.beta:.5f}")
    report("thermal click statistics", failures, "; ".join(seen))


def test_estimator_robustness(report):
    failures = []
    counts_seen = []

    # beta ignores added Poissonian background
    a, b = ps.thermal_pair_streams(0.2, 2_000_000, WINDOW, seed=61)
    dur = a.duration_ps * 1e-12
    b0, e0 = ps.estimate_beta(a, b, WINDOW)
    a_noisy = ps.inject_poisson(a, 5e7, dur, seed=65)
    b_noisy = ps.inject_poisson(b, 5e7, dur, seed=66)
    b1, e1 = ps.estimate_beta(a_noisy, b_noisy, WINDOW)
    if abs(b1 - b0) > 3.0 * float(np.hypot(e0, e1)):
        failures.append(f"beta moved under injection: {b0:.5f} -> {b1:.5f}")
    counts_seen += [ps.bin_click_counts(a, b, WINDOW),
                    ps.bin_click_counts(a_noisy, b_noisy, WINDOW)]

    # alpha ignores balanced loss in the dilute regime
    a2, b2 = ps.thermal_pair_streams(0.01, 30_000_000, WINDOW, seed=62)
    al0, ae0 = ps.estimate_alpha(a2, b2, WINDOW)
    a2_half = ps.thin(a2, 0.5, seed=63)
    b2_half = ps.thin(b2, 0.5, seed=64)
    al1, ae1 = ps.estimate_alpha(a2_half, b2_half, WINDOW)
    if abs(al1 - al0) > 3.0 * float(np.hypot(ae0, ae1)):
        failures.append(f"alpha moved under thinning: {al0:.3f} -> {al1:.3f}")
    counts_seen += [ps.bin_click_counts(a2, b2, WINDOW),
                    ps.bin_click_counts(a2_half, b2_half, WINDOW)]

    # coincidence identity holds exactly on everything analyzed above,
    # plus a Poisson pair and a shifted-window tally
    pa, pb = ps.poisson_pair_streams(2e5, 0.5, seed=67)
    counts_seen += [ps.bin_click_counts(pa, pb, WINDOW),
                    ps.bin_click_counts(pa, pb, WINDOW, lag=25e-9)]
    bad = sum(
        1 for c in counts_seen
        if c.coincidences != c.clicks_a + c.clicks_b - c.occupied
    )
    if bad:
        failures.append(f"coincidence identity broken on {bad} tallies")

    report("estimator robustness", failures,
            f"beta {b0:.5f} -> {b1:.5f} under injection, "
            f"alpha {al0:.3f} -> {al1:.3f} under thin(0.5), "
            f"identity exact on {len(counts_seen)} tallies")


def test_single_ion_jitter_washout(report):
    em = ps.EmitterModel(gamma=2.2e9, saturation=SAT, wavelength=WL)
    mo = ps.MotionModel(sigma_r=WL, tau_m=1e-5, k_mag=em.k_mag)
    rate = 1.5e6
    cfg = ps.SimConfig(
        emitter=em,
        motion=mo,
        ensemble=ps.EnsembleSpec(n_emitters=1),
        modes=_single_mode(1),
        detector=ps.DetectorParams(),
        duration=2.0,
        detection_gain=rate / (em.gamma * em.steady_amplitude**2 * ETA),
        seed=42,
    )
    a, b = ps.simulate(cfg)
    av, ae = ps.estimate_alpha(a, b, WINDOW)
    pred = ps.predict_alpha_windowed(
        ps.predict_g2_curve(np.linspace(-8e-9, 8e-9, 4001), 1, em, mo),
        window=WINDOW, jitter_sigma=1e-9, rate=rate,
    )
    failures = []
    if not 0.3 <= av <= 0.6:
        failures.append(f"alpha={av:.4f}+-{ae:.4f} outside [0.3, 0.6]")
    report("single-ion jitter washout", failures,
            f"alpha = {av:.3f}+-{ae:.3f} in [0.3, 0.6], "
            f"windowed prediction {pred:.3f}")


def test_simulation_matches_windowed_prediction(report):
    points = [
        (1, 1e-5, 3.0, 3.0e6, 301),
        (2, 1e-5, 4.0, 1.5e6, 302),
        (3, 1e-5, 4.0, 1.5e6, 303),
        (10, 1e-4, 8.0, 1.5e6, 310),
        (50, 1e-4, 8.0, 1.5e6, 315),
    ]
    tau = np.linspace(-1.5e-9, 1.5e-9, 3001)
    failures = []
    seen = []
    for n, tau_m, duration, rate, seed in points:
        em = ps.EmitterModel(gamma=GAMMA_SLOW, saturation=SAT, wavelength=WL)
        mo = ps.MotionModel(sigma_r=WL, tau_m=tau_m, k_mag=em.k_mag)
        cfg = _sized_config(n, em, mo, _single_mode(n), rate, duration, seed)
        a, b = ps.simulate(cfg)
        av, ae = ps.estimate_alpha(a, b, WINDOW)
        pred = ps.predict_alpha_windowed(
            ps.predict_g2_curve(tau, n, em, mo), window=WINDOW, rate=rate)
        pull = (av - pred) / ae
        seen.append(f"N={n}: {pull:+.1f}sigma")
        if abs(av - pred) > 3.0 * ae:
            failures.append(
                f"N={n}: alpha={av:.4f}+-{ae:.4f} vs prediction {pred:.4f}")
        if ae > 0.03:
            failures.append(f"N={n}: stderr {ae:.4f} above 0.03")
    report("simulation vs windowed prediction", failures, ", ".join(seen))


def test_two_polarization_excess_ratio(report):
    n = 100
    rate = 1.5e6
    em = ps.EmitterModel(gamma=GAMMA_SLOW, saturation=SAT, wavelength=WL)
    mo = ps.MotionModel(sigma_r=WL, tau_m=1e-4, k_mag=em.k_mag)
    vol = ps.DetectionVolume()
    pos = np.zeros((n, 3))
    m_single = ps.build_mode_matrix(pos, vol, "single_mode", eta=ETA, seed=0)
    m_twopol = ps.build_mode_matrix(pos, vol, "two_polarization_random",
                                    eta=ETA, seed=42)
    results = []
    for modes, seed in ((m_single, 401), (m_twopol, 402)):
        cfg = _sized_config(n, em, mo, modes, rate, 4.0, seed)
        a, b = ps.simulate(cfg)
        results.append(ps.estimate_alpha(a, b, WINDOW))
    (a1, e1), (a2, e2) = results
    ratio = (a1 - 1.0) / (a2 - 1.0)
    err = abs(ratio) * float(np.hypot(e1 / (a1 - 1.0), e2 / (a2 - 1.0)))
    failures = []
    if abs(ratio - 2.0) > 0.3:
        failures.append(
            f"excess ratio {ratio:.3f}+-{err:.3f} outside 2.0 +- 0.3 "
            f"(alpha {a1:.4f}+-{e1:.4f} vs {a2:.4f}+-{e2:.4f})")
    report("two-polarization excess ratio", failures,
            f"(alpha1-1)/(alpha2-1) = {ratio:.3f}+-{err:.3f}")


SWEEP_CONFIG = """\
# sweep fixture: pseudo-crystals weighted by a tight detection volume
emitter.saturation = 0.004
motion.sigma_r_m = 397e-9
motion.tau_m_s = 1e-4
volume.fwhm_transverse_m = 2.2e-6
volume.fwhm_axial_m = 3.0e-6
volume.center_m = 0,0,0.35e-6
modes.scheme = single_mode
modes.eta = 1e-4
detector.jitter_sigma_s = 0
detector.dead_time_s = 0
detector.dark_rate_hz = 0
sim.duration_s = 3.0
sim.dt_s = 3.98e-12
sim.target_rate_hz = 1.5e6
sim.seed = 800
crystal.seed = 699
sweep.n_list = 1,2,3,14,55,202
sweep.chain_max_n = 3
sweep.chain_spacing_m = 2.2e-6
sweep.ellipsoid_pitch_m = 2.0e-6
sweep.ellipsoid_aspect = 1.0
analysis.window_ps = 1000
"""


def test_alpha_rises_with_emitter_number(tmp_path, report):
    cfg_path = tmp_path / "sweep.cfg"
    cfg_path.write_text(SWEEP_CONFIG)
    out = tmp_path / "sweep.csv"
    code = cli_run(["sweep", "--config", str(cfg_path), "--out", str(out)])
    assert code == 0

    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    rows = list(csv.DictReader(lines))
    n_list = [int(r["n"]) for r in rows]
    n_eff = [float(r["n_eff"]) for r in rows]
    alpha = [float(r["alpha"]) for r in rows]
    stderr = [float(r["alpha_stderr"]) for r in rows]

    em = ps.EmitterModel(gamma=GAMMA_SLOW, saturation=SAT, wavelength=WL)
    mo = ps.MotionModel(sigma_r=WL, tau_m=1e-4, k_mag=em.k_mag)
    tau = np.linspace(-1.5e-9, 1.5e-9, 3001)
    pred = [
        ps.predict_alpha_windowed(
            ps.predict_g2_curve(tau, ne, em, mo), window=WINDOW, rate=1.5e6)
        for ne in n_eff
    ]

    failures = []
    if n_list != [1, 2, 3, 14, 55, 202]:
        failures.append(f"unexpected sweep points {n_list}")
    if not all(x < y for x, y in zip(n_eff, n_eff[1:])):
        failures.append(f"n_eff not strictly increasing: {n_eff}")
    if not all(x < y for x, y in zip(pred, pred[1:])):
        failures.append(f"predicted alpha not strictly increasing: {pred}")
    for nn, av, ae, pv in zip(n_list, alpha, stderr, pred):
        if abs(av - pv) > 3.0 * ae:
            failures.append(
                f"n={nn}: alpha={av:.4f}+-{ae:.4f} vs prediction {pv:.4f}")
    if not max(alpha[:3]) < 1.0 < min(alpha[3:]):
        failures.append(f"no clean crossing of alpha = 1: {alpha}")
    for nn, av in zip(n_list[-2:], alpha[-2:]):
        if not 1.4 <= av <= 1.7:
            failures.append(f"n={nn}: alpha {av:.4f} outside saturation band")
    if not pred[5] - pred[4] < 0.2 * (pred[3] - pred[2]):
        failures.append("large-n plateau still rising steeply")

    detail = ", ".join(f"n={nn}: {av:.3f}" for nn, av in zip(n_list, alpha))
    report("alpha vs emitter number sweep", failures, detail)
