"""Command-line interface: subcommands, config parsing, output files,
exit codes, and rerun determinism."""

import numpy as np
import pytest

from photonstat import (
    TimeTagStream,
    __version__,
    merge,
    parse_positions_file,
    read_stream,
    read_stream_csv,
    thermal_pair_streams,
    write_stream,
)
from photonstat.cli import ConfigError, load_config, run

FAST_SIM = """
# short low-rate run for tests
emitter.gamma_hz = 1.2566e8
motion.sigma_r_m = 200e-9
motion.tau_m_s = 1e-5
crystal.kind = linear_chain
crystal.n_ions = 1
detector.jitter_sigma_s = 0
detector.dead_time_s = 0
detector.dark_rate_hz = 0
sim.duration_s = 0.05
sim.target_rate_hz = 2e5
sim.seed = 7
"""


def write_config(tmp_path, text=FAST_SIM, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def make_tag_file(tmp_path, name="tags.pttg"):
    a, b = thermal_pair_streams(0.2, 300_000, 1e-9, seed=3)
    path = tmp_path / name
    write_stream(merge(a, b), path)
    return str(path)


class TestInvertNmin:
    def test_published_example(self, capsys):
        assert run(["invert-nmin", "--alpha", "1.56", "--ntot", "202"]) == 0
        assert capsys.readouterr().out.strip() == "153"

    def test_long_flag_spelling(self, capsys):
        assert run(["invert-nmin", "--alpha", "1.56", "--n-tot", "202"]) == 0
        assert capsys.readouterr().out.strip() == "153"

    def test_infeasible_alpha_exit_code(self, capsys):
        assert run(["invert-nmin", "--alpha", "1.99", "--ntot", "100"]) == 2
        assert "exceeds" in capsys.readouterr().err


class TestPredict:
    def test_zero_delay_value(self, capsys):
        assert run(["predict", "--n", "3", "--c", "1", "--tau", "0"]) == 0
        out = capsys.readouterr().out.strip()
        assert float(out) == pytest.approx(4.0 / 3.0, abs=1e-12)

    def test_c_factor_spelling(self, capsys):
        # c = 0 drops the interference term: the pair floor (n-1)/n remains
        assert run(["predict", "--n", "2", "--c-factor", "0", "--tau", "0"]) == 0
        assert float(capsys.readouterr().out.strip()) == pytest.approx(0.5)

    def test_curve_file_and_gnuplot(self, tmp_path, capsys):
        csv = tmp_path / "curve.csv"
        gp = tmp_path / "curve.gp"
        code = run(
            [
                "predict", "--n", "1", "--gamma-hz", "2.2e9",
                "--window-ps", "1000", "--jitter-ps", "1000",
                "--out", str(csv), "--gnuplot", str(gp),
            ]
        )
        assert code == 0
        out = capsys.readouterr().out
        alpha = float(next(l for l in out.splitlines()
                           if l.startswith("alpha_windowed")).split("=")[1])
        assert 0.3 < alpha < 0.6
        lines = csv.read_text().splitlines()
        assert lines[0].startswith("# tool = photonstat")
        assert any(l.startswith("# config_sha256 = ") for l in lines)
        header_end = next(i for i, l in enumerate(lines) if not l.startswith("#"))
        assert lines[header_end] == "tau_s,g2"
        tau, g2 = lines[header_end + 1].split(",")
        float(tau), float(g2)  # parseable
        assert "plot" in gp.read_text()

    def test_rerun_is_byte_identical(self, tmp_path, capsys):
        args = ["predict", "--n", "5", "--sigma-r-m", "150e-9",
                "--out", str(tmp_path / "c.csv")]
        run(args)
        first = (tmp_path / "c.csv").read_bytes()
        run(args)
        assert (tmp_path / "c.csv").read_bytes() == first

    def test_bad_argument_exits_parser(self):
        with pytest.raises(SystemExit) as exc:
            run(["predict", "--n", "3", "--nonsense", "1"])
        assert exc.value.code == 2


class TestSimulate:
    def test_writes_binary_tags(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "run.pttg"
        assert run(["simulate", "--config", cfg, "--out", str(out)]) == 0
        stdout = capsys.readouterr().out
        assert "counts_a = " in stdout
        stream = read_stream(out)
        assert len(stream) > 1000
        assert stream.metadata["seed"] == "7"
        assert "config_sha256" in stream.metadata

    def test_csv_output_and_seed_override(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run.csv"
        assert run(["simulate", "--config", cfg, "--out", str(out),
                    "--seed", "9"]) == 0
        stream = read_stream_csv(out)
        assert stream.metadata["seed"] == "9"
        assert len(stream) > 1000

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path)
        out = tmp_path / "run.pttg"
        run(["simulate", "--config", cfg, "--out", str(out)])
        first = out.read_bytes()
        run(["simulate", "--config", cfg, "--out", str(out)])
        assert out.read_bytes() == first

    def test_set_override(self, tmp_path, capsys):
        cfg = write_config(tmp_path)
        out = tmp_path / "run.pttg"
        assert run(["simulate", "--config", cfg, "--out", str(out),
                    "--set", "sim.duration_s=0.02"]) == 0
        assert "duration_s = 0.02" in capsys.readouterr().out

    def test_unknown_config_key_fails(self, tmp_path, capsys):
        cfg = write_config(tmp_path, FAST_SIM + "emitter.nope = 3\n")
        assert run(["simulate", "--config", cfg]) == 1
        assert "unknown key" in capsys.readouterr().err

    def test_missing_config_fails(self, tmp_path):
        assert run(["simulate", "--config", str(tmp_path / "absent.cfg")]) == 1


class TestAnalyze:
    def test_report_to_stdout(self, tmp_path, capsys):
        tags = make_tag_file(tmp_path)
        assert run(["analyze", "--input", tags]) == 0
        out = capsys.readouterr().out
        alpha = float(next(l for l in out.splitlines()
                           if l.startswith("alpha = ")).split("=")[1])
        assert alpha == pytest.approx(11.0 / 6.0, abs=0.15)
        assert "super_poissonian = True" in out

    def test_report_and_histogram_files(self, tmp_path):
        tags = make_tag_file(tmp_path)
        report = tmp_path / "report.txt"
        hist = tmp_path / "hist.csv"
        gp = tmp_path / "hist.gp"
        code = run(
            [
                "analyze", "--input", tags,
                "--hist-bin-ps", "2000", "--max-lag-ps", "20000",
                "--report", str(report), "--hist-out", str(hist),
                "--gnuplot", str(gp),
            ]
        )
        assert code == 0
        assert "alpha = " in report.read_text()
        lines = hist.read_text().splitlines()
        assert any(l.startswith("# tool") for l in lines)
        assert "lag_s,g2,stderr" in lines
        assert "plot" in gp.read_text()

    def test_reads_csv_tags(self, tmp_path, capsys):
        a, b = thermal_pair_streams(0.2, 100_000, 1e-9, seed=5)
        from photonstat import write_stream_csv

        path = tmp_path / "tags.csv"
        write_stream_csv(merge(a, b), path)
        assert run(["analyze", "--input", str(path)]) == 0
        assert "alpha = " in capsys.readouterr().out

    def test_missing_input_exit_one(self):
        assert run(["analyze", "--input", "/nonexistent/tags.pttg"]) == 1

    def test_corrupt_input_exit_two(self, tmp_path, capsys):
        path = tmp_path / "bad.pttg"
        path.write_bytes(b"PTTG" + bytes(2))
        assert run(["analyze", "--input", str(path)]) == 2
        assert "runtime error" in capsys.readouterr().err


class TestSweep:
    def test_two_point_sweep(self, tmp_path, capsys, monkeypatch):
        monkeypatch.delenv("PHOTONSTAT_THREADS", raising=False)
        cfg = write_config(tmp_path)
        out = tmp_path / "sweep.csv"
        code = run(["sweep", "--config", cfg, "--n-list", "1,2",
                    "--out", str(out)])
        assert code == 0
        lines = out.read_text().splitlines()
        data = [l for l in lines if not l.startswith("#")]
        assert data[0] == "n,n_eff,alpha,alpha_stderr,beta,beta_stderr"
        rows = [l.split(",") for l in data[1:]]
        assert [r[0] for r in rows] == ["1", "2"]
        n_eff = [float(r[1]) for r in rows]
        assert n_eff[0] == pytest.approx(1.0)
        assert n_eff[1] > 1.0
        for r in rows:
            assert len(r) == 6
            float(r[2]), float(r[3])

    def test_parallel_matches_serial(self, tmp_path, monkeypatch):
        cfg = write_config(
            tmp_path, FAST_SIM.replace("0.05", "0.02"), name="fast.cfg"
        )
        out1 = tmp_path / "serial.csv"
        out2 = tmp_path / "parallel.csv"
        monkeypatch.setenv("PHOTONSTAT_THREADS", "1")
        run(["sweep", "--config", cfg, "--n-list", "1,2", "--out", str(out1)])
        monkeypatch.setenv("PHOTONSTAT_THREADS", "2")
        run(["sweep", "--config", cfg, "--n-list", "1,2", "--out", str(out2)])
        assert out1.read_bytes() == out2.read_bytes()

    def test_empty_n_list_rejected(self, tmp_path):
        cfg = write_config(tmp_path)
        assert run(["sweep", "--config", cfg, "--n-list", ","]) == 1


class TestGenCrystal:
    def test_round_trip(self, tmp_path, capsys):
        out = tmp_path / "ions.txt"
        code = run(["gen-crystal", "--kind", "shell_ellipsoid", "--n", "55",
                    "--semi-axes-m", "8e-6,8e-6,5e-6", "--seed", "4",
                    "--out", str(out)])
        assert code == 0
        assert "n = 55" in capsys.readouterr().out
        pos = parse_positions_file(out)
        assert pos.shape == (55, 3)
        assert out.read_text().startswith("# tool = photonstat")

    def test_chain(self, tmp_path):
        out = tmp_path / "chain.txt"
        assert run(["gen-crystal", "--kind", "linear_chain", "--n", "3",
                    "--spacing-m", "2e-6", "--out", str(out)]) == 0
        pos = parse_positions_file(out)
        assert pos[:, 2] == pytest.approx([-2e-6, 0.0, 2e-6])


class TestPlumbing:
    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run(["--version"])
        assert exc.value.code == 0
        assert capsys.readouterr().out.strip() == __version__

    def test_missing_subcommand(self):
        with pytest.raises(SystemExit) as exc:
            run([])
        assert exc.value.code == 2

    def test_config_loads_defaults_and_comments(self, tmp_path):
        path = tmp_path / "mini.cfg"
        path.write_text("# comment only\nsim.seed = 5  # trailing\n")
        cfg = load_config(path)
        assert cfg["sim.seed"] == 5
        assert cfg["emitter.saturation"] == 0.004

    def test_config_rejects_bad_value(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("sim.seed = notanint\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_config_rejects_missing_separator(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("sim.seed 5\n")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(path)
