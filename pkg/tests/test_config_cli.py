import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinsqueeze import ConfigError, ExperimentConfig, config_to_text, parse_config
from spinsqueeze.cli import main, oracle_check
from spinsqueeze.config import CONFIG_KEYS
from spinsqueeze.experiments import TrialRecords, run_trap_loss_sweep, summarize
from spinsqueeze.io import SUMMARY_FIELDS, OutputError, emit_csv, read_records
from spinsqueeze.config import SweepSettings


class TestParseConfig:
    def test_empty_is_default(self):
        cfg = parse_config("")
        assert cfg == ExperimentConfig()
        assert cfg.couplings.kappa1 == 1.47e-7
        assert cfg.decoherence.tau_c == pytest.approx(290e-6)

    def test_defaults_table(self):
        cfg = parse_config("# nothing\n\n")
        assert (cfg.atoms_count, cfg.eff_factor) == (8.5e5, 0.9)
        assert cfg.probe.photons_per_pulse == 2e8
        assert cfg.dispersive_photons == 1e6
        assert cfg.noise.technical_db == -19
        assert (cfg.decoherence.eta_sc, cfg.decoherence.eta_dep) == (0.093, 0.034)
        assert cfg.delta_e_hz == 2900
        assert cfg.ramsey.time == pytest.approx(5e-6)
        assert (cfg.sweep.loss_factor, cfg.sweep.steps) == (0.85, 20)
        assert (cfg.trials, cfg.seed) == (2000, 1)

    def test_negative_coupling(self):
        with pytest.raises(ConfigError) as err:
            parse_config("couplings.kappa1 = -1")
        assert err.value.key == "couplings.kappa1"
        assert err.value.line == 1

    def test_single_override(self):
        cfg = parse_config("mc.trials = 500")
        assert cfg.trials == 500
        assert cfg == ExperimentConfig(trials=500)

    def test_units_and_types(self):
        cfg = parse_config(
            "probe.duration_us = 3\nreadout.shot_noise = false\nsweep.atoms = [1e5, 2e5]\n"
            "decoherence.eta_dep = none\nanalysis.error_method = bootstrap  # inline comment\n"
        )
        assert cfg.probe.duration == pytest.approx(3e-6)
        assert cfg.noise.include_shot_noise is False
        assert cfg.sweep.atoms == (1e5, 2e5)
        assert cfg.decoherence.eta_dep is None
        assert cfg.error_method == "bootstrap"

    @pytest.mark.parametrize(
        "text, line",
        [
            ("mc.trials = 2.5", 1),
            ("\nmc.trials = many", 2),
            ("readout.shot_noise = 1", 1),
            ("decoherence.eta_sc = 1.0", 1),
            ("mc.seed = 1\nmc.seed = 2", 2),
            ("ramsey.contrast =", 1),
            ("just words", 1),
            ("readout.zeta_photons = all", 1),
        ],
    )
    def test_errors_name_line(self, text, line):
        with pytest.raises(ConfigError) as err:
            parse_config(text)
        assert err.value.line == line

    def test_cross_field_error(self):
        with pytest.raises(ConfigError) as err:
            parse_config("couplings.kappa2 = 1e-6")
        assert err.value.key == "couplings.kappa2"

    @settings(max_examples=100)
    @given(st.from_regex(r"[a-z_]{1,10}\.[a-z_0-9]{1,14}", fullmatch=True))
    def test_fuzzed_keys_rejected(self, key):
        if key in CONFIG_KEYS:
            return
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config(f"{key} = 1")

    @pytest.mark.parametrize("key", CONFIG_KEYS)
    def test_misspelled_keys_rejected(self, key):
        with pytest.raises(ConfigError):
            parse_config(f"{key}x = 1")

    def test_text_roundtrip(self):
        cfg = parse_config("mc.trials = 17\nsweep.atoms = [1e5, 3e5]\ndecoherence.tau_c_us = 123.5")
        again = parse_config(config_to_text(cfg))
        assert again.trials == 17 and again.sweep.atoms == (1e5, 3e5)
        assert again.decoherence.tau_c == pytest.approx(123.5e-6, rel=1e-15)
        assert config_to_text(again) == config_to_text(cfg)


class TestCsv:
    def test_records_roundtrip(self, tmp_path):
        cfg = ExperimentConfig(trials=40, sweep=SweepSettings(steps=3))
        rec = run_trap_loss_sweep(cfg)
        emit_csv(rec, tmp_path / "t.csv")
        assert read_records(tmp_path / "t.csv") == rec

    def test_empty_records(self, tmp_path):
        emit_csv(TrialRecords.empty(), tmp_path / "e.csv")
        assert (tmp_path / "e.csv").read_text() == "trial_id,tx_in,phi1,phi2,phi_aoc,tx_out,seed_stream_id\n"
        assert len(read_records(tmp_path / "e.csv")) == 0

    def test_summary_schema(self, tmp_path):
        cfg = ExperimentConfig(trials=200, sweep=SweepSettings(steps=4))
        s = summarize(run_trap_loss_sweep(cfg), cfg)
        emit_csv(s, tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        assert lines[0].split(",") == list(SUMMARY_FIELDS)
        kinds = [line.rsplit(",", 1)[1] for line in lines[1:]]
        assert kinds == ["bin"] * 5 + ["fit"] * 2
        fit1 = lines[-2].split(",")
        assert float(fit1[0]) == 1 and float(fit1[1]) == s.fit_phi1.a1

    def test_17_digits(self, tmp_path):
        rec = TrialRecords([0], [1 / 3], [math.pi], [math.nan], [math.nan], [0.1], [0])
        emit_csv(rec, tmp_path / "x.csv")
        row = (tmp_path / "x.csv").read_text().splitlines()[1]
        assert row.split(",")[2] == "3.1415926535897931"

    def test_unwritable(self, tmp_path):
        with pytest.raises(OutputError, match="missing"):
            emit_csv(TrialRecords.empty(), tmp_path / "missing" / "x.csv")


class TestOracleCheck:
    def test_reference_row(self):
        rows = oracle_check(ExperimentConfig(trials=0))
        ref = [r for r in rows if math.isclose(r["tx"], 3.7e5)]
        assert len(ref) == 1
        assert ref[0]["zeta"] == pytest.approx(1.599, abs=5e-4)
        assert all(math.isnan(r["z_score"]) for r in rows)

    def test_z_scores_finite(self):
        rows = oracle_check(ExperimentConfig(trials=500, sweep=SweepSettings(steps=4)))
        assert all(math.isfinite(r["z_score"]) for r in rows)


class TestCli:
    def run(self, tmp_path, *args):
        return main([*args, "--out", str(tmp_path), "--quiet"])

    @pytest.mark.parametrize("cmd", ["simulate", "sweep", "ramsey", "oracle-check"])
    def test_byte_determinism(self, tmp_path, cmd):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            assert main([cmd, "--out", str(out), "--trials", "300", "--csv", "--quiet"]) == 0
        names = sorted(p.name for p in a.iterdir())
        assert "run_config.txt" in names and "report.txt" in names
        for name in names:
            assert (a / name).read_bytes() == (b / name).read_bytes()

    def test_analyze_reproduces_summary(self, tmp_path):
        assert self.run(tmp_path / "s", "sweep", "--trials", "200", "--csv") == 0
        assert self.run(tmp_path / "a", "analyze", str(tmp_path / "s" / "trials.csv"), "--csv") == 0
        assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "s" / "summary.csv").read_bytes()

    def test_config_file(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text("mc.trials = 100\nsweep.steps = 3\n")
        assert self.run(tmp_path / "o", "sweep", "--config", str(cfg), "--csv") == 0
        rec = read_records(tmp_path / "o" / "trials.csv")
        assert len(rec) == 400
        assert parse_config((tmp_path / "o" / "run_config.txt").read_text()).trials == 100

    def test_seed_override(self, tmp_path):
        self.run(tmp_path / "a", "simulate", "--trials", "50", "--csv", "--seed", "3")
        self.run(tmp_path / "b", "simulate", "--trials", "50", "--csv", "--seed", "4")
        assert (tmp_path / "a" / "trials.csv").read_bytes() != (tmp_path / "b" / "trials.csv").read_bytes()

    def test_config_error_exit(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("mc.trails = 100\n")
        assert self.run(tmp_path, "simulate", "--config", str(cfg)) == 2
        assert "mc.trails" in capsys.readouterr().err

    def test_missing_config_exit(self, tmp_path):
        assert self.run(tmp_path, "simulate", "--config", str(tmp_path / "nope.cfg")) == 2

    def test_runtime_error_exit(self, tmp_path):
        assert self.run(tmp_path, "simulate", "--trials", "0") == 3
        assert self.run(tmp_path, "analyze", str(tmp_path / "nope.csv")) == 3

    def test_usage_error(self, tmp_path):
        with pytest.raises(SystemExit) as err:
            main(["frobnicate"])
        assert err.value.code == 2

    def test_prints_report(self, tmp_path, capsys):
        assert main(["oracle-check", "--trials", "0", "--out", str(tmp_path)]) == 0
        assert "370000" in capsys.readouterr().out
