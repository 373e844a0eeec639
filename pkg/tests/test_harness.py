"""Tests for metrics, configuration, the sweep runner, and the CLI."""

import json

import numpy as np
import pytest

from ra_sim.errors import ConfigError
from ra_sim import cli, harness, metrics


class TestMetrics:
    def test_nmse_floor(self):
        h = [np.ones((4, 3), dtype=complex)]
        assert metrics.nmse_db(h, h) == -120.0

    def test_nmse_value(self):
        t = [np.ones((2, 2), dtype=complex)]
        e = [np.ones((2, 2), dtype=complex) * 1.1]
        assert abs(metrics.nmse_db(e, t) - 10 * np.log10(0.01)) < 1e-9

    def test_aep_fused(self):
        est = np.array([1, 0, 1, 0])
        tru = np.array([1, 1, 0, 0])
        assert metrics.aep(est, tru) == 0.5

    def test_aep_per_satellite_hand_count(self):
        """2 satellites x 3 users with 2 total disagreements: AEP = 2/6."""
        est = np.array([[1, 0, 1],
                        [1, 1, 0]])
        tru = np.array([1, 0, 0])
        assert abs(metrics.aep(est, tru) - 2 / 6) < 1e-12

    def test_ber_missed_user_formula(self):
        """One missed user out of 15, all else perfect: BER = 1/15."""
        tru = np.zeros(100, dtype=int)
        tru[:15] = 1
        det = tru.copy()
        det[0] = 0
        got = metrics.ber(0, det, tru, bits_per_user=1080)
        assert abs(got - 1 / 15) < 1e-12

    def test_ber_nan_with_no_active(self):
        assert np.isnan(metrics.ber(0, np.zeros(5), np.zeros(5), 10))

    def test_false_alarm_does_not_affect_ber(self):
        tru = np.array([1, 0])
        det = np.array([1, 1])
        assert metrics.ber(0, det, tru, 8) == 0.0


class TestConfig:
    def _write(self, tmp_path, payload):
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(payload))
        return str(p)

    def test_load_roundtrip(self, tmp_path):
        path = self._write(tmp_path, {
            "scenario": {"num_users": 10, "snr_db": 4.0},
            "sweep_axis": "G",
            "sweep_values": [64, 96],
            "algorithms": ["alg1", "oracle_ls"],
            "detection": ["non_cooperative"],
            "trials": 3,
            "seed": 5,
        })
        cfg = harness.load_config(path)
        assert cfg.scenario.num_users == 10
        assert cfg.sweep_axis == "G"
        assert cfg.sweep_values == (64, 96)
        assert cfg.trials == 3

    def test_rejects_unknown_axis(self, tmp_path):
        path = self._write(tmp_path, {"sweep_axis": "bogus",
                                      "sweep_values": [1]})
        with pytest.raises(ConfigError):
            harness.load_config(path)

    def test_rejects_empty_sweep(self, tmp_path):
        path = self._write(tmp_path, {"sweep_axis": "SNR", "sweep_values": []})
        with pytest.raises(ConfigError):
            harness.load_config(path)

    def test_rejects_bad_json(self, tmp_path):
        p = tmp_path / "cfg.json"
        p.write_text("{not json")
        with pytest.raises(ConfigError):
            harness.load_config(str(p))

    def test_rejects_unknown_algorithm(self):
        with pytest.raises(ConfigError):
            harness.ExperimentConfig(algorithms=("magic",))

    def test_apply_sweep(self):
        scn = harness.Scenario()
        assert harness.apply_sweep(scn, "G", 102).nonisi_length == 102
        assert harness.apply_sweep(scn, "SNR", 4).snr_db == 4.0
        assert harness.apply_sweep(scn, "arraySize", 12).array_y == 12
        assert harness.apply_sweep(scn, "quantBits", 5).quant_bits == 5

    def test_ts_length_derived(self):
        scn = harness.Scenario(nonisi_length=136, max_delay=17)
        assert scn.ts_length == 152


class TestBackhaulBits:
    def test_hand_formulas(self):
        scn = harness.Scenario(data_length=540, array_x=10, array_y=10,
                               num_satellites=3, quant_bits=3)
        per_obs = 2 * 540 * 100
        assert harness.backhaul_bits_per_frame(scn, "non_cooperative") == 0
        assert harness.backhaul_bits_per_frame(scn, "cooperative_ls") == 3 * per_obs * 64
        assert harness.backhaul_bits_per_frame(scn, "bayes_msctp") == 3 * (64 + per_obs * 3)
        assert harness.backhaul_bits_per_frame(scn, "bayes_mscbp") == 2 * (64 + per_obs * 3)


_SMALL = harness.Scenario(num_users=16, num_active=3, num_paths=2, max_delay=7,
                          nonisi_length=40, data_length=64, used_subcarriers=64,
                          array_x=3, array_y=3, quant_bits=3, snr_db=12.0)


class TestRunTrial:
    def test_deterministic(self):
        a = harness.run_trial(_SMALL, (1, 0, 0), algorithms=("alg1",),
                              detection=("cooperative_ls", "bayes_mscbp"))
        b = harness.run_trial(_SMALL, (1, 0, 0), algorithms=("alg1",),
                              detection=("cooperative_ls", "bayes_mscbp"))
        assert a == b

    def test_metrics_in_range(self):
        res = harness.run_trial(_SMALL, (2, 0, 0),
                                algorithms=("alg1", "perfect_csi"),
                                detection=("non_cooperative", "cooperative_ls"))
        for (alg, mode), m in res.items():
            assert 0 <= m["aep_coop"] <= 1
            assert 0 <= m["aep_noncoop"] <= 1
            assert 0 <= m["ber"] <= 1
        assert res[("perfect_csi", "cooperative_ls")]["nmse_db"] == -120.0
        assert res[("perfect_csi", "cooperative_ls")]["aep_coop"] == 0.0

    def test_no_active_users_ber_nan(self):
        scn = harness.Scenario(num_users=16, num_active=0, num_paths=2,
                               max_delay=7, nonisi_length=40, data_length=64,
                               used_subcarriers=64, array_x=3, array_y=3)
        res = harness.run_trial(scn, (3, 0, 0), algorithms=("perfect_csi",),
                                detection=("cooperative_ls",))
        assert np.isnan(res[("perfect_csi", "cooperative_ls")]["ber"])


class TestRunSweep:
    def _config(self, **kw):
        base = dict(scenario=_SMALL, sweep_axis="SNR", sweep_values=(8.0,),
                    algorithms=("alg1",), detection=("cooperative_ls",),
                    trials=2, seed=3)
        base.update(kw)
        return harness.ExperimentConfig(**base)

    def test_csv_schema(self):
        text = harness.run_sweep(self._config(), progress=lambda m: None)
        lines = text.strip().split("\n")
        header = lines[0].split(",")
        assert header[0] == "schema"
        assert "nmse_db_median" in header
        assert len(lines) == 2
        assert lines[1].startswith("ra-sim-v1,SNR,8.0,alg1,cooperative_ls,2,")

    def test_worker_count_invariance(self):
        cfg = self._config(trials=3)
        serial = harness.run_sweep(cfg, workers=1, progress=lambda m: None)
        parallel = harness.run_sweep(cfg, workers=2, progress=lambda m: None)
        assert serial == parallel

    def test_ber_blank_when_undefined(self):
        scn = harness.Scenario(num_users=16, num_active=0, num_paths=2,
                               max_delay=7, nonisi_length=40, data_length=64,
                               used_subcarriers=64, array_x=3, array_y=3)
        cfg = self._config(scenario=scn, algorithms=("perfect_csi",))
        text = harness.run_sweep(cfg, progress=lambda m: None)
        row = text.strip().split("\n")[1].split(",")
        header = text.strip().split("\n")[0].split(",")
        assert row[header.index("ber_mean")] == ""


class TestCorrelationCsv:
    def test_format_and_median(self):
        text = harness.correlation_csv([1, 2], 101, seed=0)
        lines = text.strip().split("\n")
        assert lines[0] == "q,index,c0"
        assert len(lines) == 1 + 2 * 101
        q1 = [float(l.split(",")[2]) for l in lines[1:102]]
        assert np.median(q1) == 1.0
        # sorted per q
        assert q1 == sorted(q1)

    def test_rejects_bad_args(self):
        with pytest.raises(ConfigError):
            harness.correlation_csv([1], 0)
        with pytest.raises(ConfigError):
            harness.correlation_csv([0], 10)


class TestCli:
    def test_run_and_outputs(self, tmp_path):
        cfg = {
            "scenario": {"num_users": 16, "num_active": 3, "num_paths": 2,
                         "max_delay": 7, "nonisi_length": 40,
                         "data_length": 64, "used_subcarriers": 64,
                         "array_x": 3, "array_y": 3},
            "sweep_axis": "SNR", "sweep_values": [10.0],
            "algorithms": ["alg1"], "detection": ["cooperative_ls"],
            "trials": 2, "seed": 1, "output": "out.csv",
        }
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        rc = cli.main(["run", "--config", str(path), "--out", str(tmp_path)])
        assert rc == 0
        assert (tmp_path / "out.csv").exists()

    def test_fast_caps_trials(self, tmp_path):
        cfg = {"scenario": {"num_users": 16, "num_active": 3, "num_paths": 2,
                            "max_delay": 7, "nonisi_length": 40,
                            "data_length": 64, "used_subcarriers": 64,
                            "array_x": 3, "array_y": 3},
               "sweep_axis": "SNR", "sweep_values": [10.0],
               "algorithms": ["alg1"], "detection": ["cooperative_ls"],
               "trials": 60, "seed": 1, "output": "fast.csv"}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg))
        rc = cli.main(["run", "--config", str(path), "--fast",
                       "--out", str(tmp_path)])
        assert rc == 0
        text = (tmp_path / "fast.csv").read_text()
        assert text.strip().split("\n")[1].split(",")[5] == "50"

    def test_config_error_exit_code(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "missing.json")]) == 2
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"sweep_axis": "nope", "sweep_values": [1]}))
        assert cli.main(["run", "--config", str(bad)]) == 2

    def test_corr_command(self, tmp_path):
        out = tmp_path / "corr.csv"
        rc = cli.main(["corr", "--q", "1,2", "--trials", "50",
                       "--out", str(out)])
        assert rc == 0
        assert out.read_text().startswith("q,index,c0")

    def test_corr_rejects_bad_q(self, tmp_path):
        assert cli.main(["corr", "--q", "a,b",
                         "--out", str(tmp_path / "x.csv")]) == 2
