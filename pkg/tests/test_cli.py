import json
import math
import os

import numpy as np
import pytest

from entcrb import cli, estimation, kernels, measurement, simulator, states, tomography
from entcrb.errors import ConfigError

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CAMPAIGN = os.path.join(ROOT, "configs", "reference_campaign.json")


def files(d):
    out = {}
    for base, _, names in os.walk(d):
        for n in names:
            p = os.path.join(base, n)
            out[os.path.relpath(p, d)] = open(p, "rb").read()
    return out


class TestParseConfig:
    def test_defaults(self):
        cfg = cli.parse_config('{"model":"coherent","phi_degrees":45,"p":0.97,"seed":1}')
        assert (cfg.runs, cfg.mean_total, cfg.shuffle) == (30, 1e4, True)
        assert cfg.main_setting == measurement.OPTIMAL
        assert cfg.params.phi == pytest.approx(math.pi / 4)

    def test_range_error_names_field(self):
        with pytest.raises(ConfigError, match="phi_degrees"):
            cli.parse_config('{"phi_degrees": 100}')

    def test_unknown_keys_listed(self):
        with pytest.raises(ConfigError, match="colour, flavour"):
            cli.parse_config('{"flavour": 1, "colour": 2}')

    @pytest.mark.parametrize("doc", ['{"p": "high"}', '{"runs": 2.5}', '{"shuffle": 1}', '{"seed": -1}',
                                     '{"schema_version": 2}', "not json", '{"model": "ghz"}'])
    def test_rejections(self, doc):
        with pytest.raises(ConfigError):
            cli.parse_config(doc)

    def test_campaign_file(self):
        with open(CAMPAIGN) as fh:
            cfgs = cli.parse_campaign(fh.read())
        assert [(c.phi_degrees, c.p) for c in cfgs] == [(10, 0.85), (15, 0.88), (20, 0.88), (28, 0.85),
                                                         (40, 0.92), (45, 0.93), (45, 0.97)]
        assert len({c.seed for c in cfgs}) == 7

    def test_campaign_file_matches_builtin(self):
        with open(CAMPAIGN) as fh:
            assert fh.read() == cli.reference_campaign_json()


@pytest.fixture(scope="module")
def out(tmp_path_factory):
    d = tmp_path_factory.mktemp("run")
    assert cli.main(["run", "--config", CAMPAIGN, "--out", str(d), "--fisher-scan", "--tomography"]) == 0
    return d


class TestRun:
    def test_layout(self, out):
        dirs = sorted(p for p in os.listdir(out) if os.path.isdir(out / p))
        assert len(dirs) == 7
        for name in ("runs_main.csv", "runs_diag.csv", "report.json", "saturation.csv", "fano.csv", "werner.json",
                     "tomo.json", "tomo_dataset.csv"):
            assert all((out / d / name).exists() for d in dirs)
        assert (out / "index.json").exists() and (out / "saturation_table.csv").exists()

    def test_reports_consistent(self, out):
        index = json.loads((out / "index.json").read_text())
        assert index["rng"] == kernels.RNG_ID
        for entry in index["configs"]:
            rep = json.loads((out / entry["name"] / "report.json").read_text())
            assert rep["model"] == "coherent" and rep["consistent_3sigma"] is True
            assert entry["verdict"] == {"coherent": True, "werner": False}

    def test_matches_library(self, out):
        cfg = cli.reference_campaign()[3]
        name = cli.config_name(cfg, 3)
        main, diag = cli.simulate_config(cfg)
        direct = estimation.estimate_report(main, diag, math.radians(28), states.Model.COHERENT)
        doc = json.loads((out / name / "report.json").read_text())
        assert {k: doc[k] for k in direct.to_json()} == json.loads(json.dumps(direct.to_json()))
        on_disk = simulator.read_runs_csv(out / name / "runs_main.csv")
        assert [r.counts for r in on_disk] == [r.counts for r in main]

    def test_fisher_scan_csv(self, out):
        name = cli.config_name(cli.reference_campaign()[1], 1)
        grid = np.loadtxt(out / name / "fisher_scan.csv", delimiter=",", skiprows=1)
        a, b, f = grid[np.argmax(grid[:, 2])]
        step = 2.5
        assert abs(abs(a) - 45) <= step and abs(abs(b) - 45) <= step

    def test_boundary_scan_flagged(self, out):
        index = json.loads((out / "index.json").read_text())
        assert "skipped" in index["configs"][6]["fisher_scan"]
        assert not (out / index["configs"][6]["name"] / "fisher_scan.csv").exists()

    def test_byte_identical_repeat(self, out, tmp_path):
        assert cli.main(["run", "--config", CAMPAIGN, "--out", str(tmp_path), "--fisher-scan", "--tomography"]) == 0
        assert files(tmp_path) == files(out)

    def test_parallel_workers_identical(self, out, tmp_path):
        args = ["run", "--config", CAMPAIGN, "--out", str(tmp_path), "--fisher-scan", "--tomography", "--workers", "3"]
        assert cli.main(args) == 0
        assert files(tmp_path) == files(out)


class TestOverrides:
    def test_flags_applied(self, tmp_path):
        args = ["run", "--phi-deg", "30", "--p", "0.9", "--out", str(tmp_path), "--seed", "5", "--runs", "4",
                "--mean-total", "500", "--no-shuffle", "--multinomial", "--model", "werner"]
        assert cli.main(args) == 0
        (d,) = [p for p in tmp_path.iterdir() if p.is_dir()]
        cfg = json.loads((d / "report.json").read_text())["config"]
        assert (cfg["seed"], cfg["runs"], cfg["mean_total"], cfg["shuffle"], cfg["multinomial"], cfg["model"]) == \
            (5, 4, 500.0, False, True, "werner")
        assert len(simulator.read_runs_csv(d / "runs_main.csv")) == 4


class TestExitCodes:
    def test_config_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text('{"phi_degrees": 100}')
        assert cli.main(["run", "--config", str(bad), "--out", str(tmp_path)]) == 2
        assert "phi_degrees" in capsys.readouterr().err

    def test_io_error(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("x")
        assert cli.main(["run", "--phi-deg", "30", "--p", "0.9", "--out", str(blocker / "sub")]) == 4

    def test_missing_config(self, tmp_path):
        assert cli.main(["run", "--config", str(tmp_path / "none.json"), "--out", str(tmp_path)]) == 4

    def test_runtime_error(self, tmp_path, capsys):
        cfg = tmp_path / "c.json"
        cfg.write_text('{"phi_degrees": 30, "p": 0.9, "main_setting_deg": [0, 0]}')
        assert cli.main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 3


class TestOtherCommands:
    def test_fisher_scan(self, tmp_path, capsys):
        assert cli.main(["fisher-scan", "--phi-deg", "20", "--p", "0.88", "--out", str(tmp_path)]) == 0
        line = json.loads(capsys.readouterr().out.strip())
        assert abs(abs(line["best_alpha_deg"]) - 45) <= 2.5
        assert line["best_fisher"] == pytest.approx(line["qfi"], rel=1e-5)

    def test_qcrb_check(self, tmp_path):
        assert cli.main(["qcrb-check", "--out", str(tmp_path / "q.json")]) == 0
        doc = json.loads((tmp_path / "q.json").read_text())
        assert doc["pass"] and len(doc["rows"]) == 19 + 15

    def test_tomo_and_reconstruct(self, tmp_path, capsys):
        assert cli.main(["tomo", "--phi-deg", "45", "--p", "0.97", "--out", str(tmp_path), "--seed", "3"]) == 0
        first = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
        assert first["fidelity"] > 0.99
        (d,) = [p for p in tmp_path.iterdir() if p.is_dir()]
        out2 = tmp_path / "re"
        assert cli.main(["tomo", "--data", str(d / "tomo_dataset.csv"), "--phi-deg", "45", "--p", "0.97",
                         "--out", str(out2)]) == 0
        doc = json.loads((out2 / "tomo.json").read_text())
        assert doc["fidelity"] == pytest.approx(first["fidelity"], abs=1e-6)

    def test_report_from_csv(self, tmp_path, capsys):
        cfg = cli.reference_campaign()[2]
        main, diag = cli.simulate_config(cfg)
        simulator.write_runs_csv(main, tmp_path / "m.csv")
        simulator.write_runs_csv(diag, tmp_path / "d.csv")
        args = ["report", "--runs-main", str(tmp_path / "m.csv"), "--runs-diag", str(tmp_path / "d.csv"),
                "--phi-deg", "20", "--out", str(tmp_path / "r")]
        assert cli.main(args) == 0
        doc = json.loads((tmp_path / "r" / "report.json").read_text())
        direct = estimation.estimate_report(main, diag, math.radians(20))
        assert doc["eps_hat_mean"] == pytest.approx(direct.eps_hat.mean, rel=1e-12)
        assert json.loads(capsys.readouterr().out)["verdict"] == {"coherent": True, "werner": False}

    def test_module_entry(self):
        import subprocess
        import sys

        out = subprocess.run([sys.executable, "-m", "entcrb", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "fisher-scan" in out.stdout
