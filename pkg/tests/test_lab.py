import csv
import json

import pytest

from entrolab.errors import ConfigError, SchemaMismatch
from entrolab.lab import cli
from entrolab.lab.config import SUITES, load_config, parse_config
from entrolab.lab.runner import OutputBusy, compare, output_lock, run
from entrolab.lab.suites import CSV_SCHEMAS
from entrolab.models.spin import curie_weiss_boundary_beta

BL = {"family": "bernoulli_laplace", "params": {"L": 4, "N": 2}}
FAST = {"samples": 10, "seed": 3, "options": {"lemma_samples": 500, "best_constant_restarts": 1}}


def write_config(tmp_path, model, name="config.json", **extra):
    body = {**FAST, "model": model, "suites": "all", "output_dir": str(tmp_path / "out"), **extra}
    path = tmp_path / name
    path.write_text(json.dumps(body))
    return path


@pytest.fixture(scope="module")
def bl_run(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("bl")
    out = tmp / "out"
    code, report = run(load_config(write_config(tmp, BL)), out)
    return code, report, out


class TestConfig:
    def test_defaults(self):
        cfg = parse_config({"model": BL})
        assert cfg.suites == SUITES and cfg.phi_list == (1.0, 1.5, 2.0)
        assert cfg.samples_for("csi") == 100

    def test_log_alias_and_per_suite(self):
        cfg = parse_config({"model": BL, "phi_list": ["log", 2], "suite_samples": {"csi": 7}})
        assert cfg.phi_list == (1.0, 2.0) and cfg.samples_for("csi") == 7

    @pytest.mark.parametrize("raw, path", [
        ({"model": BL, "samples": -1}, "samples"),
        ({"model": BL, "samples": True}, "samples"),
        ({"model": BL, "seed": -2}, "seed"),
        ({"model": BL, "phi_list": [1.0, 3.0]}, r"phi_list\[1\]"),
        ({"model": BL, "t_grid": [0.5, 0.1]}, "t_grid"),
        ({"model": BL, "t_grid": [0.0, 0.1]}, r"t_grid\[0\]"),
        ({"model": BL, "suites": ["csi", "bogus"]}, r"suites\[1\]"),
        ({"model": BL, "suite_samples": {"csi": 0}}, "suite_samples.csi"),
        ({"model": BL, "colour": "red"}, "colour"),
        ({"model": {"params": {}}}, "model.family"),
        ({}, "model"),
    ])
    def test_errors_name_the_field(self, raw, path):
        with pytest.raises(ConfigError, match=path):
            parse_config(raw)

    def test_unreadable_file(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError, match="line 1"):
            load_config(bad)
        with pytest.raises(ConfigError):
            load_config(tmp_path / "missing.json")


class TestRun:
    def test_all_suites_pass(self, bl_run):
        code, report, out = bl_run
        assert code == 0
        assert all(s["status"] == "pass" for s in report["suites"].values())
        assert report["model"]["hypotheses_ok"]
        for name in SUITES:
            with open(out / f"{name}.csv", newline="") as fh:
                assert next(csv.reader(fh)) == CSV_SCHEMAS[name]
        assert (out / "timings.json").exists()

    def test_constants_table(self, bl_run):
        _, _, out = bl_run
        with open(out / "constants.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["phi"] for r in rows] == ["phi_1", "phi_1.5", "phi_2"]
        for r in rows:
            assert float(r["margin"]) >= -1e-9
        assert float(rows[2]["kappa_theory"]) == 8.0

    def test_report_deterministic_across_jobs(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, BL)
        assert cli.main(["run", str(path), "--out", str(tmp_path / "a")]) == 0
        monkeypatch.setenv("ENTROLAB_JOBS", "4")
        assert cli.main(["run", str(path), "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
        for name in SUITES:
            assert (tmp_path / "a" / f"{name}.csv").read_text() == (tmp_path / "b" / f"{name}.csv").read_text()

    def test_seed_override(self, tmp_path):
        path = write_config(tmp_path, BL, suites=["reversibility", "csi"])
        assert cli.main(["run", str(path), "--seed", "11"]) == 0
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        assert report["config"]["seed"] == 11

    def test_violating_curie_weiss(self, tmp_path, capsys):
        model = {"family": "curie_weiss", "params": {"N": 5, "beta": 1.5 * curie_weiss_boundary_beta(5)}}
        path = write_config(tmp_path, model)
        assert cli.main(["run", str(path)]) == 2
        assert "curie condition" in capsys.readouterr().out
        report = json.loads((tmp_path / "out" / "report.json").read_text())
        suites = report["suites"]
        assert suites["admissibility"]["status"] == "fail"
        assert {suites[s]["status"] for s in ("convexity", "constants", "cancellation")} == {"gated"}
        assert suites["csi"]["status"] == "pass"

    def test_malformed_config_exit(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"model": BL, "samples": -1}))
        assert cli.main(["run", str(path)]) == 64
        assert "samples" in capsys.readouterr().err

    def test_busy_output(self, tmp_path):
        path = write_config(tmp_path, BL, suites=["reversibility"])
        out = tmp_path / "out"
        with output_lock(out):
            with pytest.raises(OutputBusy):
                run(load_config(path), out)
            assert cli.main(["run", str(path)]) == 75

    def test_bad_jobs_env(self, tmp_path, monkeypatch):
        path = write_config(tmp_path, BL, suites=["reversibility"])
        monkeypatch.setenv("ENTROLAB_JOBS", "many")
        assert cli.main(["run", str(path)]) == 64


def small_run(tmp_path, name, model):
    cfg = parse_config(dict(FAST, model=model, suites=["reversibility", "admissibility", "decay", "constants"]))
    out = tmp_path / name
    run(cfg, out)
    return out / "report.json"


class TestCompare:
    def test_single_report(self, bl_run):
        _, _, out = bl_run
        rows = compare([out / "report.json"])
        assert len(rows) == 1 and rows[0][:2] == ["bernoulli_laplace", "phi_1"]
        assert compare([out / "report.json"], phi="phi_2")[0][2] == "8"

    def test_three_models(self, tmp_path):
        reports = [small_run(tmp_path, "bl", BL),
                   small_run(tmp_path, "hc", {"family": "hardcore", "params": {"cycle": 5, "rho": 0.15}}),
                   small_run(tmp_path, "zr", {"family": "zero_range", "params": {"L": 3, "N": 3}})]
        rows = compare(reports)
        assert [r[0] for r in rows] == ["bernoulli_laplace", "hardcore", "zero_range"]
        assert all(float(r[5]) >= -1e-9 for r in rows)

    def test_mixed_versions(self, tmp_path, capsys):
        first = small_run(tmp_path, "a", BL)
        second = small_run(tmp_path, "b", BL)
        data = json.loads(second.read_text())
        data["schema_version"] += 1
        second.write_text(json.dumps(data))
        with pytest.raises(SchemaMismatch):
            compare([first, second])
        assert cli.main(["compare", str(first), str(second)]) == 65

    def test_missing_constants(self, tmp_path):
        cfg = parse_config(dict(FAST, model=BL, suites=["reversibility"]))
        run(cfg, tmp_path / "r")
        with pytest.raises(SchemaMismatch):
            compare([tmp_path / "r" / "report.json"])

    def test_unknown_phi(self, bl_run):
        with pytest.raises(SchemaMismatch):
            compare([bl_run[2] / "report.json"], phi="phi_9")

    def test_cli_output(self, bl_run, capsys):
        assert cli.main(["compare", str(bl_run[2] / "report.json")]) == 0
        lines = capsys.readouterr().out.splitlines()
        assert lines[0] == "model,phi,kappa_theory,kappa_best_est,kappa_decay_fit,margin"
        assert len(lines) == 2


def test_constants_command(tmp_path, capsys):
    path = write_config(tmp_path, BL)
    assert cli.main(["constants", str(path)]) == 0
    view = json.loads(capsys.readouterr().out)
    assert view["kappa"] == 4 and view["kappa_1"] == 6 and view["implied"]["kappa_2"] == 8
