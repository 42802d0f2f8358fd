import csv
import json

import numpy as np
import pytest

from srmc import cli
from srmc.errors import ArgumentError
from srmc.harness import (MissingArtifacts, PipelineConfig, expand_grid,
                          run_pipeline, run_sweep, strip_timings, verify_lemmas)
from srmc.reweight import WeightMatrix

SMALL = {
    "instance": {"n1": 10, "n2": 10, "p": 0.9, "seed": 0},
    "adversary": {"kind": "dense_rows", "params": {"rows": [0, 1]}, "seed": 1},
    "reweight": {"beta": 0.1, "eps": 0.1},
    "solver": {"max_iter": 20000},
}


@pytest.fixture(scope="module")
def small_report(tmp_path_factory):
    root = tmp_path_factory.mktemp("runs")
    rep = run_pipeline(PipelineConfig.from_dict(SMALL), root)
    return root / f"run-{rep['digest']}", rep


# ------------------------------------------------------------------ config

def test_config_defaults_and_digest():
    a, b = PipelineConfig(), PipelineConfig.from_dict({})
    assert a.digest() == b.digest()
    c = a.override(["reweight.beta=0.1", "adversary.params.rows=[0,1]"])
    assert c["reweight"]["beta"] == 0.1
    assert c["adversary"]["params"]["rows"] == [0, 1]
    assert c.digest() != a.digest()
    # overrides never touch the original
    assert a["reweight"]["beta"] == 0.05


@pytest.mark.parametrize("bad", ["reweight.gamma=1", "nokey=1", "reweight.beta"])
def test_config_override_rejects_unknown_keys(bad):
    with pytest.raises(ArgumentError):
        PipelineConfig().override([bad])


def test_config_validation(tmp_path):
    with pytest.raises(ArgumentError):
        PipelineConfig.from_dict({"instance": {"colour": "red"}})
    with pytest.raises(ArgumentError, match="missing"):
        PipelineConfig.from_dict(
            {"reweight": {"weights_file": str(tmp_path / "nope.csv")}}).validate()
    with pytest.raises(ArgumentError):
        PipelineConfig.from_dict({"instance": {"kind": "rank7"}}).validate()
    with pytest.raises(ArgumentError):
        PipelineConfig.from_json(tmp_path / "absent.json")


def test_grid_expansion():
    cfgs = list(expand_grid(PipelineConfig(), {"instance.seed": [0, 1],
                                               "reweight.eps": [0.05, 0.1]}))
    assert len(cfgs) == 4
    assert len({c.digest() for c in cfgs}) == 4


# ---------------------------------------------------------------- pipeline

def test_pipeline_artifacts_and_report(small_report):
    run_dir, rep = small_report
    assert rep["status"] == "ok", rep["error"]
    for name in ("config.json", "truth_U.csv", "observations_base.csv",
                 "observations.csv", "weights.csv", "potential.csv",
                 "factors_U.csv", "factors_V.csv", "error.csv", "report.json"):
        assert (run_dir / name).exists(), name
    assert rep["instance"]["adversarial"] > 0
    assert rep["solver"]["recovery_error"] < 1e-6
    assert rep["lemmas"]["pass"]
    with open(run_dir / "potential.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == rep["reweight"]["iterations"]


def test_pipeline_reuses_existing_run(small_report):
    run_dir, rep = small_report
    again = run_pipeline(PipelineConfig.from_dict(SMALL), run_dir.parent)
    assert again == json.loads((run_dir / "report.json").read_text())
    assert strip_timings(again) == strip_timings(rep)


def test_pipeline_is_deterministic(small_report, tmp_path):
    _, rep = small_report
    fresh = run_pipeline(PipelineConfig.from_dict(SMALL), tmp_path)
    assert strip_timings(fresh) == strip_timings(rep)


def test_pipeline_records_stage_failure(tmp_path):
    # beta far below what the pattern needs: the reweighting stage fails
    cfg = PipelineConfig.from_dict({"instance": {"n1": 10, "n2": 10, "p": 0.5},
                                    "reweight": {"beta": 0.01, "eps": 0.01,
                                                 "options": {"max_iter": 50}}})
    rep = run_pipeline(cfg, tmp_path)
    assert rep["status"] == "failed"
    assert rep["failed_stage"] == "reweight"
    assert "skipped" in rep["solver"]
    run_dir = tmp_path / f"run-{rep['digest']}"
    assert (run_dir / "failure.txt").exists()
    assert json.loads((run_dir / "report.json").read_text())["status"] == "failed"


def test_pipeline_without_reweighting_skips_weight_checks(tmp_path):
    cfg = PipelineConfig.from_dict(SMALL).override(["reweight.enabled=false"])
    rep = run_pipeline(cfg, tmp_path)
    assert rep["status"] == "ok"
    assert "skipped" in rep["reweight"]
    assert "skipped" in rep["lemmas"]["weight_contract"]


def test_output_root_from_environment(out_root):
    rep = run_pipeline(PipelineConfig.from_dict(SMALL).override(["reweight.enabled=false"]))
    assert (out_root / f"run-{rep['digest']}" / "report.json").exists()


# ------------------------------------------------------------------ verify

def test_verify_missing_artifacts(small_report, tmp_path):
    run_dir, _ = small_report
    (tmp_path / "config.json").write_text((run_dir / "config.json").read_text())
    with pytest.raises(MissingArtifacts) as info:
        verify_lemmas(tmp_path)
    assert "weights.csv" in info.value.missing


def test_verify_flags_corrupted_weights(small_report, tmp_path):
    run_dir, _ = small_report
    for f in run_dir.iterdir():
        (tmp_path / f.name).write_bytes(f.read_bytes())
    W = WeightMatrix.from_csv(tmp_path / "weights.csv", 10, 10)
    # a single huge weight breaks the row-sum contract
    w = W.values.copy()
    w[0] = 1e3
    (tmp_path / "weights.csv").unlink()
    WeightMatrix(10, 10, W.rows, W.cols, w).to_csv(tmp_path / "weights.csv")
    out = verify_lemmas(tmp_path)
    assert not out["weight_contract"]["row_sums"]["pass"]
    assert not out["pass"]


# ------------------------------------------------------------------- sweep

def test_sweep_rows(tmp_path):
    cfg = PipelineConfig.from_dict(SMALL).override(["reweight.enabled=false"])
    rows = run_sweep(cfg, {"instance.seed": [0, 1]}, tmp_path)
    assert [r["instance.seed"] for r in rows] == [0, 1]
    assert all(r["status"] == "ok" for r in rows)
    assert rows[0]["digest"] != rows[1]["digest"]


# --------------------------------------------------------------------- CLI

def test_cli_end_to_end(tmp_path, capsys):
    d = tmp_path / "inst"
    assert cli.main(["generate", "--n1", "10", "--n2", "10", "--p", "0.9",
                     "--out", str(d)]) == 0
    assert cli.main(["corrupt", "--truth", str(d / "truth"),
                     "--obs", str(d / "observations.csv"), "--kind", "dense_rows",
                     "--params", '{"rows": [0, 1]}', "--out", str(d / "obs2.csv"),
                     "--edges", str(d / "obs2.mtx")]) == 0
    assert cli.main(["reweight", "--edges", str(d / "obs2.mtx"), "--beta", "0.1",
                     "--eps", "0.1", "--out", str(d / "w.csv")]) == 0
    log = json.loads((d / "w.log.json").read_text())
    assert log["iterations"] == len(log["iterates"])
    assert cli.main(["solve", "--obs", str(d / "obs2.csv"), "--weights", str(d / "w.csv"),
                     "--rank", "2", "--truth", str(d / "truth"),
                     "--out", str(d / "fac")]) == 0
    summary = json.loads(capsys.readouterr().out.split("\n}\n")[-2] + "\n}")
    assert summary["recovery_error"] < 1e-6
    assert (d / "fac_U.csv").exists() and (d / "fac_trace.json").exists()


def test_cli_never_overwrites(tmp_path):
    d = tmp_path / "inst"
    assert cli.main(["generate", "--n1", "6", "--n2", "6", "--out", str(d)]) == 0
    assert cli.main(["generate", "--n1", "6", "--n2", "6", "--out", str(d)]) == 2


def test_cli_argument_errors(tmp_path, capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["reweight"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        cli.main(["generate", "--kind", "rank9", "--out", str(tmp_path)])
    assert info.value.code == 2
    assert cli.main(["pipeline", "--set", "reweight.nope=1",
                     "--out-root", str(tmp_path)]) == 2
    assert cli.main(["verify", str(tmp_path / "empty")]) == 2


def test_cli_pipeline_and_verify(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps(SMALL))
    assert cli.main(["pipeline", "--config", str(cfg), "--out-root", str(tmp_path)]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert cli.main(["verify", str(tmp_path / f"run-{rep['digest']}")]) == 0


def test_cli_stage_failure_exit_code(tmp_path):
    code = cli.main(["pipeline", "--set", "instance.n1=10", "--set", "instance.n2=10",
                     "--set", "reweight.beta=0.01", "--set", "reweight.eps=0.01",
                     "--set", 'reweight.options={"max_iter": 50}',
                     "--out-root", str(tmp_path)])
    assert code == 3


def test_cli_sweep(tmp_path, capsys):
    assert cli.main(["sweep", "--set", "instance.n1=8", "--set", "instance.n2=8",
                     "--set", "reweight.enabled=false",
                     "--grid", "instance.seed=[0,1]", "--out-root", str(tmp_path)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert len(rows) == 2
    assert len(list(tmp_path.glob("sweep-*.csv"))) == 1
