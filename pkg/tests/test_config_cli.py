import json

import pytest

from randmaps.cli import main, report
from randmaps.config import DEFAULTS, apply_overrides, config_hash, load_config, shipped_config
from randmaps.errors import ConfigError

SMALL = ["--override", "covariance.batch_length=64", "--override", "covariance.batches=2000"]


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


# config ----------------------------------------------------------------------------------

@pytest.mark.parametrize("name", ["doubling", "doubling_coboundary", "mix_a", "tripling",
                                  "perturbed_family", "rde_two_atom"])
def test_shipped_configs_validate(name):
    cfg = load_config(shipped_config(name))
    assert cfg["name"].replace("-", "_").lower() == name
    assert cfg["grid"] == DEFAULTS["grid"]


def test_missing_ensemble_names_schema_path(tmp_path):
    with pytest.raises(ConfigError, match=r"schema: required"):
        load_config(_write(tmp_path, {"seed": 3}))


def test_unknown_key_rejected(tmp_path):
    doc = {"ensemble": {"atoms": [{"weight": 1, "kind": "linear", "d": 2}]}, "gird": 10}
    with pytest.raises(ConfigError, match="additionalProperties"):
        load_config(_write(tmp_path, doc))


def test_bad_field_reports_its_path(tmp_path):
    doc = {"ensemble": {"atoms": [{"weight": 1, "kind": "linear", "d": 0}]}}
    with pytest.raises(ConfigError, match=r"config error at ensemble/atoms/0/d"):
        load_config(_write(tmp_path, doc))


def test_overrides_parse_json_and_nest():
    cfg = apply_overrides({"a": {"b": 1}}, ["a.b=2.5", "a.c=[1,2]", "name=hello", "x.y.z=true"])
    assert cfg == {"a": {"b": 2.5, "c": [1, 2]}, "name": "hello", "x": {"y": {"z": True}}}
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_overrides_are_validated():
    with pytest.raises(ConfigError):
        load_config(shipped_config("doubling"), ["grid=4"])


def test_defaults_merge_and_hash_stable():
    a = load_config(shipped_config("doubling"), ["clt.n=64"])
    assert a["clt"] == {"n": 64, "samples": 10000, "replications": 1}
    assert config_hash(a) == config_hash(json.loads(json.dumps(a)))
    assert config_hash(a) != config_hash(load_config(shipped_config("doubling")))


# cli ----------------------------------------------------------------------------------------

def test_cli_config_error_exit_2(tmp_path, capsys):
    code = main(["covariance", "--config", _write(tmp_path, {"seed": 1}), "--out", str(tmp_path)])
    assert code == 2
    assert "schema:" in capsys.readouterr().err
    assert main(["covariance", "--out", str(tmp_path)]) == 2


def test_cli_covariance_doubling(tmp_path):
    code = main(["covariance", "--config", str(shipped_config("doubling")), "--out", str(tmp_path)] + SMALL)
    assert code == 0
    run = tmp_path / "covariance" / "doubling-s1"
    summary = json.loads((run / "summary.json").read_text())
    assert summary["result"]["series"]["sigma2"][0][0] == pytest.approx(0.5, abs=1e-10)
    assert summary["passed"] is True
    manifest = json.loads((run / "manifest.json").read_text())
    assert set(manifest["files"]) == {"data.csv", "summary.json"}
    assert manifest["config_hash"] == config_hash(summary["config"])


def test_cli_rerun_is_byte_identical(tmp_path):
    args = ["correlation", "--config", str(shipped_config("mix_a")),
            "--override", "correlation.samples=2000", "--override", "correlation.n_max=5"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "correlation" / "mix_a-s1" / "data.csv").read_bytes()
    b = (tmp_path / "b" / "correlation" / "mix_a-s1" / "data.csv").read_bytes()
    assert a == b


def test_cli_seed_changes_run_dir(tmp_path):
    args = ["coboundary", "--config", str(shipped_config("doubling_coboundary")), "--out", str(tmp_path)]
    assert main(args + ["--seed", "4"]) == 0
    summary = json.loads((tmp_path / "coboundary" / "doubling_coboundary-s4" / "summary.json").read_text())
    assert summary["result"]["residual"] <= 1e-10
    assert abs(summary["result"]["sigma2"]) <= 1e-10


def test_report_empty(tmp_path, capsys):
    assert main(["report", str(tmp_path)]) == 0
    assert "no manifests found" in capsys.readouterr().out


def test_report_single_and_mixed(tmp_path, capsys):
    main(["covariance", "--config", str(shipped_config("doubling")), "--out", str(tmp_path)] + SMALL)
    rows = report(tmp_path)
    assert rows == [("pass", "covariance", "covariance/doubling-s1", "")]
    bad = tmp_path / "clt" / "fake-s1"
    bad.mkdir(parents=True)
    (bad / "manifest.json").write_text(json.dumps({"subcommand": "clt", "passed": False, "failures": ["clt"]}))
    rows = report(tmp_path)
    assert [r[0] for r in rows] == ["FAIL", "pass"]
    assert (tmp_path / "report.csv").exists()
    capsys.readouterr()
    main(["report", str(tmp_path)])
    out = capsys.readouterr().out.splitlines()
    assert out[0].startswith("FAIL")
