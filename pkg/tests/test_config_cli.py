import csv
import json

import pytest

from hlfszo.cli import main
from hlfszo.config import CANNED_CASES, ConfigError, RunConfig, dump_config, load_config, parse_config


def write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


BASE = {
    "case": "tiny",
    "objective": {"name": "ridge", "d": 3, "N": 20, "x_star": 0.5, "dataset_seed": 1},
    "methods": [
        {"method": "hf_szo", "eta": 1e-4, "r": 0.1, "beta": 1.0},
        {"method": "two_point_sym", "eta": 1e-2, "r": 0.1},
    ],
    "T": 100, "n_trials": 3, "base_seed": 5, "record_stride": 10,
}


# -- config ------------------------------------------------------------------------

def test_case_1_1a_step_sizes():
    cfg = parse_config("case_1_1a")
    assert [m.eta for m in cfg.methods] == [5e-4, 0.3, 5e-5, 0.05]
    assert cfg.objective.d == 2 and cfg.objective.N == 20


def test_case_2_2b_methods():
    cfg = parse_config("case_2_2b")
    assert {m.method.value: m.eta for m in cfg.methods} == {"hlf_szo": 7e-3, "hf_szo": 2e-2, "two_point_sym": 0.5}


@pytest.mark.parametrize("case", CANNED_CASES)
def test_canned_configs_round_trip(case):
    cfg = parse_config(case)
    again = load_config(json.loads(dump_config(cfg)))
    assert again == cfg
    assert cfg.case == case


def test_alpha_out_of_range_names_key():
    data = json.loads(json.dumps(BASE))
    data["methods"][0]["alpha"] = 1.5
    with pytest.raises(ConfigError, match=r"methods\.0\.alpha"):
        load_config(data)


def test_unknown_key_rejected():
    data = dict(BASE, momenta=0.9)
    with pytest.raises(ConfigError, match="momenta"):
        load_config(data)
    data = json.loads(json.dumps(BASE))
    data["methods"][1]["momenta"] = 0.9
    with pytest.raises(ConfigError, match=r"methods\.1\.momenta"):
        load_config(data)


def test_missing_and_mistyped_keys():
    data = dict(BASE)
    del data["T"]
    with pytest.raises(ConfigError, match="T"):
        load_config(data)
    with pytest.raises(ConfigError, match="n_trials"):
        load_config(dict(BASE, n_trials="many"))


def test_method_invariants():
    with pytest.raises(ConfigError, match="needs eta"):
        load_config(dict(BASE, methods=[{"method": "vanilla_szo", "r": 0.1}]))
    with pytest.raises(ConfigError, match="must not exceed 1"):
        load_config(dict(BASE, methods=[{"method": "filter_form", "r": 0.1, "delta": 0.5, "omega_H": 1.0,
                                         "omega_L": 3.0}]))
    with pytest.raises(ConfigError, match="unique"):
        load_config(dict(BASE, methods=[BASE["methods"][0], BASE["methods"][0]]))


def test_unreadable_and_malformed_files(tmp_path):
    with pytest.raises(ConfigError):
        parse_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        parse_config(bad)


# -- run ---------------------------------------------------------------------------

def test_run_writes_outputs_and_is_reproducible(tmp_path, capsys):
    cfg = write(tmp_path, BASE)
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", str(cfg), "--out", str(out1), "--workers", "1"]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(out2), "--workers", "2"]) == 0
    for name in ("trace.csv", "aggregate.csv", "metadata.json", "config.json"):
        assert (out1 / name).exists()
    assert (out1 / "aggregate.csv").read_bytes() == (out2 / "aggregate.csv").read_bytes()
    assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
    meta = json.loads((out1 / "metadata.json").read_text())
    assert meta["queries"] == {"hf_szo": 300, "two_point_sym": 600}
    assert "hf_szo: final mean_gap=" in capsys.readouterr().out


def test_run_overrides(tmp_path):
    cfg = write(tmp_path, BASE)
    out = tmp_path / "o"
    assert main(["run", "--config", str(cfg), "--out", str(out), "--trials", "2", "--iters", "30",
                 "--seed", "99"]) == 0
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["spec"]["n_trials"] == 2 and meta["spec"]["T"] == 30 and meta["base_seed"] == 99


def test_run_env_overrides(tmp_path, monkeypatch):
    cfg = write(tmp_path, BASE)
    out = tmp_path / "env"
    monkeypatch.setenv("HLFSZO_CONFIG", str(cfg))
    monkeypatch.setenv("HLFSZO_OUT", str(out))
    monkeypatch.setenv("HLFSZO_ITERS", "20")
    monkeypatch.setenv("HLFSZO_TRIALS", "2")
    assert main(["run"]) == 0
    assert json.loads((out / "metadata.json").read_text())["spec"]["T"] == 20
    # an explicit flag wins over the environment
    assert main(["run", "--iters", "10"]) == 0
    assert json.loads((out / "metadata.json").read_text())["spec"]["T"] == 10


def test_run_empty_methods_is_config_error(tmp_path, capsys):
    cfg = write(tmp_path, dict(BASE, methods=[]))
    out = tmp_path / "none"
    assert main(["run", "--config", str(cfg), "--out", str(out)]) == 2
    assert "methods" in capsys.readouterr().err
    assert not out.exists()


def test_run_without_config(monkeypatch, capsys):
    monkeypatch.delenv("HLFSZO_CONFIG", raising=False)
    assert main(["run"]) == 2
    assert "no config" in capsys.readouterr().err


def test_run_failure_removes_partial_outputs(tmp_path, monkeypatch):
    import hlfszo.cli as cli

    def boom(*a, **k):
        raise cli.HlfszoError("simulated failure")

    monkeypatch.setattr(cli, "write_metadata", boom)
    out = tmp_path / "partial"
    assert main(["run", "--config", str(write(tmp_path, BASE)), "--out", str(out)]) == 2
    assert not out.exists()


def test_run_skips_fully_diverged_method(tmp_path, capsys):
    data = json.loads(json.dumps(BASE))
    data["methods"][0]["eta"] = 10.0
    out = tmp_path / "div"
    assert main(["run", "--config", str(write(tmp_path, data)), "--out", str(out)]) == 0
    assert "every trial of hf_szo diverged" in capsys.readouterr().err
    rows = list(csv.reader(open(out / "aggregate.csv")))
    assert {r[0] for r in rows[1:]} == {"two_point_sym"}
    assert json.loads((out / "metadata.json").read_text())["all_diverged"] == ["hf_szo"]


# -- sweep-beta --------------------------------------------------------------------

def test_sweep_beta_five_values(tmp_path):
    out = tmp_path / "sweep"
    assert main(["sweep-beta", "--config", str(write(tmp_path, BASE)), "--out", str(out),
                 "--betas", "0.6,0.8,1.0,1.2,1.4"]) == 0
    for b in ("0.6", "0.8", "1", "1.2", "1.4"):
        assert (out / f"beta_{b}" / "aggregate.csv").exists()
    rows = list(csv.DictReader(open(out / "summary.csv")))
    assert len(rows) == 10
    assert {r["beta"] for r in rows} == {"0.6", "0.8", "1.0", "1.2", "1.4"}
    # only the high-pass method changes with beta
    tp = {r["final_mean_gap"] for r in rows if r["method"] == "two_point_sym"}
    hf = {r["final_mean_gap"] for r in rows if r["method"] == "hf_szo"}
    assert len(tp) == 1 and len(hf) == 5


def test_sweep_single_beta_matches_run(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["sweep-beta", "--config", str(cfg), "--out", str(tmp_path / "s"), "--betas", "1.0"]) == 0
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    assert (tmp_path / "s" / "aggregate.csv").read_bytes() == (tmp_path / "r" / "aggregate.csv").read_bytes()


def test_sweep_beta_outside_theorem_range_warns(tmp_path):
    with pytest.warns(UserWarning, match="outside"):
        assert main(["sweep-beta", "--config", str(write(tmp_path, BASE)), "--out", str(tmp_path / "w"),
                     "--betas", "2.5", "--iters", "10"]) == 0


def test_sweep_beta_rejects_negative_and_non_high_pass(tmp_path):
    cfg = write(tmp_path, BASE)
    assert main(["sweep-beta", "--config", str(cfg), "--out", str(tmp_path / "n"), "--betas", "-1"]) == 2
    plain = write(tmp_path, dict(BASE, methods=[BASE["methods"][1]]), "plain.json")
    assert main(["sweep-beta", "--config", str(plain), "--out", str(tmp_path / "p")]) == 2


# -- verify and theorem ------------------------------------------------------------

@pytest.mark.parametrize("suite", ["reductions", "theorem_arith", "gradients", "es_averaging"])
def test_verify_suites_pass(suite, capsys):
    assert main(["verify", suite]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["suite"] == suite and rep["passed"]


def test_verify_failure_exit_status(monkeypatch, capsys):
    import hlfszo.cli as cli
    monkeypatch.setattr(cli, "run_suite", lambda name: {"suite": name, "passed": False, "checks": []})
    assert main(["verify", "sampling"]) == 1


def test_theorem_command(capsys):
    assert main(["theorem", "--L", "1", "--G", "1", "--d", "2", "--T", "1000", "--alpha", "0", "--beta", "1"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["eta_max"] == pytest.approx(0.002, rel=1e-14)
    assert rep["r_min"] == pytest.approx(0.016, rel=1e-14)
    assert rep["r_max"] == pytest.approx(0.1, rel=1e-14)
    assert rep["feasible"] and all(rep["monotone"].values())


def test_theorem_infeasible_reported(capsys):
    assert main(["theorem", "--L", "1", "--G", "1", "--d", "50", "--T", "8", "--alpha", "0.9",
                 "--beta", "1", "--eta", "8e-4"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert not rep["feasible"] and rep["r_min"] == pytest.approx(1.6)


def test_theorem_hypothesis_violation_exit_2(capsys):
    assert main(["theorem", "--L", "1", "--G", "1", "--d", "2", "--T", "10", "--beta", "2.5"]) == 2
    assert "beta" in capsys.readouterr().err


def test_runconfig_spec_strips_cli_fields():
    cfg = RunConfig.model_validate(dict(BASE, out_dir="x", workers=2))
    assert "workers" not in cfg.spec().model_dump()
