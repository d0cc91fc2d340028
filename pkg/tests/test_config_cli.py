import csv
import json

import pytest

from hppa_cert import cli
from hppa_cert.config import ConfigError, ExperimentConfig, default_section5_config
from hppa_cert.dynamics import NonFiniteIterate

BASE = {
    "operator": {"type": "QuadraticShift", "c": [0.0]},
    "schedule": {"alpha": {"family": "power", "q": 0.75, "n0": 2},
                 "beta": {"family": "alternating", "beta": 1.0}},
    "u": [1.0], "x0": [1.0], "budget": 200, "k_max": 2,
}


def write_config(tmp_path, data, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(dict(data, out=str(tmp_path / "out")), indent=2))
    return path


def run(capsys, *argv):
    status = cli.main(list(argv))
    captured = capsys.readouterr()
    return status, captured.err


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


# ---------------------------------------------------------------- config parsing


def test_config_error_reports_line():
    text = '{\n  "operator": {"type": "QuadraticShift", "c": [0.0]},\n  "schedule": {},\n  "u": [1.0],\n  "x0": [1.0],\n  "budget": -3\n}'
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_text(text)
    assert info.value.field == "budget" and info.value.line == 6
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_text('{\n "u": [1.0],\n "oops" 3}')
    assert info.value.line == 3


@pytest.mark.parametrize("patch, field", [
    ({"colour": 1}, "colour"),
    ({"u": []}, "u"),
    ({"u": [1.0, 2.0]}, "u"),
    ({"g": ["bogus"]}, "g[0]"),
    ({"algorithm": "newton"}, "algorithm"),
    ({"checks": ["lemmas", "nope"]}, "checks"),
    ({"moduli": "unknown_preset"}, "moduli"),
    ({"moduli": {"sigma9": 1}}, "moduli.sigma9"),
    ({"operator": {"type": "Nope"}}, "operator"),
    ({"tolerance": {"eps": 1}}, "tolerance"),
])
def test_invalid_fields_are_named(patch, field):
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(dict(BASE, **patch))
    assert info.value.field == field


def test_random_direction_requires_seed():
    sched = dict(BASE["schedule"], err={"family": "geometric", "m": 1e-3, "rho": 0.5, "direction": "random"})
    with pytest.raises(ConfigError) as info:
        ExperimentConfig.from_dict(dict(BASE, schedule=sched))
    assert info.value.field == "schedule"
    assert ExperimentConfig.from_dict(dict(BASE, schedule=sched, seed=7)).seed == 7


def test_config_hash_is_stable_and_sensitive():
    a = ExperimentConfig.from_dict(dict(BASE))
    b = ExperimentConfig.from_dict(json.loads(json.dumps(BASE)))
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != ExperimentConfig.from_dict(dict(BASE, budget=201)).config_hash()


def test_default_config_is_worked_example():
    cfg = default_section5_config()
    assert cfg.moduli == "section5" and cfg.budget == 100_000
    assert cfg.constant_Ls() == [0, 1, 10]


def test_custom_moduli_pack():
    cfg = ExperimentConfig.from_dict(dict(BASE, moduli={"sigma0": "succpow:2", "D": 1}))
    pack = cfg.build_pack(3)
    assert pack.b == 3 and pack.sigma0(1) == 4 and pack.sigma1 is None


# ---------------------------------------------------------------- iterate


def test_iterate_writes_budget_plus_one_rows(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE)
    assert run(capsys, "iterate", "--config", str(cfg))[0] == 0
    rows = read_csv(tmp_path / "out" / "trajectory.csv")
    assert rows[0] == ["n", "alpha_n", "beta_n", "err_norm", "x_0"]
    assert len(rows) == 1 + 201
    assert rows[1][0] == "0" and rows[-1][0] == "200"
    res = read_csv(tmp_path / "out" / "residuals.csv")
    assert res[0] == ["n", "residual", "log10_n", "log10_residual"] and len(res) == 202


def test_iterate_budget_zero(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE)
    assert run(capsys, "iterate", "--config", str(cfg), "--budget", "0")[0] == 0
    rows = read_csv(tmp_path / "out" / "trajectory.csv")
    assert len(rows) == 2 and rows[1][-1] == "1"


@pytest.mark.parametrize("algorithm", ["hppa", "ppa", "halpern"])
def test_iterate_is_deterministic(tmp_path, capsys, algorithm):
    cfg = write_config(tmp_path, dict(BASE, algorithm=algorithm))
    run(capsys, "iterate", "--config", str(cfg))
    first = (tmp_path / "out" / "trajectory.csv").read_bytes()
    run(capsys, "iterate", "--config", str(cfg))
    assert (tmp_path / "out" / "trajectory.csv").read_bytes() == first


def test_nonfinite_iterate_exit_code(tmp_path, capsys, monkeypatch):
    def boom(*args, **kwargs):
        raise NonFiniteIterate(4)

    monkeypatch.setattr(cli, "run_hppa", boom)
    status, err = run(capsys, "iterate", "--config", str(write_config(tmp_path, BASE)))
    assert status == 3 and json.loads(err)["error"] == "NonFiniteIterate"


def test_missing_config_file(tmp_path, capsys):
    status, err = run(capsys, "iterate", "--config", str(tmp_path / "absent.json"))
    assert status == 2 and json.loads(err)["error"] == "ConfigError"


# ---------------------------------------------------------------- rates


def test_delta_bar_table(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, k_max=0, moduli="section5", rates=["delta_bar_L"],
                                      g=["0", "1", "10", "1000"]))
    assert run(capsys, "rates", "--config", str(cfg))[0] == 0
    rows = read_csv(tmp_path / "out" / "rates_delta_bar_L.csv")
    assert rows[0] == ["rate_name", "k", "g", "value_decimal"]
    assert len(rows) == 5
    assert rows[3] == ["delta_bar_L", "0", "10", str(8503111**4 + 811)]


def test_default_rates_cover_generic_and_closed_forms(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, k_max=0, moduli="section5", g=["0", "identity"]))
    assert run(capsys, "rates", "--config", str(cfg))[0] == 0
    out = tmp_path / "out"
    for name in ("theta_v1", "theta_v2", "sigma", "sigma_star", "phi_v1", "delta_L", "theta0",
                 "sigma_bar", "sigma_bar_star", "delta_bar_L"):
        rows = read_csv(out / f"rates_{name}.csv")
        assert len(rows) >= 2
    assert len(read_csv(out / "rates_theta0.csv")) == 2
    theta_v2 = read_csv(out / "rates_theta_v2.csv")[1][3]
    assert int(theta_v2) == 104981**4 + 1


def test_missing_modulus_is_structured(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, moduli={"sigma0": "succpow:2"}, rates=["theta_v1"]))
    status, err = run(capsys, "rates", "--config", str(cfg))
    payload = json.loads(err.strip().splitlines()[-1])
    assert status == 2 and payload["error"] == "MissingModulus" and payload["rate"] == "theta_v1"


def test_closed_form_needs_preset(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, rates=["theta0"]))
    status, err = run(capsys, "rates", "--config", str(cfg))
    assert status == 2 and json.loads(err)["error"] == "MissingModulus"


# ---------------------------------------------------------------- certify


def test_certify_passes_on_worked_example(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, budget=2000, moduli="section5"))
    status, err = run(capsys, "certify", "--config", str(cfg))
    assert status == 0, err
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["passed"] is True
    names = {c["name"] for c in report["checks"]}
    assert {"step_bound", "sigma0", "witness_soundness", "residual_spike"} <= names
    assert any(n.startswith("rate_of_convergence[") for n in names)


def test_certify_fault_injection_fails_with_anchor(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, budget=2000, moduli="section5"))
    status, err = run(capsys, "certify", "--config", str(cfg), "--fault-inject")
    assert status == 1
    assert "FAIL step_bound" in err
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    failing = [c for c in report["checks"] if not c["pass"]]
    assert failing and all(c["paper_anchor"] for c in failing)


def test_certify_without_moduli_skips_groups(tmp_path, capsys):
    cfg = write_config(tmp_path, BASE)
    status, err = run(capsys, "certify", "--config", str(cfg))
    assert status == 0 and "skipped" in err
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["instance"]["skipped_groups"] == ["moduli", "convergence", "asreg", "witnesses"]


def test_certify_empty_check_list(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, checks=[]))
    status, err = run(capsys, "certify", "--config", str(cfg))
    assert status == 0 and "empty" in err
    report = json.loads((tmp_path / "out" / "report.json").read_text())
    assert report["checks"] == []


def test_report_bytes_are_deterministic(tmp_path, capsys):
    cfg = write_config(tmp_path, dict(BASE, budget=500, moduli="section5"))
    run(capsys, "certify", "--config", str(cfg))
    first = (tmp_path / "out" / "report.json").read_bytes()
    run(capsys, "certify", "--config", str(cfg))
    assert (tmp_path / "out" / "report.json").read_bytes() == first
    report = json.loads(first)
    assert report["instance"]["config_hash"] == ExperimentConfig.from_dict(
        dict(BASE, budget=500, moduli="section5", out=str(tmp_path / "out"))).config_hash()


def test_example5_end_to_end(tmp_path, capsys):
    status, err = run(capsys, "example5", "--budget", "2000", "--kmax", "1", "--out", str(tmp_path))
    assert status == 0, err
    for name in ("trajectory.csv", "residuals.csv", "report.json", "rates_theta0.csv",
                 "rates_sigma_bar.csv", "rates_sigma_bar_star.csv", "rates_delta_bar_L.csv"):
        assert (tmp_path / name).exists()
    assert len(read_csv(tmp_path / "rates_theta0.csv")) == 3
