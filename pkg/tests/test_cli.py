import json
import math

import pytest

from harnacklab.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_OK, build_field, constants_table, main
from harnacklab.config import ConfigError, RunConfig, load_config
from harnacklab.export import config_hash, dumps

SPHERE_MODEL = {"kind": "ShrinkingSphere", "n": 2, "T": 0.5, "params": {"c0": 1.0}}
TORUS_MODEL = {"kind": "ConformalTorus", "n": 2, "T": 1.0, "params": {"profile": {"name": "constant"}}}
OSC_TORUS_MODEL = {"kind": "ConformalTorus", "n": 2, "T": 1.0,
                   "params": {"profile": {"name": "sin", "eps": 0.25, "omega": 2.0}}}
TORUS_SOL = {"type": "closed_form", "mode": [1, 1], "amplitude": 0.5}
CENTER = [math.pi, math.pi]
ALL_TORUS_CHECKS = [
    {"theorem": "hamilton_global", "k": 0.0},
    {"theorem": "hamilton_local", "x0": CENTER, "rho": 1.0},
    {"theorem": "hamilton_local_general", "x0": CENTER, "rho": 1.0},
    {"theorem": "liyau_global", "alpha": 2.0},
    {"theorem": "liyau_local", "alpha": 2.0, "x0": CENTER, "rho": 1.0},
    {"theorem": "liyau_local_general", "alpha": 2.0, "x0": CENTER, "cutoff": "square", "width": 1.0},
    {"theorem": "liyau_lower_order_local", "x0": CENTER, "rho": 1.0},
    {"theorem": "liyau_lower_order_general", "x0": CENTER, "rho": 1.0},
]


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _sphere_cfg(**extra):
    cfg = {"model": SPHERE_MODEL, "solution": {"type": "closed_form", "mode": 1, "amplitude": 0.3},
           "grid": {"n_space": 32, "nt": 32},
           "checks": [{"theorem": "ricci_compact", "t_lo": 0.05, "t_hi": 0.5}]}
    cfg.update(extra)
    return cfg


def test_config_round_trip():
    cfg = RunConfig.from_dict(_sphere_cfg())
    again = RunConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg
    assert config_hash(again.to_dict()) == config_hash(cfg.to_dict())


@pytest.mark.parametrize("bad, key", [
    ({"checks": [{"theorem": "liyau_local", "alpha": 1.0, "x0": CENTER, "rho": 1.0}]}, "alpha"),
    ({"checks": [{"theorem": "hamilton_local", "x0": CENTER, "rho": -1.0}]}, "rho"),
    ({"checks": [{"theorem": "no_such_theorem"}]}, "theorem"),
    ({"grid": {"n_space": 4, "nt": 32}}, "n_space"),
    ({"solution": {"type": "closed_form", "mode": 1, "amplitude": 1.5}}, "amplitude"),
    ({"drift": [{"kind": "S_hat_ricci"}]}, "drift"),
    ({"bogus": 1}, "unknown"),
    ({"solution": {"type": "closed_form", "mode": 1, "amplitude": 0.5}}, "solution.mode"),
])
def test_invalid_configs_name_the_parameter(bad, key):
    cfg = {"model": TORUS_MODEL, "solution": TORUS_SOL, "grid": {"n_space": 16, "nt": 16}}
    cfg.update(bad)
    with pytest.raises(ConfigError, match=key):
        RunConfig.from_dict(cfg)


def test_ricci_theorem_on_non_ricci_flow_rejected():
    with pytest.raises(ConfigError, match="Ricci flow"):
        RunConfig.from_dict({"model": OSC_TORUS_MODEL, "solution": TORUS_SOL,
                             "checks": [{"theorem": "ricci_compact"}]})
    # the flat static torus is a (trivial) Ricci flow, so the same check is allowed
    RunConfig.from_dict({"model": TORUS_MODEL, "solution": TORUS_SOL,
                         "checks": [{"theorem": "ricci_compact"}]})


def test_unreadable_config(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(p)


def test_cli_alpha_one_exits_2(tmp_path, capsys):
    cfg = {"model": TORUS_MODEL, "solution": TORUS_SOL,
           "checks": [{"theorem": "liyau_local", "alpha": 1.0, "x0": CENTER, "rho": 1.0}]}
    assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "alpha" in capsys.readouterr().err


def test_cli_constant_field_all_checks_pass(tmp_path):
    cfg = {"model": TORUS_MODEL, "solution": {"type": "closed_form", "mode": [1, 0], "amplitude": 0.0},
           "grid": {"n_space": 32, "nt": 16}, "checks": ALL_TORUS_CHECKS}
    out = tmp_path / "o"
    assert main(["run", "--config", _write(tmp_path, cfg), "--out", str(out), "--format", "csv"]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    assert report["pass"] is True
    assert len(report["checks"]) == len(ALL_TORUS_CHECKS)
    assert (out / "hamilton_local.csv").exists()


def test_cli_sphere_scenario(tmp_path):
    out = tmp_path / "o"
    assert main(["run", "--config", _write(tmp_path, _sphere_cfg()), "--out", str(out)]) == EXIT_OK
    report = json.loads((out / "report.json").read_text())
    (chk,) = report["checks"]
    assert chk["min_slack"] > 0 and chk["constants"]["rhs_at_T"] == 12.0
    prov = report["provenance"]
    assert set(prov) >= {"config_hash", "grid", "tolerances"}


def test_cli_failing_check_exits_1(tmp_path):
    # k = -20 asserts R_t >= 20 on a flat circle, which is false, and the bound breaks
    cfg = {"model": {"kind": "ConformalCircle", "n": 1, "T": 1.0}, "grid": {"n_space": 64, "nt": 64},
           "checks": [{"theorem": "hamilton_global", "k": -20.0}]}
    code = main(["run", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    report = json.loads((tmp_path / "o" / "report.json").read_text())
    assert code == EXIT_FAIL
    assert report["pass"] is False and report["checks"][0]["violations"] > 0


def test_cli_out_dir_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv("HARNACKLAB_OUT", str(tmp_path / "env"))
    assert main(["solve", "--config", _write(tmp_path, _sphere_cfg(checks=[]))]) == EXIT_OK
    assert (tmp_path / "env" / "report.json").exists()


def test_cli_identities_and_constants(tmp_path, capsys):
    cfg = {"model": {"kind": "ConformalCircle", "n": 1, "T": 1.0}, "grid": {"n_space": 32, "nt": 32},
           "checks": [{"theorem": "hamilton_local", "x0": [0.0], "rho": 1.0}]}
    path = _write(tmp_path, cfg)
    assert main(["identities", "--config", path, "--out", str(tmp_path / "i")]) == EXIT_OK
    rep = json.loads((tmp_path / "i" / "report.json").read_text())["identities"]
    assert all(3.5 <= r <= 4.5 for r in rep["ratios"]["q"])
    assert main(["constants", "--config", path, "--out", str(tmp_path / "c")]) == EXIT_OK
    text = capsys.readouterr().out
    assert "2kn + n/t" in text and "c_phi_3" in text


def test_constants_flat_torus_rows_are_pure_pi_terms():
    cfg = RunConfig.from_dict({"model": TORUS_MODEL, "solution": TORUS_SOL, "grid": {"n_space": 32, "nt": 16},
                               "checks": [{"theorem": "hamilton_local", "x0": CENTER, "rho": 1.0}]})
    table = constants_table(cfg)
    row = table["rows"][0]
    assert row["hamilton_local"]["bracket_constant"] == pytest.approx(36 * math.pi**2 / (4 - math.pi) ** 2)
    assert row["c_phi_3"]["analytic_bound"] == pytest.approx(5 * math.pi**2 / 4)


def test_numeric_solution_builds():
    cfg = RunConfig.from_dict({"model": TORUS_MODEL, "grid": {"n_space": 16, "nt": 8},
                               "solution": {"type": "numeric",
                                            "initial": {"type": "mode", "mode": [1, 0], "amplitude": 0.2}}})
    fld = build_field(cfg, cfg.build_model())
    assert fld.provenance != "exact"


def test_dumps_is_deterministic_and_handles_non_finite():
    a = dumps({"b": float("nan"), "a": [1, float("inf")]})
    assert a == dumps({"a": [1, float("inf")], "b": float("nan")})
    assert '"nan"' in a and '"inf"' in a


def test_byte_identical_reports(tmp_path):
    cfg = _sphere_cfg(mc={"n_paths": 200, "dr": 0.01, "t_star": 0.5, "x": [0.3], "seed": 3,
                          "checkpoints": [0.0, 0.2, 0.4],
                          "tests": [{"type": "supermartingale", "kind": "S_hat_ricci"}]})
    path = _write(tmp_path, cfg)
    for d in ("a", "b"):
        main(["run", "--config", path, "--out", str(tmp_path / d), "--seed", "42"])
    assert (tmp_path / "a" / "report.json").read_bytes() == (tmp_path / "b" / "report.json").read_bytes()
