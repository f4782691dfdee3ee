import json

import pytest

from holegl.cli import main
from holegl.errors import ConfigError, DegreeMismatch, SchemaMismatch
from holegl.experiment import (
    SCHEMA_VERSION,
    RunConfig,
    RunReport,
    cmd_london,
    cmd_report,
    cmd_verify_degrees,
    eps_from_rule,
    parse_config_text,
    raise_for_status,
)

INI = """
[domain]
outer = disk
center = 0 0
radius = 1
holes = 0 0
delta = 0.1

[field]
sigma = 4

[gl]
eps_rule = cube
max_iters = 5000

[run]
seed = 7
"""


def _read(path):
    return json.loads((path / "report.json").read_text())


def test_parse_ini():
    cfg = parse_config_text(INI)
    assert cfg.delta == 0.1 and cfg.sigma == 4.0 and cfg.seed == 7
    assert cfg.holes == ((0.0, 0.0),)
    assert cfg.h() == pytest.approx(0.025)
    assert cfg.eps() == pytest.approx(1e-3)


def test_parse_json_sections_and_flat():
    nested = parse_config_text(json.dumps({"domain": {"holes": [[0.2, 0.1]], "delta": 0.05}, "field": {"sigma": 2}}), "json")
    flat = parse_config_text(json.dumps({"holes": [[0.2, 0.1]], "delta": 0.05, "sigma": 2}), "json")
    assert nested == flat


def test_rectangle_config():
    cfg = parse_config_text("[domain]\nouter = rectangle\ncorner_lo = 0 0\ncorner_hi = 2 1\nholes = 0.5 0.5; 1.5 0.5\ndelta = 0.05\n")
    dom = cfg.validate().domain()
    assert dom.n_holes == 2


def test_unknown_key_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[field]\nsigmaa = 3\n")


@pytest.mark.parametrize("rule,value", [("cube", 0.001), ("square", 0.01), ("fixed:0.002", 0.002)])
def test_eps_rules(rule, value):
    assert eps_from_rule(rule, 0.1) == pytest.approx(value)


def test_eps_rule_validation():
    with pytest.raises(ConfigError):
        eps_from_rule("linear", 0.1)
    with pytest.raises(ConfigError):
        RunConfig(delta=0.1, eps_rule="fixed:0.5").validate()


def test_resolution_validation():
    with pytest.raises(ConfigError):
        RunConfig(delta=0.1, grid_h=0.05).validate()


def test_report_rejects_nan():
    rep = RunReport("predict", {})
    rep.results["x"] = float("nan")
    with pytest.raises(ValueError):
        rep.to_json()


def test_predict_command(tmp_path):
    out = tmp_path / "p"
    assert main(["predict", "--sigma", "10", "--delta", "0.05", "--out", str(out)]) == 0
    data = _read(out)
    assert data["schema_version"] == SCHEMA_VERSION
    assert data["results"]["predicted_degrees"] == [2]
    assert (out / "tables" / "thresholds.csv").exists()


def test_predict_at_threshold(tmp_path, capsys):
    cfg = RunConfig(delta=0.05)
    from holegl.experiment import _setup
    from holegl.london import threshold_set

    st = _setup(cfg)
    first = threshold_set(st.xi0, st.domain, 3.0)[0][0]
    out = tmp_path / "t"
    code = main(["predict", "--sigma", repr(first), "--delta", "0.05", "--out", str(out)])
    assert code == 1
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"] == "AtThreshold" and err["hole"] == 0
    assert _read(out)["status"]["passed"] is False


def test_predict_symmetric_holes(tmp_path):
    out = tmp_path / "s"
    assert main(["predict", "--sigma", "9", "--holes", "-0.4 0; 0.4 0", "--out", str(out)]) == 0
    d = _read(out)["results"]["predicted_degrees"]
    assert d[0] == d[1]


def test_invalid_domain_exit_code(tmp_path, capsys):
    code = main(["predict", "--holes", "0 0; 0.1 0", "--out", str(tmp_path / "bad")])
    assert code == 2
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "HoleOverlap" and err["hole"] == 1


def test_london_given_argmin():
    cfg = RunConfig(delta=0.1, sigma=8.0)
    rep, _ = cmd_london(cfg)
    block = rep.results["london"]
    rep2, _ = cmd_london(cfg, degrees=tuple(block["argmin"]))
    again = rep2.results["london"]
    assert again["form_energy"] == pytest.approx(block["argmin_energy"], rel=1e-12)
    assert again["energy"]["gradient_term"] + again["energy"]["field_term"] == pytest.approx(
        block["argmin_energy"], rel=1e-8)


def test_sweep_sigma_table(tmp_path):
    out = tmp_path / "ss"
    assert main(["sweep-sigma", "--delta", "0.1", "--range", "0,4,0.5", "--out", str(out)]) == 0
    rows = (out / "tables" / "sigma_sweep.csv").read_text().strip().splitlines()
    assert len(rows) == 1 + 9
    pts = _read(out)["results"]["points"]
    assert [p["sigma"] for p in pts] == [0.5 * k for k in range(9)]
    assert pts[0]["argmin"] == [0]


def test_sweep_delta_fit(tmp_path):
    out = tmp_path / "sd"
    code = main(["sweep-delta", "--sigma", "3", "--deltas", "0.16,0.08,0.04", "--threads", "2", "--out", str(out)])
    assert code == 0
    fit = _read(out)["results"]["fits"][0]
    assert fit["half_Q_slope_over_pi"] == pytest.approx(1.0, rel=0.2)


def test_verify_degrees_zero_field(tmp_path):
    out = tmp_path / "v0"
    code = main(["verify-degrees", "--sigma", "0", "--delta", "0.1", "--out", str(out)])
    assert code == 0
    res = _read(out)["results"]
    assert res["london"]["argmin"] == [0]
    assert res["measured_degrees"] == [[0], [0]]
    assert res["bulk_check"]["passed"]
    for name in ("nodes.csv", "edges.csv", "labels.csv"):
        assert (out / "fields" / name).exists()


def test_verify_degrees_is_deterministic():
    cfg = RunConfig(delta=0.1, sigma=6.0, seed=3)
    a, _ = cmd_verify_degrees(cfg)
    b, _ = cmd_verify_degrees(cfg)
    assert a.digest() == b.digest()
    da, db = json.loads(a.to_json()), json.loads(b.to_json())
    da.pop("timings"), db.pop("timings")
    assert da == db
    assert a.status["passed"]


def test_degree_mismatch_raises():
    rep = RunReport("verify-degrees", {})
    rep.fail("DegreeMismatch", "measured (1) but argmin (2)")
    with pytest.raises(DegreeMismatch) as info:
        raise_for_status(rep)
    assert info.value.report is rep


def test_report_merge(tmp_path):
    for k, delta in enumerate((0.16, 0.04, 0.08)):
        main(["predict", "--sigma", "2", "--delta", str(delta), "--out", str(tmp_path / f"run{k}")])
    rep, tables = cmd_report(tmp_path)
    rows = tables["summary"]
    assert len(rows) == 3
    logs = [r["abs_log_delta"] for r in rows]
    assert logs == sorted(logs)
    assert main(["report", str(tmp_path)]) == 0
    assert (tmp_path / "_summary" / "tables" / "summary.csv").exists()
    # rerunning ignores the summary directory itself
    assert len(cmd_report(tmp_path)[1]["summary"]) == 3


def test_report_single_run(tmp_path):
    main(["predict", "--sigma", "1", "--delta", "0.1", "--out", str(tmp_path / "one")])
    _, tables = cmd_report(tmp_path)
    assert len(tables["summary"]) == 1


def test_report_schema_mismatch(tmp_path, capsys):
    main(["predict", "--sigma", "1", "--delta", "0.1", "--out", str(tmp_path / "a")])
    old = tmp_path / "b"
    old.mkdir()
    (old / "report.json").write_text(json.dumps({"schema_version": SCHEMA_VERSION + 1, "config": {}}))
    with pytest.raises(SchemaMismatch):
        cmd_report(tmp_path)
    assert main(["report", str(tmp_path)]) == 2


def test_config_file_with_overrides(tmp_path):
    path = tmp_path / "run.ini"
    path.write_text(INI)
    out = tmp_path / "c"
    assert main(["predict", "--config", str(path), "--sigma", "10", "--out", str(out)]) == 0
    data = _read(out)
    assert data["config"]["sigma"] == 10.0 and data["config"]["seed"] == 7
