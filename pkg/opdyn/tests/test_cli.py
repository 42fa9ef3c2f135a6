# Licensed to the Apache Software Foundation (ASF) under one
# or more contributor license agreements.  See the NOTICE file
# distributed with this work for additional information
# regarding copyright ownership.  The ASF licenses this file
# to you under the Apache License, Version 2.0 (the
# "License"); you may not use this file except in compliance
# with the License.  You may obtain a copy of the License at
#
#   http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing,
# software distributed under the License is distributed on an
# "AS IS" BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
# KIND, either express or implied.  See the License for the
# specific language governing permissions and limitations
# under the License.

import json

import pytest
import scipy.optimize

from opdyn import __version__
from opdyn.cli import (
    EXIT_CONFIG_ERROR,
    EXIT_FAILED,
    EXIT_OK,
    EXIT_SOLVER_FAILURE,
    ZERO_VECTOR_NOTE,
    main,
    parse_config,
    resolve_workers,
    run_analysis,
)
from opdyn.exceptions import SchemaError, UnknownKind
from opdyn.report import strip_timings
from opdyn.settings import get_settings

SCALAR_FAMILY = {"kind": "scalar_family", "dim": 1, "sequence": {"kind": "one_plus_inverse"}}


def _config(*analyses, **extra):
    doc = {
        "space": {"dim": 1, "norm_p": 2},
        "operator_set": SCALAR_FAMILY,
        "analyses": list(analyses),
        "seed": 3,
        "budget": 100,
    }
    doc.update(extra)
    return json.dumps(doc)


def test_parse_reports_the_offending_path():
    text = _config({"kind": "certify_set", "balls": [{"center": [1], "radius": -1}]})
    with pytest.raises(SchemaError) as info:
        parse_config(text)
    assert info.value.path == "analyses[0].balls[0].radius"


def test_parse_unknown_kind():
    text = _config({"kind": "residual", "x": [1]}, operator_set={"kind": "spiral"})
    with pytest.raises(UnknownKind) as info:
        parse_config(text)
    assert info.value.path == "operator_set"
    assert info.value.kind == "spiral"


def test_parse_missing_kind():
    text = _config({"x": [1]})
    with pytest.raises(SchemaError) as info:
        parse_config(text)
    assert info.value.path == "analyses[0]"


def test_parse_invalid_json():
    with pytest.raises(SchemaError) as info:
        parse_config("{not json")
    assert info.value.path == "$"


def test_parse_checks_vector_lengths():
    with pytest.raises(SchemaError) as info:
        parse_config(_config({"kind": "residual", "x": [1, 0]}))
    assert info.value.path == "analyses[0].x"


def test_parse_requires_an_operator_set():
    doc = json.loads(_config({"kind": "residual", "x": [1]}))
    del doc["operator_set"]
    with pytest.raises(SchemaError) as info:
        parse_config(json.dumps(doc))
    assert info.value.path == "operator_set"


def test_run_every_vector_analysis():
    cfg = parse_config(
        _config(
            {"kind": "residual", "x": [1]},
            {"kind": "eps_recurrent", "x": [1], "eps": 0.1},
            {"kind": "gdelta", "x": [1], "s_max": 10, "budget": 20},
            {"kind": "orbit_ratio", "x": [1], "delta": 0.1, "probes": [[1], [5]]},
            {"kind": "construct", "ball": {"center": [1], "radius": 0.5}, "steps": 2},
        )
    )
    report = run_analysis(cfg)
    doc = report.to_json()
    assert doc["library_version"] == __version__
    assert doc["seed"] == 3
    results = [r["result"] for r in doc["results"]]
    assert results[0]["witness"]["op_index"] == 100
    assert results[1]["witness"]["op_index"] == 11
    assert results[2]["member"] is True
    assert results[3]["ratio"] == 0.5
    assert results[4]["completed"] is True
    assert len(results[4]["trace"]["steps"]) == 2
    assert all(r["status"] == "ok" for r in doc["results"])


def test_zero_vector_is_an_analysis_error():
    report = run_analysis(parse_config(_config({"kind": "residual", "x": [0]})))
    (result,) = report.to_json()["results"]
    assert result["status"] == "error"
    assert result["error"]["type"] == "ZeroVector"
    assert report.notes == [ZERO_VECTOR_NOTE]


def test_sampled_probes_are_reproducible():
    analysis = {
        "kind": "orbit_ratio",
        "x": [1],
        "delta": 0.2,
        "sample": {"count": 50, "ball": {"center": [1], "radius": 1.0}},
    }
    first = strip_timings(run_analysis(parse_config(_config(analysis))).to_json())
    again = strip_timings(run_analysis(parse_config(_config(analysis))).to_json())
    assert first == again
    assert first["results"][0]["result"]["probes"] == 50


def test_failed_construction_is_reported():
    cfg = parse_config(
        _config(
            {
                "kind": "construct",
                "ball": {"center": [1], "radius": 0.01},
                "steps": 3,
                "budget": 2,
            }
        )
    )
    (result,) = run_analysis(cfg).to_json()["results"]
    assert result["status"] == "failed"
    assert result["result"]["failed_step"] == 1


def test_sup_norm_rejects_ball_analyses():
    text = _config(
        {"kind": "certify_set", "balls": [{"center": [1], "radius": 0.5}]},
        space={"dim": 1, "norm_p": "inf"},
    )
    (result,) = run_analysis(parse_config(text)).to_json()["results"]
    assert result["status"] == "error"
    assert result["error"]["type"] == "InvalidParameter"


def test_workers_from_environment(monkeypatch):
    assert resolve_workers(None) == 1
    assert resolve_workers(2) == 2
    monkeypatch.setenv("OPDYN_WORKERS", "3")
    get_settings.cache_clear()
    assert resolve_workers(2) == 3


def test_analyze_writes_a_report(tmp_path):
    config_path = tmp_path / "run.json"
    config_path.write_text(
        _config({"kind": "certify_set", "balls": [{"center": [1], "radius": 0.01}]})
    )
    out = tmp_path / "report.json"
    assert main(["analyze", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    result = doc["results"][0]["result"]
    assert result["certified"] == 1
    assert result["verdicts"][0]["certificate"]["op_index"] == 50
    assert len(doc["config_digest"]) == 64


def test_analyze_is_deterministic_across_workers(tmp_path):
    config_path = tmp_path / "run.json"
    balls = [{"center": [1], "radius": r} for r in (0.01, 0.05, 0.2)]
    config_path.write_text(_config({"kind": "certify_set", "balls": balls}))
    reports = []
    for workers in ("1", "3"):
        out = tmp_path / f"report-{workers}.json"
        code = main(
            ["analyze", "--config", str(config_path), "--out", str(out), "--workers", workers]
        )
        assert code == EXIT_OK
        reports.append(strip_timings(json.loads(out.read_text())))
    assert reports[0] == reports[1]


def test_analyze_config_errors(tmp_path):
    missing = tmp_path / "missing.json"
    assert main(["analyze", "--config", str(missing)]) == EXIT_CONFIG_ERROR
    bad = tmp_path / "bad.json"
    bad.write_text(_config({"kind": "residual", "x": [1, 2]}))
    assert main(["analyze", "--config", str(bad)]) == EXIT_CONFIG_ERROR


def test_analyze_solver_failure_exit_code(tmp_path, monkeypatch):
    def fail(*_: object, **__: object) -> float:
        msg = "f(a) and f(b) must have different signs"
        raise ValueError(msg)

    monkeypatch.setattr(scipy.optimize, "brentq", fail)
    config_path = tmp_path / "run.json"
    config_path.write_text(
        _config(
            {"kind": "certify_set", "balls": [{"center": [1], "radius": 0.4}]},
            operator_set={"kind": "finite_list", "ops": [{"kind": "scalar", "dim": 1, "a": 2}]},
        )
    )
    out = tmp_path / "report.json"
    code = main(["analyze", "--config", str(config_path), "--out", str(out)])
    assert code == EXIT_SOLVER_FAILURE
    result = json.loads(out.read_text())["results"][0]["result"]
    assert result["solver_failure"] is True
    assert result["verdicts"][0]["failure"]["type"] == "SolverFailure"


def test_certify_set_shortcut(tmp_path):
    out = tmp_path / "report.json"
    code = main(
        [
            "certify-set",
            "--set",
            json.dumps(SCALAR_FAMILY),
            "--center",
            "[[1, 0]]",
            "--radius",
            "0.01",
            "--budget",
            "200",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    result = json.loads(out.read_text())["results"][0]["result"]
    assert result["verdicts"][0]["certificate"]["op_index"] == 50


def test_construct_shortcut_reads_the_set_from_a_file(tmp_path):
    set_path = tmp_path / "set.json"
    set_path.write_text(json.dumps(SCALAR_FAMILY))
    out = tmp_path / "report.json"
    code = main(
        [
            "construct",
            "--set",
            str(set_path),
            "--center",
            "[1]",
            "--radius",
            "0.5",
            "--steps",
            "2",
            "--budget",
            "500",
            "--out",
            str(out),
        ]
    )
    assert code == EXIT_OK
    result = json.loads(out.read_text())["results"][0]["result"]
    assert result["completed"] is True


def test_examples_list(capsys):
    assert main(["examples", "list"]) == EXIT_OK
    names = json.loads(capsys.readouterr().out)
    assert names == ["exp_scalar_group", "rank_one_cex", "rolewicz", "scalar_family"]


def test_examples_run(capsys, tmp_path):
    out = tmp_path / "report.json"
    assert main(["examples", "run", "rolewicz", "--out", str(out)]) == EXIT_OK
    summary = json.loads(capsys.readouterr().out)
    assert summary["passed"] is True
    assert out.exists()


def test_examples_unknown_name():
    assert main(["examples", "run", "lorenz"]) == EXIT_CONFIG_ERROR
    assert EXIT_FAILED != EXIT_CONFIG_ERROR


def test_eps_lattice_skips_the_zero_vector():
    lattice = {"center": [0], "radius": 0.95, "per_axis": 3}
    cfg = parse_config(
        _config(
            {"kind": "eps_lattice", "lattice": lattice, "eps": 0.1},
            {"kind": "eps_lattice", "lattice": lattice, "eps": 0.1, "budget": 5},
        )
    )
    full, short = (r["result"] for r in run_analysis(cfg).to_json()["results"])
    assert full["points"] == 9
    assert full["zero_points"] == [4]
    assert full["all_recurrent"] is True
    assert full["missing"] == []
    assert full["max_op_index"] == 10
    assert short["all_recurrent"] is False
    assert short["budget_relative"] is True
    assert 4 not in short["missing"]


def test_parse_checks_lattice_center_length():
    lattice = {"center": [1, 0], "radius": 1, "per_axis": 2}
    text = _config({"kind": "eps_lattice", "lattice": lattice, "eps": 0.1})
    with pytest.raises(SchemaError) as info:
        parse_config(text)
    assert info.value.path == "analyses[0].lattice.center"


def test_overflowing_powers_exit_cleanly(tmp_path):
    config_path = tmp_path / "run.json"
    config_path.write_text(
        _config(
            {"kind": "certify_set", "balls": [{"center": [1], "radius": 0.1}], "budget": 1100},
            operator_set={"kind": "powers", "base": {"kind": "scalar", "dim": 1, "a": 2}},
        )
    )
    out = tmp_path / "report.json"
    assert main(["analyze", "--config", str(config_path), "--out", str(out)]) == EXIT_OK
    result = json.loads(out.read_text())["results"][0]["result"]
    assert result["solver_failure"] is False
    assert result["certified"] == 0
    assert result["verdicts"][0]["failure"] is None
