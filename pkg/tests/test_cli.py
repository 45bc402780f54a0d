import json

import pytest

from persistlam.cli import EXIT_FAILED, EXIT_OK, EXIT_SCHEMA, load_config, main, parse_values
from persistlam.errors import SchemaError
from persistlam.utils import read_csv, read_json, write_csv

DOUBLING = {
    "scenario": "doubling",
    "params": {"mu": 10.0, "eps": 0.1},
    "grid": {"nodes": 64},
    "checks": ["converged", "closed_form"],
    "seed": 0,
}


def write_config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


def cli(command, config, out, *extra):
    return main([command, "--config", str(config), "--out", str(out), "--log-format", "text", *extra])


@pytest.mark.parametrize("payload", [
    {"scenario": "pendulum"},
    {"scenario": "doubling", "grid": {"nodes": 2}},
    {"scenario": "doubling", "colour": "blue"},
    {"scenario": "doubling", "checks": ["vibes"]},
])
def test_schema_violations_exit_with_two(tmp_path, payload):
    assert cli("run", write_config(tmp_path, payload), tmp_path / "out") == EXIT_SCHEMA


def test_unreadable_configs_exit_with_two(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{\"scenario\": ", encoding="utf-8")
    assert cli("run", broken, tmp_path / "out") == EXIT_SCHEMA
    assert cli("run", tmp_path / "missing.json", tmp_path / "out") == EXIT_SCHEMA


def test_unknown_scenario_parameter_exits_with_two(tmp_path):
    config = write_config(tmp_path, {**DOUBLING, "params": {"nu": 1.0}})
    assert cli("run", config, tmp_path / "out") == EXIT_SCHEMA


def test_load_config_reports_the_failing_field(tmp_path):
    with pytest.raises(SchemaError) as info:
        load_config(write_config(tmp_path, {"scenario": "doubling", "grid": {"depth": 99}}))
    fields = [err["field"] for err in info.value.context["errors"]]
    assert "grid.depth" in fields


def test_values_accept_commas_and_spaces():
    assert parse_values(["0,0.005", "0.01"]) == ["0", "0.005", "0.01"]
    assert parse_values(None) is None


def test_run_writes_outputs_and_verify_accepts_them(tmp_path):
    config = write_config(tmp_path, DOUBLING)
    out = tmp_path / "out"
    assert cli("run", config, out) == EXIT_OK
    report = read_json(out / "report.json")
    assert report["status"] == "ok"
    assert [c["name"] for c in report["checks"]] == ["converged", "closed_form"]
    header, rows = read_csv(out / "section.csv")
    assert header == ["code", "u0", "v0"]
    assert len(rows) == 64
    assert (out / "plot_series.csv").exists()

    assert cli("verify", config, out) == EXIT_OK
    assert read_json(out / "verify_report.json")["status"] == "ok"


def test_verify_rejects_a_tampered_section(tmp_path):
    config = write_config(tmp_path, DOUBLING)
    out = tmp_path / "out"
    assert cli("run", config, out) == EXIT_OK
    header, rows = read_csv(out / "section.csv")
    rows[7][-1] = repr(float(rows[7][-1]) + 0.5)
    write_csv(out / "section.csv", header, rows)
    assert cli("verify", config, out) == EXIT_FAILED
    assert read_json(out / "verify_report.json")["status"] == "failed"


def test_runs_are_reproducible_for_a_seed(tmp_path):
    config = write_config(tmp_path, DOUBLING)
    assert cli("run", config, tmp_path / "a", "--seed", "5") == EXIT_OK
    assert cli("run", config, tmp_path / "b", "--seed", "5") == EXIT_OK
    assert (tmp_path / "a" / "section.csv").read_bytes() == (tmp_path / "b" / "section.csv").read_bytes()


def test_sweep_writes_a_summary_row_per_value(tmp_path):
    config = write_config(tmp_path, DOUBLING)
    out = tmp_path / "sweep"
    assert cli("sweep", config, out, "--param", "eps", "--values", "0,0.05") == EXIT_OK
    header, rows = read_csv(out / "sweep_summary.csv")
    assert header == ["value", "sup_norm", "lambda", "iterations", "converged"]
    assert [float(r[0]) for r in rows] == [0.0, 0.05]
    assert float(rows[0][1]) == 0.0
    assert all(r[4] == "true" for r in rows)
    assert (out / "eps_1" / "report.json").exists()


@pytest.mark.parametrize("extra", [
    ("--param", "eps", "--values"),
    ("--param", "nu", "--values", "0.1"),
    ("--values", "0.1"),
])
def test_bad_sweeps_exit_with_two(tmp_path, extra):
    assert cli("sweep", write_config(tmp_path, DOUBLING), tmp_path / "out", *extra) == EXIT_SCHEMA


def test_verify_reports_an_invalid_previous_report_as_an_error(tmp_path):
    config = write_config(tmp_path, DOUBLING)
    out = tmp_path / "out"
    assert cli("run", config, out) == EXIT_OK
    (out / "report.json").write_text(json.dumps({"scenario": "doubling", "checks": "none"}), encoding="utf-8")
    assert cli("verify", config, out) == EXIT_FAILED
    report = read_json(out / "verify_report.json")
    assert report["status"] == "error"
    assert report["error"]["type"] == "InputError"
