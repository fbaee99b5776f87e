import csv
import json
from pathlib import Path

import jsonschema
import pytest
import yaml

from waferdse import cli
from waferdse.cli import (EXIT_INFEASIBLE, EXIT_INTERNAL, EXIT_OK, EXIT_SCHEMA, RESULT_COLUMNS,
                          cmd_enumerate, cmd_evaluate, cmd_report, cmd_search, dump_json, main,
                          perf_table_for)
from waferdse.config import (SpecError, hardware_from_spec, knobs_from_spec, load_spec,
                             parse_yaml, preset_path, selected_wafers, split_from_spec,
                             validate_report, validate_spec, workload_from_spec)
from waferdse.search import evaluate_candidate

ROOT = Path(__file__).resolve().parents[1]
TOY_SEARCH = ROOT / "specs" / "toy_search.yaml"
TOY_EVAL = ROOT / "specs" / "toy_evaluate.yaml"


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_yaml_exponent_floats_are_numbers():
    assert parse_yaml("x: 3.5e12\ny: 2.0e-3\nz: 1e9")["x"] == 3.5e12
    assert isinstance(parse_yaml("z: 1e9")["z"], float)


@pytest.mark.parametrize("text,field,line", [
    ("version: 1\nworkload:\n  microbatch_size: 1\n  num_microbatch: 4\n",
     "workload.num_microbatch", 4),
    ("version: 1\nsearch: {ga: {omega: 2}}\n", "search.ga.omega", 2),
    ("version: 1\nstrategy:\n  tp: 0\n  pp: 1\n", "strategy.tp", 3),
    ("version: 2\n", "version", 1),
])
def test_schema_errors_exit_2_with_field_and_line(tmp_path, capsys, text, field, line):
    p = write(tmp_path, "bad.yaml", text)
    assert main(["enumerate", "--config", str(p)]) == EXIT_SCHEMA
    err = capsys.readouterr().err
    assert f"{field} (line {line})" in err


def test_malformed_yaml_and_unknown_names(tmp_path, capsys):
    p = write(tmp_path, "bad.yaml", "version: [1\n")
    assert main(["search", "--config", str(p)]) == EXIT_SCHEMA
    assert "malformed YAML" in capsys.readouterr().err
    with pytest.raises(SpecError, match="unknown wafer 'nope'"):
        hardware_from_spec({"version": 1, "hardware": {"use": ["nope"]}})
    with pytest.raises(SpecError):
        validate_spec([1, 2])


def test_spec_builders():
    spec = load_spec(TOY_EVAL)
    tp, pp, split, mode = split_from_spec(spec)
    assert (tp, pp, split.shape, split.label, mode) == (4, 2, (2, 2), "2x2[S2,H2]", "gcmr")
    knobs = knobs_from_spec(spec, {"seed": 9, "fast": True})
    assert knobs.ga.seed == 9 and knobs.fast and knobs.quantum == 2 ** 20
    assert workload_from_spec(spec).num_microbatches == 8
    with pytest.raises(SpecError):
        split_from_spec({"strategy": {"tp": 4, "pp": 1, "shape": [1, 2]}})


def test_enumerate_reference_ranges_names_presets():
    doc, code = cmd_enumerate(load_spec(preset_path("reference_ranges.yaml")))
    assert code == EXIT_OK
    names = {c["name"] for c in doc["configs"]}
    assert {"config1", "config2", "config3", "config4"} <= names
    assert len(doc["configs"]) == len(names)


def test_enumerate_named_reference_configs(tmp_path):
    spec = {"version": 1, "hardware": {"use": ["config1", "config2", "config3", "config4"]}}
    doc, code = cmd_enumerate(spec, tmp_path)
    assert code == EXIT_OK
    assert [c["name"] for c in doc["configs"]] == ["config1", "config2", "config3", "config4"]
    rows = list(csv.reader((tmp_path / "configs.csv").open()))
    assert len(rows) == 5


def test_enumerate_empty_ranges(tmp_path):
    p = write(tmp_path, "empty.yaml", yaml.safe_dump({"version": 1, "hardware": {"ranges": {
        "grid_x": [], "grid_y": [8], "die": ["d16"], "dram": ["m16x3"], "dram_chiplets": [3],
        "d2d_bandwidth": [4.5e12]}}}))
    out = tmp_path / "out"
    assert main(["enumerate", "--config", str(p), "--out", str(out)]) == EXIT_OK
    assert json.loads((out / "configs.json").read_text())["configs"] == []


def test_evaluate_matches_library_call(tmp_path):
    spec = load_spec(TOY_EVAL)
    doc, code = cmd_evaluate(spec, tmp_path)
    assert code == EXIT_OK
    wafer = selected_wafers(hardware_from_spec(spec))[0]
    tp, pp, split, _ = split_from_spec(spec)
    knobs = knobs_from_spec(spec)
    res = evaluate_candidate(wafer, workload_from_spec(spec), tp, pp, split, knobs,
                             perf_table_for(wafer, workload_from_spec(spec), knobs, None, [tp]),
                             run_ga=True)
    assert dump_json(doc["results"][0]) == dump_json(cli._candidate_dict(wafer, res))
    for name in ("report.json", "heatmap_toy2x4.csv", "trace_toy2x4.json", "placement_toy2x4.txt"):
        assert (tmp_path / name).exists()


def test_evaluate_rerun_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["evaluate", "--config", str(TOY_EVAL), "--out", str(a)]) == EXIT_OK
    assert main(["evaluate", "--config", str(TOY_EVAL), "--out", str(b)]) == EXIT_OK
    for name in ("report.json", "heatmap_toy2x4.csv", "trace_toy2x4.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


def test_oom_strategy_exits_3_naming_stage(tmp_path, capsys):
    text = TOY_EVAL.read_text().replace("recompute: gcmr", "recompute: none")
    p = write(tmp_path, "oom.yaml", text)
    out = tmp_path / "out"
    assert main(["evaluate", "--config", str(p), "--out", str(out)]) == EXIT_INFEASIBLE
    assert "stage 0 needs" in capsys.readouterr().err
    doc = json.loads((out / "report.json").read_text())
    assert doc["status"] == "infeasible" and "CapacityError: stage 0" in doc["error"]


def test_search_artifacts_and_round_trip(tmp_path):
    assert main(["search", "--config", str(TOY_SEARCH), "--out", str(tmp_path)]) == EXIT_OK
    text = (tmp_path / "report.json").read_text()
    doc = validate_report(json.loads(text))
    assert dump_json(doc) == text
    with (tmp_path / "results.csv").open() as f:
        rows = list(csv.DictReader(f))
    assert list(rows[0].keys()) == list(RESULT_COLUMNS)
    assert [int(r["rank"]) for r in rows] == [1, 2]
    assert float(rows[0]["tmax_x_cost"]) <= float(rows[1]["tmax_x_cost"])
    for w in ("toy2x4", "toy4x4"):
        for stem in ("heatmap", "ledger"):
            assert (tmp_path / f"{stem}_{w}.csv").exists()
        assert (tmp_path / f"placement_{w}.txt").exists()
        json.loads((tmp_path / f"trace_{w}.json").read_text())
    summary, code = cmd_report(tmp_path / "report.json", tmp_path)
    assert code == EXIT_OK and "#1 toy2x4" in summary
    # the embedded spec reproduces the run
    again, _ = cmd_search(doc["spec"])
    assert dump_json(again) == text


def test_fast_flag_marks_ledger(tmp_path):
    assert main(["search", "--config", str(TOY_SEARCH), "--out", str(tmp_path), "--fast"]) == EXIT_OK
    doc = json.loads((tmp_path / "report.json").read_text())
    for r in doc["results"]:
        assert r["ledger"]["fast"] is True
        assert not any(e["ga"] for e in r["ledger"]["entries"])
        assert "ga" not in r


def test_exhausted_search_keeps_ledger(tmp_path):
    text = TOY_SEARCH.read_text().replace("vocab_size: 1000}", "vocab_size: 1000, param_count: 1.0e12}")
    p = write(tmp_path, "huge.yaml", text)
    out = tmp_path / "out"
    assert main(["search", "--config", str(p), "--out", str(out)]) == EXIT_INFEASIBLE
    doc = json.loads((out / "report.json").read_text())
    assert doc["status"] == "exhausted"
    assert (out / "ledger_toy2x4.csv").read_text().count("pruned") >= 1


def test_perf_cache_reused(tmp_path, monkeypatch):
    out = tmp_path / "out"
    assert main(["evaluate", "--config", str(TOY_EVAL), "--out", str(out)]) == EXIT_OK
    cached = sorted((out / "cache").glob("perf-*.json"))
    assert len(cached) == 1
    first = (out / "report.json").read_bytes()

    def boom(*a, **k):
        raise AssertionError("cost model should not run on a cache hit")

    monkeypatch.setattr(cli, "build_perf_table", boom)
    assert main(["evaluate", "--config", str(TOY_EVAL), "--out", str(out)]) == EXIT_OK
    assert (out / "report.json").read_bytes() == first


def test_internal_error_exit_4(monkeypatch, capsys):
    def broken(*a, **k):
        raise RuntimeError("kaboom")

    monkeypatch.setattr(cli, "cmd_search", broken)
    assert main(["search", "--config", str(TOY_SEARCH)]) == EXIT_INTERNAL
    assert "kaboom" in capsys.readouterr().err


def test_exit_codes_distinct():
    assert len({EXIT_OK, EXIT_SCHEMA, EXIT_INFEASIBLE, EXIT_INTERNAL}) == 4


def test_report_schema_rejects_unknown_keys():
    doc, _ = cmd_enumerate({"version": 1, "hardware": {"use": ["config1"]}})
    with pytest.raises(jsonschema.ValidationError):
        validate_report({**doc, "timestamp": 0})


def test_search_identical_across_threads(tmp_path):
    outs = []
    for k in (1, 4, 8):
        out = tmp_path / f"t{k}"
        assert main(["search", "--config", str(TOY_SEARCH), "--out", str(out), "--threads", str(k)]) == EXIT_OK
        outs.append(out)
    for name in ("report.json", "results.csv", "ledger_toy2x4.csv", "trace_toy4x4.json"):
        assert len({(o / name).read_bytes() for o in outs}) == 1
