import csv
import json

import pytest

from alch.cli import ConfigError, RunConfig, compare_runs, main

SMALL_CHART = {"grid": [5, 5, 5]}


def write_cfg(tmp_path, name="cfg.json", **doc):
    doc.setdefault("model", {"kind": "cph_horo"})
    doc.setdefault("chart", SMALL_CHART)
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return p


@pytest.mark.parametrize("doc, msg", [
    ({"model": {"kind": "cph_horo"}, "chart": {"grid": [-1, 5, 5]}}, "chart.grid must be ≥ 5"),
    ({"model": {"kind": "banana"}}, "kind"),
    ({"model": {"kind": "cph_horo"}, "pipeline": {"stages": ["cr"]}}, "'cr' requires 'boundary'"),
    ({"model": {"kind": "perturbed_metric", "a": 2.0}, "pipeline": {"stages": ["oracle"]}}, "exact model"),
    ({"model": {"kind": "cph_horo"}, "pipeline": {"rate_window": [12, 6]}}, "rate_window"),
    ({"model": {"kind": "cph_horo"}, "tolerances": {"levi": -1}}, "tolerances.levi"),
    ({"model": {"kind": "cph_horo"}, "tolerances": {"bogus": 1}}, "unknown tolerance"),
    ({"model": {"kind": "cph_horo"}, "output": {"formats": "xml"}}, "formats"),
    ({"model": {"kind": "cph_horo"}, "seed": -3}, "seed"),
    ({"model": {"kind": "cph_horo"}, "faults": {"phi_sign": 0}}, "phi_sign"),
    ({"model": {"kind": "cph_horo"}, "extras": {}}, "unknown config block"),
])
def test_config_errors(doc, msg):
    with pytest.raises(ConfigError, match=msg):
        RunConfig.from_dict(doc)


def test_all_stages_respect_model_kind():
    assert RunConfig.from_dict({"model": {"kind": "cph_horo"}}).stages == ("oracle", "deficits", "boundary", "cr", "rates")
    assert "oracle" not in RunConfig.from_dict({"model": {"kind": "rotated_J", "a": 2.0, "eps": 0.1}}).stages


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write_cfg(tmp_path, chart={"grid": [-1, 5, 5]})
    assert main(["boundary", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "chart.grid must be ≥ 5" in capsys.readouterr().err


def test_missing_config_file(tmp_path):
    assert main(["boundary", "--config", str(tmp_path / "nope.json")]) == 1


@pytest.fixture(scope="module")
def horo_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("runs")
    cfg = write_cfg(base)
    codes = {}
    for tag, seed in (("a", 0), ("b", 0), ("c", 1)):
        codes[tag] = main(["cr-check", "--config", str(cfg), "--out", str(base / tag), "--seed", str(seed)])
    return base, codes


def test_cr_check_passes(horo_runs):
    base, codes = horo_runs
    assert codes == {"a": 0, "b": 0, "c": 0}
    rep = json.loads((base / "a" / "report.json").read_text())
    assert rep["status"] == "PASS" and rep["schema_version"] == "1.0"
    assert set(rep["verdicts"]) == {"boundary", "cr"}
    assert (base / "a" / "boundary_data.json").exists()


def test_csv_format(horo_runs):
    base, _ = horo_runs
    path = base / "a" / "series_eta0.csv"
    with open(path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["r", "value"]
    assert float(rows[1][0]) == 0.5
    # 17 significant digits round-trip doubles exactly
    for _, v in rows[1:]:
        assert format(float(v), ".17g") == v


def test_runs_are_deterministic(horo_runs):
    base, _ = horo_runs
    names = sorted(p.name for p in (base / "a").glob("*.csv"))
    assert names
    for n in names:
        assert (base / "a" / n).read_bytes() == (base / "b" / n).read_bytes(), n


def test_compare_seed_runs(horo_runs, capsys):
    base, _ = horo_runs
    diff = compare_runs(base / "a", base / "c")
    assert diff["max_field_diff"] <= 1e-6
    assert diff["seeds"] == [0, 1]
    assert main(["compare", str(base / "a"), str(base / "c")]) == 0


def test_compare_incomparable(tmp_path, horo_runs):
    base, _ = horo_runs
    cfg = write_cfg(tmp_path, model={"kind": "cph_polar"})
    assert main(["boundary", "--config", str(cfg), "--out", str(tmp_path / "p")]) in (0, 2)
    with pytest.raises(ValueError, match="incomparable"):
        compare_runs(base / "a", tmp_path / "p")
    assert main(["compare", str(base / "a"), str(tmp_path / "p")]) == 1


def test_fault_exit_code(tmp_path):
    cfg = write_cfg(tmp_path, faults={"phi_sign": -1})
    out = tmp_path / "f"
    assert main(["cr-check", "--config", str(cfg), "--out", str(out)]) == 2
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdicts"]["cr"] == "FAIL"
    assert rep["cr"]["verdict"]["pseudoconvex"] == "FAIL"


def test_validate_model_exact(tmp_path):
    cfg = write_cfg(tmp_path)
    out = tmp_path / "v"
    assert main(["validate-model", "--config", str(cfg), "--out", str(out)]) == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["verdicts"] == {"oracle": "PASS"}


def test_json_only_output(tmp_path):
    cfg = write_cfg(tmp_path, output={"formats": "json"})
    out = tmp_path / "j"
    assert main(["boundary", "--config", str(cfg), "--out", str(out)]) == 0
    assert not list(out.glob("*.csv"))
    assert (out / "boundary_data.json").exists()
