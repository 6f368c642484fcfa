import csv
import json

import jsonschema
import pytest
import yaml

from hpsense.cli import ConfigError, load_config, main
from hpsense.cli.records import published_schema, schema_documents

SMALL = {"grid": {"f_min": 4.45, "f_max": 4.55, "step_mhz": 1.0}, "shots": 1_000_000,
         "n_toys": 3}


def write_config(tmp_path, doc):
    path = tmp_path / "run.yaml"
    path.write_text(yaml.safe_dump(doc))
    return path


def run(tmp_path, command, doc, *extra):
    out = tmp_path / command
    code = main([command, "--config", str(write_config(tmp_path, doc)), "--out", str(out),
                 "--threads", "1", *extra])
    return code, out


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_unknown_key_is_a_config_error(tmp_path):
    code, _ = run(tmp_path, "map", {"grid": {"f_min": 4.0, "f_max": 5.0, "bogus": 1}})
    assert code == 2
    with pytest.raises(ConfigError):
        load_config(write_config(tmp_path, {"shots": -5}))


def test_missing_config_file(tmp_path):
    assert main(["map", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_map_rows_and_schema(tmp_path):
    doc = {**SMALL, "map": {"p_e_values": [0.0, 0.05], "frequencies_ghz": None}}
    code, out = run(tmp_path, "map", doc)
    assert code == 0
    rows = read_csv(out / "map.csv")
    assert len(rows) == 2 * 101
    schema = published_schema("map_row")
    for row in rows[:5]:
        jsonschema.validate({k: float(v) for k, v in row.items()}, schema)
    manifest = json.loads((out / "manifest.json").read_text())
    jsonschema.validate(manifest, published_schema("manifest"))
    assert manifest["outputs"] == ["map.csv"] and manifest["seed"] == 0


def test_noise_free_map_equals_ideal(tmp_path):
    doc = {"profile": {"quality_factor": 1e300, "t_eff_k": 0.0, "prep_error": 0.0,
                       "readout_error": 0.0, "beta": 0.4},
           "map": {"p_e_values": [0.0, 0.02, 0.2], "frequencies_ghz": [4.5]}}
    code, out = run(tmp_path, "map", doc)
    assert code == 0
    for row in read_csv(out / "map.csv"):
        assert float(row["p_base_obs"]) == pytest.approx(float(row["p_e"]), abs=1e-9)
        assert float(row["p_tilde_obs"]) == pytest.approx(float(row["p_tilde_ideal"]), abs=1e-9)
        assert float(row["p_success_obs"]) == pytest.approx(float(row["p_success_ideal"]),
                                                            abs=1e-9)


def test_exclude_asimov_and_manifest_rerun_is_identical(tmp_path):
    code, out = run(tmp_path, "exclude", {**SMALL, "physics": {"kinetic_mixing": 5e-13}},
                    "--asimov")
    assert code == 0
    doc = json.loads((out / "exclusion.json").read_text())
    jsonschema.validate(doc, published_schema("exclusion"))
    again = tmp_path / "again"
    assert main(["exclude", "--config", str(out / "manifest.json"), "--out", str(again)]) == 0
    assert (again / "exclusion.json").read_bytes() == (out / "exclusion.json").read_bytes()
    assert (again / "pvalue_curve.csv").read_bytes() == (out / "pvalue_curve.csv").read_bytes()


def test_exclude_bracketing_failure_exit_code(tmp_path):
    code, out = run(tmp_path, "exclude", {**SMALL, "physics": {"kinetic_mixing": 1e-40}},
                    "--asimov")
    assert code == 3
    assert json.loads((out / "manifest.json").read_text())["exit_code"] == 3


def test_toy_outputs_do_not_depend_on_threads(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    outs = []
    for threads in ("1", "3"):
        out = tmp_path / f"toy{threads}"
        assert main(["toy", "--config", str(cfg), "--out", str(out), "--threads", threads,
                     "--seed", "7"]) == 0
        outs.append(out)
    assert (outs[0] / "toy_fits.csv").read_bytes() == (outs[1] / "toy_fits.csv").read_bytes()
    rows = read_csv(outs[0] / "toy_fits.csv")
    assert len(rows) == 3 * 3
    for row in rows:
        jsonschema.validate({"toy_index": int(row["toy_index"]), "histogram": row["histogram"],
                             "q": float(row["q"]), "p_value": float(row["p_value"])},
                            published_schema("toy_fit"))


def test_leakage_command(tmp_path):
    code, out = run(tmp_path, "leakage", {"leakage": {"ratios": [1e-6, 1e-5]}})
    assert code == 0
    rows = read_csv(out / "leakage.csv")
    assert float(rows[1]["max_leakage"]) < 1e-10


def test_validate_reports_every_check(tmp_path):
    doc = {"validate": {"curve_points": 4, "wilks_toys": 3,
                        "wilks_grid": {"f_min": 4.45, "f_max": 4.55, "step_mhz": 1.0}}}
    code, out = run(tmp_path, "validate", doc)
    assert code == 0
    report = json.loads((out / "validation.json").read_text())
    jsonschema.validate(report, published_schema("validation_report"))
    names = [c["name"] for c in report["checks"]]
    assert names == ["trotter_vs_lindblad", "circuit_vs_formula", "wilks_calibration", "leakage"]


def test_validate_few_trotter_steps_is_reported_not_raised(tmp_path):
    doc = {"profile": {"trotter_steps": 5}, "validate": {"curve_points": 4, "wilks_toys": 0}}
    code, out = run(tmp_path, "validate", doc)
    assert code == 0
    trotter = json.loads((out / "validation.json").read_text())["checks"][0]
    assert trotter["detail"]["m"] == 5 and trotter["measured"] > 1e-3


def test_projection_bands_cover_range():
    from hpsense.cli.config import ProjectionSpec
    spec = ProjectionSpec()
    edges = spec.band_edges()
    assert len(edges) == 12
    assert edges[0][0] == pytest.approx(2.5) and edges[-1][1] == pytest.approx(6.0)
    assert all(a[1] == pytest.approx(b[0]) for a, b in zip(edges, edges[1:]))


def test_shipped_schemas_match_models():
    for name, doc in schema_documents().items():
        assert published_schema(name) == json.loads(json.dumps(doc, sort_keys=True))
