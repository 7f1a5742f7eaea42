# test_storage.py
import json
import os

import pytest

import checks
import storage
from manifest_manager import ManifestManager, read_manifest, verify_files
from storage import ConfigError
from svg_plot import line_plot
from utils import digest_of, load_json_safe, normalize_key

HALF_LINE = {"kind": "halfspace", "w": [1.0], "tau": 0.0}


def write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
    return str(path)


def test_normalize_key():
    assert normalize_key("degreeCap") == "degree_cap"
    assert normalize_key(" Degree-Cap ") == "degree_cap"
    assert normalize_key("") == ""


def test_suggest_typo():
    assert checks.suggest("degre_cap", checks.TOP_LEVEL) == "degree_cap"
    assert checks.suggest("degreeCap", checks.TOP_LEVEL) == "degree_cap"


def test_validate_defaults_are_clean():
    cfg = storage.with_defaults({"seed": 0, "concept": HALF_LINE, "eps": 0.5})
    for sub in checks.SUBCOMMANDS:
        if sub in checks.NEEDS_PAIR:
            continue
        assert checks.validate_config(cfg, sub) == [], sub


def test_validate_reports_problems():
    cfg = storage.with_defaults({"seed": 1, "concept": HALF_LINE, "degre_cap": 4, "sigma": 0.5,
                                 "scan": {"k_values": [4]}, "concept_file": "c.json"})
    errors = checks.validate_config(cfg, "build-sandwich")
    text = "\n".join(errors)
    assert "did you mean 'degree_cap'" in text
    assert "sigma" in text
    assert "scan.k_values" in text
    assert "not both" in text
    assert "eps is required" in text
    assert all(e.startswith("- ") for e in errors)


def test_validate_certify_needs_pair():
    cfg = storage.with_defaults({"seed": 1, "concept": HALF_LINE})
    assert any("pair_file" in e for e in checks.validate_config(cfg, "certify"))


def test_with_defaults_merges_sections():
    cfg = storage.with_defaults({"lp": {"nodes": 8}})
    assert cfg["lp"]["nodes"] == 8 and cfg["lp"]["degrees"] == [1, 3, 5, 7]
    assert storage.DEFAULTS["lp"]["nodes"] == 64


def test_load_config(tmp_path):
    os.makedirs(tmp_path / "sub")
    path = write(tmp_path / "sub", "cfg.json", {"concept": HALF_LINE, "pair_file": "pair.json"})
    cfg = storage.load_config(path, seed_override=9, subcommand="certify")
    assert cfg["seed"] == 9
    assert cfg["pair_file"] == os.path.join(str(tmp_path / "sub"), "pair.json")

    with pytest.raises(ConfigError) as err:
        storage.load_config(path, subcommand="certify")
    assert "seed is mandatory" in str(err.value)
    with pytest.raises(ConfigError):
        storage.load_config(str(tmp_path / "missing.json"), seed_override=1)
    with pytest.raises(ConfigError):
        storage.load_config(write(tmp_path, "list.json", [1, 2]), seed_override=1)
    with pytest.raises(ConfigError):
        storage.load_config(write(tmp_path, "broken.json", "{not json"), seed_override=1)


def test_concept_and_distribution_from_config(tmp_path):
    c = storage.concept_from_config({"concept": HALF_LINE})
    assert c.dimension == 1
    path = write(tmp_path, "concept.json", HALF_LINE)
    assert storage.concept_from_config({"concept_file": path}).to_record() == c.to_record()
    with pytest.raises(ConfigError):
        storage.concept_from_config({"concept": {"kind": "torus"}})
    with pytest.raises(ConfigError):
        storage.concept_from_config({"concept_file": str(tmp_path / "nope.json")})
    with pytest.raises(ConfigError):
        storage.distribution_from_config({"distribution": {"family": "laplace"}}, 2)
    d = storage.distribution_from_config({}, 3)
    assert d.dimension == 3 and d.family == "gaussian"


def test_digest_ignores_key_order():
    assert digest_of({"a": 1, "b": [1.0, 2]}) == digest_of({"b": [1.0, 2], "a": 1})
    assert digest_of({"a": 1}) != digest_of({"a": 2})


def test_manifest_lists_and_verifies_files(tmp_path):
    run_dir = str(tmp_path / "run")
    m = ManifestManager(run_dir, "lp-oracle", {"seed": 1}, storage.SCHEMA_VERSION, storage.ARTIFACT_VERSION)
    assert read_manifest(run_dir)["verdict"] is None
    with open(m.file_path("table.csv"), "w", encoding="utf-8") as f:
        f.write("a,b\n1,2\n")
    m.add_diagnostic("note", {"k": 1})
    m.finish("PASS")

    manifest = read_manifest(run_dir)
    assert manifest["verdict"] == "PASS"
    assert list(manifest["files"]) == ["table.csv"]
    assert manifest["diagnostics"]["note"] == {"k": 1}
    assert manifest["elapsed_s"] >= 0
    assert verify_files(manifest, run_dir) == []

    with open(m.file_path("table.csv"), "a", encoding="utf-8") as f:
        f.write("3,4\n")
    assert verify_files(manifest, run_dir) == ["table.csv"]
    os.remove(m.file_path("table.csv"))
    assert verify_files(manifest, run_dir) == ["table.csv"]


def test_load_json_safe(tmp_path):
    assert load_json_safe(str(tmp_path / "none.json"), {"x": 1}) == {"x": 1}
    assert load_json_safe(write(tmp_path, "bad.json", "[1,"), []) == []


def test_line_plot(tmp_path):
    path = str(tmp_path / "plot.svg")
    svg = line_plot(path, {"gap": ([1, 3, 5], [0.5, 0.2, float("nan")]), "<b>": ([1], [None])},
                    title="gap", log_y=True)
    assert svg is not None and svg.startswith("<svg")
    assert os.path.exists(path)
    # the second series has no finite point and is dropped
    assert "&lt;b&gt;" not in svg
    assert line_plot(str(tmp_path / "empty.svg"), {"x": ([1.0], [-1.0])}, log_y=True) is None
    assert not os.path.exists(tmp_path / "empty.svg")


def test_report_round_trip(tmp_path):
    from approx import CertificationReport
    from measures import Estimate

    report = CertificationReport(0, {"gauss": 0, "boundary": 0}, {"gauss": 100, "boundary": 10},
                                 Estimate(0.5, 0.01, 100, 3), 0.49, "analytic", 0.6, 1.0, 3)
    path = str(tmp_path / "report.json")
    storage.save_report(path, report)
    back = storage.load_report(path)
    assert back.verdict == "PASS"
    assert back.to_record() == report.to_record()
    with pytest.raises(ValueError):
        storage.load_report(str(tmp_path / "missing.json"))
