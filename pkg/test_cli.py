# test_cli.py
import json
import os

import pandas as pd
import pytest

import cli
from manifest_manager import read_manifest, verify_files

HALF_LINE = {"kind": "halfspace", "w": [1.0], "tau": 0.0}
CONSTANT = {"kind": "constant", "dimension": 1}
SMALL_BUDGETS = {"n_gauss": 20000, "n_boundary": 2000, "n_shell": 2000, "grid_in_ball": 41, "quad_order": 64}


def write_config(tmp_path, name="cfg.json", **cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def run(tmp_path, command, config, *extra, out="runs"):
    out_dir = str(tmp_path / out)
    code = cli.main([command, "--config", config, "--out", out_dir, *extra])
    dirs = [d for d in os.listdir(out_dir) if d.startswith(command)] if os.path.isdir(out_dir) else []
    return code, [os.path.join(out_dir, d) for d in sorted(dirs)]


def read_json(path):
    with open(path, encoding="utf-8") as f:
        return json.load(f)


def assert_manifest(run_dir, verdict, *names):
    manifest = read_manifest(run_dir)
    assert manifest["verdict"] == verdict
    assert manifest["schema_version"] == 1
    for name in names + ("run.log",):
        assert name in manifest["files"], name
    assert verify_files(manifest, run_dir) == []
    return manifest


def test_usage_errors(tmp_path):
    cfg = write_config(tmp_path, seed=1, concept=HALF_LINE)
    assert cli.main(["no-such-command", "--config", cfg]) == cli.EXIT_USAGE
    assert cli.main(["lp-oracle"]) == cli.EXIT_USAGE
    assert cli.main(["lp-oracle", "--config", str(tmp_path / "missing.json")]) == cli.EXIT_USAGE


def test_config_errors_exit_2(tmp_path):
    no_seed = write_config(tmp_path, "a.json", concept=HALF_LINE)
    assert run(tmp_path, "lp-oracle", no_seed)[0] == cli.EXIT_USAGE
    typo = write_config(tmp_path, "b.json", seed=1, concept=HALF_LINE, degre_cap=5)
    assert run(tmp_path, "lp-oracle", typo)[0] == cli.EXIT_USAGE
    no_eps = write_config(tmp_path, "c.json", seed=1, concept=HALF_LINE)
    assert run(tmp_path, "build-sandwich", no_eps)[0] == cli.EXIT_USAGE
    valid = write_config(tmp_path, "d.json", seed=1, concept=HALF_LINE)
    assert run(tmp_path, "lp-oracle", valid, "--threads", "0")[0] == cli.EXIT_USAGE


def test_bad_concept_exits_2(tmp_path):
    cfg = write_config(tmp_path, seed=1, concept={"kind": "sphere"})
    code, dirs = run(tmp_path, "lp-oracle", cfg)
    assert code == cli.EXIT_USAGE
    assert read_manifest(dirs[0])["diagnostics"]["error"]["type"] == "ConfigError"


def test_seed_flag_overrides_and_is_mandatory(tmp_path):
    cfg = write_config(tmp_path, concept=HALF_LINE, lp={"degrees": [1], "nodes": 16})
    code, dirs = run(tmp_path, "lp-oracle", cfg, "--seed", "4")
    assert code == cli.EXIT_PASS
    assert read_manifest(dirs[0])["config"]["seed"] == 4


def test_estimate_smoothness_reproducible(tmp_path):
    cfg = write_config(tmp_path, seed=7, concept=HALF_LINE,
                       smoothness={"rho_list": [0.05, 0.1], "n": 30000})
    code, dirs = run(tmp_path, "estimate-smoothness", cfg, out="one")
    assert code == cli.EXIT_PASS
    assert_manifest(dirs[0], "PASS", "smoothness.csv", "smoothness.svg", "gsa.csv")
    frame = pd.read_csv(os.path.join(dirs[0], "smoothness.csv"))
    assert list(frame["rho"]) == [0.05, 0.1]
    assert (frame["class_bound"] > 0).all()

    code2, dirs2 = run(tmp_path, "estimate-smoothness", cfg, "--threads", "2", out="two")
    assert code2 == cli.EXIT_PASS
    # the thread count is left out of the run directory name
    assert os.path.basename(dirs2[0]) == os.path.basename(dirs[0])
    for name in ("smoothness.csv", "gsa.csv"):
        with open(os.path.join(dirs[0], name), "rb") as a, open(os.path.join(dirs2[0], name), "rb") as b:
            assert a.read() == b.read()


def test_estimate_smoothness_boolean_combination(tmp_path):
    combo = {"kind": "boolcombo", "table": "0001",
             "halfspaces": [{"w": [1.0, 0.0], "tau": 0.2}, {"w": [0.0, 1.0], "tau": -0.1}]}
    cfg = write_config(tmp_path, seed=2, concept=combo, smoothness={"rho_list": [0.05], "n": 20000})
    code, dirs = run(tmp_path, "estimate-smoothness", cfg)
    assert code == cli.EXIT_PASS
    comp = pd.read_csv(os.path.join(dirs[0], "composition.csv"))
    assert comp["holds"].all() and (comp["inclusion_violations"] == 0).all()
    assert not os.path.exists(os.path.join(dirs[0], "gsa.csv"))


def test_lp_oracle(tmp_path):
    cfg = write_config(tmp_path, seed=1, concept=HALF_LINE, lp={"degrees": [1, 3, 5], "nodes": 32},
                       fooling={"delta": 0.01})
    code, dirs = run(tmp_path, "lp-oracle", cfg)
    assert code == cli.EXIT_PASS
    manifest = assert_manifest(dirs[0], "PASS", "lp_gap.csv", "lp_pairs.json", "lp_gap.svg")
    frame = pd.read_csv(os.path.join(dirs[0], "lp_gap.csv"))
    assert list(frame["degree"]) == [1, 3, 5]
    assert (frame["duality_residual"] <= 1e-6).all()
    assert (frame["converse_B"] >= 0).all()
    assert manifest["diagnostics"]["lp"]["gap_non_increasing"] is True


def test_lp_oracle_on_lifted_concept(tmp_path):
    lifted = dict(HALF_LINE, W=[[0.6, 0.8, 0.0]])
    cfg = write_config(tmp_path, seed=1, concept=lifted, lp={"degrees": [1, 3], "nodes": 24, "boundary_points": 5})
    code, dirs = run(tmp_path, "lp-oracle", cfg)
    assert code == cli.EXIT_PASS
    # the grid lives on the single intrinsic coordinate
    assert read_manifest(dirs[0])["diagnostics"]["lp"]["grid_size"] <= 24 + 5


def test_build_and_certify_constant(tmp_path):
    cfg = write_config(tmp_path, "build.json", seed=3, concept=CONSTANT, eps=0.4, sigma="class",
                       budgets=SMALL_BUDGETS)
    code, dirs = run(tmp_path, "build-sandwich", cfg)
    assert code == cli.EXIT_PASS
    manifest = assert_manifest(dirs[0], "PASS", "pair.json", "concept.json", "report.json")
    assert manifest["diagnostics"]["sigma"]["sigma"] == 1.0
    assert manifest["diagnostics"]["pair"]["degree"] == 4

    pair_file = os.path.join(dirs[0], "pair.json")
    cert = write_config(tmp_path, "certify.json", seed=5, concept=CONSTANT, pair_file=pair_file,
                        budgets=SMALL_BUDGETS)
    code, cdirs = run(tmp_path, "certify", cert)
    assert code == cli.EXIT_PASS
    report = read_json(os.path.join(cdirs[0], "report.json"))
    assert report["verdict"] == "PASS" and report["pointwise_violations"] == 0

    fool = write_config(tmp_path, "fool.json", seed=5, concept=CONSTANT, pair_file=pair_file,
                        lp={"nodes": 24}, fooling={"n": 20000})
    code, fdirs = run(tmp_path, "fool-test", fool)
    assert code == cli.EXIT_PASS
    frame = pd.read_csv(os.path.join(fdirs[0], "fooling.csv"))
    assert set(frame["source"]) == {"quadrature", "adversary_up", "adversary_down"}
    assert os.path.exists(os.path.join(fdirs[0], "dprime_quadrature.csv"))


def test_build_half_line(tmp_path):
    cfg = write_config(tmp_path, seed=11, concept=HALF_LINE, eps=0.9, sigma=1, budgets=SMALL_BUDGETS)
    code, dirs = run(tmp_path, "build-sandwich", cfg)
    assert code == cli.EXIT_PASS
    report = read_json(os.path.join(dirs[0], "report.json"))
    assert report["pointwise_violations"] == 0
    assert report["gap_norm"]["value"] <= report["declared_gap"]


def test_fit_failure_exits_3(tmp_path):
    cfg = write_config(tmp_path, seed=1, concept=HALF_LINE, eps=0.5, sigma=1, radius=4, degree_cap=2)
    code, dirs = run(tmp_path, "build-sandwich", cfg)
    assert code == cli.EXIT_NUMERIC
    manifest = read_manifest(dirs[0])
    assert manifest["verdict"] == "ERROR"
    assert manifest["diagnostics"]["fit_failure"]["degrees_tried"]
    assert manifest["diagnostics"]["error"]["type"] == "FitFailure"


def test_build_half_line_small_eps(tmp_path):
    cfg = write_config(tmp_path, seed=3, concept=HALF_LINE, eps=0.2, sigma="class", budgets=SMALL_BUDGETS)
    code, dirs = run(tmp_path, "build-sandwich", cfg)
    assert code == cli.EXIT_PASS
    manifest = assert_manifest(dirs[0], "PASS", "pair.json", "report.json")
    assert manifest["diagnostics"]["sigma"]["sigma"] == 1.0
    report = read_json(os.path.join(dirs[0], "report.json"))
    assert report["pointwise_violations"] == 0
    assert report["gap_norm"]["value"] <= report["declared_gap"] == pytest.approx(1.4)
    assert report["tail_certificate"] == "analytic"


def test_radius_rule_failure_exits_3(tmp_path):
    cfg = write_config(tmp_path, seed=1, concept=HALF_LINE, eps=0.4, sigma=1, radius_cap=2)
    code, dirs = run(tmp_path, "build-sandwich", cfg)
    assert code == cli.EXIT_NUMERIC
    failure = read_manifest(dirs[0])["diagnostics"]["fit_failure"]
    assert [t["R"] for t in failure["radius_trace"]] == [1.0, 2.0]
    assert all(t["total"] > 0.4 for t in failure["radius_trace"])
    assert failure["best_degree"] is None


def test_fool_test_with_lp_pair(tmp_path):
    cfg = write_config(tmp_path, seed=1, concept=HALF_LINE, lp={"degrees": [3], "nodes": 32},
                       fooling={"degree": 3, "n": 10000})
    code, dirs = run(tmp_path, "fool-test", cfg)
    assert code == cli.EXIT_PASS
    frame = pd.read_csv(os.path.join(dirs[0], "fooling.csv"))
    assert set(frame["source"]) == {"adversary_up", "adversary_down"}
    assert frame["holds"].all()


def test_fool_test_without_applicable_dprime(tmp_path):
    cfg = write_config(tmp_path, seed=1, concept=HALF_LINE, lp={"degrees": [3], "nodes": 16},
                       fooling={"degree": 3, "max_adversary_degree": 1})
    code, dirs = run(tmp_path, "fool-test", cfg)
    assert code == cli.EXIT_USAGE
    assert read_manifest(dirs[0])["diagnostics"]["error"]["type"] == "ValueError"


def test_degree_scan(tmp_path):
    cfg = write_config(tmp_path, seed=2, sigma=1,
                       scan={"k_values": [1], "q_values": [], "eps_values": [0.9], "max_degree": 7,
                             "nodes": 32, "grid_points": 1024})
    code, dirs = run(tmp_path, "degree-scan", cfg)
    assert code == cli.EXIT_PASS
    assert_manifest(dirs[0], "PASS", "degree_scan.csv", "degree_scan.svg")
    frame = pd.read_csv(os.path.join(dirs[0], "degree_scan.csv"))
    assert len(frame) == 1
    row = frame.iloc[0]
    assert row["family"] == "intersection" and row["size"] == 1
    assert row["lp_status"] in ("ok", "budget")
    if row["construction_status"] == "ok":
        assert row["construction_degree"] >= 1


def test_degree_scan_intersection_of_two(tmp_path):
    cfg = write_config(tmp_path, seed=2,
                       scan={"k_values": [2], "q_values": [], "eps_values": [0.9, 0.6], "max_degree": 5,
                             "nodes": 12, "grid_points": 144, "fit_points": 40000})
    code, dirs = run(tmp_path, "degree-scan", cfg)
    assert code == cli.EXIT_PASS
    manifest = assert_manifest(dirs[0], "PASS", "degree_scan.csv")
    frame = pd.read_csv(os.path.join(dirs[0], "degree_scan.csv"))
    assert list(frame["eps"]) == [0.6, 0.9]
    assert set(frame["dimension"]) == {2} and set(frame["size"]) == {2}
    assert set(frame["construction_status"]) <= {"ok", "budget"}
    # LP degree is monotone in eps by construction; a budget row has no degree
    lp = [d for d in frame["lp_degree"] if not pd.isna(d)]
    assert lp == sorted(lp, reverse=True)
    assert manifest["diagnostics"]["scan"]["trend_violations"] == []


def test_scan_instances_are_seeded():
    scan = {"k_values": [1, 2], "q_values": [2]}
    a = [(fam, size, c.to_record()) for fam, size, c in cli.scan_instances(scan, 5)]
    b = [(fam, size, c.to_record()) for fam, size, c in cli.scan_instances(scan, 5)]
    assert a == b
    assert [(fam, size) for fam, size, _ in a] == [("intersection", 1), ("intersection", 2), ("ptf", 2)]


@pytest.mark.parametrize("mode,expected", [(2.5, 2.5), (0.5, 1.0)])
def test_sigma_floor(tmp_path, mode, expected):
    from concepts import concept_from_record
    from manifest_manager import ManifestManager
    from measures import DistributionSpec

    manifest = ManifestManager(str(tmp_path / "m"), "build-sandwich", {}, 1, "1.0")
    c = concept_from_record(HALF_LINE)
    assert cli.resolve_sigma({"sigma": mode}, c, DistributionSpec(1), manifest) == expected
