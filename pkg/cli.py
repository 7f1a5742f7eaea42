#!/usr/bin/env python3
# cli.py
"""
Config-driven experiment runner.

  python cli.py build-sandwich      --config cfg.json --out runs
  python cli.py certify             --config cfg.json --out runs   (needs pair_file)
  python cli.py estimate-smoothness --config cfg.json --out runs
  python cli.py lp-oracle           --config cfg.json --out runs
  python cli.py fool-test           --config cfg.json --out runs
  python cli.py degree-scan         --config cfg.json --out runs

Every run writes into <out>/<subcommand>-<config digest> and ends with manifest.json.
Exit codes: 0 PASS, 1 FAIL, 2 usage/config error, 3 numeric failure.
"""
import argparse
import logging
import math
import os
import sys
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

import polycore
import storage
from approx import FitFailure, SandwichPair, assemble_sandwich, certify_sandwich
from concepts import PTF, Concept, Halfspace, Intersection, LiftedConcept, SingleHalfspace
from manifest_manager import ManifestManager
from measures import (GAUSSIAN, boundary_smoothness_profile, chunk_rng, class_smoothness_bound,
                      composition_smoothness_check, gsa_estimate_intersection, smoothness_summary)
from oracle import (LPSolveError, fooling_check, gauss_hermite_grid, grid_gap, lp_degree_scan,
                    lp_optimal_sandwich, moment_matched_quadrature, worst_case_fooling_lp)
from storage import ConfigError
from svg_plot import line_plot
from utils import digest_of

log = logging.getLogger("sandwich.cli")

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
NUMERIC_FAILURES = (FitFailure, LPSolveError, FloatingPointError, RuntimeError)
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

STREAM_SCAN = 31
STREAM_LP_BOUNDARY = 32
LP_MONOTONE_TOL = 1e-7
DUALITY_TOL = 1e-6
DOMINANCE_TOL = 1e-7


# --- helpers ---

def config_digest(cfg: dict) -> str:
    """Digest of the config without the thread count (outputs do not depend on it)."""
    return digest_of({k: v for k, v in cfg.items() if k != "threads"})


def _setup_logging(level: int, run_dir: Optional[str] = None) -> Optional[logging.Handler]:
    handlers: List[logging.Handler] = [logging.StreamHandler()]
    file_handler = None
    if run_dir:
        os.makedirs(run_dir, exist_ok=True)
        file_handler = logging.FileHandler(os.path.join(run_dir, "run.log"), encoding="utf-8")
        handlers.append(file_handler)
    logging.basicConfig(level=level, format=LOG_FORMAT, handlers=handlers, force=True)
    return file_handler


def _detach(handler: Optional[logging.Handler]):
    if handler is None:
        return
    logging.getLogger().removeHandler(handler)
    handler.close()


def _lp_concept(c: Concept) -> Concept:
    # the Gaussian is rotation invariant, so the LP runs on the intrinsic coordinates
    if isinstance(c, LiftedConcept):
        log.info("lifted concept: LP grid built on the %d intrinsic coordinates", c.base.dimension)
        return c.base
    return c


def resolve_sigma(cfg: dict, c: Concept, dist, manifest: ManifestManager) -> float:
    """sigma from the config: a number, the class constant, or the estimated profile max + 3 std errors."""
    mode = cfg["sigma"]
    info: Dict[str, object] = {"mode": mode}
    if mode == "class":
        value = class_smoothness_bound(c)
    elif mode == "estimate":
        sm = cfg["smoothness"]
        profile = boundary_smoothness_profile(c, dist, sm["rho_list"], int(sm["n"]), int(cfg["seed"]),
                                              int(cfg["threads"]))
        summary = smoothness_summary(profile)
        info["profile"] = [{"rho": r, **est.to_record()} for r, est in profile]
        info["summary"] = summary
        value = summary["sigma_upper"]
    else:
        value = float(mode)
    sigma = max(1.0, float(value))
    info.update({"value": float(value), "sigma": sigma})
    manifest.add_diagnostic("sigma", info)
    log.info("sigma = %.5g (%s, raw %.5g)", sigma, mode, value)
    return sigma


def _certify(pair: SandwichPair, c: Concept, dist, cfg: dict):
    b = cfg["budgets"]
    return certify_sandwich(pair, c, dist, n_gauss=int(b["n_gauss"]), n_boundary=int(b["n_boundary"]),
                            n_shell=int(b["n_shell"]), grid_in_ball=int(b["grid_in_ball"]),
                            seed=int(cfg["seed"]), threads=int(cfg["threads"]), quad_order=int(b["quad_order"]))


def _assemble(c: Concept, sigma: float, eps: float, dist, cfg: dict, degree_cap: Optional[int] = None):
    return assemble_sandwich(c, sigma, float(eps), float(cfg["s"]), dist, radius=cfg["radius"],
                             degree_cap=int(degree_cap or cfg["degree_cap"]), c1=float(cfg["c1"]),
                             radius_cap=float(cfg["radius_cap"]), variant=cfg["lipschitz_variant"],
                             fit_ratio=float(cfg["fit_ratio"]), n_tail=int(cfg["n_tail"]), seed=int(cfg["seed"]))


def _pair_summary(pair: SandwichPair) -> dict:
    return {"degree": pair.degree, "ell1": pair.ell1, "ell2": pair.ell2, "R": pair.R, "B": pair.B,
            "B_is_bound": pair.B_is_bound, "declared_gap": pair.declared_gap,
            "lifted": pair.W is not None}


# --- subcommands ---

def cmd_build_sandwich(cfg: dict, manifest: ManifestManager) -> str:
    c = storage.concept_from_config(cfg)
    dist = storage.distribution_from_config(cfg, c.dimension)
    sigma = resolve_sigma(cfg, c, dist, manifest)
    try:
        pair = _assemble(c, sigma, cfg["eps"], dist, cfg)
    except FitFailure as e:
        best = e.best
        manifest.add_diagnostic("fit_failure", {
            "message": str(e),
            "best_degree": best.ell1 if best else None,
            "best_sup_err": best.sup_err_grid if best else None,
            "degrees_tried": list(best.degrees_tried) if best else [],
            "radius_trace": e.trace,
        })
        raise
    report = _certify(pair, c, dist, cfg)
    pair = pair.with_report(report)
    storage.save_pair(manifest.file_path("pair.json"), pair)
    storage.save_concept(manifest.file_path("concept.json"), c)
    storage.save_report(manifest.file_path("report.json"), report)
    manifest.add_diagnostic("pair", _pair_summary(pair))
    manifest.add_diagnostic("report", report.to_record())
    return report.verdict


def cmd_certify(cfg: dict, manifest: ManifestManager) -> str:
    c = storage.concept_from_config(cfg)
    pair = storage.load_pair(cfg["pair_file"])
    dist = storage.distribution_from_config(cfg, c.dimension)
    report = _certify(pair, c, dist, cfg)
    if pair.report is not None and pair.report.verdict != report.verdict:
        log.warning("stored verdict %s differs from the new one %s", pair.report.verdict, report.verdict)
    storage.save_report(manifest.file_path("report.json"), report)
    manifest.add_diagnostic("pair", _pair_summary(pair))
    manifest.add_diagnostic("report", report.to_record())
    return report.verdict


def cmd_estimate_smoothness(cfg: dict, manifest: ManifestManager) -> str:
    c = storage.concept_from_config(cfg)
    dist = storage.distribution_from_config(cfg, c.dimension)
    sm = cfg["smoothness"]
    seed, threads, n = int(cfg["seed"]), int(cfg["threads"]), int(sm["n"])
    try:
        bound = class_smoothness_bound(c)
    except ValueError:
        bound = None
    profile = boundary_smoothness_profile(c, dist, sm["rho_list"], n, seed, threads)
    rows = []
    for rho, est in profile:
        lo, hi = est.ci99
        rows.append({"rho": rho, "sigma_hat": est.value, "std_error": est.std_error, "ci_low": lo,
                     "ci_high": hi, "class_bound": bound})
    frame = pd.DataFrame(rows, columns=["rho", "sigma_hat", "std_error", "ci_low", "ci_high", "class_bound"])
    storage.save_table(manifest.file_path("smoothness.csv"), frame)
    series = {"sigma_hat": (frame["rho"], frame["sigma_hat"])}
    if bound is not None:
        series["class bound"] = (frame["rho"], [bound] * len(frame))
    line_plot(manifest.file_path("smoothness.svg"), series, title=f"boundary smoothness ({c.kind})",
              xlabel="rho", ylabel="sigma_hat")
    ok = bound is None or all(r["sigma_hat"] - 3.0 * r["std_error"] <= bound for r in rows)
    manifest.add_diagnostic("smoothness", {"summary": smoothness_summary(profile), "class_bound": bound})

    if hasattr(c, "slack_many") and dist.family == GAUSSIAN:
        gsa = gsa_estimate_intersection(c, sm.get("gsa_rho_list") or sm["rho_list"], n, seed, dist, threads)
        gframe = pd.DataFrame([{"rho": r, "gsa": e.value, "std_error": e.std_error} for r, e in gsa],
                              columns=["rho", "gsa", "std_error"])
        storage.save_table(manifest.file_path("gsa.csv"), gframe)
    if c.kind == "boolcombo":
        comp = []
        for rho in sm["rho_list"]:
            res = composition_smoothness_check(c.parts, c.table, dist, rho, n, seed, threads)
            comp.append({"rho": rho, "lhs": res["lhs"].value, "rhs": res["rhs"], "std_error": res["std_error"],
                         "holds": res["holds"], "inclusion_violations": res["inclusion_violations"]})
        storage.save_table(manifest.file_path("composition.csv"), pd.DataFrame(comp))
        ok = ok and all(r["holds"] and r["inclusion_violations"] == 0 for r in comp)
    return "PASS" if ok else "FAIL"


def cmd_lp_oracle(cfg: dict, manifest: ManifestManager) -> str:
    c = _lp_concept(storage.concept_from_config(cfg))
    lp = cfg["lp"]
    delta = float(cfg["fooling"]["delta"])
    penalty = float(lp["coef_penalty"])
    grid = gauss_hermite_grid(c.dimension, int(lp["nodes"]))
    if int(lp["boundary_points"]) > 0:
        extra = c.boundary_points(chunk_rng(int(cfg["seed"]), STREAM_LP_BOUNDARY, 0), int(lp["boundary_points"]),
                                  [0.0])
        grid = grid.with_points(extra)
    f = c.eval_many(grid.points).astype(float)
    degrees = sorted({int(d) for d in lp["degrees"]})
    sols = lp_degree_scan(f, grid, degrees, coef_penalty=penalty, threads=int(cfg["threads"]))

    rows = []
    for deg, sol in zip(degrees, sols):
        row = {"degree": deg, "gap": sol.gap, "upper_excess": sol.upper_excess, "lower_excess": sol.lower_excess,
               "coef_norm_up": sol.coef_norm_up, "coef_norm_down": sol.coef_norm_down, "B": sol.B,
               "duality_residual": None, "fooling_deviation": None, "converse_B": None}
        if penalty == 0:
            dual = worst_case_fooling_lp(f, grid, deg, 0.0)
            row["duality_residual"] = abs(dual.deviation_up - sol.upper_excess)
        if delta > 0:
            adv = worst_case_fooling_lp(f, grid, deg, delta)
            dev = max(adv.deviation_up, adv.deviation_down)
            row["fooling_deviation"] = dev
            row["converse_B"] = 2.0 * dev / delta
        rows.append(row)
    frame = pd.DataFrame(rows, columns=list(rows[0]))
    storage.save_table(manifest.file_path("lp_gap.csv"), frame)
    storage.save_report(manifest.file_path("lp_pairs.json"), {
        "grid_size": grid.size,
        "pairs": [{"degree": d, "p_up": polycore.to_record(s.p_up), "p_down": polycore.to_record(s.p_down)}
                  for d, s in zip(degrees, sols)],
    })
    line_plot(manifest.file_path("lp_gap.svg"), {"LP gap": (frame["degree"], frame["gap"])},
              title="LP-optimal sandwich gap", xlabel="degree", ylabel="gap", scatter=False)

    gaps = [s.gap for s in sols]
    monotone = all(b <= a + LP_MONOTONE_TOL for a, b in zip(gaps, gaps[1:]))
    residuals = [r["duality_residual"] for r in rows if r["duality_residual"] is not None]
    dual_ok = all(r <= DUALITY_TOL for r in residuals)
    manifest.add_diagnostic("lp", {"grid_size": grid.size, "gap_non_increasing": monotone,
                                   "max_duality_residual": max(residuals) if residuals else None})
    return "PASS" if monotone and dual_ok else "FAIL"


def _fooling_row(source: str, rep, order: int) -> dict:
    return {"source": source, "order": order, "delta": rep.delta,
            "expectation_reference": rep.expectation_reference.value,
            "reference_std_error": rep.expectation_reference.std_error,
            "expectation_dprime": rep.expectation_dprime, "deviation": rep.deviation,
            "gap_l1": rep.gap_l1.value, "delta_B": rep.delta * rep.B, "bound": rep.bound, "holds": rep.holds,
            "converse_B": rep.converse_B}


def cmd_fool_test(cfg: dict, manifest: ManifestManager) -> str:
    c = storage.concept_from_config(cfg)
    dist = storage.distribution_from_config(cfg, c.dimension)
    fool, lp = cfg["fooling"], cfg["lp"]
    seed, threads, n = int(cfg["seed"]), int(cfg["threads"]), int(fool["n"])
    delta = float(fool["delta"])
    grid = None
    if c.dimension <= 3:
        grid = gauss_hermite_grid(c.dimension, int(lp["nodes"]))
    if cfg.get("pair_file"):
        pair = storage.load_pair(cfg["pair_file"])
        source = "construction"
    else:
        if grid is None:
            raise ValueError(f"an LP pair needs dimension <= 3, the concept has {c.dimension}")
        deg = fool.get("degree")
        deg = int(deg) if deg is not None else max(int(d) for d in lp["degrees"])
        pair = lp_optimal_sandwich(c.eval_many(grid.points), grid, deg, coef_penalty=float(lp["coef_penalty"]))
        source = "lp"
    manifest.add_diagnostic("pair", {"source": source, "degree": pair.degree, "B": pair.B})

    rows = []
    if isinstance(pair, SandwichPair) and dist.family == GAUSSIAN and c.dimension <= 3:
        dd = moment_matched_quadrature(dist, pair.degree)
        rep = fooling_check(c, pair, dd, dist, n, seed, threads)
        storage.save_table(manifest.file_path("dprime_quadrature.csv"), dd.to_frame())
        rows.append(_fooling_row("quadrature", rep, dd.order))
    if grid is not None and pair.degree <= int(fool["max_adversary_degree"]):
        f = c.eval_many(grid.points)
        adv = worst_case_fooling_lp(f, grid, pair.degree, delta)
        for name, dd in (("adversary_up", adv.adversary), ("adversary_down", adv.adversary_down)):
            rep = fooling_check(c, pair, dd, grid, n, seed, threads)
            storage.save_table(manifest.file_path(f"dprime_{name}.csv"), dd.to_frame())
            rows.append(_fooling_row(name, rep, dd.order))
    if not rows:
        raise ValueError(f"no moment-matched distribution applies to a {source} pair of degree {pair.degree} "
                         f"(quadrature needs a Gaussian in dimension <= 3, adversaries need degree <= "
                         f"{fool['max_adversary_degree']})")
    frame = pd.DataFrame(rows, columns=list(rows[0]))
    storage.save_table(manifest.file_path("fooling.csv"), frame)
    manifest.add_diagnostic("fooling", {"checks": len(rows), "violations": int((~frame["holds"]).sum())})
    return "PASS" if bool(frame["holds"].all()) else "FAIL"


def scan_instances(scan: dict, seed: int):
    """Intersections of k random central halfspaces in R^k, and random degree-q PTFs in R^2."""
    for k in scan["k_values"]:
        k = int(k)
        if k == 1:
            yield "intersection", k, SingleHalfspace(Halfspace([1.0], 0.0))
            continue
        rng = chunk_rng(seed, STREAM_SCAN, k)
        normals = rng.standard_normal((k, k))
        normals /= np.linalg.norm(normals, axis=1, keepdims=True)
        yield "intersection", k, Intersection([Halfspace(w, 0.0) for w in normals], k)
    for q in scan.get("q_values") or []:
        q = int(q)
        rng = chunk_rng(seed, STREAM_SCAN, 100 + q)
        idx = polycore.multi_indices(2, q)
        coef = rng.standard_normal(len(idx))
        poly = polycore.Polynomial.from_terms(2, zip(idx, coef / np.abs(coef).sum()), degree=q)
        yield "ptf", q, PTF(poly, q)


def _scan_grid(dim: int, scan: dict):
    per_axis = int(math.floor(int(scan["grid_points"]) ** (1.0 / dim) + 1e-9))
    return gauss_hermite_grid(dim, max(2, min(int(scan["nodes"]), per_axis)))


def cmd_degree_scan(cfg: dict, manifest: ManifestManager) -> str:
    scan = cfg["scan"]
    seed = int(cfg["seed"])
    max_degree = int(scan["max_degree"])
    eps_values = sorted(float(e) for e in scan["eps_values"])
    rows = []
    for family, size, c in scan_instances(scan, seed):
        dim = c.dimension
        dist = storage.distribution_from_config(cfg, dim)
        grid = _scan_grid(dim, scan)
        f = c.eval_many(grid.points).astype(float)
        gaps: Dict[int, float] = {}

        def lp_gap(deg):
            if deg not in gaps:
                gaps[deg] = lp_optimal_sandwich(f, grid, deg).gap
            return gaps[deg]

        sigma = max(1.0, class_smoothness_bound(c))
        cap = min(int(scan["degree_cap"]), max(1, int(int(scan["fit_points"]) ** (1.0 / dim)) // 2))
        for eps in eps_values:
            target = float(scan["lp_gap_target"]) if scan.get("lp_gap_target") is not None else eps
            lp_degree = next((d for d in range(max_degree + 1) if lp_gap(d) <= target), None)
            row = {"family": family, "size": size, "dimension": dim, "eps": eps, "sigma": sigma,
                   "lp_degree": lp_degree, "lp_gap": lp_gap(lp_degree) if lp_degree is not None
                   else lp_gap(max_degree),
                   "lp_status": "ok" if lp_degree is not None else "budget",
                   "construction_status": "budget", "construction_degree": None, "ell1": None, "ell2": None,
                   "R": None, "construction_grid_gap": None, "lp_gap_at_construction_degree": None,
                   "dominance": None}
            try:
                pair = _assemble(c, sigma, eps, dist, cfg, degree_cap=cap)
            except FitFailure as e:
                log.warning("%s size %d eps %.3g: construction exhausted the degree budget (%s)", family, size,
                            eps, e)
            else:
                cgap = grid_gap(pair, grid)
                row.update({"construction_status": "ok", "construction_degree": pair.degree, "ell1": pair.ell1,
                            "ell2": pair.ell2, "R": pair.R, "construction_grid_gap": cgap})
                if pair.degree <= max_degree:
                    at = lp_gap(pair.degree)
                    row["lp_gap_at_construction_degree"] = at
                    row["dominance"] = bool(at <= cgap + DOMINANCE_TOL)
            log.info("scan %s size %d eps %.3g: construction %s, LP degree %s", family, size, eps,
                     row["construction_degree"], row["lp_degree"])
            rows.append(row)

    frame = pd.DataFrame(rows, columns=list(rows[0]))
    storage.save_table(manifest.file_path("degree_scan.csv"), frame)

    trend_violations = []
    for (family, size), group in frame.groupby(["family", "size"], sort=True):
        group = group.sort_values("eps")
        for col in ("construction_degree", "lp_degree"):
            vals = [v for v in group[col] if v is not None and not pd.isna(v)]
            if any(b > a for a, b in zip(vals, vals[1:])):
                trend_violations.append(f"{family} size {size}: {col} increases with eps")
    lp_trend = {}
    for eps, group in frame[frame["family"] == "intersection"].groupby("eps", sort=True):
        vals = [v for v in group.sort_values("size")["lp_degree"] if v is not None and not pd.isna(v)]
        lp_trend[str(eps)] = all(b >= a for a, b in zip(vals, vals[1:]))
    dominance_failures = int(frame["dominance"].map(lambda v: v is False).sum())
    partial = bool((frame["construction_status"] == "budget").any() or (frame["lp_status"] == "budget").any())
    manifest.add_diagnostic("scan", {"partial": partial, "trend_violations": trend_violations,
                                     "lp_degree_non_decreasing_in_k": lp_trend,
                                     "dominance_failures": dominance_failures})

    series = {}
    for (family, size), group in frame.groupby(["family", "size"], sort=True):
        group = group.sort_values("eps")
        series[f"LP {family} {size}"] = (group["eps"], group["lp_degree"])
        series[f"construction {family} {size}"] = (group["eps"], group["construction_degree"])
    line_plot(manifest.file_path("degree_scan.svg"), series, title="degree vs eps", xlabel="eps",
              ylabel="degree", scatter=True, log_y=True)
    return "PASS" if not trend_violations and dominance_failures == 0 else "FAIL"


COMMANDS = {
    "build-sandwich": cmd_build_sandwich,
    "certify": cmd_certify,
    "estimate-smoothness": cmd_estimate_smoothness,
    "lp-oracle": cmd_lp_oracle,
    "fool-test": cmd_fool_test,
    "degree-scan": cmd_degree_scan,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cli.py", description="Sandwiching polynomials for geometric concepts")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", default="runs", help="directory for run folders")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=None, help="worker threads for sampling and LP batches")
        p.add_argument("--verbose", action="store_true", help="DEBUG logging")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_PASS
    level = logging.DEBUG if args.verbose else logging.INFO

    try:
        cfg = storage.load_config(args.config, args.seed, args.command)
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError([f"- --threads must be >= 1, got {args.threads}"])
            cfg["threads"] = args.threads
    except ConfigError as e:
        _setup_logging(level)
        log.error("%s", e)
        return EXIT_USAGE

    run_dir = os.path.join(args.out, f"{args.command}-{config_digest(cfg)[:12]}")
    handler = _setup_logging(level, run_dir)
    manifest = ManifestManager(run_dir, args.command, cfg, storage.SCHEMA_VERSION, storage.ARTIFACT_VERSION)
    log.info("%s: run directory %s", args.command, run_dir)
    verdict, code = "ERROR", EXIT_NUMERIC
    try:
        verdict = COMMANDS[args.command](cfg, manifest)
        code = EXIT_PASS if verdict == "PASS" else EXIT_FAIL
    except ValueError as e:
        log.error("rejected input: %s", e)
        manifest.add_diagnostic("error", {"type": type(e).__name__, "message": str(e)})
        code = EXIT_USAGE
    except NUMERIC_FAILURES as e:
        log.exception("numeric failure")
        manifest.add_diagnostic("error", {"type": type(e).__name__, "message": str(e)})
        code = EXIT_NUMERIC
    finally:
        log.info("%s finished: %s (exit %d)", args.command, verdict, code)
        _detach(handler)
        manifest.finish(verdict)
    return code


if __name__ == "__main__":
    sys.exit(main())
