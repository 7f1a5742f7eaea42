# storage.py
import copy
import logging
import os
from typing import List, Optional

import pandas as pd

import checks
from approx import CertificationReport, SandwichPair
from concepts import Concept, concept_from_record
from measures import DistributionSpec
from utils import atomic_write_json, atomic_write_text, load_json_safe

log = logging.getLogger("sandwich.storage")

SCHEMA_VERSION = 1
ARTIFACT_VERSION = "1.0"
FLOAT_FORMAT = "%.12g"

DEFAULTS = {
    "s": 1,
    "sigma": "estimate",
    "degree_cap": 4096,
    "radius": "auto",
    "radius_cap": 256,
    "c1": 0.1,
    "lipschitz_variant": "two_distance",
    "fit_ratio": 1.0,
    "n_tail": 20000,
    "threads": 1,
    "distribution": {"family": "gaussian", "gamma": 1.0},
    "budgets": {"n_gauss": 100000, "n_boundary": 10000, "n_shell": 10000, "grid_in_ball": 41, "quad_order": 64},
    "smoothness": {"rho_list": [0.01, 0.05, 0.1], "n": 100000},
    "lp": {"degrees": [1, 3, 5, 7], "nodes": 64, "coef_penalty": 0.0, "boundary_points": 0},
    "fooling": {"delta": 0.0, "n": 100000, "max_adversary_degree": 15},
    "scan": {"k_values": [1, 2, 3], "q_values": [1, 2, 3], "eps_values": [0.4, 0.2], "lp_gap_target": None,
             "max_degree": 15, "degree_cap": 4096, "fit_points": 1000000, "grid_points": 4096, "nodes": 64},
}


class ConfigError(ValueError):
    def __init__(self, errors: List[str], path: Optional[str] = None):
        self.errors = list(errors)
        where = f" in {path}" if path else ""
        super().__init__(f"invalid config{where}:\n" + "\n".join(self.errors))


def with_defaults(raw: dict) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in raw.items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def load_config(path: str, seed_override: Optional[int] = None, subcommand: Optional[str] = None) -> dict:
    """
    Reads the experiment config, applies DEFAULTS and the --seed override, and validates.
    Relative file references resolve against the config's directory.
    """
    raw = load_json_safe(path, None)
    if raw is None:
        raise ConfigError([f"- cannot read config file {path} (missing or not valid JSON)"], path)
    if not isinstance(raw, dict):
        raise ConfigError(["- config must be a JSON object"], path)
    cfg = with_defaults(raw)
    if seed_override is not None:
        cfg["seed"] = int(seed_override)
    base = os.path.dirname(os.path.abspath(path))
    for key in ("concept_file", "pair_file"):
        if cfg.get(key) and not os.path.isabs(cfg[key]):
            cfg[key] = os.path.join(base, cfg[key])
    errors = checks.validate_config(cfg, subcommand)
    if errors:
        raise ConfigError(errors, path)
    log.debug("config %s loaded (seed=%s)", path, cfg.get("seed"))
    return cfg


def concept_from_config(cfg: dict) -> Concept:
    rec = cfg.get("concept")
    if rec is None:
        rec = load_json_safe(cfg["concept_file"], None)
        if rec is None:
            raise ConfigError([f"- cannot read concept_file {cfg['concept_file']}"])
    try:
        return concept_from_record(rec)
    except ValueError as e:
        raise ConfigError([f"- concept: {e}"]) from e


def distribution_from_config(cfg: dict, dimension: int) -> DistributionSpec:
    d = cfg.get("distribution") or {}
    try:
        return DistributionSpec(dimension, d.get("family", "gaussian"), float(d.get("gamma", 1.0)))
    except ValueError as e:
        raise ConfigError([f"- distribution: {e}"]) from e


# --- artifacts ---

def save_pair(path: str, pair: SandwichPair):
    rec = pair.to_record()
    rec["artifact_version"] = ARTIFACT_VERSION
    atomic_write_json(path, rec)


def load_pair(path: str) -> SandwichPair:
    rec = load_json_safe(path, None)
    if rec is None:
        raise ValueError(f"cannot read sandwich pair file {path}")
    return SandwichPair.from_record(rec)


def save_report(path: str, report):
    atomic_write_json(path, report.to_record() if hasattr(report, "to_record") else report)


def load_report(path: str) -> CertificationReport:
    rec = load_json_safe(path, None)
    if rec is None:
        raise ValueError(f"cannot read report file {path}")
    return CertificationReport.from_record(rec)


def save_concept(path: str, c: Concept):
    atomic_write_json(path, c.to_record())


def save_table(path: str, frame: pd.DataFrame):
    atomic_write_text(path, frame.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n"))
