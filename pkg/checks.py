# checks.py
import logging
import numbers
from typing import List, Optional

from rapidfuzz import fuzz, process

from utils import normalize_key

log = logging.getLogger("sandwich.checks")

SUBCOMMANDS = ("build-sandwich", "certify", "estimate-smoothness", "lp-oracle", "fool-test", "degree-scan")

TOP_LEVEL = (
    "seed", "concept", "concept_file", "distribution", "pair_file", "eps", "s", "sigma", "degree_cap",
    "radius", "radius_cap", "c1", "lipschitz_variant", "fit_ratio", "n_tail", "threads",
    "budgets", "smoothness", "lp", "fooling", "scan",
)
SECTIONS = {
    "budgets": ("n_gauss", "n_boundary", "n_shell", "grid_in_ball", "quad_order"),
    "smoothness": ("rho_list", "n", "gsa_rho_list"),
    "lp": ("degrees", "nodes", "coef_penalty", "boundary_points"),
    "fooling": ("delta", "n", "degree", "max_adversary_degree"),
    "scan": ("k_values", "q_values", "eps_values", "lp_gap_target", "max_degree", "degree_cap",
             "fit_points", "grid_points", "nodes"),
    "distribution": ("family", "gamma"),
}
NEEDS_CONCEPT = ("build-sandwich", "certify", "estimate-smoothness", "lp-oracle", "fool-test")
NEEDS_PAIR = ("certify",)


def suggest(key: str, known) -> Optional[str]:
    best = process.extractOne(normalize_key(key), list(known), scorer=fuzz.WRatio)
    if best and best[1] >= 60:
        return best[0]
    return None


def _unknown_keys(where: str, data: dict, known) -> List[str]:
    errors = []
    for key in data:
        if key in known:
            continue
        hint = suggest(key, known)
        tail = f" (did you mean '{hint}'?)" if hint else ""
        errors.append(f"- {where}: unknown field '{key}'{tail}")
    return errors


def _is_number(v) -> bool:
    return isinstance(v, numbers.Real) and not isinstance(v, bool)


def _is_int(v) -> bool:
    return isinstance(v, numbers.Integral) and not isinstance(v, bool)


def _positive_int(errors: List[str], where: str, v, allow_zero: bool = False):
    if not _is_int(v) or v < 0 or (v == 0 and not allow_zero):
        errors.append(f"- {where} must be a {'non-negative' if allow_zero else 'positive'} integer, got {v!r}")


def _number_list(errors: List[str], where: str, v, lo: float = 0.0, hi: Optional[float] = None,
                 integer: bool = False):
    ok = isinstance(v, list) and len(v) > 0
    if ok:
        for x in v:
            if (integer and not _is_int(x)) or not _is_number(x) or not x > lo or (hi is not None and not x < hi):
                ok = False
                break
    if not ok:
        rng = f"({lo}, {hi})" if hi is not None else f"> {lo}"
        errors.append(f"- {where} must be a non-empty list of {'integers' if integer else 'numbers'} {rng}, got {v!r}")


def validate_config(cfg: dict, subcommand: Optional[str] = None) -> List[str]:
    """
    cfg: config with defaults applied
    Return list of error strings (empty when the config is usable)
    """
    errors = _unknown_keys("config", cfg, TOP_LEVEL)
    for section, known in SECTIONS.items():
        sub = cfg.get(section)
        if sub is None:
            continue
        if not isinstance(sub, dict):
            errors.append(f"- {section} must be an object, got {type(sub).__name__}")
            continue
        errors += _unknown_keys(section, sub, known)

    seed = cfg.get("seed")
    if seed is None:
        errors.append("- seed is mandatory (set it in the config or pass --seed)")
    elif not _is_int(seed) or seed < 0:
        errors.append(f"- seed must be a non-negative integer, got {seed!r}")

    eps = cfg.get("eps")
    if eps is None:
        if subcommand == "build-sandwich":
            errors.append("- eps is required for build-sandwich")
    elif not _is_number(eps) or not 0 < eps < 1:
        errors.append(f"- eps must lie in (0, 1), got {eps!r}")
    s = cfg.get("s")
    if not _is_number(s) or not s >= 1:
        errors.append(f"- s must be a number >= 1, got {s!r}")
    sigma = cfg.get("sigma")
    if not (sigma in ("estimate", "class") or (_is_number(sigma) and sigma >= 1)):
        errors.append(f"- sigma must be 'estimate', 'class' or a number >= 1, got {sigma!r}")
    radius = cfg.get("radius")
    if not (radius == "auto" or (_is_number(radius) and radius > 0)):
        errors.append(f"- radius must be 'auto' or a number > 0, got {radius!r}")
    for key in ("radius_cap", "c1"):
        v = cfg.get(key)
        if not _is_number(v) or not v > 0:
            errors.append(f"- {key} must be a number > 0, got {v!r}")
    fr = cfg.get("fit_ratio")
    if not _is_number(fr) or not 0 < fr <= 1:
        errors.append(f"- fit_ratio must lie in (0, 1], got {fr!r}")
    for key in ("degree_cap", "n_tail", "threads"):
        _positive_int(errors, key, cfg.get(key))
    if cfg.get("lipschitz_variant") not in ("two_distance", "one_distance"):
        hint = suggest(str(cfg.get("lipschitz_variant")), ("two_distance", "one_distance"))
        errors.append(f"- lipschitz_variant must be 'two_distance' or 'one_distance', got "
                      f"{cfg.get('lipschitz_variant')!r}" + (f" (did you mean '{hint}'?)" if hint else ""))

    dist = cfg.get("distribution") or {}
    if isinstance(dist, dict):
        fam = dist.get("family", "gaussian")
        if fam not in ("gaussian", "generalized_gaussian"):
            errors.append(f"- distribution.family must be 'gaussian' or 'generalized_gaussian', got {fam!r}")
        gamma = dist.get("gamma", 1.0)
        if not _is_number(gamma) or not gamma > 0:
            errors.append(f"- distribution.gamma must be a number > 0, got {gamma!r}")

    budgets = cfg.get("budgets") or {}
    if isinstance(budgets, dict):
        for key in ("n_gauss", "grid_in_ball"):
            _positive_int(errors, f"budgets.{key}", budgets.get(key))
        for key in ("n_boundary", "n_shell", "quad_order"):
            _positive_int(errors, f"budgets.{key}", budgets.get(key), allow_zero=True)

    sm = cfg.get("smoothness") or {}
    if isinstance(sm, dict):
        _number_list(errors, "smoothness.rho_list", sm.get("rho_list"))
        _positive_int(errors, "smoothness.n", sm.get("n"))
        if sm.get("gsa_rho_list") is not None:
            _number_list(errors, "smoothness.gsa_rho_list", sm.get("gsa_rho_list"))

    lp = cfg.get("lp") or {}
    if isinstance(lp, dict):
        _number_list(errors, "lp.degrees", lp.get("degrees"), lo=-1, integer=True)
        _positive_int(errors, "lp.nodes", lp.get("nodes"))
        _positive_int(errors, "lp.boundary_points", lp.get("boundary_points"), allow_zero=True)
        pen = lp.get("coef_penalty")
        if not _is_number(pen) or pen < 0:
            errors.append(f"- lp.coef_penalty must be a number >= 0, got {pen!r}")

    fool = cfg.get("fooling") or {}
    if isinstance(fool, dict):
        delta = fool.get("delta")
        if not _is_number(delta) or not delta >= 0:
            errors.append(f"- fooling.delta must be a number >= 0, got {delta!r}")
        _positive_int(errors, "fooling.n", fool.get("n"))
        _positive_int(errors, "fooling.max_adversary_degree", fool.get("max_adversary_degree"), allow_zero=True)
        if fool.get("degree") is not None:
            _positive_int(errors, "fooling.degree", fool.get("degree"), allow_zero=True)

    scan = cfg.get("scan") or {}
    if isinstance(scan, dict):
        _number_list(errors, "scan.k_values", scan.get("k_values"), integer=True)
        if scan.get("q_values"):
            _number_list(errors, "scan.q_values", scan.get("q_values"), integer=True)
        _number_list(errors, "scan.eps_values", scan.get("eps_values"), hi=1.0)
        for key in ("max_degree", "degree_cap", "fit_points", "grid_points", "nodes"):
            _positive_int(errors, f"scan.{key}", scan.get(key))
        target = scan.get("lp_gap_target")
        if target is not None and (not _is_number(target) or not target > 0):
            errors.append(f"- scan.lp_gap_target must be null or a number > 0, got {target!r}")
        ks = scan.get("k_values")
        if isinstance(ks, list) and any(_is_int(k) and k > 3 for k in ks):
            errors.append(f"- scan.k_values must stay <= 3 (tensor fits), got {ks!r}")

    if subcommand in NEEDS_CONCEPT and cfg.get("concept") is None and not cfg.get("concept_file"):
        errors.append(f"- {subcommand} needs 'concept' or 'concept_file'")
    if cfg.get("concept") is not None and cfg.get("concept_file"):
        errors.append("- give either 'concept' or 'concept_file', not both")
    if cfg.get("concept") is not None and not isinstance(cfg.get("concept"), dict):
        errors.append("- concept must be an object")
    if subcommand in NEEDS_PAIR and not cfg.get("pair_file"):
        errors.append(f"- {subcommand} needs 'pair_file'")

    if errors:
        log.debug("config check found %d problems", len(errors))
    return errors
