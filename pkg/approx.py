# approx.py
"""
Polynomial sandwich of a concept:

  p_up   = p1_up   + p2 + eps
  p_down = p1_down - p2 - eps

p1 is a tensor-Chebyshev uniform approximation of the Lipschitz sandwich on
the box [-R, R]^k, p2(x) = eps (2|x|/R)^(2 l2) dominates p1 outside the
radius-R ball. Lifted pairs evaluate the base pair at W x.
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Dict, List, Mapping, Optional, Tuple, Union

import numpy as np
from scipy.fft import dct
from scipy.special import logsumexp

import polycore
from polycore import CHEBYSHEV, PRUNE_REL, Polynomial
from concepts import Concept, LiftedConcept, as_points
from lipschitz import TWO_DISTANCE, LipschitzSandwich, build_lipschitz_sandwich
from measures import (GAUSSIAN, DistributionSpec, Estimate, chunk_rng, ls_norm_from_values,
                      map_chunks, mean_estimate, power_estimate, tail_mass_analytic)

log = logging.getLogger("sandwich.approx")

GRID_CAP = 2_000_000
LIFT_EXACT_TERMS = 200_000
VIOLATION_SLACK = 1e-9
DECLARED_FACTOR = 7.0
MAX_FIT_DIMENSION = 3
# share of the fit target left for the error between certification grid points
INTERPOLATION_SLACK = 0.125

STREAM_RADIUS = 11
STREAM_GAUSS = 12
STREAM_BOUNDARY = 13
STREAM_SHELL = 14

TAIL_ANALYTIC = "analytic"
TAIL_EMPIRICAL = "empirical-only"


class FitFailure(RuntimeError):
    """
    No passing construction: a fit hit the degree cap (`best` holds the closest
    fit) or no radius up to the cap met the outer-contribution rule (`trace`).
    """

    def __init__(self, message: str, best: Optional["UniformApprox"] = None,
                 trace: Optional[List[dict]] = None):
        super().__init__(message)
        self.best = best
        self.trace = list(trace or [])


# --- uniform approximation ---

@dataclass(frozen=True, eq=False)
class UniformApprox:
    p1: Polynomial
    R: float
    ell1: int
    sup_err_grid: float
    grid_spacing: float
    grid_resolved: bool = True
    degrees_tried: Tuple[int, ...] = ()


def _tensor_points(axes: List[np.ndarray]) -> np.ndarray:
    grids = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.reshape(-1) for g in grids], axis=1)


def chebyshev_interpolant(g: Callable[[np.ndarray], np.ndarray], dimension: int, R: float,
                          degree: int) -> Polynomial:
    """
    Interpolates g at (2n+1)^k Chebyshev-Lobatto nodes of [-R, R]^k (DCT-I per
    axis), then keeps the total-degree <= n part. Degree 0 uses the nodes +-R.
    """
    n = int(degree)
    N = max(1, 2 * n)
    nodes = R * np.cos(np.pi * np.arange(N + 1) / N)
    X = _tensor_points([nodes] * dimension)
    coef = np.asarray(g(X), dtype=float).reshape((N + 1,) * dimension)
    for j in range(dimension):
        coef = dct(coef, type=1, axis=j) / N
        for edge in (0, N):
            idx = [slice(None)] * dimension
            idx[j] = edge
            coef[tuple(idx)] *= 0.5
    coef = coef[(slice(0, n + 1),) * dimension]
    p = Polynomial.from_dense(coef, CHEBYSHEV, box=R, max_total=n, rel_prune=PRUNE_REL)
    return Polynomial(dimension, p.coeffs, n, CHEBYSHEV, R)


def certification_grid(dimension: int, R: float, spacing: float, cap: int = GRID_CAP):
    """Regular grid of the box restricted to the radius-R ball; per-axis count capped."""
    m = int(math.ceil(2.0 * R / spacing)) + 1
    m_cap = max(2, int(math.floor(cap ** (1.0 / dimension))))
    resolved = m <= m_cap
    m = min(m, m_cap)
    axis = np.linspace(-R, R, m)
    points = _tensor_points([axis] * dimension)
    mask = np.linalg.norm(points, axis=1) <= R * (1.0 + 1e-12)
    return axis, mask, points[mask], resolved, 2.0 * R / (m - 1)


def _values_on_grid(p: Polynomial, axis: np.ndarray, mask: np.ndarray, points: np.ndarray) -> np.ndarray:
    # the separable contraction builds a len(axis) x degree Vandermonde table per axis
    if p._dense_ok() and len(axis) * (p.max_exponent + 1) <= polycore.DENSE_LIMIT:
        return polycore.evaluate_on_grid(p, [axis] * p.dimension).reshape(-1)[mask]
    return polycore.evaluate_many(p, points)


def degree_schedule(L: float, R: float, dimension: int, eps_target: float, degree_cap: int,
                    c1: float) -> List[int]:
    n0 = max(1, int(math.ceil(c1 * L * R * dimension / eps_target)))
    out = [0]
    n = n0
    while n <= degree_cap:
        out.append(n)
        n *= 2
    if out[-1] < degree_cap:
        out.append(int(degree_cap))
    return out


def fit_uniform_approx(g: Callable[[np.ndarray], np.ndarray], L: float, dimension: int, R: float,
                       eps_target: float, degree_cap: int = 4096, c1: float = 0.1,
                       grid_cap: int = GRID_CAP, refine: bool = True) -> UniformApprox:
    """
    First degree of the schedule whose grid sup error is <= (1 - INTERPOLATION_SLACK) eps_target,
    then (refine=True) bisection down towards the last failing degree.

    The grid spacing eps_target / (8L) keeps L * spacing = INTERPOLATION_SLACK * eps_target
    for the error between grid points.
    """
    if dimension > MAX_FIT_DIMENSION:
        raise ValueError(f"tensor fitting supports dimension <= {MAX_FIT_DIMENSION}, got {dimension}")
    if not R >= 1:
        raise ValueError(f"R must be >= 1, got {R}")
    if not (L > 0 and eps_target > 0):
        raise ValueError(f"L and eps_target must be > 0, got L={L}, eps_target={eps_target}")
    nominal = INTERPOLATION_SLACK * eps_target / L
    axis, mask, points, resolved, spacing = certification_grid(dimension, R, nominal, grid_cap)
    if not resolved:
        log.warning("certification grid capped at %d points per axis (spacing %.3g, wanted %.3g)",
                    len(axis), spacing, nominal)
    target = np.asarray(g(points), dtype=float)
    accept = (1.0 - INTERPOLATION_SLACK) * eps_target
    tried: List[int] = []
    best = None

    def attempt(n: int) -> UniformApprox:
        nonlocal best
        tried.append(n)
        p = chebyshev_interpolant(g, dimension, R, n)
        err = float(np.max(np.abs(_values_on_grid(p, axis, mask, points) - target)))
        log.debug("fit R=%g degree=%d sup_err=%.4g (accept <= %.4g)", R, n, err, accept)
        fit = UniformApprox(p, float(R), n, err, spacing, resolved)
        if best is None or err < best.sup_err_grid:
            best = fit
        return fit

    lo, hit = -1, None
    for n in degree_schedule(L, R, dimension, eps_target, degree_cap, c1):
        fit = attempt(n)
        if fit.sup_err_grid <= accept:
            hit = fit
            break
        lo = n
    if hit is None:
        raise FitFailure(f"no fit within {accept:.4g} up to degree {degree_cap} at R={R:g} "
                         f"(best {best.sup_err_grid:.4g} at degree {best.ell1})",
                         dataclasses.replace(best, degrees_tried=tuple(tried)))
    if refine and lo >= 0:
        hi = hit.ell1
        while hi - lo > max(1, hi // 64):
            mid = (lo + hi) // 2
            fit = attempt(mid)
            if fit.sup_err_grid <= accept:
                hit, hi = fit, mid
            else:
                lo = mid
    log.debug("fit R=%g accepted degree %d after %d tries", R, hit.ell1, len(tried))
    return dataclasses.replace(hit, degrees_tried=tuple(tried))


# --- tail dominator ---

def log_growth_constant(p1: Polynomial, R: float) -> float:
    """
    log G with |p1(x)| <= G (2|x|/R)^l1 whenever |x| >= R.

    Chebyshev basis: per axis |T_m(t)| <= max(1, 2|t|)^m, so G is the sum of
    |coefficients| times max(1, R/box)^l1. Monomial basis: G = coefNorm (R/2)^l1.
    """
    if p1.is_zero:
        return -math.inf
    ell1 = p1.degree
    if p1.basis == CHEBYSHEV:
        log_a = float(logsumexp(np.log(np.abs(p1.values))))
        return log_a + ell1 * max(0.0, math.log(R / p1.box))
    return math.log(polycore.coef_norm(p1)) + ell1 * math.log(R / 2.0)


def _tail_rule_ok(ell2: int, ell1: int, log_eps: float, log_need: float) -> bool:
    return 2 * ell2 >= ell1 and log_eps + ell2 * math.log(4.0) >= log_need


def _log_need(p1: Polynomial, R: float) -> float:
    # eps 4^l2 >= (1 + G) 2^l1 gives eps u^(2 l2) >= 1 + G u^l1 for u = 2|x|/R >= 2
    return float(np.logaddexp(0.0, log_growth_constant(p1, R))) + p1.degree * math.log(2.0)


def tail_exponent(eps: float, R: float, p1: Polynomial) -> int:
    """Smallest l2 with 2 l2 >= l1 and eps 4^l2 >= (1 + G) 2^l1, G from log_growth_constant."""
    ell1 = p1.degree
    log_eps = math.log(eps)
    log_need = _log_need(p1, R)
    ell2 = max(0, (ell1 + 1) // 2, int(math.ceil((log_need - log_eps) / math.log(4.0) - 1e-12)))
    while ell2 > 0 and _tail_rule_ok(ell2 - 1, ell1, log_eps, log_need):
        ell2 -= 1
    while not _tail_rule_ok(ell2, ell1, log_eps, log_need):
        ell2 += 1
    return ell2


def tail_dominator(eps: float, R: float, p1: Polynomial) -> Tuple[Polynomial, int]:
    """p2 = eps (2|x|/R)^(2 l2) in the monomial basis, with l2 from tail_exponent."""
    if not eps > 0:
        raise ValueError(f"eps must be > 0, got {eps}")
    if not R >= 1:
        raise ValueError(f"R must be >= 1, got {R}")
    ell2 = tail_exponent(eps, R, p1)
    coefficient = math.exp(math.log(eps) + 2 * ell2 * math.log(2.0 / R))
    return polycore.radial_power(p1.dimension, ell2, coefficient), ell2


def p2_values(U: np.ndarray, eps: float, R: float, ell2: int) -> np.ndarray:
    if ell2 == 0:
        return np.full(len(U), float(eps))
    r = np.linalg.norm(U, axis=1)
    with np.errstate(divide="ignore", over="ignore"):
        return eps * np.exp(2 * ell2 * np.log(2.0 * r / R))


def log_p2(U: np.ndarray, eps: float, R: float, ell2: int) -> np.ndarray:
    r = np.linalg.norm(U, axis=1)
    with np.errstate(divide="ignore"):
        return math.log(eps) + 2 * ell2 * np.log(2.0 * r / R)


def log_chebyshev_bound(p: Polynomial, U: np.ndarray) -> np.ndarray:
    """log of sum |a_I| prod_j max(1, |t_j| + sqrt(t_j^2 - 1))^I_j >= log |p(U)|, t = U/R."""
    if p.is_zero:
        return np.full(len(U), -np.inf)
    t = np.abs(U / p.box)
    lg = np.where(t > 1.0, np.log(t + np.sqrt(np.maximum(t * t - 1.0, 0.0))), 0.0)
    return logsumexp(lg @ p.exponents.T + np.log(np.abs(p.values))[None, :], axis=1)


# --- certification report ---

@dataclass(frozen=True)
class CertificationReport:
    pointwise_violations: int
    violations: Mapping[str, int]
    sample_counts: Mapping[str, int]
    gap_norm: Estimate
    gap_norm_quadrature: Optional[float]
    tail_certificate: str
    declared_gap: float
    s: float
    seed: int

    @property
    def passed(self) -> bool:
        if self.pointwise_violations:
            return False
        if not self.gap_norm.upper <= self.declared_gap:
            return False
        if self.gap_norm_quadrature is not None and not self.gap_norm_quadrature <= self.declared_gap:
            return False
        return True

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"

    def to_record(self) -> dict:
        return {
            "verdict": self.verdict,
            "pointwise_violations": self.pointwise_violations,
            "violations": dict(self.violations),
            "sample_counts": dict(self.sample_counts),
            "gap_norm": self.gap_norm.to_record(),
            "gap_norm_quadrature": self.gap_norm_quadrature,
            "tail_certificate": self.tail_certificate,
            "declared_gap": self.declared_gap,
            "s": self.s,
            "seed": self.seed,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CertificationReport":
        g = rec["gap_norm"]
        return cls(int(rec["pointwise_violations"]), dict(rec["violations"]), dict(rec["sample_counts"]),
                   Estimate(g["value"], g["std_error"], g["n"], g.get("seed")),
                   rec.get("gap_norm_quadrature"), rec["tail_certificate"], float(rec["declared_gap"]),
                   float(rec["s"]), int(rec["seed"]))


# --- sandwich pair ---

@dataclass(frozen=True, eq=False)
class SandwichPair:
    p1_up: Polynomial
    p1_down: Polynomial
    eps: float
    s: float
    R: float
    ell1: int
    ell2: int
    B: float
    B_is_bound: bool = False
    W: Optional[np.ndarray] = None
    sup_err_up: float = 0.0
    sup_err_down: float = 0.0
    params: Mapping = field(default_factory=dict)
    report: Optional[CertificationReport] = None

    def __post_init__(self):
        if self.p1_up.degree != self.ell1 or self.p1_down.degree != self.ell1:
            raise ValueError("p1_up and p1_down must both have degree ell1")
        if not math.isfinite(self.B):
            raise ValueError(f"coefficient bound B must be finite, got {self.B}")
        if self.W is not None:
            W = polycore.check_orthonormal_rows(self.W)
            if W.shape[0] != self.p1_up.dimension:
                raise ValueError(f"W has {W.shape[0]} rows, base dimension is {self.p1_up.dimension}")
            W = W.copy()
            W.flags.writeable = False
            object.__setattr__(self, "W", W)

    @property
    def base_dimension(self) -> int:
        return self.p1_up.dimension

    @property
    def dimension(self) -> int:
        return self.W.shape[1] if self.W is not None else self.base_dimension

    @property
    def degree(self) -> int:
        return max(self.ell1, 2 * self.ell2)

    @property
    def declared_gap(self) -> float:
        return DECLARED_FACTOR * self.eps

    def project(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W.T if self.W is not None else X

    # --- evaluation in base coordinates ---
    def _dominated(self, U: np.ndarray, p1: Polynomial, sign: float) -> np.ndarray:
        ok = log_p2(U, self.eps, self.R, self.ell2) >= np.logaddexp(0.0, log_chebyshev_bound(p1, U))
        return np.where(ok, sign * np.inf, np.nan)

    def _eval_base(self, U: np.ndarray, p1: Polynomial, sign: float) -> np.ndarray:
        with np.errstate(over="ignore", invalid="ignore"):
            v = polycore.evaluate_many(p1, U) + sign * (p2_values(U, self.eps, self.R, self.ell2) + self.eps)
        bad = ~np.isfinite(v)
        if bad.any():
            v[bad] = self._dominated(U[bad], p1, sign)
        return v

    def eval_up_base(self, U: np.ndarray) -> np.ndarray:
        return self._eval_base(U, self.p1_up, 1.0)

    def eval_down_base(self, U: np.ndarray) -> np.ndarray:
        return self._eval_base(U, self.p1_down, -1.0)

    def eval_up_many(self, X: np.ndarray) -> np.ndarray:
        X, _ = as_points(X, self.dimension)
        return self.eval_up_base(self.project(X))

    def eval_down_many(self, X: np.ndarray) -> np.ndarray:
        X, _ = as_points(X, self.dimension)
        return self.eval_down_base(self.project(X))

    def eval_up(self, x) -> float:
        return float(self.eval_up_many(np.asarray(x, dtype=float)[None, :])[0])

    def eval_down(self, x) -> float:
        return float(self.eval_down_many(np.asarray(x, dtype=float)[None, :])[0])

    # --- monomial forms ---
    @cached_property
    def p2(self) -> Polynomial:
        coefficient = math.exp(math.log(self.eps) + 2 * self.ell2 * math.log(2.0 / self.R))
        return polycore.radial_power(self.base_dimension, self.ell2, coefficient)

    @cached_property
    def p_up_base(self) -> Polynomial:
        q = polycore.add_constant(polycore.to_monomial(self.p1_up), self.eps)
        return polycore.add(q, self.p2)

    @cached_property
    def p_down_base(self) -> Polynomial:
        q = polycore.add_constant(polycore.to_monomial(self.p1_down), -self.eps)
        return polycore.subtract(q, self.p2)

    def _lifted(self, p: Polynomial) -> Polynomial:
        if self.W is None:
            return p
        n = polycore.composed_term_count(p.degree, self.dimension)
        if n > LIFT_EXACT_TERMS:
            raise ValueError(f"lifted monomial form would have up to {n} terms; evaluate through the base pair")
        return polycore.compose_with_linear_map(p, self.W)

    @cached_property
    def p_up(self) -> Polynomial:
        return self._lifted(self.p_up_base)

    @cached_property
    def p_down(self) -> Polynomial:
        return self._lifted(self.p_down_base)

    def with_report(self, report: CertificationReport) -> "SandwichPair":
        return dataclasses.replace(self, report=report)

    def to_record(self) -> dict:
        return {
            "kind": "sandwich_pair",
            "eps": self.eps,
            "s": self.s,
            "R": self.R,
            "ell1": self.ell1,
            "ell2": self.ell2,
            "degree": self.degree,
            "B": self.B,
            "B_is_bound": self.B_is_bound,
            "W": self.W.tolist() if self.W is not None else None,
            "sup_err_up": self.sup_err_up,
            "sup_err_down": self.sup_err_down,
            "params": dict(self.params),
            "p1_up": polycore.to_record(self.p1_up),
            "p1_down": polycore.to_record(self.p1_down),
            "report": self.report.to_record() if self.report is not None else None,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "SandwichPair":
        if rec.get("kind") != "sandwich_pair":
            raise ValueError(f"not a sandwich pair record (kind={rec.get('kind')!r})")
        try:
            report = rec.get("report")
            return cls(polycore.from_record(rec["p1_up"]), polycore.from_record(rec["p1_down"]),
                       float(rec["eps"]), float(rec["s"]), float(rec["R"]), int(rec["ell1"]), int(rec["ell2"]),
                       float(rec["B"]), bool(rec.get("B_is_bound", False)),
                       np.asarray(rec["W"], dtype=float) if rec.get("W") is not None else None,
                       float(rec.get("sup_err_up", 0.0)), float(rec.get("sup_err_down", 0.0)),
                       dict(rec.get("params", {})),
                       CertificationReport.from_record(report) if report else None)
        except KeyError as e:
            raise ValueError(f"sandwich pair record is missing field {e}") from e


def coefficient_bound(p_up: Polynomial, p_down: Polynomial, W: Optional[np.ndarray]) -> Tuple[float, bool]:
    """B = coefNorm(p_up o W) + coefNorm(p_down o W); exact when the composition is small enough."""
    if W is None:
        return polycore.coef_norm(p_up) + polycore.coef_norm(p_down), False
    d = W.shape[1]
    if max(polycore.composed_term_count(p.degree, d) for p in (p_up, p_down)) <= LIFT_EXACT_TERMS:
        return (polycore.coef_norm(polycore.compose_with_linear_map(p_up, W))
                + polycore.coef_norm(polycore.compose_with_linear_map(p_down, W))), False
    log.warning("lifted coefficient norm replaced by the row-norm bound (degree %d, d=%d)",
                max(p_up.degree, p_down.degree), d)
    return polycore.lifted_coef_bound(p_up, W) + polycore.lifted_coef_bound(p_down, W), True


def tail_conditions_hold(pair: SandwichPair) -> bool:
    """The l2 rule re-checked on the stored pair; it gives p2 >= 1 + |p1| on |x| >= R."""
    log_eps = math.log(pair.eps)
    return all(_tail_rule_ok(pair.ell2, pair.ell1, log_eps, _log_need(p1, pair.R))
               for p1 in (pair.p1_up, pair.p1_down))


# --- base-coordinate measure for the radius rule ---

class _BaseMeasure:
    """Law of W x (or x) for the radius rule; Gaussian marginals are exact."""

    def __init__(self, dist: DistributionSpec, W: Optional[np.ndarray], n: int, seed: int):
        self.dist = dist
        self.W = W
        self.k = W.shape[0] if W is not None else dist.dimension
        self.exact = dist.family == GAUSSIAN
        self.law = dist.marginal(self.k) if self.exact else dist
        U = self.law.sample(chunk_rng(seed, STREAM_RADIUS, 0), n)
        self.U = U @ W.T if (W is not None and not self.exact) else U

    def tail_prob(self, r: float) -> float:
        if self.exact:
            return tail_mass_analytic(self.law, r)
        n = len(self.U)
        hits = int((np.linalg.norm(self.U, axis=1) > r).sum())
        p = hits / n
        return min(1.0, max(p + 3.0 * math.sqrt(p * (1 - p) / n), 3.0 / n))

    def log_tail_moment(self, q: float, r: float) -> float:
        # |W x| <= |x|, so full-dimensional bounds also bound the projected law
        return self.law.log_tail_norm_moment(q, r)


def outer_contribution(pair: SandwichPair, measure: _BaseMeasure) -> Dict[str, float]:
    """Bound on |(p_up - p_down) 1{|x| > R/2}|_{D,s} split into its p1, p2 and constant parts."""
    s, eps, r = pair.s, pair.eps, pair.R / 2.0
    P = measure.tail_prob(r)
    with np.errstate(over="ignore", invalid="ignore"):
        diff = polycore.evaluate_many(pair.p1_up, measure.U) - polycore.evaluate_many(pair.p1_down, measure.U)
    if np.all(np.isfinite(diff)):
        est = ls_norm_from_values(diff, 2.0 * s)
        p1_part = P ** (1.0 / (2.0 * s)) * (est.value + 3.0 * est.std_error)
    else:
        p1_part = math.inf
    log_p2_part = (math.log(2.0 * eps) + 2 * pair.ell2 * math.log(2.0 / pair.R)
                   + measure.log_tail_moment(2.0 * pair.ell2 * s, r) / s)
    p2_part = math.exp(log_p2_part) if log_p2_part < 700 else math.inf
    const = 2.0 * eps * P ** (1.0 / s)
    return {"R": pair.R, "tail": P, "p1": p1_part, "p2": p2_part, "const": const,
            "total": p1_part + p2_part + const}


# --- assembly ---

def closed_form_radius(L: float, s: float, eps: float, gamma: float, d: int) -> float:
    return (L * s / eps) ** (1.0 / gamma) * d ** (0.5 + 1.5 / gamma)


def _fit_pair(ls: LipschitzSandwich, k: int, R: float, eps: float, fit_target: float,
              degree_cap: int, c1: float) -> SandwichPair:
    up = fit_uniform_approx(ls.f_up_many, ls.L, k, R, fit_target, degree_cap, c1)
    down = fit_uniform_approx(ls.f_down_many, ls.L, k, R, fit_target, degree_cap, c1)
    ell1 = max(up.ell1, down.ell1)
    p1_up = Polynomial(k, up.p1.coeffs, ell1, CHEBYSHEV, R)
    p1_down = Polynomial(k, down.p1.coeffs, ell1, CHEBYSHEV, R)
    ell2 = max(tail_exponent(eps, R, p1_up), tail_exponent(eps, R, p1_down))
    params = dict(ls.describe())
    params.update({"grid_spacing": up.grid_spacing, "grid_resolved": up.grid_resolved and down.grid_resolved,
                   "fit_target": fit_target, "degrees_tried": [list(up.degrees_tried), list(down.degrees_tried)]})
    pair = SandwichPair(p1_up, p1_down, eps, ls.s, float(R), ell1, ell2, 0.0, False, None,
                        up.sup_err_grid, down.sup_err_grid, params)
    try:
        B, _ = coefficient_bound(pair.p_up_base, pair.p_down_base, None)
    except ValueError as e:
        # monomial coefficients of T_n(x/R) grow like exp(n/R)
        raise FitFailure(f"monomial form of the degree-{ell1} fit at R={R:g} overflows: {e}") from e
    return dataclasses.replace(pair, B=B)


def assemble_sandwich(c: Concept, sigma: float, eps: float, s: float, dist: DistributionSpec,
                      radius: Union[str, float] = "auto", degree_cap: int = 4096, c1: float = 0.1,
                      radius_cap: float = 256, variant: str = TWO_DISTANCE, fit_ratio: float = 1.0,
                      n_tail: int = 20_000, seed: int = 0) -> SandwichPair:
    """
    Lipschitz sandwich -> Chebyshev fits of f_up, f_down at target fit_ratio*eps ->
    tail dominator. With radius="auto", R runs through 1, 2, 4, ... and the first R
    whose outer contribution is <= eps is kept; FitFailure (with the radius trace)
    when no R up to radius_cap qualifies.
    """
    if c.dimension != dist.dimension:
        raise ValueError(f"concept dimension {c.dimension} != distribution dimension {dist.dimension}")
    if not 0 < fit_ratio <= 1:
        raise ValueError(f"fit_ratio must lie in (0, 1], got {fit_ratio}")
    base, W = (c.base, c.W) if isinstance(c, LiftedConcept) else (c, None)
    k = base.dimension
    if k > MAX_FIT_DIMENSION:
        raise ValueError(f"intrinsic dimension {k} exceeds {MAX_FIT_DIMENSION}; lift a lower-dimensional concept")
    ls = build_lipschitz_sandwich(base, sigma, eps, s, variant)
    fit_target = fit_ratio * eps
    log.info("closed-form radius R* = %.4g (L=%.4g, rho=%.4g)",
             closed_form_radius(ls.L, s, eps, dist.gamma, dist.dimension), ls.L, ls.rho)

    trace: List[dict] = []
    if radius != "auto":
        pair = _fit_pair(ls, k, float(radius), eps, fit_target, degree_cap, c1)
    else:
        measure = _BaseMeasure(dist, W, n_tail, seed)
        pair = None
        R = 1.0
        while R <= radius_cap:
            P = measure.tail_prob(R / 2.0)
            if 2.0 * eps * P ** (1.0 / s) > eps:
                trace.append({"R": R, "tail": P, "total": math.inf})
                R *= 2.0
                continue
            try:
                candidate = _fit_pair(ls, k, R, eps, fit_target, degree_cap, c1)
            except FitFailure as e:
                trace.append({"R": R, "tail": P, "total": math.inf, "fit_failure": str(e)})
                e.trace = trace
                raise
            contrib = outer_contribution(candidate, measure)
            contrib["degree"] = candidate.degree
            trace.append(contrib)
            log.debug("radius rule R=%g: %s", R, contrib)
            if contrib["total"] <= eps:
                pair = candidate
                break
            R *= 2.0
        if pair is None:
            worst = min((t["total"] for t in trace), default=math.inf)
            raise FitFailure(f"radius rule found no R <= {radius_cap:g} with outer contribution <= {eps:g} "
                             f"(smallest {worst:.4g})", trace=trace)
        log.info("radius rule kept R=%g (outer contribution %.4g)", pair.R, trace[-1]["total"])
    params = dict(pair.params)
    params["radius_trace"] = trace
    pair = dataclasses.replace(pair, params=params)
    log.info("assembled pair: R=%g l1=%d l2=%d degree=%d B=%.4g", pair.R, pair.ell1, pair.ell2,
             pair.degree, pair.B)
    if W is not None:
        pair = lift_sandwich(pair, W)
    return pair


def lift_sandwich(pair: SandwichPair, W) -> SandwichPair:
    """Pair over R^d evaluating the base pair at W x; degrees unchanged, B recomputed."""
    W = polycore.check_orthonormal_rows(W)
    if W.shape[0] != pair.dimension:
        raise ValueError(f"W has {W.shape[0]} rows but the pair has dimension {pair.dimension}")
    new_W = W if pair.W is None else pair.W @ W
    B, is_bound = coefficient_bound(pair.p_up_base, pair.p_down_base, new_W)
    return dataclasses.replace(pair, W=new_W, B=B, B_is_bound=is_bound, report=None)


# --- certification ---

def _violations(pair: SandwichPair, c: Concept, X: np.ndarray) -> int:
    if not len(X):
        return 0
    f = c.eval_many(X)
    up = pair.eval_up_many(X)
    down = pair.eval_down_many(X)
    ok = (down <= f + VIOLATION_SLACK) & (up >= f - VIOLATION_SLACK)
    return int((~ok).sum())


def _embed(pair: SandwichPair, U: np.ndarray, rng: Optional[np.random.Generator]) -> np.ndarray:
    if pair.W is None:
        return U
    X = U @ pair.W
    if rng is not None:
        Z = rng.standard_normal(X.shape)
        X += Z - (Z @ pair.W.T) @ pair.W
    return X


def shell_points(pair: SandwichPair, rng: np.random.Generator, n: int) -> np.ndarray:
    """Points with |W x| uniform in [R, 3R]."""
    U = rng.standard_normal((n, pair.base_dimension))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    U *= rng.uniform(pair.R, 3.0 * pair.R, size=n)[:, None]
    return _embed(pair, U, rng)


def ball_grid(pair: SandwichPair, per_axis: int) -> np.ndarray:
    k = pair.base_dimension
    per_axis = max(2, min(int(per_axis), int(GRID_CAP ** (1.0 / k))))
    U = _tensor_points([np.linspace(-pair.R, pair.R, per_axis)] * k)
    U = U[np.linalg.norm(U, axis=1) <= pair.R]
    return _embed(pair, U, None)


def certify_sandwich(pair: SandwichPair, c: Concept, dist: DistributionSpec, n_gauss: int = 100_000,
                     n_boundary: int = 10_000, n_shell: int = 10_000, grid_in_ball: int = 41,
                     seed: int = 0, threads: int = 1, quad_order: int = 64) -> CertificationReport:
    """Pointwise checks on four sample sets plus the L_s gap by Monte Carlo (and quadrature)."""
    if not (c.dimension == pair.dimension == dist.dimension):
        raise ValueError(f"dimensions differ: concept {c.dimension}, pair {pair.dimension}, "
                         f"distribution {dist.dimension}")
    s = pair.s
    rho = float(pair.params.get("rho", pair.eps))
    offsets = [rho / 4.0, rho / 2.0, rho, 2.0 * rho]

    def gauss_chunk(rng, size):
        X = dist.sample(rng, size)
        f = c.eval_many(X)
        up = pair.eval_up_many(X)
        down = pair.eval_down_many(X)
        ok = (down <= f + VIOLATION_SLACK) & (up >= f - VIOLATION_SLACK)
        with np.errstate(invalid="ignore", over="ignore"):
            a = np.abs(up - down) ** s
        return int((~ok).sum()), float(a.sum()), float((a * a).sum())

    parts = map_chunks(gauss_chunk, n_gauss, seed, STREAM_GAUSS, threads)
    gap = power_estimate(mean_estimate([p[1] for p in parts], [p[2] for p in parts], n_gauss, seed), s)
    violations = {"gaussian": sum(p[0] for p in parts)}

    boundary = c.boundary_points(chunk_rng(seed, STREAM_BOUNDARY, 0), n_boundary, offsets)
    violations["boundary"] = _violations(pair, c, boundary)
    shell = shell_points(pair, chunk_rng(seed, STREAM_SHELL, 0), n_shell)
    violations["shell"] = _violations(pair, c, shell)
    grid = ball_grid(pair, grid_in_ball)
    violations["grid"] = _violations(pair, c, grid)
    counts = {"gaussian": int(n_gauss), "boundary": len(boundary), "shell": len(shell), "grid": len(grid)}

    quad = None
    if dist.family == GAUSSIAN and pair.base_dimension <= 3 and quad_order > 0:
        U, w = dist.marginal(pair.base_dimension).tensor_quadrature(quad_order)
        X = _embed(pair, U, None)
        with np.errstate(invalid="ignore", over="ignore"):
            a = np.abs(pair.eval_up_many(X) - pair.eval_down_many(X)) ** s
        quad = float(math.fsum(w * a)) ** (1.0 / s)

    tail = TAIL_ANALYTIC if tail_conditions_hold(pair) else TAIL_EMPIRICAL
    report = CertificationReport(sum(violations.values()), violations, counts, gap, quad, tail,
                                 pair.declared_gap, s, int(seed))
    log.info("certification %s: violations=%s gap=%.4g+-%.2g (declared %.4g) tail=%s", report.verdict,
             violations, gap.value, gap.std_error, pair.declared_gap, tail)
    return report
