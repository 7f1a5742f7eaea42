# oracle.py
"""
Grid-discretized comparisons for the sandwich construction:
  - the LP-optimal sandwich pair of a given degree on a grid measure,
  - Gauss-Hermite moment-matched distributions,
  - worst-case moment-matching adversaries (the LP dual of the sandwich),
  - the fooling certificate |E_D f - E_D' f| <= gap + Delta * B.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import polynomial as npmono
from scipy.optimize import linprog

import polycore
from polycore import CHEBYSHEV, MONOMIAL, Polynomial
from concepts import Concept
from measures import GAUSSIAN, DistributionSpec, Estimate, gaussian_moment, map_chunks, mean_estimate

log = logging.getLogger("sandwich.oracle")

HIGHS_METHODS = ("highs", "highs-ipm", "highs-ds")
LP_OPTIONS = {"primal_feasibility_tolerance": 1e-9, "dual_feasibility_tolerance": 1e-9}
WEIGHT_TOL = 1e-12
PROB_TOL = 1e-9
MOMENT_TOL = 1e-10
MOMENT_CHECK_MAX = 40
STREAM_FOOL = 21
FOOL_ATOL = 1e-7


class LPSolveError(RuntimeError):
    def __init__(self, label: str, status: int, message: str):
        super().__init__(f"{label}: HiGHS failed with status {status}: {message}")
        self.status = status
        self.message = message


def safe_solve(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=(None, None), label: str = "lp"):
    """
    linprog with HiGHS; a failed solve is retried with the next HiGHS method.
    Returns the OptimizeResult or raises LPSolveError.
    """
    status, message = -1, "not attempted"
    for method in HIGHS_METHODS:
        try:
            res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                          method=method, options=LP_OPTIONS)
        except (ValueError, RuntimeError) as e:
            log.warning("%s: %s raised %s, trying next method", label, method, e)
            status, message = -1, str(e)
            continue
        if res.status == 0:
            return res
        status, message = res.status, res.message
        log.warning("%s: %s returned status %d (%s), trying next method", label, method, res.status, res.message)
    raise LPSolveError(label, status, message)


# --- measures on grids ---

@dataclass(frozen=True, eq=False)
class GridMeasure:
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(P) == 0 or len(P) != len(w):
            raise ValueError(f"grid needs matching non-empty points/weights, got {len(P)} and {len(w)}")
        if np.any(w < 0):
            raise ValueError("grid weights must be non-negative")
        if abs(math.fsum(w) - 1.0) > WEIGHT_TOL:
            raise ValueError(f"grid weights sum to {math.fsum(w)!r}, expected 1")
        if len(np.unique(P, axis=0)) != len(P):
            raise ValueError("grid points must be distinct")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "weights", w)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def half_width(self) -> float:
        h = float(np.max(np.abs(self.points)))
        return h if h > 0 else 1.0

    def expectation(self, values) -> float:
        return math.fsum(self.weights * np.asarray(values, dtype=float))

    def with_points(self, extra) -> "GridMeasure":
        """Adds zero-weight points (constraints only); duplicates of existing points are dropped."""
        extra = np.atleast_2d(np.asarray(extra, dtype=float))
        if extra.size == 0:
            return self
        known = {tuple(p) for p in self.points}
        fresh = []
        for p in extra:
            key = tuple(p)
            if key not in known:
                known.add(key)
                fresh.append(p)
        if not fresh:
            return self
        return GridMeasure(np.vstack([self.points, np.array(fresh)]),
                           np.concatenate([self.weights, np.zeros(len(fresh))]))


def gauss_hermite_grid(dimension: int, nodes: int) -> GridMeasure:
    points, w = DistributionSpec(dimension).tensor_quadrature(nodes)
    return GridMeasure(points, w / math.fsum(w))


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    points: np.ndarray
    probs: np.ndarray
    order: int
    delta: float = 0.0

    def __post_init__(self):
        P = np.atleast_2d(np.asarray(self.points, dtype=float))
        q = np.asarray(self.probs, dtype=float).reshape(-1)
        if len(P) != len(q) or len(q) == 0:
            raise ValueError("support points and probabilities must match and be non-empty")
        if np.any(q < -PROB_TOL):
            raise ValueError("probabilities must be non-negative")
        q = np.clip(q, 0.0, None)
        if abs(q.sum() - 1.0) > PROB_TOL:
            raise ValueError(f"probabilities sum to {q.sum()!r}, expected 1")
        if self.order < 0 or not self.delta >= 0:
            raise ValueError(f"bad moment-match declaration (order={self.order}, delta={self.delta})")
        object.__setattr__(self, "points", P)
        object.__setattr__(self, "probs", q / q.sum())

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    def expectation(self, values) -> float:
        return math.fsum(self.probs * np.asarray(values, dtype=float))

    def moment(self, alpha: Sequence[int]) -> float:
        return self.expectation(np.prod(self.points ** np.asarray(alpha, dtype=float), axis=1))

    def moment_residual(self, target: Callable[[Sequence[int]], float], max_order: Optional[int] = None) -> float:
        """max over |alpha| <= order of |E[x^alpha] - target(alpha)| / max(1, |target|)."""
        top = self.order if max_order is None else min(self.order, max_order)
        worst = 0.0
        for alpha in polycore.multi_indices(self.dimension, top):
            m = target(alpha)
            worst = max(worst, abs(self.moment(alpha) - m) / max(1.0, abs(m)))
        return worst

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(self.points, columns=[f"x{j + 1}" for j in range(self.dimension)])
        df["prob"] = self.probs
        return df


def moment_matched_quadrature(dist: DistributionSpec, ell: int) -> DiscreteDistribution:
    """Tensor Gauss-Hermite rule with ceil((ell+1)/2) nodes per axis; exact Gaussian moments to degree ell."""
    if dist.family != GAUSSIAN:
        raise ValueError("moment-matched quadrature is built for the Gaussian family")
    if dist.dimension > 3:
        raise ValueError(f"tensor quadrature needs dimension <= 3, got {dist.dimension}")
    if ell < 0:
        raise ValueError(f"order must be >= 0, got {ell}")
    n = max(1, int(math.ceil((ell + 1) / 2)))
    points, w = dist.tensor_quadrature(n)
    dd = DiscreteDistribution(points, w / math.fsum(w), int(ell), 0.0)
    checked = min(int(ell), MOMENT_CHECK_MAX)
    residual = dd.moment_residual(gaussian_moment, checked)
    if residual > MOMENT_TOL:
        raise RuntimeError(f"Gauss-Hermite moment residual {residual:.3e} exceeds {MOMENT_TOL:g} "
                           f"(moments checked up to order {checked})")
    if checked < ell:
        log.info("moment-matched rule: declared order %d, moments checked up to order %d (%d nodes per axis, "
                 "residual %.2e)", ell, checked, n, residual)
    else:
        log.debug("moment-matched rule: order %d checked in full, %d nodes per axis, residual %.2e", ell, n, residual)
    return dd


# --- LP sandwich ---

def basis_matrix(X: np.ndarray, degree: int, basis: str = CHEBYSHEV,
                 box: float = 1.0) -> Tuple[np.ndarray, List[Tuple[int, ...]]]:
    """Columns = basis functions of total degree <= degree evaluated at the rows of X."""
    idx = polycore.multi_indices(X.shape[1], degree)
    E = np.array(idx, dtype=int)
    vander = npcheb.chebvander if basis == CHEBYSHEV else npmono.polyvander
    T = X / box if basis == CHEBYSHEV else X
    V = np.ones((len(X), len(idx)))
    for j in range(X.shape[1]):
        V *= vander(T[:, j], degree)[:, E[:, j]]
    return V, idx


@dataclass(frozen=True, eq=False)
class LPSandwich:
    p_up: Polynomial
    p_down: Polynomial
    gap: float
    upper_excess: float
    lower_excess: float
    degree: int
    coef_norm_up: float
    coef_norm_down: float

    @property
    def B(self) -> float:
        return self.coef_norm_up + self.coef_norm_down

    @property
    def dimension(self) -> int:
        return self.p_up.dimension

    def eval_up_many(self, X) -> np.ndarray:
        return polycore.evaluate_many(self.p_up, X)

    def eval_down_many(self, X) -> np.ndarray:
        return polycore.evaluate_many(self.p_down, X)


def _f_on(grid: GridMeasure, f_values) -> np.ndarray:
    f = np.asarray(f_values, dtype=float).reshape(-1)
    if len(f) != grid.size:
        raise ValueError(f"{len(f)} function values for a grid of {grid.size} points")
    return f


def lp_optimal_sandwich(f_values, grid: GridMeasure, degree: int, basis: str = CHEBYSHEV,
                        coef_penalty: float = 0.0) -> LPSandwich:
    """
    min sum_i w_i (p_up - p_down)(x_i) s.t. p_down <= f <= p_up on the grid, deg <= degree.
    The objective separates, so p_up and p_down are two LPs. With coef_penalty > 0 the
    monomial coefficients are penalized by coef_penalty * sum |a|.
    """
    f = _f_on(grid, f_values)
    if degree < 0:
        raise ValueError(f"degree must be >= 0, got {degree}")
    if coef_penalty < 0:
        raise ValueError(f"coef_penalty must be >= 0, got {coef_penalty}")
    use = MONOMIAL if coef_penalty > 0 else basis
    box = grid.half_width if use == CHEBYSHEV else 1.0
    V, idx = basis_matrix(grid.points, degree, use, box)
    M = V.shape[1]
    obj = V.T @ grid.weights

    if coef_penalty > 0:
        I = np.eye(M)
        Z = np.zeros((len(f), M))
        abs_rows = np.vstack([np.hstack([I, -I]), np.hstack([-I, -I])])
        bounds = [(None, None)] * M + [(0, None)] * M
        pen = coef_penalty * np.ones(M)
        up = safe_solve(np.concatenate([obj, pen]), np.vstack([np.hstack([-V, Z]), abs_rows]),
                        np.concatenate([-f, np.zeros(2 * M)]), bounds=bounds, label=f"lp-up deg {degree}")
        down = safe_solve(np.concatenate([-obj, pen]), np.vstack([np.hstack([V, Z]), abs_rows]),
                          np.concatenate([f, np.zeros(2 * M)]), bounds=bounds, label=f"lp-down deg {degree}")
    else:
        up = safe_solve(obj, -V, -f, label=f"lp-up deg {degree}")
        down = safe_solve(-obj, V, f, label=f"lp-down deg {degree}")
    a, b = up.x[:M], down.x[:M]
    upper = grid.expectation(V @ a - f)
    lower = grid.expectation(f - V @ b)
    kw = {"box": box} if use == CHEBYSHEV else {}
    p_up = Polynomial.from_terms(grid.dimension, zip(idx, a), use, degree=degree, **kw)
    p_down = Polynomial.from_terms(grid.dimension, zip(idx, b), use, degree=degree, **kw)
    out = LPSandwich(p_up, p_down, upper + lower, upper, lower, int(degree),
                     polycore.coef_norm(p_up), polycore.coef_norm(p_down))
    log.debug("lp sandwich degree %d: gap %.6g (upper %.6g, lower %.6g)", degree, out.gap, upper, lower)
    return out


def lp_degree_scan(f_values, grid: GridMeasure, degrees: Sequence[int], coef_penalty: float = 0.0,
                   threads: int = 1) -> List[LPSandwich]:
    def run(deg):
        return lp_optimal_sandwich(f_values, grid, int(deg), coef_penalty=coef_penalty)

    if threads <= 1:
        return [run(d) for d in degrees]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, degrees))


def grid_gap(pair, grid: GridMeasure) -> float:
    """sum_i w_i |p_up - p_down|(x_i) for any pair exposing eval_up_many / eval_down_many."""
    with np.errstate(over="ignore", invalid="ignore"):
        return grid.expectation(np.abs(pair.eval_up_many(grid.points) - pair.eval_down_many(grid.points)))


# --- fooling adversaries ---

@dataclass(frozen=True, eq=False)
class FoolingLP:
    adversary: DiscreteDistribution
    adversary_down: DiscreteDistribution
    deviation_up: float
    deviation_down: float
    degree: int
    delta: float


def _distribution_from(grid: GridMeasure, x: np.ndarray, degree: int, delta: float) -> DiscreteDistribution:
    q = np.clip(x, 0.0, None)
    q = q / q.sum()
    keep = q > 0
    return DiscreteDistribution(grid.points[keep], q[keep], degree, delta)


def worst_case_fooling_lp(f_values, grid: GridMeasure, degree: int, delta: float = 0.0) -> FoolingLP:
    """
    max / min of sum_i q_i f(x_i) over probability vectors q on the grid whose moments of
    total degree <= degree stay within delta of the grid's own moments.
    """
    f = _f_on(grid, f_values)
    if degree < 0 or not delta >= 0:
        raise ValueError(f"need degree >= 0 and delta >= 0, got {degree}, {delta}")
    N = grid.size
    A_ub = b_ub = None
    if delta == 0:
        # Chebyshev moments of the node box span the same constraints as monomial moments
        V, _ = basis_matrix(grid.points, degree, CHEBYSHEV, grid.half_width)
        A_eq, b_eq = V.T, V.T @ grid.weights
    else:
        A_eq, b_eq = np.ones((1, N)), np.ones(1)
        if math.isfinite(delta) and degree >= 1:
            V, _ = basis_matrix(grid.points, degree, MONOMIAL)
            A = V[:, 1:].T
            m = A @ grid.weights
            scale = np.maximum(1.0, np.max(np.abs(A), axis=1))
            A_s = A / scale[:, None]
            A_ub = np.vstack([A_s, -A_s])
            b_ub = np.concatenate([(m + delta) / scale, (delta - m) / scale])
    label = f"fooling deg {degree} delta {delta:g}"
    up = safe_solve(-f, A_ub, b_ub, A_eq, b_eq, bounds=(0, None), label=label + " up")
    down = safe_solve(f, A_ub, b_ub, A_eq, b_eq, bounds=(0, None), label=label + " down")
    base = grid.expectation(f)
    adv_up = _distribution_from(grid, up.x, degree, delta)
    adv_down = _distribution_from(grid, down.x, degree, delta)
    dev_up = float(f @ up.x) - base
    dev_down = base - float(f @ down.x)
    log.debug("%s: deviation up %.6g down %.6g", label, dev_up, dev_down)
    return FoolingLP(adv_up, adv_down, dev_up, dev_down, int(degree), float(delta))


# --- fooling certificate ---

@dataclass(frozen=True)
class FoolingReport:
    expectation_reference: Estimate
    expectation_dprime: float
    deviation: float
    gap_l1: Estimate
    delta: float
    B: float
    bound: float
    holds: bool
    converse_B: Optional[float]

    def to_record(self) -> dict:
        return {
            "expectation_reference": self.expectation_reference.to_record(),
            "expectation_dprime": self.expectation_dprime,
            "deviation": self.deviation,
            "gap_l1": self.gap_l1.to_record(),
            "delta": self.delta,
            "B": self.B,
            "bound": self.bound,
            "holds": self.holds,
            "converse_B": self.converse_B,
        }


def fooling_check(c: Concept, pair, dprime: DiscreteDistribution,
                  reference: Union[DistributionSpec, GridMeasure], n: int = 100_000, seed: int = 0,
                  threads: int = 1) -> FoolingReport:
    """
    |E_ref f - E_D' f| against L1 gap + Delta * B + 3 std errors. `pair` is a
    SandwichPair or an LPSandwich.
    """
    if dprime.order < pair.degree:
        raise ValueError(f"D' matches moments only up to order {dprime.order}, but the pair has degree "
                         f"{pair.degree}; the certificate needs order >= degree")
    if not (c.dimension == pair.dimension == dprime.dimension):
        raise ValueError(f"dimensions differ: concept {c.dimension}, pair {pair.dimension}, D' {dprime.dimension}")
    e_dp = dprime.expectation(c.eval_many(dprime.points))

    if isinstance(reference, GridMeasure):
        if reference.dimension != c.dimension:
            raise ValueError("reference grid dimension does not match the concept")
        pts = reference.points
        e_ref = Estimate(reference.expectation(c.eval_many(pts)), 0.0, reference.size)
        gap = Estimate(grid_gap(pair, reference), 0.0, reference.size)
    else:
        if reference.dimension != c.dimension:
            raise ValueError("reference distribution dimension does not match the concept")

        def chunk(rng, size):
            X = reference.sample(rng, size)
            f = c.eval_many(X).astype(float)
            with np.errstate(over="ignore", invalid="ignore"):
                g = np.abs(pair.eval_up_many(X) - pair.eval_down_many(X))
            return float(f.sum()), float((f * f).sum()), float(g.sum()), float((g * g).sum())

        parts = map_chunks(chunk, n, seed, STREAM_FOOL, threads)
        e_ref = mean_estimate([p[0] for p in parts], [p[1] for p in parts], n, seed)
        gap = mean_estimate([p[2] for p in parts], [p[3] for p in parts], n, seed)

    deviation = abs(e_ref.value - e_dp)
    se = math.sqrt(e_ref.std_error ** 2 + gap.std_error ** 2)
    slack = dprime.delta * pair.B if dprime.delta > 0 else 0.0
    bound = gap.value + slack + 3.0 * se
    converse = 2.0 * deviation / dprime.delta if dprime.delta > 0 else None
    report = FoolingReport(e_ref, e_dp, deviation, gap, dprime.delta, pair.B, bound,
                           bool(deviation <= bound + FOOL_ATOL), converse)
    log.info("fooling check: |E f - E' f| = %.5g vs bound %.5g (gap %.5g, delta*B %.3g) holds=%s",
             deviation, bound, gap.value, slack, report.holds)
    return report
