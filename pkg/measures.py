# measures.py
"""
Target distributions and the Monte-Carlo / quadrature estimators built on them:
L_s norms, boundary-smoothness profiles, slack-band surface-area estimates,
the composition and anticoncentration checks, and radius tail masses.

Randomness: every estimator splits its sample budget into fixed chunks;
chunk i of stream t draws from SeedSequence(seed, spawn_key=(t, i)), so the
result depends on the seed only, never on the number of worker threads.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import stats
from scipy.special import gammaincc, gammaln, roots_hermitenorm

import concepts
from concepts import Concept

log = logging.getLogger("sandwich.measures")

GAUSSIAN = "gaussian"
GENERALIZED = "generalized_gaussian"
FAMILIES = (GAUSSIAN, GENERALIZED)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)
Z99 = float(stats.norm.ppf(0.995))
CHUNK = 1 << 14

# sample streams; one per estimator so estimators sharing a seed stay independent
STREAM_LS = 1
STREAM_SMOOTH = 2
STREAM_GSA = 3
STREAM_COMPOSE = 4
STREAM_ANTI = 5
STREAM_ANTI_DIRS = 6
STREAM_TAIL = 7

TAIL_CHECK_SE = 4.0


# --- chunked seeded sampling ---

def chunk_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(index))))


def chunk_sizes(n: int, chunk: int = CHUNK) -> List[int]:
    return [min(chunk, n - a) for a in range(0, int(n), chunk)]


def map_chunks(fn: Callable[[np.random.Generator, int], object], n: int, seed: int, stream: int,
               threads: int = 1, chunk: int = CHUNK) -> list:
    """fn(rng, size) per chunk; results come back in chunk order."""
    sizes = chunk_sizes(n, chunk)

    def run(i):
        return fn(chunk_rng(seed, stream, i), sizes[i])

    if threads <= 1 or len(sizes) <= 1:
        return [run(i) for i in range(len(sizes))]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(run, range(len(sizes))))


# --- results ---

@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n: int
    seed: Optional[int] = None

    def __post_init__(self):
        if not self.std_error >= 0:
            raise ValueError(f"std_error must be >= 0, got {self.std_error}")

    @property
    def ci99(self) -> Tuple[float, float]:
        return self.value - Z99 * self.std_error, self.value + Z99 * self.std_error

    @property
    def upper(self) -> float:
        return self.ci99[1]

    def within(self, target: float, k: float = 3.0, atol: float = 0.0) -> bool:
        return abs(self.value - target) <= k * self.std_error + atol

    def to_record(self) -> dict:
        lo, hi = self.ci99
        return {"value": self.value, "std_error": self.std_error, "n": self.n, "seed": self.seed,
                "ci99": [lo, hi]}


def mean_estimate(sums: Sequence[float], sumsqs: Sequence[float], n: int,
                  seed: Optional[int] = None) -> Estimate:
    """Sample mean and its standard error from per-chunk sums, reduced in order."""
    if n <= 0:
        raise ValueError("need at least one sample")
    m = math.fsum(sums) / n
    var = max(0.0, math.fsum(sumsqs) / n - m * m)
    se = math.sqrt(var / max(1, n - 1)) if n > 1 else 0.0
    return Estimate(m, se, n, seed)


def power_estimate(mean: Estimate, s: float) -> Estimate:
    """mean^(1/s) with the delta-method standard error."""
    m = max(mean.value, 0.0)
    value = m ** (1.0 / s)
    se = (1.0 / s) * m ** (1.0 / s - 1.0) * mean.std_error if m > 0 else 0.0
    return Estimate(value, se, mean.n, mean.seed)


def proportion_estimate(count: int, n: int, scale: float = 1.0, seed: Optional[int] = None) -> Estimate:
    p = count / n
    return Estimate(p * scale, math.sqrt(p * (1.0 - p) / n) * scale, n, seed)


# --- distributions ---

@dataclass(frozen=True)
class DistributionSpec:
    """
    Standard Gaussian over R^d, or the product of d generalized Gaussians with
    density proportional to exp(-|t|^(1+gamma)) per coordinate.
    """

    dimension: int
    family: str = GAUSSIAN
    gamma: float = 1.0

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ValueError(f"dimension must be positive, got {self.dimension}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown distribution family {self.family!r}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")
        if self.family == GAUSSIAN and self.gamma != 1.0:
            raise ValueError("the Gaussian family has gamma = 1")
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "gamma", float(self.gamma))

    @property
    def shape(self) -> float:
        return 1.0 + self.gamma

    @property
    def alpha(self) -> float:
        if self.family == GAUSSIAN:
            return 2.0
        return math.e * max(1.0, 1.0 / math.gamma(1.0 / self.shape))

    @property
    def beta(self) -> float:
        return 0.5 if self.family == GAUSSIAN else 1.0

    def marginal(self, dimension: int) -> "DistributionSpec":
        return DistributionSpec(dimension, self.family, self.gamma)

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if self.family == GAUSSIAN:
            return rng.standard_normal((n, self.dimension))
        u = rng.random((n, self.dimension))
        return stats.gennorm.ppf(u, self.shape)

    def quadrature(self, order: int) -> Tuple[np.ndarray, np.ndarray]:
        """One-dimensional Gauss-Hermite rule normalized to the standard normal."""
        if self.family != GAUSSIAN:
            raise ValueError(f"quadrature is only available for the Gaussian family, not {self.family}")
        nodes, weights = roots_hermitenorm(int(order))
        return nodes, weights / math.sqrt(2.0 * math.pi)

    def tensor_quadrature(self, order: int) -> Tuple[np.ndarray, np.ndarray]:
        if self.dimension > 3:
            raise ValueError(f"tensor quadrature needs dimension <= 3, got {self.dimension}")
        nodes, weights = self.quadrature(order)
        grids = np.meshgrid(*([nodes] * self.dimension), indexing="ij")
        points = np.stack([g.reshape(-1) for g in grids], axis=1)
        w = weights
        for _ in range(self.dimension - 1):
            w = np.multiply.outer(w, weights)
        return points, w.reshape(-1)

    def tail_bound(self, r: float) -> float:
        """min(1, alpha d exp(-beta (r / sqrt d)^(1+gamma))): a bound on P[|x| > r]."""
        d = self.dimension
        return min(1.0, self.alpha * d * math.exp(-self.beta * (r / math.sqrt(d)) ** self.shape))

    def _log_abs_moment_1d(self, q: float) -> float:
        # E|t|^q for density exp(-|t|^b) / (2 Gamma(1 + 1/b))
        b = self.shape
        return gammaln((q + 1.0) / b) - gammaln(1.0 / b)

    def log_norm_moment(self, q: float) -> float:
        """log E|x|^q: exact (chi moments) for the Gaussian, an upper bound otherwise."""
        d = self.dimension
        if self.family == GAUSSIAN:
            return 0.5 * q * math.log(2.0) + gammaln(0.5 * (d + q)) - gammaln(0.5 * d)
        if q >= 2:
            # power mean: |x|^q <= d^(q/2 - 1) sum |x_i|^q
            return 0.5 * q * math.log(d) + self._log_abs_moment_1d(q)
        # Jensen on the concave t -> t^(q/2)
        return 0.5 * q * (math.log(d) + self._log_abs_moment_1d(2.0))

    def log_tail_norm_moment(self, q: float, r: float) -> float:
        """log E[|x|^q 1{|x| > r}]; exact for the Gaussian, Cauchy-Schwarz bound otherwise."""
        if self.family == GAUSSIAN:
            a = 0.5 * (self.dimension + q)
            tail = gammaincc(a, 0.5 * r * r)
            if tail <= 0:
                return -math.inf
            return 0.5 * q * math.log(2.0) + gammaln(a) + math.log(tail) - gammaln(0.5 * self.dimension)
        p = self.tail_bound(r)
        if p <= 0:
            return -math.inf
        return 0.5 * self.log_norm_moment(2.0 * q) + 0.5 * math.log(p)

    def to_record(self) -> dict:
        return {"family": self.family, "dimension": self.dimension, "gamma": self.gamma}

    @classmethod
    def from_record(cls, rec: dict) -> "DistributionSpec":
        try:
            return cls(int(rec["dimension"]), rec.get("family", GAUSSIAN), float(rec.get("gamma", 1.0)))
        except (KeyError, TypeError) as e:
            raise ValueError(f"malformed distribution record: {e}") from e


def _check_dims(c: Concept, dist: DistributionSpec):
    if c.dimension != dist.dimension:
        raise ValueError(f"concept dimension {c.dimension} != distribution dimension {dist.dimension}")


def gaussian_moment(alpha: Sequence[int]) -> float:
    """E[x^alpha] under the standard Gaussian: product of (a-1)!! over even a, else 0."""
    out = 1.0
    for a in alpha:
        if a % 2:
            return 0.0
        out *= math.prod(range(a - 1, 0, -2))
    return out


# --- L_s norms ---

def ls_norm_from_values(values: np.ndarray, s: float, seed: Optional[int] = None) -> Estimate:
    a = np.abs(np.asarray(values, dtype=float)) ** s
    mean = mean_estimate([float(a.sum())], [float((a * a).sum())], a.size, seed)
    return power_estimate(mean, s)


def ls_norm(g: Callable[[np.ndarray], np.ndarray], dist: DistributionSpec, s: float,
            method: str = "monte_carlo", n: int = 100_000, seed: int = 0, order: int = 64,
            threads: int = 1) -> Estimate:
    """(E|g|^s)^(1/s) by Monte Carlo or tensor Gauss-Hermite quadrature."""
    if not s >= 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if method == "quadrature":
        if dist.family != GAUSSIAN or dist.dimension > 3:
            raise ValueError("quadrature needs the Gaussian family with dimension <= 3")
        points, weights = dist.tensor_quadrature(order)
        m = math.fsum(weights * np.abs(g(points)) ** s)
        return Estimate(max(m, 0.0) ** (1.0 / s), 0.0, len(weights), None)
    if method != "monte_carlo":
        raise ValueError(f"unknown method {method!r}")

    def chunk(rng, size):
        a = np.abs(g(dist.sample(rng, size))) ** s
        return float(a.sum()), float((a * a).sum())

    parts = map_chunks(chunk, n, seed, STREAM_LS, threads)
    mean = mean_estimate([p[0] for p in parts], [p[1] for p in parts], n, seed)
    return power_estimate(mean, s)


# --- boundary smoothness ---

def _proximity(c: Concept, X: np.ndarray, rho: float) -> np.ndarray:
    return c.dilate_many(X, rho) != c.erode_many(X, rho)


def boundary_smoothness_profile(c: Concept, dist: DistributionSpec, rho_list: Sequence[float],
                                n: int = 100_000, seed: int = 0,
                                threads: int = 1) -> List[Tuple[float, Estimate]]:
    """sigma_hat(rho) = P[dilate != erode] / rho on one shared sample."""
    _check_dims(c, dist)
    rhos = [float(r) for r in rho_list]
    if any(not r > 0 for r in rhos):
        raise ValueError(f"rho values must be > 0, got {rhos}")

    def chunk(rng, size):
        X = dist.sample(rng, size)
        return [int(_proximity(c, X, r).sum()) for r in rhos]

    counts = np.sum(map_chunks(chunk, n, seed, STREAM_SMOOTH, threads), axis=0)
    out = [(r, proportion_estimate(int(k), n, 1.0 / r, seed)) for r, k in zip(rhos, counts)]
    for r, est in out:
        log.debug("sigma_hat(%.4g) = %.4f +- %.4f", r, est.value, est.std_error)
    return out


def gsa_estimate_intersection(c: Concept, rho_seq: Sequence[float], n: int = 100_000, seed: int = 0,
                              dist: Optional[DistributionSpec] = None,
                              threads: int = 1) -> List[Tuple[float, Estimate]]:
    """P[|Psi(x)| <= rho] / (2 rho) along a decreasing rho sequence."""
    if not hasattr(c, "slack_many"):
        raise ValueError(f"surface-area estimation needs an intersection, got {c.kind}")
    dist = dist or DistributionSpec(c.dimension)
    if dist.family != GAUSSIAN:
        raise ValueError("surface-area estimation is defined for the Gaussian family")
    _check_dims(c, dist)
    rhos = [float(r) for r in rho_seq]
    if any(not r > 0 for r in rhos):
        raise ValueError(f"rho values must be > 0, got {rhos}")

    def chunk(rng, size):
        psi = np.abs(c.slack_many(dist.sample(rng, size)))
        return [int((psi <= r).sum()) for r in rhos]

    counts = np.sum(map_chunks(chunk, n, seed, STREAM_GSA, threads), axis=0)
    return [(r, proportion_estimate(int(k), n, 0.5 / r, seed)) for r, k in zip(rhos, counts)]


def composition_smoothness_check(parts: Sequence[Concept], table, dist: DistributionSpec, rho: float,
                                 n: int = 100_000, seed: int = 0, threads: int = 1) -> dict:
    """
    Proximity of G(g_1..g_m) against the sum of the constituents' proximities,
    plus the count of samples breaking the pointwise event inclusion.
    """
    combo = concepts.BoolCombo(table, parts)
    _check_dims(combo, dist)
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    m = combo.m

    def chunk(rng, size):
        X = dist.sample(rng, size)
        ev = _proximity(combo, X, rho)
        each = np.stack([_proximity(p, X, rho) for p in combo.parts], axis=0)
        outside = ev & ~each.any(axis=0)
        return [int(ev.sum())] + [int(e.sum()) for e in each] + [int(outside.sum())]

    counts = np.sum(map_chunks(chunk, n, seed, STREAM_COMPOSE, threads), axis=0)
    lhs = proportion_estimate(int(counts[0]), n, seed=seed)
    terms = [proportion_estimate(int(k), n, seed=seed) for k in counts[1:m + 1]]
    rhs = math.fsum(t.value for t in terms)
    se = math.sqrt(lhs.std_error ** 2 + math.fsum(t.std_error ** 2 for t in terms))
    holds = lhs.value <= rhs + 3.0 * se
    log.info("composition check rho=%.4g: %.5f vs %.5f (+3se %.5f) holds=%s", rho, lhs.value, rhs, 3 * se, holds)
    return {
        "rho": rho,
        "table": combo.bit_string,
        "lhs": lhs,
        "terms": terms,
        "rhs": rhs,
        "std_error": se,
        "holds": bool(holds),
        "inclusion_violations": int(counts[-1]),
    }


def anticoncentration_check(dist: DistributionSpec, n_directions: int, r_list: Sequence[float],
                            n: int = 100_000, seed: int = 0, thresholds: Sequence[float] = (0.0, 1.0, 3.0),
                            threads: int = 1) -> dict:
    """max over (w, t, r) of P[|w.x - t| <= r] / r for random unit directions w."""
    rs = [float(r) for r in r_list]
    if any(not r > 0 for r in rs):
        raise ValueError(f"r values must be > 0, got {rs}")
    ts = [float(t) for t in thresholds]
    W = chunk_rng(seed, STREAM_ANTI_DIRS, 0).standard_normal((int(n_directions), dist.dimension))
    W /= np.linalg.norm(W, axis=1, keepdims=True)

    def chunk(rng, size):
        P = dist.sample(rng, size) @ W.T
        out = np.zeros((len(W), len(ts), len(rs)), dtype=np.int64)
        for a, t in enumerate(ts):
            dev = np.abs(P - t)
            for b, r in enumerate(rs):
                out[:, a, b] = (dev <= r).sum(axis=0)
        return out

    counts = np.sum(map_chunks(chunk, n, seed, STREAM_ANTI, threads), axis=0)
    rows = []
    for i in range(len(W)):
        for a, t in enumerate(ts):
            for b, r in enumerate(rs):
                est = proportion_estimate(int(counts[i, a, b]), n, 1.0 / r, seed)
                rows.append({"direction": i, "t": t, "r": r, "ratio": est.value, "std_error": est.std_error})
    best = max(rows, key=lambda row: row["ratio"])
    return {
        "max_ratio": best["ratio"],
        "argmax": {k: best[k] for k in ("direction", "t", "r", "std_error")},
        "rows": rows,
        "gaussian_sup": SQRT_2_OVER_PI if dist.family == GAUSSIAN else None,
    }


# --- tails ---

def tail_mass_analytic(dist: DistributionSpec, radius: float) -> float:
    """Exact chi-square tail for the Gaussian; the subexponential tail bound otherwise."""
    if radius <= 0:
        return 1.0
    if dist.family == GAUSSIAN:
        return float(stats.chi2.sf(radius * radius, dist.dimension))
    return dist.tail_bound(radius)


def tail_mass(dist: DistributionSpec, radius: float, n: int = 100_000, seed: int = 0,
              threads: int = 1) -> Estimate:
    """Monte-Carlo P[|x| > radius]."""
    if radius < 0:
        raise ValueError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return Estimate(1.0, 0.0, n, seed)

    def chunk(rng, size):
        return int((np.linalg.norm(dist.sample(rng, size), axis=1) > radius).sum())

    k = sum(map_chunks(chunk, n, seed, STREAM_TAIL, threads))
    est = proportion_estimate(k, n, seed=seed)
    analytic = tail_mass_analytic(dist, radius)
    # exact chi-square value for the Gaussian, an upper bound otherwise
    exact = dist.family == GAUSSIAN
    off = abs(est.value - analytic) if exact else est.value - analytic
    if off > TAIL_CHECK_SE * est.std_error + 3.0 / n:
        log.warning("tail mass r=%.4g: Monte Carlo %.6f +- %.2g disagrees with the %s %.6f", radius, est.value,
                    est.std_error, "chi-square tail" if exact else "tail bound", analytic)
    else:
        log.debug("tail mass r=%.4g: %.6f (analytic %.6f)", radius, est.value, analytic)
    return est


# --- class constants ---

def class_smoothness_bound(c: Concept) -> float:
    """Analytic smoothness constant of the concept's class under the standard Gaussian."""
    if isinstance(c, concepts.LiftedConcept):
        return class_smoothness_bound(c.base)
    if isinstance(c, concepts.Intersection):
        k = c.k
        if k == 0:
            return 0.0
        if k == 1:
            return SQRT_2_OVER_PI
        return min(k * SQRT_2_OVER_PI, math.sqrt(2.0 * math.log(k)) + 2.0)
    if isinstance(c, concepts.BoolCombo):
        return math.fsum(class_smoothness_bound(p) for p in c.parts)
    if isinstance(c, concepts.PTF):
        # constant of the O(q^3 k) bound taken as 1
        return float(c.degree ** 3 * c.dimension)
    raise ValueError(f"no class smoothness constant for {c.kind}")


def smoothness_summary(profile: List[Tuple[float, Estimate]]) -> Dict[str, float]:
    worst = max(profile, key=lambda item: item[1].value + 3.0 * item[1].std_error)
    return {"rho": worst[0], "sigma_hat": worst[1].value, "std_error": worst[1].std_error,
            "sigma_upper": worst[1].value + 3.0 * worst[1].std_error}
