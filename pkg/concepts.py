# concepts.py
"""
Concept families over R^k with values in {-1, +1}: halfspaces,
intersections (polytopes), Boolean combinations, polynomial threshold
functions, and the lift x -> F(W x).

Positive region convention: {x : w_i . x <= tau_i for all i} for
intersections; sign(p(x)) with sign(0) = +1 for PTFs.

Every concept evaluates on a batch X of shape (n, dim). Distances to the
positive/negative regions come back as DistanceInterval(lo, hi) arrays.
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

import polycore
from polycore import Polynomial

log = logging.getLogger("sandwich.concepts")

UNIT_TOL = 1e-10
FEAS_TOL = 1e-9
CHUNK = 65536

# fixed seed for the search directions of the ray oracle
RAY_SEED = 0x5A17
RAY_DIRECTIONS = 16
RAY_STEPS = 32
RAY_RADIUS = 2.0
BISECT_STEPS = 40
FACET_ROUNDS = 16


def as_points(x, dim: int) -> Tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != dim:
        raise ValueError(f"points of shape {np.shape(x)} do not match dimension {dim}")
    return X, single


def _check_rho(rho: float) -> float:
    rho = float(rho)
    if not rho >= 0:
        raise ValueError(f"rho must be >= 0, got {rho}")
    return rho


def _signs(mask: np.ndarray) -> np.ndarray:
    return np.where(mask, 1, -1)


@dataclass(frozen=True, eq=False)
class DistanceInterval:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if np.any(lo < 0) or np.any(lo > hi):
            raise ValueError("distance interval needs 0 <= lo <= hi")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def exact(self) -> bool:
        return bool(np.all(self.lo == self.hi))

    def item(self, i: int = 0) -> "DistanceInterval":
        return DistanceInterval(float(self.lo.reshape(-1)[i]), float(self.hi.reshape(-1)[i]))


@dataclass(frozen=True, eq=False)
class Halfspace:
    w: np.ndarray
    tau: float

    def __post_init__(self):
        w = np.array(self.w, dtype=float).reshape(-1)
        norm = float(np.linalg.norm(w))
        if abs(norm - 1.0) > UNIT_TOL:
            raise ValueError(f"halfspace normal must be a unit vector, |w| = {norm}")
        w.flags.writeable = False
        object.__setattr__(self, "w", w)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def dimension(self) -> int:
        return self.w.shape[0]

    def shifted(self, delta: float) -> "Halfspace":
        return Halfspace(self.w, self.tau + delta)


# --- base ---

class Concept:
    """Base class. Subclasses implement eval_many and the two distance oracles."""

    kind = "concept"
    dimension: int

    def eval_many(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def dist_to_positive_many(self, X: np.ndarray, radius: Optional[float] = None) -> DistanceInterval:
        raise NotImplementedError

    def dist_to_negative_many(self, X: np.ndarray, radius: Optional[float] = None) -> DistanceInterval:
        raise NotImplementedError

    def dilate_many(self, X: np.ndarray, rho: float) -> np.ndarray:
        """Conservative: +1 unless the certified lower distance to the positive region exceeds rho."""
        pos = self.eval_many(X) > 0
        out = pos.copy()
        if not pos.all():
            lo = self.dist_to_positive_many(X[~pos], radius=0.0).lo
            out[~pos] = lo <= rho
        return _signs(out)

    def erode_many(self, X: np.ndarray, rho: float) -> np.ndarray:
        """Conservative: -1 unless the certified lower distance to the negative region exceeds rho."""
        pos = self.eval_many(X) > 0
        out = np.zeros(len(X), dtype=bool)
        if pos.any():
            lo = self.dist_to_negative_many(X[pos], radius=0.0).lo
            out[pos] = lo > rho
        return _signs(out)

    def boundary_points(self, rng: np.random.Generator, n: int, offsets: Sequence[float]) -> np.ndarray:
        return np.zeros((0, self.dimension))

    def negate(self) -> "Concept":
        raise ValueError(f"{self.kind} concepts do not support negation")

    def to_record(self) -> dict:
        raise NotImplementedError


# --- intersections ---

class Intersection(Concept):
    """Positive region {x : w_i . x <= tau_i for all i}. No halfspaces means f == +1."""

    kind = "intersection"

    def __init__(self, halfspaces: Sequence[Halfspace], dimension: Optional[int] = None):
        halfspaces = tuple(halfspaces)
        if dimension is None:
            if not halfspaces:
                raise ValueError("an empty intersection needs an explicit dimension")
            dimension = halfspaces[0].dimension
        for h in halfspaces:
            if h.dimension != dimension:
                raise ValueError(f"halfspace of dimension {h.dimension} in a {dimension}-dim intersection")
        self.halfspaces = halfspaces
        self.dimension = int(dimension)
        self.W = np.array([h.w for h in halfspaces], dtype=float).reshape(len(halfspaces), self.dimension)
        self.taus = np.array([h.tau for h in halfspaces], dtype=float)
        self.W.flags.writeable = False
        self.taus.flags.writeable = False
        self._active_sets = None

    @property
    def k(self) -> int:
        return len(self.halfspaces)

    def with_taus(self, taus) -> "Intersection":
        hs = [Halfspace(h.w, t) for h, t in zip(self.halfspaces, taus)]
        return type(self)(hs, self.dimension)

    def margins(self, X: np.ndarray) -> np.ndarray:
        return X @ self.W.T - self.taus

    def eval_many(self, X):
        if self.k == 0:
            return np.ones(len(X), dtype=int)
        return _signs(np.all(X @ self.W.T <= self.taus, axis=1))

    def slack_many(self, X) -> np.ndarray:
        if self.k == 0:
            return np.full(len(X), -np.inf)
        return np.max(self.margins(X), axis=1)

    def dist_to_negative_many(self, X, radius=None):
        if self.k == 0:
            d = np.full(len(X), np.inf)
        else:
            d = np.maximum(0.0, -self.slack_many(X))
        return DistanceInterval(d, d)

    def _subsets(self):
        # active-constraint subsets with independent rows, with their projection maps
        if self._active_sets is None:
            sets = []
            for size in range(1, min(self.k, self.dimension) + 1):
                for S in itertools.combinations(range(self.k), size):
                    WS = self.W[list(S)]
                    if np.linalg.matrix_rank(WS) < size:
                        continue
                    G = np.linalg.inv(WS @ WS.T)
                    sets.append((np.array(S), G @ WS))
            self._active_sets = sets
        return self._active_sets

    def dist_to_positive_many(self, X, radius=None):
        """Exact Euclidean projection onto the polytope by active-set enumeration."""
        n = len(X)
        if self.k == 0:
            z = np.zeros(n)
            return DistanceInterval(z, z)
        best = np.full(n, np.inf)
        tol = FEAS_TOL * (1.0 + np.abs(self.taus))
        for a in range(0, n, CHUNK):
            Xc = X[a:a + CHUNK]
            inside = np.all(Xc @ self.W.T <= self.taus + tol, axis=1)
            b = np.where(inside, 0.0, np.inf)
            for S, P in self._subsets():
                R = Xc @ self.W[S].T - self.taus[S]
                step = R @ P
                Y = Xc - step
                ok = np.all(Y @ self.W.T <= self.taus + tol, axis=1)
                if ok.any():
                    d = np.linalg.norm(step, axis=1)
                    b = np.where(ok & (d < b), d, b)
            best[a:a + CHUNK] = b
        return DistanceInterval(best, best)

    def dilate_many(self, X, rho):
        return _signs(self.dist_to_positive_many(X).hi <= rho)

    def erode_many(self, X, rho):
        return bias_shift_erode(self, rho).eval_many(X)

    def boundary_points(self, rng, n, offsets):
        """Facet points of the polytope pushed off along the facet normal by the given offsets."""
        if self.k == 0 or n <= 0:
            return np.zeros((0, self.dimension))
        tol = FEAS_TOL * (1.0 + np.abs(self.taus))
        points, facets, found = [], [], 0
        for _ in range(FACET_ROUNDS):
            Z = rng.standard_normal((2 * n, self.dimension))
            i = rng.integers(0, self.k, size=len(Z))
            w = self.W[i]
            Z -= ((np.einsum("ij,ij->i", Z, w) - self.taus[i]))[:, None] * w
            # a projection onto hyperplane i only counts when the other constraints hold there
            on_face = np.all(Z @ self.W.T <= self.taus + tol, axis=1)
            points.append(Z[on_face])
            facets.append(i[on_face])
            found += int(on_face.sum())
            if found >= n:
                break
        Y = np.concatenate(points)[:n]
        i = np.concatenate(facets)[:n]
        if len(Y) < n:
            log.warning("boundary sampling found %d of %d facet points after %d rounds", len(Y), n, FACET_ROUNDS)
        delta = np.asarray(offsets, dtype=float)[rng.integers(0, len(offsets), size=len(Y))]
        side = rng.choice([-1.0, 1.0], size=len(Y))
        return Y + (side * delta)[:, None] * self.W[i]

    def to_record(self):
        return {
            "kind": self.kind,
            "dimension": self.dimension,
            "halfspaces": [{"w": h.w.tolist(), "tau": h.tau} for h in self.halfspaces],
        }


class Polytope(Intersection):
    kind = "polytope"


class SingleHalfspace(Intersection):
    kind = "halfspace"

    def __init__(self, halfspace: Halfspace, dimension: Optional[int] = None):
        if isinstance(halfspace, (list, tuple)):
            if len(halfspace) != 1:
                raise ValueError("a single halfspace takes exactly one halfspace")
            halfspace = halfspace[0]
        super().__init__([halfspace], dimension)

    @property
    def halfspace(self) -> Halfspace:
        return self.halfspaces[0]

    def with_taus(self, taus):
        return SingleHalfspace(Halfspace(self.halfspace.w, float(taus[0])))

    def dist_to_positive_many(self, X, radius=None):
        d = np.maximum(0.0, X @ self.halfspace.w - self.halfspace.tau)
        return DistanceInterval(d, d)

    def dilate_many(self, X, rho):
        return bias_shift_dilate(self, rho).eval_many(X)

    def to_record(self):
        return {"kind": self.kind, "w": self.halfspace.w.tolist(), "tau": self.halfspace.tau}


# --- ray oracle (upper bounds for BoolCombo / PTF) ---

def _fixed_directions(dim: int) -> np.ndarray:
    rng = np.random.default_rng(RAY_SEED + dim)
    R = rng.standard_normal((RAY_DIRECTIONS, dim))
    R /= np.linalg.norm(R, axis=1, keepdims=True)
    eye = np.eye(dim)
    return np.vstack([eye, -eye, R])


def ray_sign_change(concept: Concept, X: np.ndarray, extra_dirs: Optional[np.ndarray],
                    radius: float, steps: int = RAY_STEPS) -> np.ndarray:
    """
    Distance to the nearest sign change found along fixed rays (+ per-point
    rays in extra_dirs, shape (n, m, dim)), marching up to `radius` then
    bisecting. Returns +inf where none was found. Always a certified upper bound.
    """
    n, dim = X.shape
    out = np.full(n, np.inf)
    if n == 0 or radius <= 0:
        return out
    base = _fixed_directions(dim)
    t = np.linspace(0.0, radius, steps + 1)
    rows = max(1, CHUNK // (len(base) + (extra_dirs.shape[1] if extra_dirs is not None else 0)) // 4)
    for a in range(0, n, rows):
        Xc = X[a:a + rows]
        m = len(Xc)
        dirs = np.broadcast_to(base, (m,) + base.shape)
        if extra_dirs is not None:
            dirs = np.concatenate([dirs, extra_dirs[a:a + rows]], axis=1)
        D = dirs.shape[1]
        s0 = concept.eval_many(Xc)
        pts = Xc[:, None, None, :] + t[None, None, 1:, None] * dirs[:, :, None, :]
        sg = concept.eval_many(pts.reshape(-1, dim)).reshape(m, D, steps)
        changed = sg != s0[:, None, None]
        has = changed.any(axis=2)
        if not has.any():
            continue
        first = np.argmax(changed, axis=2)
        pi, di = np.nonzero(has)
        lo = t[first[pi, di]]
        hi = t[first[pi, di] + 1]
        x0 = Xc[pi]
        u = dirs[pi, di]
        ref = s0[pi]
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (lo + hi)
            flip = concept.eval_many(x0 + mid[:, None] * u) != ref
            hi = np.where(flip, mid, hi)
            lo = np.where(flip, lo, mid)
        best = np.full((m, D), np.inf)
        best[pi, di] = hi
        out[a:a + m] = best.min(axis=1)
    return out


def _interval_from(concept: Concept, X: np.ndarray, want_positive: bool, lo_fn, dir_fn,
                   radius: Optional[float]) -> DistanceInterval:
    """Generic oracle: 0 on the target region, else [analytic lo, ray hi]."""
    n = len(X)
    lo = np.zeros(n)
    hi = np.zeros(n)
    on_target = (concept.eval_many(X) > 0) == want_positive
    rest = ~on_target
    if rest.any():
        Xr = X[rest]
        lo_r = lo_fn(Xr)
        r = concept.ray_radius if radius is None else radius
        hi_r = ray_sign_change(concept, Xr, dir_fn(Xr), r)
        hi_r = np.maximum(hi_r, lo_r)
        lo[rest] = lo_r
        hi[rest] = hi_r
    return DistanceInterval(lo, hi)


# --- Boolean combinations ---

def _table_from_bits(bits) -> Tuple[int, ...]:
    if isinstance(bits, str):
        if set(bits) - {"0", "1"}:
            raise ValueError(f"truth table must be a 0/1 string, got {bits!r}")
        return tuple(1 if b == "1" else -1 for b in bits)
    vals = tuple(int(v) for v in bits)
    if set(vals) - {-1, 1}:
        raise ValueError("truth table entries must be -1 or +1")
    return vals


class BoolCombo(Concept):
    """
    G(g_1(x), ..., g_m(x)) for a truth table G over {-1,+1}^m.
    Table index: sum_i [g_i = +1] * 2^(m-1-i), first part most significant.
    """

    kind = "boolcombo"
    ray_radius = RAY_RADIUS

    def __init__(self, table, parts: Sequence[Concept]):
        parts = tuple(SingleHalfspace(p) if isinstance(p, Halfspace) else p for p in parts)
        if not parts:
            raise ValueError("a Boolean combination needs at least one part")
        table = _table_from_bits(table)
        if len(table) != 2 ** len(parts):
            raise ValueError(f"truth table has {len(table)} entries, expected {2 ** len(parts)}")
        dims = {p.dimension for p in parts}
        if len(dims) != 1:
            raise ValueError(f"parts live in different dimensions: {sorted(dims)}")
        self.table = np.array(table, dtype=int)
        self.table.flags.writeable = False
        self.parts = parts
        self.dimension = dims.pop()
        self.polarity = self._polarity()

    @property
    def m(self) -> int:
        return len(self.parts)

    @property
    def bit_string(self) -> str:
        return "".join("1" if v > 0 else "0" for v in self.table)

    def _polarity(self) -> Optional[Tuple[int, ...]]:
        # +1 / -1 per input when the table is monotone in it; None when not unate
        pol = []
        for i in range(self.m):
            bit = 1 << (self.m - 1 - i)
            lows = [j for j in range(len(self.table)) if not j & bit]
            up = all(self.table[j] <= self.table[j | bit] for j in lows)
            down = all(self.table[j] >= self.table[j | bit] for j in lows)
            if up:
                pol.append(1)
            elif down:
                pol.append(-1)
            else:
                return None
        return tuple(pol)

    @property
    def unate(self) -> bool:
        return self.polarity is not None

    def _combine(self, values: List[np.ndarray]) -> np.ndarray:
        idx = np.zeros(len(values[0]), dtype=int)
        for v in values:
            idx = (idx << 1) | (v > 0)
        return self.table[idx]

    def eval_many(self, X):
        return self._combine([p.eval_many(X) for p in self.parts])

    def _part_boundary_lo(self, X):
        lo = np.full(len(X), np.inf)
        for p in self.parts:
            pos = p.eval_many(X) > 0
            d = np.empty(len(X))
            if pos.any():
                d[pos] = p.dist_to_negative_many(X[pos], radius=0.0).lo
            if (~pos).any():
                d[~pos] = p.dist_to_positive_many(X[~pos], radius=0.0).lo
            lo = np.minimum(lo, d)
        return lo

    def _part_dirs(self, X):
        dirs = []
        for p in self.parts:
            if isinstance(p, Intersection) and p.k:
                for w, tau in zip(p.W, p.taus):
                    s = np.sign(tau - X @ w)
                    s[s == 0] = 1.0
                    dirs.append(s[:, None] * w[None, :])
        if not dirs:
            return None
        return np.stack(dirs, axis=1)

    def dist_to_positive_many(self, X, radius=None):
        return _interval_from(self, X, True, self._part_boundary_lo, self._part_dirs, radius)

    def dist_to_negative_many(self, X, radius=None):
        return _interval_from(self, X, False, self._part_boundary_lo, self._part_dirs, radius)

    def dilate_many(self, X, rho):
        if self.unate:
            vals = [p.dilate_many(X, rho) if s > 0 else p.erode_many(X, rho)
                    for p, s in zip(self.parts, self.polarity)]
            return self._combine(vals)
        return super().dilate_many(X, rho)

    def erode_many(self, X, rho):
        if self.unate:
            vals = [p.erode_many(X, rho) if s > 0 else p.dilate_many(X, rho)
                    for p, s in zip(self.parts, self.polarity)]
            return self._combine(vals)
        return super().erode_many(X, rho)

    def negate(self):
        return BoolCombo(tuple(-self.table), self.parts)

    def boundary_points(self, rng, n, offsets):
        if n <= 0:
            return np.zeros((0, self.dimension))
        counts = np.bincount(rng.integers(0, self.m, size=n), minlength=self.m)
        chunks = [p.boundary_points(rng, int(c), offsets) for p, c in zip(self.parts, counts)]
        return np.vstack(chunks)

    def to_record(self):
        rec = {"kind": self.kind, "table": self.bit_string}
        if all(isinstance(p, SingleHalfspace) for p in self.parts):
            rec["halfspaces"] = [{"w": p.halfspace.w.tolist(), "tau": p.halfspace.tau} for p in self.parts]
        else:
            rec["parts"] = [p.to_record() for p in self.parts]
        return rec


# --- polynomial threshold functions ---

class PTF(Concept):
    """sign(p(x)) with sign(0) = +1."""

    kind = "ptf"
    ray_radius = RAY_RADIUS

    def __init__(self, poly: Polynomial, degree: Optional[int] = None):
        if degree is None:
            degree = poly.degree
        if degree < poly.degree:
            raise ValueError(f"declared degree {degree} below polynomial degree {poly.degree}")
        self.poly = poly
        self.degree = int(degree)
        self.dimension = poly.dimension
        mono = polycore.to_monomial(poly)
        self._mono = mono
        self._grad = [self._partial(mono, j) for j in range(self.dimension)]
        # G(M) = sum |c_I| |I| M^(|I|-1), the gradient bound on a ball of radius M
        tot = mono.exponents.sum(axis=1) if mono.n_terms else np.zeros(0, dtype=int)
        keep = tot >= 1
        self._g_coef = np.abs(mono.values[keep]) * tot[keep]
        self._g_pow = tot[keep] - 1

    @staticmethod
    def _partial(p: Polynomial, j: int) -> Polynomial:
        terms = {}
        for idx, c in p.coeffs.items():
            if idx[j]:
                e = list(idx)
                e[j] -= 1
                terms[tuple(e)] = c * idx[j]
        return Polynomial.from_terms(p.dimension, terms, degree=max(p.degree - 1, 0))

    def values(self, X) -> np.ndarray:
        return polycore.evaluate_many(self.poly, X)

    def gradient(self, X) -> np.ndarray:
        return np.stack([polycore.evaluate_many(g, X) for g in self._grad], axis=1)

    def eval_many(self, X):
        return _signs(self.values(X) >= 0)

    def _grad_bound(self, M: np.ndarray) -> np.ndarray:
        if not len(self._g_coef):
            return np.zeros_like(M)
        return (self._g_coef[None, :] * M[:, None] ** self._g_pow[None, :]).sum(axis=1)

    def _lo(self, X):
        v = np.abs(self.values(X))
        norm = np.linalg.norm(X, axis=1)
        g0 = self._grad_bound(np.maximum(1.0, norm))
        with np.errstate(divide="ignore", invalid="ignore"):
            hi = np.where(g0 > 0, v / g0, np.inf)
        lo = np.zeros_like(v)
        finite = np.isfinite(hi)
        lo[~finite] = np.inf
        a = np.zeros(finite.sum())
        b = hi[finite]
        vf, nf = v[finite], norm[finite]
        for _ in range(BISECT_STEPS):
            mid = 0.5 * (a + b)
            ok = mid * self._grad_bound(np.maximum(1.0, nf + mid)) < vf
            a = np.where(ok, mid, a)
            b = np.where(ok, b, mid)
        lo[finite] = a
        return lo

    def _dirs(self, X):
        g = self.gradient(X)
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
        u = np.divide(g, nrm, out=np.zeros_like(g), where=nrm > 0)
        return np.stack([u, -u], axis=1)

    def dist_to_positive_many(self, X, radius=None):
        return _interval_from(self, X, True, self._lo, self._dirs, radius)

    def dist_to_negative_many(self, X, radius=None):
        return _interval_from(self, X, False, self._lo, self._dirs, radius)

    def boundary_points(self, rng, n, offsets):
        if n <= 0 or self.poly.degree == 0:
            return np.zeros((0, self.dimension))
        Y = rng.standard_normal((n, self.dimension))
        for _ in range(8):
            g = self.gradient(Y)
            g2 = np.einsum("ij,ij->i", g, g)
            step = np.divide(self.values(Y), g2, out=np.zeros(n), where=g2 > 1e-12)
            Y = Y - step[:, None] * g
        g = self.gradient(Y)
        nrm = np.linalg.norm(g, axis=1, keepdims=True)
        u = np.divide(g, nrm, out=np.zeros_like(g), where=nrm > 0)
        delta = np.asarray(offsets, dtype=float)[rng.integers(0, len(offsets), size=n)]
        side = rng.choice([-1.0, 1.0], size=n)
        return Y + (side * delta)[:, None] * u

    def to_record(self):
        return {"kind": self.kind, "degree": self.degree, "polynomial": polycore.to_record(self.poly)}


# --- lift ---

class LiftedConcept(Concept):
    """f(x) = F(W x) for W (k x d) with orthonormal rows."""

    kind = "lifted"

    def __init__(self, base: Concept, W):
        W = polycore.check_orthonormal_rows(W)
        if W.shape[0] != base.dimension:
            raise ValueError(f"W has {W.shape[0]} rows but the base concept has dimension {base.dimension}")
        self.base = base
        self.W = W
        self.W.flags.writeable = False
        self.dimension = W.shape[1]

    def project(self, X) -> np.ndarray:
        return X @ self.W.T

    def eval_many(self, X):
        return self.base.eval_many(self.project(X))

    def dilate_many(self, X, rho):
        return self.base.dilate_many(self.project(X), rho)

    def erode_many(self, X, rho):
        return self.base.erode_many(self.project(X), rho)

    def dist_to_positive_many(self, X, radius=None):
        return self.base.dist_to_positive_many(self.project(X), radius)

    def dist_to_negative_many(self, X, radius=None):
        return self.base.dist_to_negative_many(self.project(X), radius)

    def slack_many(self, X):
        if not isinstance(self.base, Intersection):
            raise ValueError(f"slack needs an intersection, got {self.base.kind}")
        return self.base.slack_many(self.project(X))

    def negate(self):
        return LiftedConcept(self.base.negate(), self.W)

    def embed(self, U: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Points x with W x = U and a Gaussian component orthogonal to the rows of W."""
        Z = rng.standard_normal((len(U), self.dimension))
        Z -= (Z @ self.W.T) @ self.W
        return U @ self.W + Z

    def boundary_points(self, rng, n, offsets):
        U = self.base.boundary_points(rng, n, offsets)
        return self.embed(U, rng)

    def to_record(self):
        rec = dict(self.base.to_record())
        rec["W"] = self.W.tolist()
        return rec


# --- operations ---

def eval_concept(c: Concept, x):
    X, single = as_points(x, c.dimension)
    out = c.eval_many(X)
    return int(out[0]) if single else out


def dilate_eval(c: Concept, rho: float, x):
    rho = _check_rho(rho)
    X, single = as_points(x, c.dimension)
    out = c.dilate_many(X, rho)
    return int(out[0]) if single else out


def erode_eval(c: Concept, rho: float, x):
    rho = _check_rho(rho)
    X, single = as_points(x, c.dimension)
    out = c.erode_many(X, rho)
    return int(out[0]) if single else out


def _require_intersection(c: Concept) -> Intersection:
    if not isinstance(c, Intersection):
        raise ValueError(f"bias shifts need an intersection, got {c.kind}")
    return c


def bias_shift_dilate(c: Intersection, rho: float) -> Intersection:
    c = _require_intersection(c)
    return c.with_taus(c.taus + _check_rho(rho))


def bias_shift_erode(c: Intersection, rho: float) -> Intersection:
    c = _require_intersection(c)
    return c.with_taus(c.taus - _check_rho(rho))


def slack(c: Concept, x):
    """Psi(x) = max_i (w_i . x - tau_i)."""
    if not isinstance(c, (Intersection, LiftedConcept)):
        raise ValueError(f"slack needs an intersection, got {c.kind}")
    X, single = as_points(x, c.dimension)
    out = c.slack_many(X)
    return float(out[0]) if single else out


def dist_to_positive(c: Concept, x, radius: Optional[float] = None) -> DistanceInterval:
    X, single = as_points(x, c.dimension)
    out = c.dist_to_positive_many(X, radius)
    return out.item() if single else out


def dist_to_negative(c: Concept, x, radius: Optional[float] = None) -> DistanceInterval:
    X, single = as_points(x, c.dimension)
    out = c.dist_to_negative_many(X, radius)
    return out.item() if single else out


def lift(c: Concept, W) -> LiftedConcept:
    return LiftedConcept(c, W)


def negate(c: Concept) -> Concept:
    return c.negate()


# --- records ---

def _halfspace_from(rec: dict) -> Halfspace:
    w = np.asarray(rec["w"], dtype=float)
    norm = float(np.linalg.norm(w))
    if norm == 0:
        raise ValueError("halfspace normal w is zero")
    # a non-unit normal describes the same halfspace after rescaling
    return Halfspace(w / norm, float(rec.get("tau", 0.0)) / norm)


def concept_from_record(rec: dict) -> Concept:
    if not isinstance(rec, dict):
        raise ValueError("concept record must be an object")
    kind = str(rec.get("kind", "")).lower()
    try:
        if kind == "halfspace":
            c = SingleHalfspace(_halfspace_from(rec))
        elif kind in ("intersection", "polytope"):
            cls = Polytope if kind == "polytope" else Intersection
            c = cls([_halfspace_from(h) for h in rec.get("halfspaces", [])], rec.get("dimension"))
        elif kind == "constant":
            c = Intersection([], int(rec["dimension"]))
        elif kind == "boolcombo":
            if "parts" in rec:
                parts = [concept_from_record(p) for p in rec["parts"]]
            else:
                parts = [SingleHalfspace(_halfspace_from(h)) for h in rec["halfspaces"]]
            c = BoolCombo(rec["table"], parts)
        elif kind == "ptf":
            c = PTF(polycore.from_record(rec["polynomial"]), rec.get("degree"))
        else:
            raise ValueError(f"unknown concept kind {rec.get('kind')!r}")
    except KeyError as e:
        raise ValueError(f"concept record of kind {kind!r} is missing field {e}") from e
    if rec.get("W") is not None:
        c = LiftedConcept(c, rec["W"])
    return c


def concept_to_record(c: Concept) -> dict:
    return c.to_record()
