# polycore.py
"""
Multivariate polynomials in the monomial basis or in the tensor Chebyshev
basis of a centered box [-R, R]^d.

Polynomials are immutable. Coefficients live in a sparse map
multi-index -> float; small dimensions (d <= 3) are evaluated through a
cached dense tensor with the numpy Clenshaw/Horner routines.
"""
import logging
import math
from dataclasses import dataclass
from functools import cached_property, reduce
from types import MappingProxyType
from typing import Dict, Iterable, Iterator, List, Mapping, Optional, Tuple, Union

import numpy as np
from numpy.polynomial import chebyshev as npcheb
from numpy.polynomial import polynomial as npmono
from scipy.special import gammaln

log = logging.getLogger("sandwich.polycore")

MONOMIAL = "monomial"
CHEBYSHEV = "chebyshev"
BASES = (MONOMIAL, CHEBYSHEV)

PRUNE_REL = 1e-14
ORTHO_TOL = 1e-10
DENSE_LIMIT = 4_000_000
CHUNK_ROWS = 8192

MultiIndex = Tuple[int, ...]
Terms = Union[Mapping[MultiIndex, float], Iterable[Tuple[Iterable[int], float]]]


@dataclass(frozen=True, eq=False)
class Polynomial:
    dimension: int
    coeffs: Mapping[MultiIndex, float]
    degree: int
    basis: str = MONOMIAL
    box: Optional[float] = None

    def __post_init__(self):
        if int(self.dimension) < 1:
            raise ValueError(f"dimension must be positive, got {self.dimension}")
        if self.basis not in BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.basis == CHEBYSHEV:
            if self.box is None or not float(self.box) > 0:
                raise ValueError(f"chebyshev basis needs box half-width > 0, got {self.box}")
            object.__setattr__(self, "box", float(self.box))
        elif self.box is not None:
            raise ValueError("monomial basis takes no box")
        if int(self.degree) < 0:
            raise ValueError(f"degree must be >= 0, got {self.degree}")
        clean = {}
        for idx, c in dict(self.coeffs).items():
            idx = tuple(int(e) for e in idx)
            if len(idx) != self.dimension or min(idx) < 0:
                raise ValueError(f"bad multi-index {idx} for dimension {self.dimension}")
            if sum(idx) > self.degree:
                raise ValueError(f"multi-index {idx} exceeds degree {self.degree}")
            c = float(c)
            if c == 0.0:
                raise ValueError(f"explicit zero coefficient at {idx}")
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient at {idx}")
            clean[idx] = c
        object.__setattr__(self, "dimension", int(self.dimension))
        object.__setattr__(self, "degree", int(self.degree))
        object.__setattr__(self, "coeffs", MappingProxyType(clean))

    # --- constructors ---
    @classmethod
    def from_terms(cls, dimension: int, terms: Terms, basis: str = MONOMIAL,
                   box: Optional[float] = None, degree: Optional[int] = None) -> "Polynomial":
        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: Dict[MultiIndex, float] = {}
        for idx, c in items:
            idx = tuple(int(e) for e in idx)
            acc[idx] = acc.get(idx, 0.0) + float(c)
        acc = {k: v for k, v in acc.items() if v != 0.0}
        if degree is None:
            degree = max((sum(k) for k in acc), default=0)
        return cls(dimension, acc, degree, basis, box)

    @classmethod
    def constant(cls, dimension: int, value: float, basis: str = MONOMIAL,
                 box: Optional[float] = None) -> "Polynomial":
        terms = {(0,) * dimension: float(value)} if value != 0 else {}
        return cls(dimension, terms, 0, basis, box)

    @classmethod
    def from_dense(cls, tensor: np.ndarray, basis: str = MONOMIAL, box: Optional[float] = None,
                   max_total: Optional[int] = None, rel_prune: float = 0.0) -> "Polynomial":
        """Builds from a dense coefficient tensor, optionally truncated to total degree <= max_total."""
        tensor = np.asarray(tensor, dtype=float)
        dim = tensor.ndim
        scale = float(np.max(np.abs(tensor))) if tensor.size else 0.0
        keep = tensor != 0.0
        if rel_prune > 0 and scale > 0:
            keep &= np.abs(tensor) > rel_prune * scale
        idx = np.argwhere(keep)
        if max_total is not None and len(idx):
            idx = idx[idx.sum(axis=1) <= max_total]
        terms = {tuple(int(e) for e in row): float(tensor[tuple(row)]) for row in idx}
        degree = max((sum(k) for k in terms), default=0)
        return cls(dim, terms, degree, basis, box)

    # --- views ---
    @property
    def n_terms(self) -> int:
        return len(self.coeffs)

    @property
    def is_zero(self) -> bool:
        return not self.coeffs

    @cached_property
    def exponents(self) -> np.ndarray:
        if not self.coeffs:
            return np.zeros((0, self.dimension), dtype=int)
        return np.array(list(self.coeffs.keys()), dtype=int)

    @cached_property
    def values(self) -> np.ndarray:
        return np.array(list(self.coeffs.values()), dtype=float)

    @cached_property
    def max_exponent(self) -> int:
        return int(self.exponents.max()) if self.coeffs else 0

    @cached_property
    def dense(self) -> np.ndarray:
        shape = (self.max_exponent + 1,) * self.dimension
        out = np.zeros(shape)
        for idx, c in self.coeffs.items():
            out[idx] = c
        return out

    def _dense_ok(self) -> bool:
        return self.dimension <= 3 and (self.max_exponent + 1) ** self.dimension <= DENSE_LIMIT

    def __repr__(self):
        box = f", box={self.box:g}" if self.box else ""
        return f"Polynomial(dim={self.dimension}, deg={self.degree}, terms={self.n_terms}, {self.basis}{box})"


# --- multi-indices ---

def compositions(total: int, parts: int) -> Iterator[MultiIndex]:
    """All non-negative integer vectors of length `parts` summing to `total`."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total, -1, -1):
        for rest in compositions(total - first, parts - 1):
            yield (first,) + rest


def multi_indices(dimension: int, max_total: int) -> List[MultiIndex]:
    """Graded list of all multi-indices with total degree <= max_total."""
    out: List[MultiIndex] = []
    for t in range(max_total + 1):
        out.extend(compositions(t, dimension))
    return out


# --- evaluation ---

def _as_rows(p: Polynomial, X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != p.dimension:
        raise ValueError(f"points of shape {X.shape} do not match dimension {p.dimension}")
    return X


def evaluate(p: Polynomial, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != p.dimension:
        raise ValueError(f"point of length {x.size} does not match dimension {p.dimension}")
    return float(evaluate_many(p, x[None, :])[0])


def evaluate_many(p: Polynomial, X) -> np.ndarray:
    """Values at the rows of X. Chebyshev terms use the recurrence on x/R, also outside the box."""
    X = _as_rows(p, X)
    n = X.shape[0]
    if p.is_zero:
        return np.zeros(n)
    T = X / p.box if p.basis == CHEBYSHEV else X
    out = np.empty(n)
    if p._dense_ok():
        fns = (npcheb.chebval, npcheb.chebval2d, npcheb.chebval3d) if p.basis == CHEBYSHEV \
            else (npmono.polyval, npmono.polyval2d, npmono.polyval3d)
        fn = fns[p.dimension - 1]
        for a in range(0, n, CHUNK_ROWS):
            cols = [T[a:a + CHUNK_ROWS, j] for j in range(p.dimension)]
            out[a:a + CHUNK_ROWS] = fn(*cols, p.dense)
        return out
    vander = npcheb.chebvander if p.basis == CHEBYSHEV else npmono.polyvander
    E, c = p.exponents, p.values
    rows = max(1, 2_000_000 // max(1, len(c)))
    for a in range(0, n, rows):
        chunk = T[a:a + rows]
        prod = np.ones((chunk.shape[0], len(c)))
        for j in range(p.dimension):
            table = vander(chunk[:, j], p.max_exponent)
            prod *= table[:, E[:, j]]
        out[a:a + rows] = prod @ c
    return out


def evaluate_on_grid(p: Polynomial, axes: List[np.ndarray]) -> np.ndarray:
    """Values on the tensor grid axes[0] x axes[1] x ..., by separable contraction."""
    if len(axes) != p.dimension:
        raise ValueError(f"{len(axes)} grid axes for dimension {p.dimension}")
    shape = tuple(len(a) for a in axes)
    if p.is_zero:
        return np.zeros(shape)
    vander = npcheb.chebvander if p.basis == CHEBYSHEV else npmono.polyvander
    scale = p.box if p.basis == CHEBYSHEV else 1.0
    out = p.dense if p._dense_ok() else None
    if out is None:
        raise ValueError(f"grid evaluation needs a dense-capable polynomial, got {p!r}")
    for j, a in enumerate(axes):
        V = vander(np.asarray(a, dtype=float) / scale, p.max_exponent)
        out = np.moveaxis(np.tensordot(V, out, axes=(1, j)), 0, j)
    return out


# --- norms and arithmetic ---

def coef_norm(p: Polynomial) -> float:
    """Sum of absolute monomial coefficients (chebyshev input is converted first)."""
    q = to_monomial(p)
    if q.is_zero:
        return 0.0
    return math.fsum(abs(c) for c in q.coeffs.values())


def _check_compatible(p: Polynomial, q: Polynomial):
    if p.dimension != q.dimension:
        raise ValueError(f"dimension mismatch: {p.dimension} vs {q.dimension}")
    if p.basis != q.basis:
        raise ValueError(f"basis mismatch: {p.basis} vs {q.basis}")
    if p.basis == CHEBYSHEV and not math.isclose(p.box, q.box, rel_tol=1e-12):
        raise ValueError(f"box mismatch: {p.box} vs {q.box}")


def add(p: Polynomial, q: Polynomial) -> Polynomial:
    _check_compatible(p, q)
    terms = {}
    for idx in set(p.coeffs) | set(q.coeffs):
        a = p.coeffs.get(idx, 0.0)
        b = q.coeffs.get(idx, 0.0)
        c = a + b
        # relative cancellation only; tiny genuine coefficients stay
        if c == 0.0 or abs(c) < PRUNE_REL * max(abs(a), abs(b)):
            continue
        terms[idx] = c
    return Polynomial(p.dimension, terms, max(p.degree, q.degree), p.basis, p.box)


def scale(p: Polynomial, c: float) -> Polynomial:
    c = float(c)
    terms = {idx: v * c for idx, v in p.coeffs.items() if v * c != 0.0}
    return Polynomial(p.dimension, terms, p.degree, p.basis, p.box)


def subtract(p: Polynomial, q: Polynomial) -> Polynomial:
    return add(p, scale(q, -1.0))


def add_constant(p: Polynomial, c: float) -> Polynomial:
    return add(p, Polynomial.constant(p.dimension, c, p.basis, p.box))


def abs_coefficients(p: Polynomial) -> Polynomial:
    q = to_monomial(p)
    return Polynomial(q.dimension, {k: abs(v) for k, v in q.coeffs.items()}, q.degree)


# --- basis change ---

def chebyshev_to_monomial_matrix(degree: int, box: float = 1.0) -> np.ndarray:
    """
    Column n holds the monomial coefficients (in x) of T_n(x / box),
    built with T_{n+1} = 2 (x/box) T_n - T_{n-1}.
    """
    M = np.zeros((degree + 1, degree + 1))
    M[0, 0] = 1.0
    if degree >= 1:
        M[1, 1] = 1.0 / box
    for n in range(1, degree):
        M[1:, n + 1] = (2.0 / box) * M[:-1, n]
        M[:, n + 1] -= M[:, n - 1]
    return M


def to_monomial(p: Polynomial) -> Polynomial:
    if p.basis == MONOMIAL:
        return p
    if p.is_zero:
        return Polynomial(p.dimension, {}, p.degree)
    M = chebyshev_to_monomial_matrix(p.max_exponent, p.box)
    if p._dense_ok():
        out = p.dense
        mag = np.abs(p.dense)
        Mabs = np.abs(M)
        for j in range(p.dimension):
            out = np.moveaxis(np.tensordot(M, out, axes=(1, j)), 0, j)
            mag = np.moveaxis(np.tensordot(Mabs, mag, axes=(1, j)), 0, j)
        out = np.where(np.abs(out) <= PRUNE_REL * mag, 0.0, out)
        terms = {tuple(int(e) for e in idx): float(out[tuple(idx)]) for idx in np.argwhere(out != 0.0)}
        return Polynomial(p.dimension, terms, p.degree)
    acc: Dict[MultiIndex, float] = {}
    mag: Dict[MultiIndex, float] = {}
    for idx, c in p.coeffs.items():
        cols = [M[: e + 1, e] for e in idx]
        block = reduce(np.multiply.outer, cols) * c
        for sub in np.argwhere(block != 0.0):
            key = tuple(int(e) for e in sub)
            v = float(block[tuple(sub)])
            acc[key] = acc.get(key, 0.0) + v
            mag[key] = mag.get(key, 0.0) + abs(v)
    terms = {k: v for k, v in acc.items() if v != 0.0 and abs(v) > PRUNE_REL * mag[k]}
    return Polynomial(p.dimension, terms, p.degree)


# --- composition ---

def _mul_terms(a: Dict[MultiIndex, float], b: Dict[MultiIndex, float]) -> Dict[MultiIndex, float]:
    out: Dict[MultiIndex, float] = {}
    for ea, ca in a.items():
        for eb, cb in b.items():
            key = tuple(x + y for x, y in zip(ea, eb))
            out[key] = out.get(key, 0.0) + ca * cb
    return out


def check_orthonormal_rows(W) -> np.ndarray:
    W = np.atleast_2d(np.asarray(W, dtype=float))
    k, d = W.shape
    if k > d:
        raise ValueError(f"W has more rows than columns: {W.shape}")
    err = float(np.max(np.abs(W @ W.T - np.eye(k))))
    if err > ORTHO_TOL:
        raise ValueError(f"W rows are not orthonormal (max |W W^T - I| = {err:.3e})")
    return W


def composed_term_count(degree: int, ambient: int) -> int:
    return math.comb(degree + ambient, ambient)


def compose_with_linear_map(P: Polynomial, W) -> Polynomial:
    """Returns x -> P(W x) over R^d for W (k x d) with orthonormal rows."""
    W = check_orthonormal_rows(W)
    k, d = W.shape
    if k != P.dimension:
        raise ValueError(f"W has {k} rows but P has dimension {P.dimension}")
    Pm = to_monomial(P)
    unit = (0,) * d
    forms = []
    for j in range(k):
        form = {}
        for i in range(d):
            if W[j, i] != 0.0:
                e = [0] * d
                e[i] = 1
                form[tuple(e)] = float(W[j, i])
        forms.append(form)
    max_e = [0] * k
    for idx in Pm.coeffs:
        max_e = [max(m, e) for m, e in zip(max_e, idx)]
    powers = []
    for j in range(k):
        table = [{unit: 1.0}]
        for _ in range(max_e[j]):
            table.append(_mul_terms(table[-1], forms[j]))
        powers.append(table)
    acc: Dict[MultiIndex, float] = {}
    mag: Dict[MultiIndex, float] = {}
    for idx, c in Pm.coeffs.items():
        term = {unit: c}
        for j, e in enumerate(idx):
            if e:
                term = _mul_terms(term, powers[j][e])
        for key, v in term.items():
            acc[key] = acc.get(key, 0.0) + v
            mag[key] = mag.get(key, 0.0) + abs(v)
    terms = {key: v for key, v in acc.items() if v != 0.0 and abs(v) > PRUNE_REL * mag[key]}
    return Polynomial(d, terms, P.degree)


def lifted_coef_bound(P: Polynomial, W) -> float:
    """Upper bound on coefNorm(P o W): sum |c_I| prod_j ||W_j||_1^{I_j}."""
    W = np.atleast_2d(np.asarray(W, dtype=float))
    return float(evaluate(abs_coefficients(P), np.abs(W).sum(axis=1)))


# --- the radial power used by the tail dominator ---

def radial_power(dimension: int, power: int, coefficient: float = 1.0) -> Polynomial:
    """coefficient * (x_1^2 + ... + x_d^2)^power in the monomial basis."""
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    if coefficient == 0:
        return Polynomial(dimension, {}, 2 * power)
    sign = 1.0 if coefficient > 0 else -1.0
    base = math.log(abs(coefficient)) + gammaln(power + 1)
    terms = {}
    for a in compositions(power, dimension):
        log_c = base - sum(gammaln(ai + 1) for ai in a)
        c = sign * math.exp(log_c) if log_c > -745 else 0.0
        if c != 0.0:
            terms[tuple(2 * ai for ai in a)] = c
    return Polynomial(dimension, terms, 2 * power)


# --- records ---

def to_record(p: Polynomial) -> dict:
    return {
        "dimension": p.dimension,
        "basis": p.basis,
        "box": p.box,
        "degree": p.degree,
        "terms": [[list(idx), c] for idx, c in sorted(p.coeffs.items())],
    }


def from_record(rec: dict) -> Polynomial:
    try:
        terms = [(tuple(e), float(c)) for e, c in rec.get("terms", [])]
        return Polynomial.from_terms(int(rec["dimension"]), terms, rec.get("basis", MONOMIAL),
                                     rec.get("box"), rec.get("degree"))
    except (KeyError, TypeError) as e:
        raise ValueError(f"malformed polynomial record: {e}") from e
