# lipschitz.py
"""
Lipschitz sandwich f_down <= f <= f_up of a concept, obtained by smoothing
its rho-dilation and rho-erosion with clipped distance differences.

  rho = (1/sigma) (eps/2)^s,  L = 2/rho
  g_up   = dist(x, far-out) - dist(x, S_in),   far-out = {dist(., S_in) > rho}
  g_down = dist(x, S_out) - dist(x, far-in),   far-in  = {dist(., S_out) > rho}
  f = clip(g / rho, -1, 1)

dist(x, far-out) is bounded below by max(0, rho - dist(x, S_in)) (equal for
convex S_in). Interval oracles plug in the side of the interval that keeps
the sandwich; inside the positive region dist(x, S_in) is exactly 0.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from concepts import Concept, as_points

log = logging.getLogger("sandwich.lipschitz")

TWO_DISTANCE = "two_distance"
ONE_DISTANCE = "one_distance"
VARIANTS = (TWO_DISTANCE, ONE_DISTANCE)


def clip(t, a: float = -1.0, b: float = 1.0):
    return np.clip(t, a, b)


def smoothing_radius(sigma: float, eps: float, s: float) -> float:
    return (1.0 / sigma) * (eps / 2.0) ** s


def validate_params(sigma: float, eps: float, s: float):
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not s >= 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if not sigma >= 1:
        raise ValueError(f"sigma must be >= 1, got {sigma}")


@dataclass(frozen=True, eq=False)
class LipschitzSandwich:
    concept: Concept
    sigma: float
    eps: float
    s: float
    rho: float
    L: float
    variant: str = TWO_DISTANCE

    @property
    def dimension(self) -> int:
        return self.concept.dimension

    def g_up_many(self, X: np.ndarray) -> np.ndarray:
        dp = self.concept.dist_to_positive_many(X, radius=self.rho)
        if self.variant == ONE_DISTANCE:
            return self.rho - 2.0 * dp.lo
        return np.maximum(0.0, self.rho - dp.hi) - dp.lo

    def g_down_many(self, X: np.ndarray) -> np.ndarray:
        dn = self.concept.dist_to_negative_many(X, radius=self.rho)
        if self.variant == ONE_DISTANCE:
            return 2.0 * dn.lo - self.rho
        return dn.lo - np.maximum(0.0, self.rho - dn.hi)

    def f_up_many(self, X: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return clip(self.g_up_many(X) / self.rho)

    def f_down_many(self, X: np.ndarray) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return clip(self.g_down_many(X) / self.rho)

    def describe(self) -> dict:
        return {"sigma": self.sigma, "eps": self.eps, "s": self.s, "rho": self.rho, "L": self.L,
                "variant": self.variant}


def build_lipschitz_sandwich(c: Concept, sigma: float, eps: float, s: float = 1.0,
                             variant: str = TWO_DISTANCE) -> LipschitzSandwich:
    validate_params(sigma, eps, s)
    if variant not in VARIANTS:
        raise ValueError(f"unknown Lipschitz variant {variant!r}")
    rho = smoothing_radius(sigma, eps, s)
    ls = LipschitzSandwich(c, float(sigma), float(eps), float(s), rho, 2.0 / rho, variant)
    log.debug("lipschitz sandwich: %s", ls.describe())
    return ls


def eval_up(ls: LipschitzSandwich, x):
    X, single = as_points(x, ls.dimension)
    out = ls.f_up_many(X)
    return float(out[0]) if single else out


def eval_down(ls: LipschitzSandwich, x):
    X, single = as_points(x, ls.dimension)
    out = ls.f_down_many(X)
    return float(out[0]) if single else out


def with_rho(ls: LipschitzSandwich, rho: float, L: Optional[float] = None) -> LipschitzSandwich:
    """Same concept and variant at another smoothing radius (used for rho comparisons)."""
    if not rho > 0:
        raise ValueError(f"rho must be > 0, got {rho}")
    return LipschitzSandwich(ls.concept, ls.sigma, ls.eps, ls.s, float(rho), L or 2.0 / rho, ls.variant)
