# test_lipschitz.py
import numpy as np
import pytest
from hypothesis import given, strategies as st

import lipschitz
from concepts import BoolCombo, Halfspace, Intersection, SingleHalfspace
from lipschitz import ONE_DISTANCE, TWO_DISTANCE

xs = st.floats(min_value=-3, max_value=3, allow_nan=False)


def half_line():
    # positive for x <= 0
    return SingleHalfspace(Halfspace([1.0], 0.0))


def test_radius_and_constant():
    ls = lipschitz.build_lipschitz_sandwich(half_line(), sigma=1.0, eps=0.5, s=1.0)
    assert ls.rho == pytest.approx(0.25)
    assert ls.L == pytest.approx(8.0)
    assert lipschitz.smoothing_radius(2.0, 0.5, 2.0) == pytest.approx(0.5 * 0.0625)


@pytest.mark.parametrize("sigma,eps,s", [(1.0, 0.0, 1.0), (1.0, 1.0, 1.0), (0.5, 0.1, 1.0), (1.0, 0.1, 0.5)])
def test_params_rejected(sigma, eps, s):
    with pytest.raises(ValueError):
        lipschitz.build_lipschitz_sandwich(half_line(), sigma, eps, s)


def test_unknown_variant():
    with pytest.raises(ValueError):
        lipschitz.build_lipschitz_sandwich(half_line(), 1.0, 0.5, variant="three_distance")


def test_half_line_values():
    ls = lipschitz.build_lipschitz_sandwich(half_line(), 1.0, 0.5)
    rho = ls.rho
    assert lipschitz.eval_up(ls, [-1.0]) == 1.0
    assert lipschitz.eval_up(ls, [rho / 2]) == pytest.approx(0.0)
    assert lipschitz.eval_up(ls, [2 * rho]) == -1.0
    assert lipschitz.eval_down(ls, [-rho / 2]) == pytest.approx(0.0)
    assert lipschitz.eval_down(ls, [-2 * rho]) == 1.0
    assert lipschitz.eval_down(ls, [0.5]) == -1.0


@pytest.mark.parametrize("variant", [TWO_DISTANCE, ONE_DISTANCE])
def test_sandwich_holds_and_matches_dilation(variant):
    rng = np.random.default_rng(21)
    W = rng.standard_normal((3, 2))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    c = Intersection([Halfspace(w, t) for w, t in zip(W, rng.uniform(-0.5, 1.0, 3))])
    ls = lipschitz.build_lipschitz_sandwich(c, 1.0, 0.4, variant=variant)
    X = rng.standard_normal((20000, 2))
    f = c.eval_many(X)
    up, down = ls.f_up_many(X), ls.f_down_many(X)
    assert np.all(down <= f) and np.all(f <= up)
    assert np.all(up[c.dilate_many(X, ls.rho) < 0] == -1.0)
    assert np.all(down[c.erode_many(X, ls.rho) > 0] == 1.0)
    assert np.all(np.abs(up) <= 1.0) and np.all(np.abs(down) <= 1.0)


def test_sandwich_for_boolean_combination():
    combo = BoolCombo("0110", [Halfspace([1.0, 0.0], 0.2), Halfspace([0.0, 1.0], -0.1)])
    ls = lipschitz.build_lipschitz_sandwich(combo, 1.0, 0.6)
    X = np.random.default_rng(2).standard_normal((2000, 2))
    f = combo.eval_many(X)
    assert np.all(ls.f_down_many(X) <= f)
    assert np.all(f <= ls.f_up_many(X))


@given(xs, xs)
def test_lipschitz_constant(a, b):
    ls = lipschitz.build_lipschitz_sandwich(half_line(), 1.0, 0.5)
    X = np.array([[a], [b]])
    up, down = ls.f_up_many(X), ls.f_down_many(X)
    gap = ls.L * abs(a - b) + 1e-12
    assert abs(up[0] - up[1]) <= gap
    assert abs(down[0] - down[1]) <= gap


@given(xs, st.floats(min_value=0.01, max_value=1.0), st.floats(min_value=0.01, max_value=1.0))
def test_up_is_monotone_in_rho(x, r1, r2):
    ls = lipschitz.build_lipschitz_sandwich(half_line(), 1.0, 0.5)
    lo, hi = sorted((r1, r2))
    X = np.array([[x]])
    a = lipschitz.with_rho(ls, lo).f_up_many(X)[0]
    b = lipschitz.with_rho(ls, hi).f_up_many(X)[0]
    assert a <= b + 1e-12


def test_with_rho():
    ls = lipschitz.build_lipschitz_sandwich(half_line(), 1.0, 0.5)
    other = lipschitz.with_rho(ls, 0.1)
    assert other.rho == 0.1 and other.L == pytest.approx(20.0)
    assert other.variant == ls.variant
    with pytest.raises(ValueError):
        lipschitz.with_rho(ls, 0.0)
