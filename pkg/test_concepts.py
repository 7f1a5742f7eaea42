# test_concepts.py
import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

import concepts
import polycore
from concepts import (PTF, BoolCombo, Halfspace, Intersection, LiftedConcept, SingleHalfspace,
                      bias_shift_dilate, bias_shift_erode)

pt2 = arrays(np.float64, 2, elements=st.floats(min_value=-4, max_value=4, allow_nan=False))
rhos = st.floats(min_value=0.0, max_value=2.0, allow_nan=False)


def random_intersection(rng, k, dim=2, spread=1.0):
    W = rng.standard_normal((k, dim))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    taus = rng.uniform(-spread, spread, size=k)
    return Intersection([Halfspace(w, t) for w, t in zip(W, taus)], dim)


def quadrant():
    # positive region {x <= 0, y <= 0}
    return Intersection([Halfspace([1.0, 0.0], 0.0), Halfspace([0.0, 1.0], 0.0)])


def test_halfspace_eval_and_boundary():
    c = SingleHalfspace(Halfspace([1.0, 0.0], 0.5))
    assert concepts.eval_concept(c, [0.0, 0.0]) == 1
    assert concepts.eval_concept(c, [1.0, 3.0]) == -1
    assert concepts.eval_concept(c, [0.5, -7.0]) == 1


def test_halfspace_needs_unit_normal():
    with pytest.raises(ValueError):
        Halfspace([1.0, 1.0], 0.0)


def test_empty_intersection_is_constant():
    c = Intersection([], 3)
    X = np.random.default_rng(0).standard_normal((50, 3))
    assert np.all(c.eval_many(X) == 1)
    assert np.all(np.isinf(c.dist_to_negative_many(X).lo))
    with pytest.raises(ValueError):
        Intersection([])


def test_quadrant_distances():
    c = quadrant()
    d = concepts.dist_to_positive(c, [3.0, 4.0])
    assert d.exact and d.lo == pytest.approx(5.0)
    assert concepts.dist_to_positive(c, [3.0, -1.0]).lo == pytest.approx(3.0)
    assert concepts.dist_to_positive(c, [-1.0, -1.0]).lo == 0.0
    assert concepts.dist_to_negative(c, [-1.0, -3.0]).lo == pytest.approx(1.0)


def test_erosion_identity_random_intersections():
    rng = np.random.default_rng(11)
    for k in (1, 2, 3):
        for _ in range(5):
            c = random_intersection(rng, k)
            X = rng.standard_normal((20000, 2))
            rho = float(rng.uniform(0.01, 0.5))
            shifted = bias_shift_erode(c, rho).eval_many(X)
            assert np.array_equal(shifted, c.erode_many(X, rho))
            by_distance = np.where(c.dist_to_negative_many(X).lo > rho, 1, -1)
            assert np.count_nonzero(shifted != by_distance) == 0


def test_dilation_of_intersection_matches_distance():
    rng = np.random.default_rng(5)
    c = random_intersection(rng, 3)
    X = rng.standard_normal((5000, 2)) * 2
    rho = 0.3
    d = c.dist_to_positive_many(X).lo
    assert np.array_equal(c.dilate_many(X, rho), np.where(d <= rho, 1, -1))
    # the bias shift contains the true dilation
    assert np.all(bias_shift_dilate(c, rho).eval_many(X) >= c.dilate_many(X, rho))


def test_single_halfspace_dilation_is_bias_shift():
    c = SingleHalfspace(Halfspace([0.6, 0.8], 0.2))
    X = np.random.default_rng(2).standard_normal((5000, 2))
    d = c.dist_to_positive_many(X).lo
    assert np.array_equal(c.dilate_many(X, 0.25), np.where(d <= 0.25, 1, -1))


@given(pt2, rhos, rhos)
def test_dilation_erosion_monotone(x, r1, r2):
    c = quadrant()
    lo, hi = min(r1, r2), max(r1, r2)
    f = concepts.eval_concept(c, x)
    assert concepts.erode_eval(c, hi, x) <= concepts.erode_eval(c, lo, x) <= f
    assert f <= concepts.dilate_eval(c, lo, x) <= concepts.dilate_eval(c, hi, x)


@given(pt2, pt2)
def test_slack_is_lipschitz(x, y):
    c = random_intersection(np.random.default_rng(1), 3)
    assert abs(concepts.slack(c, x) - concepts.slack(c, y)) <= np.linalg.norm(x - y) + 1e-12


def test_negative_rho_rejected():
    with pytest.raises(ValueError):
        concepts.dilate_eval(quadrant(), -0.1, [0.0, 0.0])


def test_bias_shift_needs_intersection():
    p = PTF(polycore.Polynomial.from_terms(1, {(1,): 1.0}))
    with pytest.raises(ValueError):
        bias_shift_erode(p, 0.1)


def test_and_combo_matches_intersection():
    h1, h2 = Halfspace([1.0, 0.0], 0.3), Halfspace([0.0, 1.0], -0.2)
    combo = BoolCombo("0001", [h1, h2])
    inter = Intersection([h1, h2])
    X = np.random.default_rng(4).standard_normal((4000, 2))
    assert combo.unate and combo.polarity == (1, 1)
    assert np.array_equal(combo.eval_many(X), inter.eval_many(X))
    assert np.array_equal(combo.dilate_many(X, 0.2), bias_shift_dilate(inter, 0.2).eval_many(X))
    assert np.array_equal(combo.erode_many(X, 0.2), bias_shift_erode(inter, 0.2).eval_many(X))


def test_truth_table_order():
    # first part is the most significant bit: "0010" is +1 only for (part1=+1, part2=-1)
    h1, h2 = Halfspace([1.0], 0.0), Halfspace([-1.0], -1.0)
    combo = BoolCombo("0010", [h1, h2])
    # x = -2: part1 +1 (x <= 0), part2 -1 (-x <= -1 fails)
    assert concepts.eval_concept(combo, [-2.0]) == 1
    assert concepts.eval_concept(combo, [2.0]) == -1


def test_xor_combo_is_sandwiched():
    rng = np.random.default_rng(8)
    combo = BoolCombo([-1, 1, 1, -1], [Halfspace([1.0, 0.0], 0.0), Halfspace([0.0, 1.0], 0.0)])
    assert not combo.unate
    X = rng.standard_normal((1500, 2))
    f = combo.eval_many(X)
    assert np.all(combo.erode_many(X, 0.1) <= f)
    assert np.all(f <= combo.dilate_many(X, 0.1))


def test_negation_duality():
    combo = BoolCombo("0111", [Halfspace([1.0, 0.0], 0.1), Halfspace([0.6, -0.8], 0.4)])
    neg = concepts.negate(combo)
    X = np.random.default_rng(9).standard_normal((3000, 2))
    assert np.array_equal(neg.eval_many(X), -combo.eval_many(X))
    assert np.array_equal(neg.erode_many(X, 0.15), -combo.dilate_many(X, 0.15))
    assert np.array_equal(neg.dilate_many(X, 0.15), -combo.erode_many(X, 0.15))


def test_negate_unsupported_kind():
    with pytest.raises(ValueError):
        concepts.negate(quadrant())


def test_combo_rejects_bad_table():
    with pytest.raises(ValueError):
        BoolCombo("010", [Halfspace([1.0], 0.0), Halfspace([-1.0], 0.0)])
    with pytest.raises(ValueError):
        BoolCombo("0x01", [Halfspace([1.0], 0.0), Halfspace([-1.0], 0.0)])


def test_ptf_circle_distance_interval():
    circle = PTF(polycore.Polynomial.from_terms(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}))
    assert concepts.eval_concept(circle, [0.0, 0.0]) == -1
    assert concepts.eval_concept(circle, [2.0, 0.0]) == 1
    d = concepts.dist_to_positive(circle, [0.0, 0.0])
    assert d.lo <= 1.0 + 1e-9
    assert 1.0 - 1e-9 <= d.hi <= 1.0 + 1e-6
    inside = concepts.dist_to_negative(circle, [1.5, 0.0])
    assert inside.lo <= 0.5 <= inside.hi <= 0.5 + 1e-6


def test_ptf_boundary_points_near_boundary():
    circle = PTF(polycore.Polynomial.from_terms(2, {(2, 0): 1.0, (0, 2): 1.0, (0, 0): -1.0}))
    P = circle.boundary_points(np.random.default_rng(0), 200, [0.0])
    # points very close to the origin may need more Newton steps
    assert np.mean(np.abs(np.linalg.norm(P, axis=1) - 1.0) < 1e-6) >= 0.97


def test_intersection_boundary_points_offsets():
    c = SingleHalfspace(Halfspace([0.0, 1.0], 0.5))
    P = c.boundary_points(np.random.default_rng(0), 100, [0.25])
    assert np.allclose(np.abs(P[:, 1] - 0.5), 0.25)


def test_intersection_boundary_points_lie_on_the_polytope():
    s = 1.0 / np.sqrt(2.0)
    triangle = Intersection([Halfspace([1.0, 0.0], 1.0), Halfspace([0.0, 1.0], 1.0), Halfspace([-s, -s], 1.0)])
    P = triangle.boundary_points(np.random.default_rng(4), 300, [0.0])
    assert P.shape == (300, 2)
    M = triangle.margins(P)
    assert np.all(M <= 1e-8)
    assert np.allclose(M.max(axis=1), 0.0, atol=1e-8)
    # every facet is sampled
    assert set(np.argmax(M, axis=1)) == {0, 1, 2}


def test_intersection_boundary_offsets_keep_their_side():
    c = quadrant()
    P = c.boundary_points(np.random.default_rng(5), 400, [0.3])
    top = c.margins(P).max(axis=1)
    outside = top > 0
    assert 0 < outside.sum() < len(P)
    assert np.allclose(top[outside], 0.3)
    assert np.allclose(c.dist_to_positive_many(P[outside]).lo, 0.3)
    assert np.all(c.eval_many(P[~outside]) == 1)


def test_lifted_matches_ambient_halfspace():
    W = np.array([[0.6, 0.8]])
    lifted = concepts.lift(SingleHalfspace(Halfspace([1.0], 0.5)), W)
    ambient = SingleHalfspace(Halfspace([0.6, 0.8], 0.5))
    X = np.random.default_rng(3).standard_normal((2000, 2)) * 2
    assert np.array_equal(lifted.eval_many(X), ambient.eval_many(X))
    assert np.allclose(lifted.dist_to_positive_many(X).lo, ambient.dist_to_positive_many(X).lo)
    assert np.array_equal(lifted.dilate_many(X, 0.2), ambient.dilate_many(X, 0.2))
    U = np.array([[0.1], [-2.0]])
    E = lifted.embed(U, np.random.default_rng(0))
    assert np.allclose(lifted.project(E), U)


def test_lift_rejects_bad_w():
    with pytest.raises(ValueError):
        LiftedConcept(SingleHalfspace(Halfspace([1.0], 0.0)), [[1.0, 1.0]])


def test_records():
    c = concepts.concept_from_record({"kind": "halfspace", "w": [2.0, 0.0], "tau": 1.0})
    assert np.allclose(c.halfspace.w, [1.0, 0.0]) and c.halfspace.tau == pytest.approx(0.5)
    assert concepts.concept_from_record({"kind": "constant", "dimension": 2}).k == 0
    combo = BoolCombo("0110", [Halfspace([1.0, 0.0], 0.0), Halfspace([0.0, 1.0], 0.3)])
    back = concepts.concept_from_record(concepts.concept_to_record(combo))
    X = np.random.default_rng(1).standard_normal((500, 2))
    assert np.array_equal(back.eval_many(X), combo.eval_many(X))
    lifted = concepts.concept_from_record({"kind": "halfspace", "w": [1.0], "tau": 0.0, "W": [[0.0, 1.0]]})
    assert isinstance(lifted, LiftedConcept) and lifted.dimension == 2
    with pytest.raises(ValueError):
        concepts.concept_from_record({"kind": "sphere"})
    with pytest.raises(ValueError):
        concepts.concept_from_record({"kind": "intersection"})
