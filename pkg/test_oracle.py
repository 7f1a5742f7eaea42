# test_oracle.py
import logging
import math

import numpy as np
import pytest

import approx
import oracle
import polycore
from concepts import Halfspace, Intersection, SingleHalfspace
from measures import DistributionSpec, gaussian_moment
from oracle import DiscreteDistribution, GridMeasure, LPSolveError

DEGREES = [1, 3, 5, 7]


@pytest.fixture(scope="module")
def half_line_grid():
    c = SingleHalfspace(Halfspace([1.0], 0.0))
    grid = oracle.gauss_hermite_grid(1, 64)
    return c, grid, c.eval_many(grid.points)


def test_safe_solve_simple_and_infeasible():
    res = oracle.safe_solve([1.0], A_ub=[[-1.0]], b_ub=[-1.0])
    assert res.x[0] == pytest.approx(1.0)
    with pytest.raises(LPSolveError) as err:
        oracle.safe_solve([1.0], A_ub=[[1.0]], b_ub=[-1.0], bounds=(0, None), label="infeasible")
    assert "infeasible" in str(err.value)


def test_grid_measure_validation():
    with pytest.raises(ValueError):
        GridMeasure([[0.0], [1.0]], [0.5, 0.4])
    with pytest.raises(ValueError):
        GridMeasure([[0.0], [0.0]], [0.5, 0.5])
    with pytest.raises(ValueError):
        GridMeasure([[0.0], [1.0]], [1.5, -0.5])
    g = GridMeasure([[0.0], [1.0]], [0.5, 0.5])
    h = g.with_points([[1.0], [2.0]])
    assert h.size == 3 and h.weights[-1] == 0.0
    assert h.expectation(h.points[:, 0]) == pytest.approx(0.5)
    assert g.with_points(np.zeros((0, 1))) is g


def test_gauss_hermite_grid_moments():
    grid = oracle.gauss_hermite_grid(2, 16)
    assert grid.size == 256
    assert math.fsum(grid.weights) == pytest.approx(1.0, abs=1e-12)
    assert grid.expectation(grid.points[:, 0] ** 2) == pytest.approx(1.0, rel=1e-10)
    assert grid.expectation(grid.points[:, 1] ** 4) == pytest.approx(3.0, rel=1e-10)


def test_moment_matched_quadrature():
    dd = oracle.moment_matched_quadrature(DistributionSpec(1), 3)
    assert np.allclose(np.sort(dd.points[:, 0]), [-1.0, 1.0])
    assert np.allclose(dd.probs, [0.5, 0.5])
    two = oracle.moment_matched_quadrature(DistributionSpec(2), 5)
    assert len(two.points) == 9
    assert two.moment((4, 0)) == pytest.approx(3.0)
    assert two.moment((2, 2)) == pytest.approx(1.0)
    assert two.moment_residual(gaussian_moment) < 1e-10
    frame = two.to_frame()
    assert list(frame.columns) == ["x1", "x2", "prob"]
    with pytest.raises(ValueError):
        oracle.moment_matched_quadrature(DistributionSpec(1, "generalized_gaussian", 0.5), 3)


def test_discrete_distribution_validation():
    with pytest.raises(ValueError):
        DiscreteDistribution([[0.0], [1.0]], [0.7, 0.7], 1)
    with pytest.raises(ValueError):
        DiscreteDistribution([[0.0]], [1.0], -1)
    with pytest.raises(ValueError):
        DiscreteDistribution([[0.0], [1.0]], [1.2, -0.2], 1)


def test_basis_matrix_chebyshev_columns():
    X = np.random.default_rng(0).uniform(-2, 2, size=(20, 2))
    V, idx = oracle.basis_matrix(X, 3, polycore.CHEBYSHEV, 2.0)
    assert V.shape == (20, len(idx))
    for j, alpha in enumerate(idx):
        p = polycore.Polynomial(2, {alpha: 1.0}, sum(alpha), polycore.CHEBYSHEV, 2.0)
        assert np.allclose(V[:, j], polycore.evaluate_many(p, X), atol=1e-10)


def test_lp_sandwich_on_grid(half_line_grid):
    _, grid, f = half_line_grid
    pairs = oracle.lp_degree_scan(f, grid, DEGREES)
    gaps = [p.gap for p in pairs]
    assert all(b <= a + 1e-7 for a, b in zip(gaps, gaps[1:]))
    for p in pairs:
        assert np.all(p.eval_up_many(grid.points) >= f - 1e-7)
        assert np.all(p.eval_down_many(grid.points) <= f + 1e-7)
        assert p.gap == pytest.approx(p.upper_excess + p.lower_excess)
        assert oracle.grid_gap(p, grid) == pytest.approx(p.gap, abs=1e-6)
        assert p.B == pytest.approx(p.coef_norm_up + p.coef_norm_down)


def test_degree_zero_sandwich(half_line_grid):
    _, grid, f = half_line_grid
    p = oracle.lp_optimal_sandwich(f, grid, 0)
    assert p.gap == pytest.approx(2.0, abs=1e-7)
    with pytest.raises(ValueError):
        oracle.lp_optimal_sandwich(f, grid, -1)
    with pytest.raises(ValueError):
        oracle.lp_optimal_sandwich(f[:-1], grid, 1)


def test_threads_do_not_change_scan(half_line_grid):
    _, grid, f = half_line_grid
    one = oracle.lp_degree_scan(f, grid, [1, 3], threads=1)
    two = oracle.lp_degree_scan(f, grid, [1, 3], threads=2)
    assert [p.gap for p in one] == [p.gap for p in two]


def test_coefficient_penalty_shrinks_norm(half_line_grid):
    _, grid, f = half_line_grid
    plain = oracle.lp_optimal_sandwich(f, grid, 3)
    pen = oracle.lp_optimal_sandwich(f, grid, 3, coef_penalty=0.01)
    assert pen.p_up.basis == polycore.MONOMIAL
    assert np.all(pen.eval_up_many(grid.points) >= f - 1e-7)
    assert np.all(pen.eval_down_many(grid.points) <= f + 1e-7)
    assert pen.gap >= plain.gap - 1e-5
    assert pen.B <= plain.B + 1e-3


@pytest.mark.parametrize("degree", [1, 3, 5])
def test_adversary_matches_lp_duality(half_line_grid, degree):
    _, grid, f = half_line_grid
    pair = oracle.lp_optimal_sandwich(f, grid, degree)
    adv = oracle.worst_case_fooling_lp(f, grid, degree)
    assert adv.deviation_up == pytest.approx(pair.upper_excess, abs=1e-6)
    assert adv.deviation_down == pytest.approx(pair.lower_excess, abs=1e-6)
    # the adversary reproduces the grid moments it was constrained on
    grid_moments = lambda alpha: grid.expectation(np.prod(grid.points ** np.asarray(alpha), axis=1))  # noqa: E731
    assert adv.adversary.moment_residual(grid_moments) < 1e-3


def test_fooling_check_on_grid(half_line_grid):
    c, grid, f = half_line_grid
    pair = oracle.lp_optimal_sandwich(f, grid, 3)
    adv = oracle.worst_case_fooling_lp(f, grid, 3)
    report = oracle.fooling_check(c, pair, adv.adversary, grid)
    assert report.holds
    assert report.deviation == pytest.approx(adv.deviation_up, abs=1e-6)
    assert report.gap_l1.std_error == 0.0
    assert report.converse_B is None
    rec = report.to_record()
    assert rec["holds"] is True and "bound" in rec


def test_fooling_check_with_delta(half_line_grid):
    c, grid, f = half_line_grid
    pair = oracle.lp_optimal_sandwich(f, grid, 3)
    adv = oracle.worst_case_fooling_lp(f, grid, 3, delta=0.01)
    assert adv.deviation_up >= -1e-9 and adv.deviation_down >= -1e-9
    report = oracle.fooling_check(c, pair, adv.adversary, grid)
    assert report.holds
    assert report.bound >= report.gap_l1.value + 0.01 * pair.B - 1e-12
    assert report.converse_B == pytest.approx(2 * report.deviation / 0.01)


def test_fooling_check_monte_carlo():
    c = Intersection([], 1)
    pair = approx.assemble_sandwich(c, 1.0, 0.4, 1.0, DistributionSpec(1), seed=1)
    dprime = oracle.moment_matched_quadrature(DistributionSpec(1), pair.degree)
    report = oracle.fooling_check(c, pair, dprime, DistributionSpec(1), n=20000, seed=4)
    assert report.holds and report.deviation == 0.0
    assert report.gap_l1.within(0.95, k=4.0)
    low = oracle.moment_matched_quadrature(DistributionSpec(1), pair.degree - 1)
    with pytest.raises(ValueError):
        oracle.fooling_check(c, pair, low, DistributionSpec(1))


@pytest.fixture(scope="module")
def half_line_construction():
    c = SingleHalfspace(Halfspace([1.0], 0.0))
    return c, approx.assemble_sandwich(c, 1.0, 0.9, 1.0, DistributionSpec(1), seed=3)


def test_fooling_check_construction_pair(half_line_construction):
    c, pair = half_line_construction
    dprime = oracle.moment_matched_quadrature(DistributionSpec(1), pair.degree)
    report = oracle.fooling_check(c, pair, dprime, DistributionSpec(1), n=20000, seed=7)
    assert report.delta == 0.0 and report.converse_B is None
    se = math.hypot(report.expectation_reference.std_error, report.gap_l1.std_error)
    assert report.bound == pytest.approx(report.gap_l1.value + 3.0 * se)
    assert report.gap_l1.value <= pair.declared_gap
    assert report.holds


def test_fooling_check_perturbed_construction_pair(half_line_construction):
    c, pair = half_line_construction
    exact = oracle.moment_matched_quadrature(DistributionSpec(1), pair.degree)
    x = exact.points[:, 0]
    a, b = int(np.argmin(np.abs(x + 0.5))), int(np.argmin(np.abs(x - 0.5)))
    t = min(1e-4, exact.probs[a] / 2.0)
    probs = exact.probs.copy()
    probs[a] -= t
    probs[b] += t
    # moving mass t from x_a to x_b shifts E[x^j] by t (x_b^j - x_a^j), and |x_a|, |x_b| < 1
    powers = np.arange(pair.degree + 1)
    delta = t * float(np.max(np.abs(x[b] ** powers - x[a] ** powers)))
    assert 0.0 < delta <= 2.0 * t
    dprime = DiscreteDistribution(exact.points, probs, exact.order, delta)
    report = oracle.fooling_check(c, pair, dprime, DistributionSpec(1), n=20000, seed=7)
    se = math.hypot(report.expectation_reference.std_error, report.gap_l1.std_error)
    assert report.bound == pytest.approx(report.gap_l1.value + delta * pair.B + 3.0 * se)
    base = exact.expectation(c.eval_many(exact.points))
    assert report.expectation_dprime == pytest.approx(base - 2.0 * t, abs=1e-12)
    assert report.converse_B == pytest.approx(2.0 * report.deviation / delta)
    assert report.holds


def test_moment_check_order_is_logged(caplog):
    caplog.set_level(logging.DEBUG, logger="sandwich.oracle")
    oracle.moment_matched_quadrature(DistributionSpec(1), 41)
    capped = [r.getMessage() for r in caplog.records if r.levelno == logging.INFO]
    assert any("declared order 41" in m and f"up to order {oracle.MOMENT_CHECK_MAX}" in m for m in capped)

    caplog.clear()
    oracle.moment_matched_quadrature(DistributionSpec(1), 7)
    assert not [r for r in caplog.records if r.levelno >= logging.INFO]
    assert any("order 7 checked in full" in r.getMessage() for r in caplog.records)
