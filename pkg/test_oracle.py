import math

import numpy as np
import pytest

from conftest import interior_netput, property_trials, random_points
from errors import DomainError, UnsupportedRegimeError
from gmean import CobbDouglas, PMeanDirectional, PMeanPlain, PParameter, indirect_utility, p_mean_utility
from oracle import GridSpec, batch_utility, budget_line_max, fdh_closed_form, grid_search
from primal import evaluate_p
from technology import Direction, Fdh, VrsHull


def test_grid_search_recovers_fare_lovell(example_hrep):
    g = Direction([1.0, 1.0])
    result = grid_search(example_hrep, [-3.0, 2.0], g, PMeanDirectional(PParameter.finite(1.0), g), GridSpec(1001))
    assert result.lower == pytest.approx(0.5)
    assert np.allclose(result.argmax, [1.0, 0.0])
    assert result.lower <= result.upper


@pytest.mark.parametrize("token", ["-1", "-0.5", "0", "0.5"])
def test_concave_scores_sit_inside_grid_bounds(rng, token):
    for _ in range(property_trials(5)):
        points = random_points(rng, 1, 1, 6)
        tech = VrsHull(points)
        z = interior_netput(rng, points, 1)
        g = Direction(np.abs(z))
        score = evaluate_p(tech, z, g, token, with_status=False).score
        bounds = grid_search(tech, z, g, PMeanDirectional(PParameter.parse(token), g), GridSpec(101))
        assert bounds.lower <= score + 1e-5 * (1.0 + score)
        assert score <= bounds.upper + 1e-9


def test_grid_search_infeasible_netput(example_hrep):
    g = Direction([1.0, 1.0])
    result = grid_search(example_hrep, [1.0, 1.0], g, PMeanDirectional(PParameter.finite(1.0), g))
    assert result.lower == -math.inf
    assert result.argmax is None


def test_grid_search_dimension_limit():
    tech = VrsHull([[-1.0, -1.0, 1.0, 1.0]])
    g = Direction.unit(4)
    with pytest.raises(UnsupportedRegimeError):
        grid_search(tech, [-2.0, -2.0, 0.5, 0.5], g, PMeanDirectional(PParameter.finite(1.0), g))


def test_grid_spec_validation():
    with pytest.raises(DomainError):
        GridSpec(resolution=1)


def test_batch_utility_matches_scalar_means(rng):
    g = Direction([1.0, 2.0])
    s = rng.uniform(0.0, 3.0, size=(10, 2))
    for token in ["-inf", "-1", "0", "0.5", "2", "inf"]:
        spec = PMeanDirectional(PParameter.parse(token), g)
        expected = [p_mean_utility(spec, row) for row in s]
        assert np.allclose(batch_utility(spec, s), expected)
    with pytest.raises(DomainError):
        batch_utility(PMeanPlain(PParameter.finite(0.0), [1.0, 1.0]), s)


def test_fdh_closed_form_matches_solver(rng):
    for _ in range(property_trials(20)):
        points = np.hstack([-rng.integers(1, 6, size=(6, 1)), rng.integers(1, 6, size=(6, 2))]).astype(float)
        tech = Fdh(points)
        z = points[0] * np.array([1.0, 0.5, 0.5])
        g = np.abs(z)
        for token in ["-inf", "-0.5", "0", "1", "3", "inf"]:
            expected = fdh_closed_form(points, z, g, token)
            score = evaluate_p(tech, z, g, token, with_status=False).score
            assert score == pytest.approx(expected, rel=1e-12, abs=1e-15)


def test_fdh_closed_form_conventions():
    points = [[-2.0, 2.0]]
    assert fdh_closed_form(points, [-1.0, 1.0], [1.0, 1.0], 1) == -math.inf
    assert fdh_closed_form(points, [-3.0, 1.0], [0.0, 0.0], 1) == math.inf


def test_budget_line_max_matches_cobb_douglas_closed_form():
    spec = CobbDouglas([0.5, 0.5], [1.0, 1.0])
    value = budget_line_max(spec, [1.0, 2.0], 2.0)
    assert value == pytest.approx(2.0 * indirect_utility(spec, [1.0, 2.0]), rel=1e-5)
    with pytest.raises(DomainError):
        budget_line_max(spec, [0.0, 1.0], 1.0)
