import math

import numpy as np
import pytest

from errors import DimensionMismatchError, DomainError, UnsupportedRegimeError
from gmean import PMeanDirectional, PMeanPlain, PParameter
from primal import (
    asymmetric_distance,
    debreu_farrell,
    directional_distance,
    evaluate_p,
    evaluate_utility,
    fare_lovell_input,
    generalized_input_measure,
    load_dispatch_tables,
    measure_name,
)
from technology import Direction, Fdh, HRep, StatusKind, VrsHull


# ---------------- TAXONOMY ---------------- #

def test_measure_names_match_dispatch_fixture():
    for row in load_dispatch_tables()["measures"]:
        assert measure_name(row["p"]) == row["measure"], row["p"]


def test_near_zero_p_is_the_multiplicative_measure():
    assert measure_name(1e-9) == "multiplicative_directional_fare_lovell"


# ---------------- DIRECTIONAL DISTANCE ---------------- #

def test_directional_distance(example_hrep):
    assert directional_distance(example_hrep, [-3.0, 2.0], [1.0, 1.0]).score == pytest.approx(0.0, abs=1e-12)
    result = directional_distance(example_hrep, [-3.0, 1.0], [1.0, 1.0])
    assert result.score == pytest.approx(1.0)
    assert np.allclose(result.projection.values, [-2.0, 2.0])
    assert result.projection_status.kind == StatusKind.EFFICIENT


def test_directional_distance_conventions(example_hrep):
    assert directional_distance(example_hrep, [1.0, 1.0], [1.0, 1.0]).score == -math.inf
    assert directional_distance(example_hrep, [-3.0, 1.0], [0.0, 0.0]).score == math.inf


def test_directional_distance_contraction(example_hrep):
    result = directional_distance(example_hrep, [1.0, 1.0], [1.0, 1.0], allow_contraction=True)
    assert result.score == pytest.approx(-1.0)
    assert np.allclose(result.projection.values, [0.0, 0.0])


def test_directional_distance_fdh(two_point_fdh):
    assert directional_distance(two_point_fdh, [-4.0, 2.0], [1.0, 1.0]).score == pytest.approx(0.0, abs=1e-12)
    assert directional_distance(two_point_fdh, [-5.0, 1.0], [1.0, 1.0]).score == pytest.approx(1.0)


def test_asymmetric_distance(example_hrep):
    result = asymmetric_distance(example_hrep, [-3.0, 2.0], [1.0, 1.0])
    assert result.score == pytest.approx(1.0)
    assert result.diagnostics["winner"] == 0


def test_direction_dimension_checked(example_hrep):
    with pytest.raises(DimensionMismatchError):
        evaluate_p(example_hrep, [-3.0, 2.0], [1.0, 1.0, 1.0], 1)


# ---------------- D_(p) ---------------- #

def test_evaluate_p_fare_lovell_example(example_hrep):
    result = evaluate_p(example_hrep, [-3.0, 2.0], [1.0, 1.0], 1)
    assert result.score == pytest.approx(0.5)
    assert np.allclose(result.delta_star, [1.0, 0.0])
    assert result.measure == "directional_fare_lovell"
    assert result.status.kind == StatusKind.WEAKLY_EFFICIENT


def test_evaluate_p_absorbs_at_weak_efficiency(example_hrep):
    for token in ["-inf", "-2", "-0.5", "0"]:
        assert evaluate_p(example_hrep, [-3.0, 2.0], [1.0, 1.0], token).score == pytest.approx(0.0, abs=1e-9)


def test_evaluate_p_positive_regimes(example_hrep):
    z, g = [-3.0, 2.0], [1.0, 1.0]
    # best delta is (1, 0): M_p = 2^(-1/p)
    assert evaluate_p(example_hrep, z, g, 0.5).score == pytest.approx(0.25, abs=1e-7)
    assert evaluate_p(example_hrep, z, g, 2).score == pytest.approx(2.0 ** -0.5)
    assert evaluate_p(example_hrep, z, g, "inf").score == pytest.approx(1.0)


def test_evaluate_p_fdh(two_point_fdh):
    result = evaluate_p(two_point_fdh, [-4.0, 2.0], [1.0, 1.0], 1)
    assert result.score == pytest.approx(1.5)
    assert np.allclose(result.delta_star, [0.0, 3.0])
    assert result.diagnostics["regime"] == "fdh_scan"


def test_evaluate_p_partial_direction(example_hrep):
    result = evaluate_p(example_hrep, [-3.0, 1.0], [1.0, 0.0], 2)
    assert result.score == pytest.approx(2.0)
    assert result.delta_star[1] == 0.0
    assert result.status.index_set == (0,)


def test_evaluate_p_ordering_on_interior_point(example_hrep):
    z, g = [-3.0, 1.0], [1.0, 1.0]
    scores = [evaluate_p(example_hrep, z, g, t, with_status=False).score for t in ["-inf", "-1", "0", "0.5", "1", "2", "inf"]]
    for low, high in zip(scores, scores[1:]):
        assert low <= high + 1e-7


def test_vertex_route_dimension_limit(rng):
    points = np.hstack([-rng.uniform(1.0, 2.0, size=(5, 2)), rng.uniform(1.0, 2.0, size=(5, 2))])
    tech = VrsHull(points)
    z = points.mean(axis=0) * np.array([1.5, 1.5, 0.5, 0.5])
    with pytest.raises(UnsupportedRegimeError):
        evaluate_p(tech, z, np.ones(4), 2)


# ---------------- UTILITY SUPREMA ---------------- #

def test_evaluate_utility_plain(example_hrep):
    z = [-3.0, 2.0]
    assert evaluate_utility(example_hrep, z, PMeanPlain(PParameter.finite(0.5), [1.0, 1.0])).score == pytest.approx(1.0, abs=1e-7)
    assert evaluate_utility(example_hrep, z, PMeanPlain(PParameter.finite(-0.5), [1.0, 1.0])).score == 0.0


def test_evaluate_utility_directional_matches_evaluate_p(example_hrep):
    z, g = [-3.0, 1.0], Direction([1.0, 2.0])
    for token in ["-1", "0.5", "1", "2"]:
        spec = PMeanDirectional(PParameter.parse(token), g)
        expected = evaluate_p(example_hrep, z, g, token, with_status=False).score
        assert evaluate_utility(example_hrep, z, spec, with_status=False).score == pytest.approx(expected, abs=1e-7)


# ---------------- INPUT MEASURES ---------------- #

def test_input_measures_single_input():
    tech = VrsHull([[-1.0, 1.0]])
    assert fare_lovell_input(tech, [-2.0], [1.0]).score == pytest.approx(0.5)
    result = debreu_farrell(tech, [-2.0], [1.0])
    assert result.score == pytest.approx(0.5)
    assert np.allclose(result.projection.values, [-1.0, 1.0])


def test_generalized_input_measure_two_inputs():
    tech = VrsHull([[-1.0, -1.0, 1.0]])
    x, y = [-2.0, -1.0], [1.0]
    assert generalized_input_measure(tech, x, y, 1).score == pytest.approx(0.75)
    assert generalized_input_measure(tech, x, y, "-inf").score == pytest.approx(0.5)
    assert generalized_input_measure(tech, x, y, "inf").score == pytest.approx(1.0)
    assert generalized_input_measure(tech, x, y, 0.5).score == pytest.approx(((math.sqrt(0.5) + 1.0) / 2.0) ** 2)
    assert generalized_input_measure(tech, x, y, 2).score == pytest.approx(math.sqrt(1.25 / 2.0), abs=1e-6)
    assert debreu_farrell(tech, x, y).score == pytest.approx(1.0)


def test_input_measures_fdh():
    tech = Fdh([[-1.0, -4.0, 1.0], [-3.0, -1.0, 1.0]])
    x, y = [-4.0, -4.0], [1.0]
    assert fare_lovell_input(tech, x, y).score == pytest.approx(0.5)
    assert debreu_farrell(tech, x, y).score == pytest.approx(0.75)


def test_input_measure_conventions():
    tech = VrsHull([[-1.0, 1.0]])
    assert generalized_input_measure(tech, [-0.5], [1.0], 1).score == math.inf
    with pytest.raises(DomainError):
        fare_lovell_input(tech, [2.0], [1.0])


def test_hrep_measures_agree_with_vrs_facets(small_vrs):
    a, b = small_vrs.halfspaces(np.array([-3.0, 0.0]))
    tech = HRep(a, b)
    for z in ([-2.0, 1.0], [-2.5, 0.5]):
        for token in ["-inf", "1", "2"]:
            expected = evaluate_p(small_vrs, z, [1.0, 1.0], token, with_status=False).score
            assert evaluate_p(tech, z, [1.0, 1.0], token, with_status=False).score == pytest.approx(expected, abs=1e-7)
