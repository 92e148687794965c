import numpy as np
import pytest

from conftest import interior_netput, property_trials, random_points
from dual import (
    NormalizationRule,
    RuleKind,
    dual_value,
    dual_value_utility,
    norm_dual_value,
    normalization_value,
    normalized_prices,
    weak_duality_audit,
)
from errors import ConvexityRequiredError, DomainError, InfeasibleError
from gmean import CobbDouglas, PMeanPlain, PParameter
from primal import evaluate_p, load_dispatch_tables
from technology import Fdh, VrsHull


# ---------------- NORMALIZATION RULES ---------------- #

def test_rules_match_dispatch_fixture():
    for row in load_dispatch_tables()["duality"]:
        for token in row["p"]:
            assert NormalizationRule.for_p(token).kind.value == row["normalization"], token
            assert NormalizationRule.criterion(token) == row["criterion"], token
            assert NormalizationRule.requires_convexity(token) == row["convexity_required"], token


def test_normalized_prices_land_on_the_surface(rng):
    g = [1.0, 2.0, 0.5]
    for token in ["-inf", "-1", "0", "0.5", "1", "2", "inf"]:
        rule = NormalizationRule.for_p(token)
        w = normalized_prices(rule, g, rng.uniform(0.1, 2.0, size=3))
        assert normalization_value(rule, g, w) == pytest.approx(1.0)


def test_lq_norm_close_to_one_near_q_one(rng):
    rule = NormalizationRule(RuleKind.LQ_NORM, 1.001)
    for _ in range(20):
        lam = rng.dirichlet(np.ones(2))
        value = normalization_value(rule, [1.0, 1.0], lam)
        assert 1.0 - 1e-12 <= value <= 1.0007


def test_normalization_rejects_zero_prices():
    with pytest.raises(DomainError):
        normalized_prices(NormalizationRule.for_p(0.5), [1.0, 1.0], [0.0, 0.0])


# ---------------- UTILITY DUALITY ---------------- #

def test_utility_dual_boundary_infimum(example_hrep):
    result = dual_value_utility(example_hrep, [-3.0, 2.0], PMeanPlain(PParameter.finite(0.5), [1.0, 1.0]))
    assert result.dual_value == pytest.approx(1.0, abs=1e-6)
    assert result.primal_score == pytest.approx(1.0, abs=1e-7)
    assert not result.attained
    assert result.diagnostics["route"] == "epsilon_sequence"


def test_utility_dual_absorbing_coordinate(example_hrep):
    result = dual_value_utility(example_hrep, [-3.0, 2.0], PMeanPlain(PParameter.finite(-0.5), [1.0, 1.0]))
    assert result.dual_value == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(result.prices, [0.0, 1.0])
    assert result.attained


def test_geometric_dual_at_weakly_efficient_netput(example_hrep, small_weak_frontier):
    result = dual_value(example_hrep, [-3.0, 2.0], [1.0, 1.0], 0)
    assert result.primal_score == 0.0
    assert result.dual_value == 0.0
    assert result.gap == 0.0
    assert not result.attained
    assert result.diagnostics["route"] == "absorbing_limit"
    assert result.diagnostics["coordinates"] == [1]
    assert result.prices[1] > 1e3 * result.prices[0]
    sequence = result.diagnostics["sequence"]
    assert sequence[0] > sequence[1] > sequence[2] >= 0.0

    result = dual_value(small_weak_frontier, [-2.0, 1.0], [1.0, 1.0], 0)
    assert result.gap == 0.0
    assert not result.attained


def test_cobb_douglas_dual_at_weakly_efficient_netput(example_hrep):
    result = dual_value_utility(example_hrep, [-3.0, 2.0], CobbDouglas([0.25, 0.75], [1.0, 1.0]))
    assert result.primal_score == 0.0
    assert result.dual_value == 0.0
    assert not result.attained


def test_utility_dual_needs_convexity(two_point_fdh):
    with pytest.raises(ConvexityRequiredError):
        dual_value_utility(two_point_fdh, [-4.0, 2.0], PMeanPlain(PParameter.finite(0.5), [1.0, 1.0]))


# ---------------- DUAL_VALUE ---------------- #

def test_dual_value_minimization_regimes(example_hrep):
    result = dual_value(example_hrep, [-3.0, 2.0], [1.0, 1.0], "-inf")
    assert result.dual_value == pytest.approx(0.0, abs=1e-9)
    assert result.rule.kind == RuleKind.DOT_G

    result = dual_value(example_hrep, [-3.0, 1.0], [1.0, 1.0], -1)
    assert result.dual_value == pytest.approx(1.0, abs=1e-5)
    assert result.gap <= 1e-5
    assert result.attained
    assert np.allclose(result.prices, [0.5, 0.5], atol=1e-4)
    assert result.normalization_residual <= 1e-9


def test_dual_value_fare_lovell(example_hrep):
    result = dual_value(example_hrep, [-3.0, 2.0], [1.0, 1.0], 1)
    assert result.dual_value == pytest.approx(0.5)
    assert np.allclose(result.prices, [0.5, 0.5])
    assert result.normalization_residual == pytest.approx(0.0, abs=1e-12)
    assert result.gap <= 1e-9


def test_dual_value_asymmetric(example_hrep):
    result = dual_value(example_hrep, [-3.0, 2.0], [1.0, 1.0], "inf")
    assert result.dual_value == pytest.approx(1.0)
    assert np.allclose(result.prices, [1.0, 0.0])


def test_dual_value_maximization_on_fdh(two_point_fdh):
    result = dual_value(two_point_fdh, [-4.0, 2.0], [1.0, 1.0], 2)
    assert result.gap <= 1e-7
    assert result.dual_value == pytest.approx(evaluate_p(two_point_fdh, [-4.0, 2.0], [1.0, 1.0], 2).score)


def test_dual_value_rejects_bad_input(example_hrep, two_point_fdh):
    with pytest.raises(ConvexityRequiredError):
        dual_value(two_point_fdh, [-4.0, 2.0], [1.0, 1.0], 0.5)
    with pytest.raises(InfeasibleError):
        dual_value(example_hrep, [1.0, 1.0], [1.0, 1.0], 1)
    with pytest.raises(DomainError):
        dual_value(example_hrep, [-3.0, 2.0], [0.0, 0.0], 1)


# ---------------- NORM DUALITY ---------------- #

def test_norm_dual_value(example_hrep, two_point_fdh):
    result = norm_dual_value(example_hrep, [-3.0, 2.0], 1, [1.0, 1.0])
    assert result.dual_value == pytest.approx(1.0)
    assert np.allclose(result.prices, [1.0, 1.0])

    result = norm_dual_value(two_point_fdh, [-4.0, 2.0], "inf", [1.0, 1.0])
    assert result.dual_value == pytest.approx(3.0)
    assert np.allclose(result.prices, [0.0, 1.0])
    assert result.gap <= 1e-9


def test_norm_dual_needs_p_at_least_one(example_hrep):
    with pytest.raises(DomainError):
        norm_dual_value(example_hrep, [-3.0, 2.0], 0.5, [1.0, 1.0])


# ---------------- WEAK DUALITY ---------------- #

def test_weak_duality_audit_vrs(rng):
    for _ in range(property_trials(10)):
        points = random_points(rng, 1, 1, 5)
        tech = VrsHull(points)
        z = interior_netput(rng, points, 1)
        for token in ["-inf", "-1", "0.5", "1", "2", "inf"]:
            report = weak_duality_audit(tech, z, np.abs(z), token, samples=20)
            assert report.violations == 0, (token, report.worst_violation)


def test_weak_duality_audit_fdh(two_point_fdh):
    for token in ["-2", "0", "1", "inf"]:
        report = weak_duality_audit(two_point_fdh, [-5.0, 1.0], [1.0, 1.0], token, samples=30)
        assert report.violations == 0, token
