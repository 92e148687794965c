import numpy as np
import pytest

from errors import InfeasibleError, UnsupportedRegimeError
from gmean import CobbDouglas, PMeanPlain, PParameter
from solver_kernels import (
    ConcaveProgram,
    ConcaveStatus,
    LinearProgram,
    LpStatus,
    enumerate_vertices,
    project_simplex,
    solve_concave,
    solve_lp,
)


# ---------------- LINEAR PROGRAMMING ---------------- #

def test_lp_single_variable_bound_at_zero():
    res = solve_lp(LinearProgram([1.0], [[1.0], [2.0], [1.0]], [3.0, 1.0, 0.0]))
    assert res.optimal
    assert res.value == pytest.approx(0.0, abs=1e-12)


def test_lp_two_variable_optimum():
    lp = LinearProgram([0.5, 0.5], [[1.0, 0.0], [1.0, 1.0], [0.0, 1.0]], [3.0, 1.0, 0.0])
    res = solve_lp(lp)
    assert res.status == LpStatus.OPTIMAL
    assert res.value == pytest.approx(0.5)
    assert np.allclose(res.x, [1.0, 0.0])


def test_lp_duals_reproduce_the_value():
    lp = LinearProgram([3.0, 2.0], [[1.0, 1.0], [1.0, 3.0]], [4.0, 6.0], [[1.0, -1.0]], [1.0])
    res = solve_lp(lp)
    assert res.optimal
    assert float(lp.b_ub @ res.duals_ub + lp.b_eq @ res.duals_eq) == pytest.approx(res.value)
    assert np.all(res.duals_ub >= -1e-12)


def test_lp_infeasible():
    res = solve_lp(LinearProgram([1.0], [[1.0]], [-1.0]))
    assert res.status == LpStatus.INFEASIBLE


def test_lp_unbounded():
    assert solve_lp(LinearProgram([1.0], np.zeros((0, 1)), [])).status == LpStatus.UNBOUNDED
    assert solve_lp(LinearProgram([1.0, 0.0], [[-1.0, 1.0]], [0.0])).status == LpStatus.UNBOUNDED


def test_lp_free_variable_can_be_negative():
    res = solve_lp(LinearProgram([1.0], np.zeros((0, 1)), [], [[1.0]], [-2.0], free=[True]))
    assert res.optimal
    assert res.value == pytest.approx(-2.0)


def test_lp_degenerate_cycling_example_terminates():
    # Beale's example cycles under the textbook largest-coefficient rule
    c = [0.75, -150.0, 0.02, -6.0]
    a = [[0.25, -60.0, -0.04, 9.0], [0.5, -90.0, -0.02, 3.0], [0.0, 0.0, 1.0, 0.0]]
    res = solve_lp(LinearProgram(c, a, [0.0, 0.0, 1.0]))
    assert res.optimal
    assert res.value == pytest.approx(0.05)


# ---------------- SIMPLEX PROJECTION ---------------- #

def test_project_simplex():
    assert np.allclose(project_simplex(np.array([0.5, 0.5])), [0.5, 0.5])
    assert np.allclose(project_simplex(np.array([2.0, 0.0])), [1.0, 0.0])
    v = project_simplex(np.array([0.3, -1.0, 2.0]), floor=0.1)
    assert v.sum() == pytest.approx(1.0)
    assert v.min() >= 0.1 - 1e-12


# ---------------- CONCAVE PROGRAMMING ---------------- #

def _region(a_ub, b_ub):
    a_ub = np.asarray(a_ub, dtype=float)
    return LinearProgram(np.zeros(a_ub.shape[1]), a_ub, b_ub)


def test_concave_cobb_douglas_on_a_budget():
    cp = ConcaveProgram(CobbDouglas([0.5, 0.5], [1.0, 1.0]), np.eye(2), np.zeros(2), _region([[1.0, 1.0]], [2.0]))
    res = solve_concave(cp)
    assert res.status == ConcaveStatus.CONVERGED
    assert res.value == pytest.approx(1.0, abs=1e-7)
    assert np.allclose(res.x, [1.0, 1.0], atol=1e-4)


def test_concave_positive_p_with_one_pinned_argument():
    cp = ConcaveProgram(
        PMeanPlain(PParameter.finite(0.5), [0.25, 0.25]), np.eye(2), np.zeros(2),
        _region([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]),
    )
    res = solve_concave(cp)
    assert res.value == pytest.approx(0.25, abs=1e-7)


def test_concave_absorbing_objective_short_circuits():
    cp = ConcaveProgram(
        PMeanPlain(PParameter.finite(-1.0), [0.5, 0.5]), np.eye(2), np.zeros(2),
        _region([[1.0, 0.0], [0.0, 1.0]], [1.0, 0.0]),
    )
    res = solve_concave(cp)
    assert res.status == ConcaveStatus.ABSORBED
    assert res.value == 0.0


def test_concave_infeasible_region():
    cp = ConcaveProgram(
        PMeanPlain(PParameter.finite(0.5), [1.0, 1.0]), np.eye(2), np.zeros(2),
        _region([[1.0, 0.0], [0.0, 1.0]], [-1.0, 1.0]),
    )
    with pytest.raises(InfeasibleError):
        solve_concave(cp)


# ---------------- VERTEX ENUMERATION ---------------- #

def test_unit_square_vertices():
    vertices = enumerate_vertices([], box=([0.0, 0.0], [1.0, 1.0]))
    assert np.allclose(vertices, [[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])


def test_dominating_face_vertices():
    constraints = [
        ([1.0, 0.0], 0.0),
        ([1.0, 1.0], 0.0),
        ([0.0, 1.0], 2.0),
        ([-1.0, 0.0], 3.0),
        ([0.0, -1.0], -2.0),
    ]
    assert np.allclose(enumerate_vertices(constraints), [[-3.0, 2.0], [-2.0, 2.0]])


def test_empty_polytope_has_no_vertices():
    assert enumerate_vertices([([1.0], -1.0), ([-1.0], -1.0)]) == []


def test_vertex_enumeration_dimension_limit():
    with pytest.raises(UnsupportedRegimeError):
        enumerate_vertices([], box=(np.zeros(4), np.ones(4)))
