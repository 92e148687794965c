"""
Distance functions and efficiency measures.

evaluate_p computes the generalized directional Fare-Lovell distance

    D_(p)(z; g) = sup { M_p(delta) : delta >= 0 on K_g, z + delta (.) g in T }

with M_p the normalized p-mean over the support of g, and dispatches by p:

    p = -inf      directional distance (one LP)
    p = +inf      asymmetric distance (one LP per support coordinate)
    p = 1         directional Fare-Lovell (one LP)
    1 < p < inf   vertex enumeration on the delta polytope (d_g <= 3)
    p < 1         concave program with an absorption pre-phase

Free disposal hulls are always evaluated by scanning the dominating points,
which is exact for every p.
"""

import json
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import DimensionMismatchError, DomainError, InfeasibleError, UnsupportedRegimeError
from gmean import (
    PMeanDirectional,
    PMeanPlain,
    PParameter,
    UtilitySpec,
    p_mean_utility,
    power_mean,
    to_plain,
)
from solver_kernels import ENUM_MAX_DIM, ConcaveProgram, ConcaveStatus, solve_concave, vertices_from_arrays
from technology import (
    Direction,
    EfficiencyStatus,
    Fdh,
    NetputVector,
    Netput,
    StatusKind,
    Technology,
    as_direction,
    best_profit,
    classify,
    solve_region,
)

logger = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9
TIE_TOL = 1e-12

PLike = Union[PParameter, float, str]


# ---------------- RESULT ---------------- #

@dataclass
class EvalResult:
    score: float
    delta_star: Optional[np.ndarray] = None
    projection: Optional[NetputVector] = None
    status: Optional[EfficiencyStatus] = None
    projection_status: Optional[EfficiencyStatus] = None
    measure: str = ""
    p: Optional[PParameter] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.score)


# ---------------- TAXONOMY ---------------- #

_NAMED_MEASURES = {
    "-inf": "directional_distance",
    "0": "multiplicative_directional_fare_lovell",
    "1": "directional_fare_lovell",
    "inf": "asymmetric_directional_distance",
}

DISPATCH_FIXTURE = os.path.join(os.path.dirname(os.path.abspath(__file__)), "fixtures", "dispatch_tables.json")


def measure_name(p: PLike) -> str:
    """Name of the classical measure D_(p) reduces to (generalized otherwise)."""
    p = PParameter.of(p)
    key = "0" if p.is_multiplicative else str(p)
    return _NAMED_MEASURES.get(key, "generalized_directional_fare_lovell")


def load_dispatch_tables(path: str = DISPATCH_FIXTURE) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


# ---------------- HELPERS ---------------- #

def _prepare(tech: Technology, z: Netput, g) -> Tuple[np.ndarray, Direction]:
    z = tech._check(z)
    g = as_direction(g)
    if g.dim != tech.dim:
        raise DimensionMismatchError(f"direction has {g.dim} coordinates, technology has {tech.dim}")
    return z, g


def _support_image(g: Direction) -> np.ndarray:
    """d x d_g matrix mapping delta on K_g to delta (.) g."""
    image = np.zeros((g.dim, g.d_g))
    for j, k in enumerate(g.support):
        image[k, j] = g.values[k]
    return image


def _lexicographic_best(candidates: np.ndarray, values: np.ndarray, maximize: bool = True) -> int:
    """Index of the best value, ties broken by the lexicographically smallest candidate."""
    target = values.max() if maximize else values.min()
    close = np.abs(values - target) <= TIE_TOL * (1.0 + abs(target))
    idx = np.flatnonzero(close)
    sub = candidates[idx]
    order = np.lexsort(sub.T[::-1])
    return int(idx[order[0]])


def _normalized_plain(p: PParameter, d: int) -> UtilitySpec:
    return to_plain(PMeanDirectional(p, Direction.unit(d), normalized=True))


def _finish(tech: Technology, z: np.ndarray, g: Direction, score: float, delta: np.ndarray,
            measure: str, p: Optional[PParameter], with_status: bool, diagnostics: dict) -> EvalResult:
    delta_full = g.embed(np.maximum(delta, 0.0))
    projection = z + delta_full * g.values
    result = EvalResult(float(score), delta_full, NetputVector(projection), measure=measure, p=p,
                        diagnostics=diagnostics)
    if with_status:
        result.status = classify(tech, z, g.support)
        result.projection_status = classify(tech, projection, g.support)
    return result


def _convention(tech: Technology, z: np.ndarray, g: Direction, measure: str,
                p: Optional[PParameter], with_status: bool) -> Optional[EvalResult]:
    """The -inf / +inf conventions for infeasible netputs and zero directions."""
    if not tech.contains(z):
        status = EfficiencyStatus(StatusKind.INFEASIBLE, g.support) if with_status else None
        return EvalResult(-math.inf, status=status, measure=measure, p=p, diagnostics={"regime": "infeasible"})
    if g.is_zero:
        return EvalResult(math.inf, measure=measure, p=p, diagnostics={"regime": "zero_direction"})
    return None


# ---------------- SUPREMUM ENGINE ---------------- #

def _fdh_scan(tech: Fdh, z: np.ndarray, g: Direction, plain: UtilitySpec) -> Tuple[float, np.ndarray, dict]:
    pts = tech.dominating_points(z)
    support = list(g.support)
    deltas = np.maximum(pts[:, support] - z[support], 0.0) / g.support_values
    values = np.array([p_mean_utility(plain, delta) for delta in deltas])
    i = _lexicographic_best(deltas, values)
    return float(values[i]), deltas[i], {"regime": "fdh_scan", "candidates": int(pts.shape[0])}


def _vertex_route(tech: Technology, z: np.ndarray, g: Direction, plain: UtilitySpec) -> Tuple[float, np.ndarray, dict]:
    if g.d_g > ENUM_MAX_DIM:
        raise UnsupportedRegimeError(
            f"p in (1, inf) on {type(tech).__name__} needs d_g <= {ENUM_MAX_DIM}, got d_g = {g.d_g}"
        )
    a, b = tech.halfspaces(z)
    image = _support_image(g)
    rows = np.vstack([a @ image, -np.eye(g.d_g)])
    rhs = np.concatenate([b - a @ z, np.zeros(g.d_g)])
    vertices = vertices_from_arrays(rows, rhs)
    if not vertices:
        raise InfeasibleError("empty expansion polytope")
    cand = np.maximum(np.array(vertices), 0.0)
    values = np.array([p_mean_utility(plain, v) for v in cand])
    i = _lexicographic_best(cand, values)
    return float(values[i]), cand[i], {"regime": "vertex_enumeration", "vertices": len(vertices)}


def _coordinate_reach(tech: Technology, z: np.ndarray, g: Direction) -> np.ndarray:
    """Largest single-coordinate expansion along g_k e_k for each k in K_g."""
    reach = []
    for k in g.support:
        w = np.zeros(tech.dim)
        w[k] = 1.0
        value, _ = best_profit(tech, z, w, range(tech.dim))
        reach.append(max(value - z[k], 0.0) / g.values[k])
    return np.array(reach)


def _sup_utility(tech: Technology, z: np.ndarray, g: Direction, plain: UtilitySpec,
                 tol: float) -> Tuple[float, np.ndarray, dict]:
    """sup of plain(delta) over delta >= 0 on K_g with z + delta (.) g in T."""
    if isinstance(tech, Fdh):
        return _fdh_scan(tech, z, g, plain)

    d_g = g.d_g
    if isinstance(plain, PMeanPlain):
        p, a = plain.p, plain.coefficients
        if p.kind == "pos_inf":
            reach = _coordinate_reach(tech, z, g)
            values = a * reach
            k = int(np.argmax(values))
            delta = np.zeros(d_g)
            delta[k] = reach[k]
            return float(values[k]), delta, {"regime": "coordinate_lps", "lp_solves": d_g}
        if p.kind == "neg_inf":
            image = _support_image(g) @ (1.0 / a)
            lifted = tech.expansion_rows(z, image)
            res = solve_region(tech, lifted.program([1.0]))
            t = max(float(res.x[0]), 0.0)
            return t, t / a, {"regime": "lp", "lp_solves": 1, "iterations": res.iterations}
        if p.value == 1.0:
            lifted = tech.expansion_rows(z, _support_image(g))
            res = solve_region(tech, lifted.program(a))
            delta = np.maximum(res.x[:d_g], 0.0)
            return float(a @ delta), delta, {"regime": "lp", "lp_solves": 1, "iterations": res.iterations}
        if p.value > 1.0:
            return _vertex_route(tech, z, g, plain)

    lifted = tech.expansion_rows(z, _support_image(g))
    cp = ConcaveProgram(plain, lifted.pad(np.eye(d_g)), np.zeros(d_g), lifted.program(np.zeros(d_g)))
    res = solve_concave(cp, tol=tol)
    diagnostics = {
        "regime": "concave",
        "solver_status": res.status.value,
        "gap": res.gap,
        "lp_solves": res.lp_solves,
        "iterations": res.iterations,
    }
    if res.status == ConcaveStatus.NONCONVERGED:
        logger.warning("Concave solve did not reach tol=%g (gap %.3e)", tol, res.gap)
    return res.value, np.maximum(res.x[:d_g], 0.0), diagnostics


# ---------------- DISTANCE FUNCTIONS ---------------- #

def directional_distance(tech: Technology, z: Netput, g, allow_contraction: bool = False,
                         with_status: bool = True) -> EvalResult:
    """
    D(z; g) = sup {delta : z + delta g in T}.

    With allow_contraction the sup runs over all real delta, so a netput
    outside T gets a finite negative value when moving against g reaches T.
    """
    z, g = _prepare(tech, z, g)
    measure = "directional_distance"
    if not allow_contraction or g.is_zero:
        conv = _convention(tech, z, g, measure, PParameter.neg_inf(), with_status)
        if conv is not None:
            return conv

    if isinstance(tech, Fdh):
        support = list(g.support)
        off = [k for k in range(tech.dim) if k not in g.support]
        pts = tech.points[np.all(tech.points[:, off] >= z[off] - 1e-9, axis=1)] if off else tech.points
        if pts.shape[0] == 0:
            return EvalResult(-math.inf, measure=measure, p=PParameter.neg_inf(), diagnostics={"regime": "fdh_scan"})
        reach = np.min((pts[:, support] - z[support]) / g.support_values, axis=1)
        delta = float(reach.max())
        diagnostics = {"regime": "fdh_scan", "candidates": int(pts.shape[0])}
    else:
        lifted = tech.expansion_rows(z, g.values[:, None])
        res = solve_region(tech, lifted.program([1.0], free_x=[allow_contraction]))
        if res is None:
            return EvalResult(-math.inf, measure=measure, p=PParameter.neg_inf(), diagnostics={"regime": "lp"})
        delta = float(res.x[0])
        diagnostics = {"regime": "lp", "lp_solves": 1, "iterations": res.iterations}

    if allow_contraction and delta < 0:
        projection = z + delta * g.values
        return EvalResult(delta, np.full(tech.dim, delta) * (g.values > 0), NetputVector(projection),
                          measure=measure, p=PParameter.neg_inf(), diagnostics=diagnostics)
    return _finish(tech, z, g, max(delta, 0.0), np.full(g.d_g, max(delta, 0.0)), measure,
                   PParameter.neg_inf(), with_status, diagnostics)


def asymmetric_distance(tech: Technology, z: Netput, g, with_status: bool = True) -> EvalResult:
    """AD(z; g) = max over k in K_g of the expansion along g_k e_k alone."""
    z, g = _prepare(tech, z, g)
    measure = "asymmetric_directional_distance"
    conv = _convention(tech, z, g, measure, PParameter.pos_inf(), with_status)
    if conv is not None:
        return conv
    reach = _coordinate_reach(tech, z, g)
    k = int(np.argmax(reach))
    delta = np.zeros(g.d_g)
    delta[k] = reach[k]
    return _finish(tech, z, g, float(reach[k]), delta, measure, PParameter.pos_inf(), with_status,
                   {"regime": "coordinate_lps", "lp_solves": g.d_g, "winner": g.support[k]})


def evaluate_p(tech: Technology, z: Netput, g, p: PLike, tol: float = DEFAULT_TOL,
               with_status: bool = True) -> EvalResult:
    """D_(p)(z; g) with regime dispatch by p."""
    p = PParameter.of(p)
    if p.kind == "neg_inf":
        return directional_distance(tech, z, g, with_status=with_status)
    if p.kind == "pos_inf":
        return asymmetric_distance(tech, z, g, with_status=with_status)

    z, g = _prepare(tech, z, g)
    measure = measure_name(p)
    conv = _convention(tech, z, g, measure, p, with_status)
    if conv is not None:
        return conv
    plain = _normalized_plain(p, g.d_g)
    score, delta, diagnostics = _sup_utility(tech, z, g, plain, tol)
    return _finish(tech, z, g, score, delta, measure, p, with_status, diagnostics)


def evaluate_utility(tech: Technology, z: Netput, spec: UtilitySpec, tol: float = DEFAULT_TOL,
                     with_status: bool = True) -> EvalResult:
    """sup {W(u - z) : u in T, u >= z} for any of the utility families."""
    z = tech._check(z)
    if isinstance(spec, PMeanDirectional):
        g = spec.direction
        p = spec.p
        plain = _normalized_plain(p, g.d_g) if (spec.normalized or p.is_multiplicative) else PMeanPlain(p, np.ones(g.d_g))
    else:
        g = Direction.unit(tech.dim)
        plain = spec
        p = spec.p if isinstance(spec, PMeanPlain) else PParameter.finite(0.0)
    _prepare(tech, z, g)
    if spec.dimension() != g.d_g and not isinstance(spec, PMeanDirectional):
        raise DimensionMismatchError(f"utility has {spec.dimension()} arguments, technology has {tech.dim}")

    conv = _convention(tech, z, g, "utility", p, with_status)
    if conv is not None:
        return conv
    score, delta, diagnostics = _sup_utility(tech, z, g, plain, tol)
    if isinstance(spec, PMeanDirectional) and not spec.normalized and p.is_multiplicative:
        score = score ** g.d_g
    return _finish(tech, z, g, score, delta, "utility", p, with_status, diagnostics)


# ---------------- INPUT-ORIENTED MEASURES ---------------- #

def _input_netput(tech: Technology, x: Sequence[float], y: Sequence[float]) -> Tuple[np.ndarray, List[int]]:
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if np.any(x > 0):
        raise DomainError("inputs are netputs and must be <= 0")
    z = tech._check(np.concatenate([x, y]))
    active = [i for i in range(x.size) if x[i] < 0]
    if not active:
        raise DomainError("input-oriented measures need x != 0")
    return z, active


def _contraction_image(z: np.ndarray, active: List[int]) -> Tuple[np.ndarray, np.ndarray]:
    """u = z + image @ beta + offset realizes u_i = beta_i x_i on the active inputs."""
    image = np.zeros((z.size, len(active)))
    offset = np.zeros(z.size)
    for j, i in enumerate(active):
        image[i, j] = z[i]
        offset[i] = -z[i]
    return image, offset


def _fdh_ratios(tech: Fdh, z: np.ndarray, active: List[int]) -> np.ndarray:
    pts = tech.dominating_points(z)
    return np.clip(pts[:, active] / z[active], 0.0, 1.0)


def _min_over_beta(tech: Technology, z: np.ndarray, active: List[int], p: PParameter,
                   tol: float) -> Tuple[float, np.ndarray, dict]:
    """inf of the normalized p-mean of beta over beta in [0,1]^m_x with (beta x, y) in T."""
    m_x = len(active)
    if isinstance(tech, Fdh):
        ratios = _fdh_ratios(tech, z, active)
        values = np.array([power_mean(p, r) for r in ratios])
        i = _lexicographic_best(ratios, values, maximize=False)
        return float(values[i]), ratios[i], {"regime": "fdh_scan", "candidates": int(ratios.shape[0])}

    image, offset = _contraction_image(z, active)
    lifted = tech.expansion_rows(z, image, offset)
    upper = (np.eye(m_x), np.ones(m_x))

    if p.is_finite and p.value == 1.0:
        res = solve_region(tech, lifted.program(-np.ones(m_x) / m_x, extra_ub=upper))
        beta = np.clip(res.x[:m_x], 0.0, 1.0)
        return float(beta.mean()), beta, {"regime": "lp", "lp_solves": 1}
    if p.kind == "pos_inf":
        # min t with beta_i <= t
        image_t = np.hstack([image, np.zeros((z.size, 1))])
        lifted = tech.expansion_rows(z, image_t, offset)
        rows = np.hstack([np.eye(m_x), -np.ones((m_x, 1))])
        extra = (np.vstack([rows, np.hstack([np.eye(m_x), np.zeros((m_x, 1))])]),
                 np.concatenate([np.zeros(m_x), np.ones(m_x)]))
        c = np.zeros(m_x + 1)
        c[-1] = -1.0
        res = solve_region(tech, lifted.program(c, extra_ub=extra))
        beta = np.clip(res.x[:m_x], 0.0, 1.0)
        return float(beta.max()), beta, {"regime": "lp", "lp_solves": 1}
    if p.kind == "neg_inf":
        best, best_beta = math.inf, None
        for j in range(m_x):
            c = np.zeros(m_x)
            c[j] = -1.0
            res = solve_region(tech, lifted.program(c, extra_ub=upper))
            beta = np.clip(res.x[:m_x], 0.0, 1.0)
            if beta.min() < best - TIE_TOL:
                best, best_beta = float(beta.min()), beta
        return best, best_beta, {"regime": "coordinate_lps", "lp_solves": m_x}
    if p.value > 1.0:
        cp = ConcaveProgram(PMeanDirectional(p, Direction.unit(m_x)), lifted.pad(np.eye(m_x)), np.zeros(m_x),
                            lifted.program(np.zeros(m_x), extra_ub=upper), minimize=True)
        res = solve_concave(cp, tol=tol)
        beta = np.clip(res.x[:m_x], 0.0, 1.0)
        return res.value, beta, {"regime": "convex_min", "solver_status": res.status.value, "gap": res.gap}

    # concave objective: the minimum sits at a vertex of the beta polytope
    if m_x > ENUM_MAX_DIM:
        raise UnsupportedRegimeError(f"input measure with p < 1 needs m_x <= {ENUM_MAX_DIM}, got {m_x}")
    a, b = tech.halfspaces(z)
    rows = np.vstack([a @ image, np.eye(m_x), -np.eye(m_x)])
    rhs = np.concatenate([b - a @ (z + offset), np.ones(m_x), np.zeros(m_x)])
    vertices = vertices_from_arrays(rows, rhs)
    if not vertices:
        raise InfeasibleError("empty contraction polytope")
    cand = np.clip(np.array(vertices), 0.0, 1.0)
    values = np.array([power_mean(p, v) for v in cand])
    i = _lexicographic_best(cand, values, maximize=False)
    return float(values[i]), cand[i], {"regime": "vertex_enumeration", "vertices": len(vertices)}


def _input_result(score: float, beta: Optional[np.ndarray], z: np.ndarray, active: List[int],
                  measure: str, p: Optional[PParameter], diagnostics: dict) -> EvalResult:
    if beta is None:
        return EvalResult(score, measure=measure, p=p, diagnostics=diagnostics)
    projection = z.copy()
    projection[active] = beta * z[active]
    delta = np.zeros(z.size)
    delta[active] = 1.0 - beta
    return EvalResult(score, delta, NetputVector(projection), measure=measure, p=p, diagnostics=diagnostics)


def generalized_input_measure(tech: Technology, x: Sequence[float], y: Sequence[float], p: PLike,
                              tol: float = DEFAULT_TOL) -> EvalResult:
    """
    E_(p)(x, y): inf of the normalized p-mean of beta in [0,1]^m_x over (beta (.) x, y) in T.

    x is given in netput convention (nonpositive). Infeasible (x, y) scores +inf.
    """
    p = PParameter.of(p)
    z, active = _input_netput(tech, x, y)
    measure = "generalized_input_fare_lovell"
    if not tech.contains(z):
        return EvalResult(math.inf, measure=measure, p=p, diagnostics={"regime": "infeasible"})
    score, beta, diagnostics = _min_over_beta(tech, z, active, p, tol)
    return _input_result(score, beta, z, active, measure, p, diagnostics)


def fare_lovell_input(tech: Technology, x: Sequence[float], y: Sequence[float]) -> EvalResult:
    """E_FL(x, y): the input Fare-Lovell measure, the p = 1 member of the family."""
    result = generalized_input_measure(tech, x, y, PParameter.finite(1.0))
    result.measure = "fare_lovell_input"
    return result


def debreu_farrell(tech: Technology, x: Sequence[float], y: Sequence[float]) -> EvalResult:
    """E_DF(x, y) = inf {lambda >= 0 : (lambda x, y) in T}."""
    z, active = _input_netput(tech, x, y)
    measure = "debreu_farrell"
    if not tech.contains(z):
        return EvalResult(math.inf, measure=measure, diagnostics={"regime": "infeasible"})

    if isinstance(tech, Fdh):
        ratios = _fdh_ratios(tech, z, active).max(axis=1)
        lam = float(ratios.min())
        diagnostics = {"regime": "fdh_scan", "candidates": int(ratios.size)}
    else:
        image, offset = _contraction_image(z, active)
        column = image.sum(axis=1, keepdims=True)
        lifted = tech.expansion_rows(z, column, offset)
        res = solve_region(tech, lifted.program([-1.0]))
        lam = max(float(res.x[0]), 0.0)
        diagnostics = {"regime": "lp", "lp_solves": 1, "iterations": res.iterations}
    return _input_result(lam, np.full(len(active), lam), z, active, measure, None, diagnostics)
