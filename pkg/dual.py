"""
Dual price programs for the generalized directional Fare-Lovell distance.

p >= 1 (maximization, no convexity needed):
    D_(p)(z; g) = max { Pi_{z,g}(w) - w.z : N(w) = 1 }
p < 1 (minimization, convex technologies):
    D_(p)(z; g) = inf { Pi_z(w) - w.z : N(w) = 1 }

with N the normalization of the regime (see NormalizationRule).
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from errors import ConvexityRequiredError, DomainError, InfeasibleError, UnsupportedRegimeError
from gmean import (
    CobbDouglas,
    PMeanDirectional,
    PMeanPlain,
    PParameter,
    UtilitySpec,
    geo_mean,
    indirect_utility,
    is_quasi_concave,
    phi_sum,
    to_plain,
    utility_gradient,
)
from primal import DEFAULT_TOL, PLike, evaluate_p, evaluate_utility
from solver_kernels import LinearProgram, project_simplex, solve_lp
from technology import (
    Direction,
    Netput,
    Technology,
    as_direction,
    best_profit,
    dominating_profit,
    improvement_potential,
    restricted_profit,
)

logger = logging.getLogger(__name__)

AUDIT_TOL = 1e-7
EPSILON_SEQUENCE = (1e-3, 1e-5, 1e-7)
NON_ATTAINMENT_RATIO = 1e6
ABSORBING_PRICE_SCALES = (1e2, 1e4, 1e6)
MULTI_STARTS = 8


# ---------------- NORMALIZATION ---------------- #

class RuleKind(str, Enum):
    DOT_G = "dot_g"
    MAX_WEIGHTED = "max_weighted"
    LQ_NORM = "lq_norm"
    PHI_Q = "phi_q"
    GEO_MEAN = "geo_mean"


@dataclass(frozen=True)
class NormalizationRule:
    kind: RuleKind
    q: float = 1.0

    @classmethod
    def for_p(cls, p: PLike) -> "NormalizationRule":
        p = PParameter.of(p)
        if not p.is_finite:
            return cls(RuleKind.DOT_G, 1.0)
        if p.is_multiplicative:
            return cls(RuleKind.GEO_MEAN, 0.0)
        if p.value == 1.0:
            return cls(RuleKind.MAX_WEIGHTED, math.inf)
        if p.value > 1.0:
            return cls(RuleKind.LQ_NORM, p.dual_order())
        return cls(RuleKind.PHI_Q, p.dual_order())

    @staticmethod
    def criterion(p: PLike) -> str:
        p = PParameter.of(p)
        return "maximization" if p >= PParameter.finite(1.0) else "minimization"

    @staticmethod
    def requires_convexity(p: PLike) -> bool:
        return NormalizationRule.criterion(p) == "minimization"


def normalization_value(rule: NormalizationRule, g: Union[Direction, Sequence[float]],
                        w: Sequence[float]) -> float:
    """Left-hand side of the rule's normalization constraint."""
    g = as_direction(g)
    w = np.asarray(w, dtype=float).ravel()
    if w.size == g.dim:
        w = w[list(g.support)]
    if np.any(w < 0):
        raise DomainError("prices must be nonnegative")
    x = g.support_values * w
    d = x.size
    if rule.kind == RuleKind.DOT_G:
        return float(x.sum())
    if rule.kind == RuleKind.MAX_WEIGHTED:
        return d * float(x.max())
    if rule.kind == RuleKind.GEO_MEAN:
        return d * geo_mean(x)
    q = rule.q
    scale = d ** ((q - 1.0) / q)
    if rule.kind == RuleKind.LQ_NORM:
        return scale * float(np.sum(x ** q)) ** (1.0 / q)
    return scale * phi_sum(PParameter.finite(q), x)


def normalized_prices(rule: NormalizationRule, g: Union[Direction, Sequence[float]],
                      w: Sequence[float]) -> np.ndarray:
    """Rescale w onto the normalization surface (every rule is homogeneous of degree one)."""
    value = normalization_value(rule, g, w)
    if not (value > 0 and math.isfinite(value)):
        raise DomainError(f"prices cannot be normalized under {rule.kind.value} (value {value})")
    return np.asarray(w, dtype=float).ravel() / value


# ---------------- RESULTS ---------------- #

@dataclass
class DualResult:
    prices: np.ndarray
    normalization_residual: float
    dual_value: float
    gap: float
    attained: bool
    primal_score: float = float("nan")
    rule: Optional[NormalizationRule] = None
    diagnostics: Dict[str, object] = field(default_factory=dict)


@dataclass
class AuditReport:
    samples: int
    primal_score: float
    worst_violation: float
    violations: int
    criterion: str


# ---------------- MAXIMIZATION REGIMES ---------------- #

def _norm_subgradient(p: PParameter, delta: np.ndarray, normalized: bool) -> np.ndarray:
    """A subgradient v of the (normalized) p-norm at delta with v . delta = norm(delta)."""
    d = delta.size
    scale = 1.0 / d if normalized else 1.0
    if p.kind == "pos_inf":
        v = np.zeros(d)
        v[int(np.argmax(delta))] = 1.0
        return v
    if p.value == 1.0:
        return np.full(d, scale)
    value = float(np.sum(delta ** p.value)) ** (1.0 / p.value)
    if normalized:
        value /= d ** (1.0 / p.value)
    if value == 0:
        return np.full(d, 1.0 / d) if normalized else np.full(d, d ** (-1.0 / p.dual_order()))
    return scale * (delta / value) ** (p.value - 1.0)


def _maximization_dual(tech: Technology, z: np.ndarray, g: Direction, p: PParameter,
                       tol: float) -> DualResult:
    primal = evaluate_p(tech, z, g, p, tol=tol, with_status=False)
    rule = NormalizationRule.for_p(p)
    delta = primal.delta_star[list(g.support)]
    v = _norm_subgradient(p, delta, normalized=True)
    w = g.embed(v / g.support_values)
    value = restricted_profit(tech, z, g, w) - float(w @ z)
    residual = abs(normalization_value(rule, g, w) - 1.0)
    return DualResult(w, residual, value, abs(value - primal.score), True, primal.score, rule,
                      {"route": "norm_subgradient"})


# ---------------- MINIMIZATION REGIMES ---------------- #

class _PriceProblem:
    """inf over w >= 0 of (Pi_z(w) - w.z) * W_star(w) on a coordinate subset."""

    def __init__(self, tech: Technology, z: np.ndarray, coords: List[int], plain: UtilitySpec):
        self.tech = tech
        self.z = z
        self.coords = coords
        self.plain = plain
        self.lp_solves = 0

    def full(self, w: np.ndarray) -> np.ndarray:
        out = np.zeros(self.tech.dim)
        out[self.coords] = w
        return out

    def slack_profit(self, w: np.ndarray):
        """(Pi_z(w) - w.z, maximizing slack u - z on coords)."""
        wf = self.full(w)
        value, u = best_profit(self.tech, self.z, wf, range(self.tech.dim))
        self.lp_solves += 1
        return max(value - float(wf @ self.z), 0.0), (u - self.z)[self.coords]

    def indirect(self, w: np.ndarray) -> float:
        return indirect_utility(self.plain, w)

    def objective(self, w: np.ndarray) -> float:
        sigma, _ = self.slack_profit(w)
        star = self.indirect(w)
        if sigma == 0:
            return 0.0 if math.isfinite(star) else math.inf
        return sigma * star

    def normalize(self, w: np.ndarray) -> np.ndarray:
        star = self.indirect(w)
        if not (star > 0 and math.isfinite(star)):
            raise DomainError("price vector cannot be normalized")
        return w * star


def _kelley_min_sum(problem: _PriceProblem, a: np.ndarray, tol: float, max_iterations: int = 200):
    """p = -inf: minimize Pi_z(a lam) - (a lam).z over the unit simplex by cutting planes."""
    n = len(problem.coords)
    cuts = [np.zeros(n)]
    for j in range(n):
        e = np.zeros(n)
        e[j] = 1.0
        cuts.append(problem.slack_profit(e)[1])
    best_lam, best_value, lower = np.full(n, 1.0 / n), math.inf, -math.inf
    for iteration in range(max_iterations):
        s = np.array(cuts)
        a_ub = np.hstack([s * a, -np.ones((len(cuts), 1))])
        c = np.zeros(n + 1)
        c[-1] = -1.0
        free = np.zeros(n + 1, dtype=bool)
        free[-1] = True
        res = solve_lp(LinearProgram(c, a_ub, np.zeros(len(cuts)), np.append(np.ones(n), 0.0)[None, :],
                                     np.ones(1), free))
        if not res.optimal:
            break
        lam = np.clip(res.x[:n], 0.0, None)
        lam /= lam.sum()
        lower = -res.value
        value, slack = problem.slack_profit(a * lam)
        if value < best_value:
            best_lam, best_value = lam, value
        if best_value - lower <= tol * (1.0 + abs(best_value)):
            return best_lam, best_value, iteration + 1
        cuts.append(slack)
    logger.warning("Cutting planes stopped with bound gap %.3e", best_value - lower)
    return best_lam, best_value, max_iterations


def _aitken(values: Sequence[float]) -> float:
    v1, v2, v3 = values[-3:]
    denom = (v3 - v2) - (v2 - v1)
    if abs(denom) <= 1e-15 * (1.0 + abs(v3)):
        return v3
    return v3 - (v3 - v2) ** 2 / denom


def _projected_subgradient(problem: _PriceProblem, starts: List[np.ndarray], floor: float,
                           iterations: int = 200):
    """Multi-start projected subgradient on log R over the floored simplex; ordered reduction."""
    best_w, best_value = None, math.inf
    for start in starts:
        lam = project_simplex(start, floor)
        step = 0.5
        for it in range(iterations):
            sigma, slack = problem.slack_profit(lam)
            star = problem.indirect(lam)
            value = sigma * star
            if value < best_value:
                best_w, best_value = lam.copy(), value
            if sigma <= 0:
                break
            grad_star = _log_indirect_gradient(problem.plain, lam)
            grad = slack / sigma + grad_star
            norm = float(np.linalg.norm(grad))
            if norm == 0:
                break
            lam = project_simplex(lam - step / math.sqrt(it + 1.0) * grad / norm, floor)
    return best_w, best_value


def _log_indirect_gradient(plain: UtilitySpec, w: np.ndarray) -> np.ndarray:
    if isinstance(plain, CobbDouglas):
        return -plain.exponents / w
    a = plain.coefficients
    q = PParameter.finite(plain.p.dual_order())
    x = w / a
    value = phi_sum(q, x)
    grad = utility_gradient(PMeanPlain(q, np.ones(x.size)), x) / a
    return -grad / value


def dual_value_utility(tech: Technology, z: Netput, spec: UtilitySpec, tol: float = DEFAULT_TOL) -> DualResult:
    """
    inf over w >= 0 with W_star(w) = 1 of Pi_z(w) - w.z.

    Solved as the scale-free problem inf (Pi_z(w) - w.z) W_star(w) and rescaled.
    When the infimum is only approached along a price sequence the result is
    extrapolated and reported with attained=False.
    """
    if not tech.is_convex:
        raise ConvexityRequiredError(f"quasi-concave duality needs a convex technology, got {type(tech).__name__}")
    if not is_quasi_concave(spec):
        raise UnsupportedRegimeError("utility duality needs p < 1 or Cobb-Douglas; use the norm dual for p >= 1")
    z = tech._check(z)
    if not tech.contains(z):
        raise InfeasibleError("dual programs need z in the technology")
    plain = to_plain(spec)
    coords = list(spec.direction.support) if isinstance(spec, PMeanDirectional) else list(range(tech.dim))
    if plain.dimension() != len(coords):
        raise DomainError(f"utility has {plain.dimension()} arguments, expected {len(coords)}")

    primal = evaluate_utility(tech, z, spec, tol=tol, with_status=False)
    score = primal.score
    problem = _PriceProblem(tech, z, coords, plain)
    s_star = (np.asarray(primal.projection) - z)[coords]
    s_scale = float(s_star.max(initial=0.0))

    def finish(w: np.ndarray, value: float, attained: bool, route: str, **extra) -> DualResult:
        w = problem.normalize(w)
        residual = abs(1.0 / problem.indirect(w) - 1.0)
        diagnostics = {"route": route, "lp_solves": problem.lp_solves}
        diagnostics.update(extra)
        return DualResult(problem.full(w), residual, value, abs(value - score), attained, score, None, diagnostics)

    p = plain.p if isinstance(plain, PMeanPlain) else PParameter.finite(0.0)

    if p.kind == "neg_inf":
        lam, value, iterations = _kelley_min_sum(problem, plain.coefficients, tol)
        return finish(plain.coefficients * lam, value, True, "cutting_planes", iterations=iterations)

    reach = np.array([improvement_potential(tech, z, k) for k in coords])
    problem.lp_solves += len(coords)
    pinned = reach <= 1e-7 * (1.0 + float(np.abs(z).max()))

    if np.all(pinned):
        w = np.ones(len(coords))
        return finish(w, 0.0, True, "efficient")

    if p.is_finite and p.value < 0 and not p.is_multiplicative and np.any(pinned):
        k = int(np.flatnonzero(pinned)[0])
        w = np.zeros(len(coords))
        w[k] = plain.coefficients[k]
        value = problem.objective(w)
        return finish(w, value, True, "absorbing_coordinate", coordinate=coords[k])

    if p.is_multiplicative and np.any(pinned):
        # W_star vanishes only as the pinned prices grow without bound
        values, w = [], None
        for scale in ABSORBING_PRICE_SCALES:
            w = np.ones(len(coords))
            w[pinned] = scale
            values.append(problem.objective(w))
        logger.info("Dual infimum 0 approached as prices on coordinates %s grow",
                    [coords[k] for k in np.flatnonzero(pinned)])
        return finish(w, 0.0, False, "absorbing_limit", sequence=values,
                      coordinates=[coords[k] for k in np.flatnonzero(pinned)])

    if s_scale > 0 and np.all(s_star > 1e-12 * s_scale):
        w = utility_gradient(plain, s_star)
        value = problem.objective(w)
        if abs(value - score) <= max(tol, 1e-8) * (1.0 + abs(score)) * 1e3:
            return finish(w, value, True, "kkt")
        logger.debug("KKT prices off by %.3e, falling back to multi-start search", value - score)
        starts = [w / w.sum()]
        rng = np.random.default_rng(0)
        starts += [np.full(len(coords), 1.0 / len(coords))]
        starts += [rng.dirichlet(np.ones(len(coords))) for _ in range(MULTI_STARTS - 2)]
        best_w, best_value = _projected_subgradient(problem, starts, 1e-9)
        if best_value < value:
            w, value = best_w, best_value
        return finish(w, value, True, "multi_start")

    # boundary optimum: approach along gradients at floored slacks
    base = max(s_scale, float(reach.max()))
    values, prices = [], []
    for eps in EPSILON_SEQUENCE:
        s_eps = np.maximum(s_star, eps * base)
        w = utility_gradient(plain, s_eps)
        w = problem.normalize(w)
        values.append(problem.objective(w))
        prices.append(w)
    extrapolated = _aitken(values)
    ratio = float(prices[-1].max() / prices[-1].min())
    decreasing = values[0] - values[-1] > 1e-12 * (1.0 + abs(values[-1]))
    attained = not (decreasing or ratio > NON_ATTAINMENT_RATIO)
    if not attained:
        logger.info("Dual infimum approached along a price sequence (ratio %.3e)", ratio)
    value = extrapolated if not attained else values[0]
    w = prices[-1] if not attained else prices[0]
    return finish(w, value, attained, "epsilon_sequence", sequence=values, price_ratio=ratio)


# ---------------- PUBLIC ENTRY POINTS ---------------- #

def dual_value(tech: Technology, z: Netput, g, p: PLike, tol: float = DEFAULT_TOL) -> DualResult:
    """Optimal normalized shadow prices for D_(p)(z; g) and the duality gap."""
    p = PParameter.of(p)
    z = tech._check(z)
    g = as_direction(g)
    if g.is_zero:
        raise DomainError("dual programs need a nonzero direction")
    if not tech.contains(z):
        raise InfeasibleError("dual programs need z in the technology")
    rule = NormalizationRule.for_p(p)
    if NormalizationRule.criterion(p) == "maximization":
        return _maximization_dual(tech, z, g, p, tol)
    if not tech.is_convex:
        raise ConvexityRequiredError(f"p = {p} duality needs a convex technology, got {type(tech).__name__}")

    result = dual_value_utility(tech, z, PMeanDirectional(p, g, normalized=True), tol=tol)
    result.rule = rule
    result.normalization_residual = abs(normalization_value(rule, g, result.prices) - 1.0)
    return result


def norm_dual_value(tech: Technology, z: Netput, p_norm: PLike, weights) -> DualResult:
    """
    max over u in T_z of the weighted l_p norm of u - z, and its dual
    max { Pi_z(w) - w.z : ||w||_(g,q) = 1 }. Needs no convexity.
    """
    p = PParameter.of(p_norm)
    if p < PParameter.finite(1.0):
        raise DomainError("norm duality needs p >= 1")
    g = as_direction(weights)
    z = tech._check(z)
    if not tech.contains(z):
        raise InfeasibleError("dual programs need z in the technology")
    d = g.d_g
    primal = evaluate_p(tech, z, g, p, with_status=False)
    factor = 1.0 if not p.is_finite else d ** (1.0 / p.value)
    score = primal.score * factor
    delta = primal.delta_star[list(g.support)]
    v = _norm_subgradient(p, delta, normalized=False)
    w = g.embed(v / g.support_values)
    value = dominating_profit(tech, z, w) - float(w @ z)

    q = p.dual_order()
    dual_norm = float(v.max()) if math.isinf(q) else float(np.sum(v ** q)) ** (1.0 / q)
    return DualResult(w, abs(dual_norm - 1.0), value, abs(value - score), True, score, None,
                      {"route": "norm_subgradient", "dual_order": q})


def weak_duality_audit(tech: Technology, z: Netput, g, p: PLike, samples: int = 100,
                       seed: int = 0, tol: float = DEFAULT_TOL) -> AuditReport:
    """Check every sampled normalized price against the primal score; report the worst violation."""
    p = PParameter.of(p)
    g = as_direction(g)
    z = tech._check(z)
    if not tech.contains(z):
        raise InfeasibleError("weak duality audit needs z in the technology")
    primal = evaluate_p(tech, z, g, p, tol=tol, with_status=False)
    rule = NormalizationRule.for_p(p)
    criterion = NormalizationRule.criterion(p)
    rng = np.random.default_rng(seed)
    worst, count = -math.inf, 0
    for _ in range(samples):
        lam = rng.dirichlet(np.ones(g.d_g))
        w = normalized_prices(rule, g, g.embed(lam))
        if criterion == "maximization":
            violation = restricted_profit(tech, z, g, w) - float(w @ z) - primal.score
        else:
            violation = primal.score - (dominating_profit(tech, z, w) - float(w @ z))
        worst = max(worst, violation)
        count += violation > AUDIT_TOL * (1.0 + abs(primal.score))
    return AuditReport(samples, primal.score, worst, count, criterion)
