"""
Brute-force references: grid search over expansions, a dominating-point scan for
free disposal hulls and grid maximization on a budget line.

These share no code path with the solvers beyond the membership tests.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from errors import DomainError, UnsupportedRegimeError
from gmean import CobbDouglas, PMeanDirectional, PMeanPlain, PParameter, UtilitySpec, power_mean
from technology import Direction, Netput, Technology, as_direction, as_netput, best_profit

logger = logging.getLogger(__name__)

GRID_MAX_DIM = 3
_CHUNK = 200000


@dataclass(frozen=True)
class GridSpec:
    resolution: int = 201
    delta_max: Optional[Sequence[float]] = None

    def __post_init__(self):
        if self.resolution < 2:
            raise DomainError("grid resolution must be at least 2")
        if self.delta_max is not None and np.any(np.asarray(self.delta_max, dtype=float) < 0):
            raise DomainError("delta_max must be nonnegative")


@dataclass
class GridResult:
    lower: float
    upper: float
    argmax: Optional[np.ndarray]
    feasible_points: int = 0


# ---------------- BATCH MEANS ---------------- #

def _batch_power_mean(p: PParameter, x: np.ndarray) -> np.ndarray:
    """Row-wise normalized p-mean of a nonnegative matrix."""
    if p.kind == "pos_inf":
        return x.max(axis=1)
    if p.kind == "neg_inf":
        return x.min(axis=1)
    zero = x.min(axis=1) <= 0
    if p.is_multiplicative:
        with np.errstate(divide="ignore"):
            out = np.exp(np.mean(np.log(x), axis=1))
        return np.where(zero, 0.0, out)
    if p.value < 0:
        safe = np.where(x > 0, x, 1.0)
        out = np.mean(safe ** p.value, axis=1) ** (1.0 / p.value)
        return np.where(zero, 0.0, out)
    return np.mean(x ** p.value, axis=1) ** (1.0 / p.value)


def batch_utility(spec: UtilitySpec, s: np.ndarray) -> np.ndarray:
    """W evaluated on every row of s (raw slacks u - z)."""
    s = np.maximum(np.atleast_2d(s), 0.0)
    if isinstance(spec, PMeanDirectional):
        g = spec.direction
        x = s[:, list(g.support)] / g.support_values if s.shape[1] == g.dim else s / g.support_values
        values = _batch_power_mean(spec.p, x)
        if spec.normalized or not spec.p.is_finite:
            return values
        if spec.p.is_multiplicative:
            return values ** x.shape[1]
        return values * x.shape[1] ** (1.0 / spec.p.value)
    if isinstance(spec, PMeanPlain):
        if spec.p.is_multiplicative:
            raise DomainError("PMeanPlain needs p != 0")
        y = s * spec.coefficients
        values = _batch_power_mean(spec.p, y)
        return values if not spec.p.is_finite else values * y.shape[1] ** (1.0 / spec.p.value)
    if isinstance(spec, CobbDouglas):
        y = s * spec.coefficients
        with np.errstate(divide="ignore"):
            out = np.exp(np.log(y) @ spec.exponents)
        return np.where(y.min(axis=1) <= 0, 0.0, out)
    raise DomainError(f"Unknown utility spec: {type(spec).__name__}")


# ---------------- GRID SEARCH ---------------- #

def _delta_max(tech: Technology, z: np.ndarray, g: Direction) -> np.ndarray:
    reach = []
    for k in g.support:
        w = np.zeros(tech.dim)
        w[k] = 1.0
        value, _ = best_profit(tech, z, w, range(tech.dim))
        reach.append(max(value - z[k], 0.0) / g.values[k])
    return np.array(reach)


def grid_search(tech: Technology, z: Netput, g, spec: UtilitySpec, grid: GridSpec = GridSpec()) -> GridResult:
    """
    Max of W(delta (.) g) over feasible grid points of the expansion box.

    lower is a feasible value. upper bounds the true supremum: every feasible
    delta lies in a grid cell whose lower corner is feasible (free disposal), and
    W is monotone, so W at the upper corner dominates the cell.
    """
    z = tech._check(z)
    g = as_direction(g)
    if g.is_zero:
        raise DomainError("grid_search needs a nonzero direction")
    if g.d_g > GRID_MAX_DIM:
        raise UnsupportedRegimeError(f"grid_search supports d_g <= {GRID_MAX_DIM}, got {g.d_g}")
    if not tech.contains(z):
        return GridResult(-math.inf, -math.inf, None)

    box = np.asarray(grid.delta_max, dtype=float) if grid.delta_max is not None else _delta_max(tech, z, g)
    axes = [np.linspace(0.0, top, grid.resolution) for top in box]
    mesh = box / (grid.resolution - 1)
    support = list(g.support)

    best, upper, argmax, feasible_count = -math.inf, -math.inf, None, 0
    points = itertools.product(*[range(grid.resolution)] * g.d_g)
    while True:
        idx = np.array(list(itertools.islice(points, _CHUNK)), dtype=int)
        if idx.size == 0:
            break
        delta = np.column_stack([axes[j][idx[:, j]] for j in range(g.d_g)])
        u = np.tile(z, (delta.shape[0], 1))
        u[:, support] += delta * g.support_values
        feasible = tech.contains_batch(u)
        if not np.any(feasible):
            continue
        delta = delta[feasible]
        feasible_count += delta.shape[0]
        s = np.zeros((delta.shape[0], tech.dim))
        s[:, support] = delta * g.support_values
        values = batch_utility(spec, s)
        i = int(np.argmax(values))
        if values[i] > best:
            best, argmax = float(values[i]), delta[i]
        s[:, support] = (delta + mesh) * g.support_values
        upper = max(upper, float(batch_utility(spec, s).max()))
    logger.debug("grid_search: %d feasible of %d points", feasible_count, grid.resolution ** g.d_g)
    return GridResult(best, upper, argmax, feasible_count)


# ---------------- CLOSED FORMS ---------------- #

def fdh_closed_form(points: Sequence[Netput], z: Netput, g, p: Union[PParameter, float, str]) -> float:
    """Exact free disposal hull score: best p-mean expansion over the dominating points."""
    p = PParameter.of(p)
    z = as_netput(z)
    g = as_direction(g)
    support = list(g.support)
    best = -math.inf
    for a in points:
        a = as_netput(a)
        if np.any(a < z - 1e-9):
            continue
        if g.is_zero:
            return math.inf
        delta = np.maximum(a[support] - z[support], 0.0) / g.support_values
        best = max(best, power_mean(p, delta))
    return best


def budget_line_max(spec: UtilitySpec, w: Sequence[float], c: float, resolution: int = 2001) -> float:
    """Grid maximum of W over {v >= 0 : w.v = c}; converges to c W_star(w)."""
    w = np.asarray(w, dtype=float).ravel()
    if isinstance(spec, PMeanDirectional) and w.size == spec.direction.dim:
        w = w[list(spec.direction.support)]
    if w.size == 0 or np.any(w <= 0) or not c > 0:
        raise DomainError("budget_line_max needs strictly positive prices and budget")
    n = w.size
    if n > GRID_MAX_DIM:
        raise UnsupportedRegimeError(f"budget_line_max supports up to {GRID_MAX_DIM} goods")
    ticks = np.linspace(0.0, 1.0, resolution)
    if n == 1:
        shares = np.ones((1, 1))
    elif n == 2:
        shares = np.column_stack([ticks, 1.0 - ticks])
    else:
        i, j = np.meshgrid(ticks, ticks, indexing="ij")
        keep = i + j <= 1.0 + 1e-12
        shares = np.column_stack([i[keep], j[keep], np.maximum(1.0 - i[keep] - j[keep], 0.0)])
    v = c * shares / w
    return float(batch_utility(spec, v).max())
