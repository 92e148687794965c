"""
Self-contained optimization kernels.

- solve_lp: two-phase primal simplex on a dense tableau with Bland's rule.
- solve_concave: smooth concave maximization over a polyhedron by simplicial
  decomposition (LP column generation + projected gradient on the simplex of
  vertex weights), stopped on a certified Frank-Wolfe gap.
- enumerate_vertices: vertices of a polytope of dimension <= 3.
"""

import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from errors import DimensionMismatchError, DomainError, InfeasibleError, SolverFailure, UnsupportedRegimeError
from gmean import CobbDouglas, UtilitySpec, p_mean_utility, utility_gradient

logger = logging.getLogger(__name__)

PIVOT_TOL = 1e-10
FEAS_TOL = 1e-9
DUALITY_TOL = 1e-8
ABSORB_TOL = 1e-12
GRADIENT_FLOOR = 1e-12
ENUM_MAX_DIM = 3
DEDUP_TOL = 1e-9
_ENUM_CHUNK = 50000


# ---------------- LINEAR PROGRAMMING ---------------- #

class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    FAILED = "failed"


@dataclass
class LinearProgram:
    """maximize c.x  s.t.  a_ub x <= b_ub,  a_eq x = b_eq,  x >= 0 except where `free`."""

    c: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: Optional[np.ndarray] = None
    b_eq: Optional[np.ndarray] = None
    free: Optional[np.ndarray] = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float).ravel()
        n = self.c.size
        self.a_ub = np.asarray(self.a_ub, dtype=float).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=float).ravel()
        if self.a_eq is None:
            self.a_eq = np.zeros((0, n))
            self.b_eq = np.zeros(0)
        self.a_eq = np.asarray(self.a_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).ravel()
        self.free = np.zeros(n, dtype=bool) if self.free is None else np.asarray(self.free, dtype=bool).ravel()
        if self.a_ub.shape[0] != self.b_ub.size or self.a_eq.shape[0] != self.b_eq.size or self.free.size != n:
            raise DimensionMismatchError("Inconsistent LinearProgram dimensions")
        for name in ("c", "a_ub", "b_ub", "a_eq", "b_eq"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DomainError(f"LinearProgram.{name} has non-finite entries")

    @property
    def n_vars(self) -> int:
        return self.c.size

    def with_objective(self, c: np.ndarray) -> "LinearProgram":
        return LinearProgram(c, self.a_ub, self.b_ub, self.a_eq, self.b_eq, self.free)


@dataclass
class LpResult:
    status: LpStatus
    x: Optional[np.ndarray] = None
    value: float = float("nan")
    duals_ub: Optional[np.ndarray] = None
    duals_eq: Optional[np.ndarray] = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == LpStatus.OPTIMAL


def _bland_simplex(tab: np.ndarray, rhs: np.ndarray, basis: List[int], cost: np.ndarray,
                   max_iterations: int) -> Tuple[str, int]:
    """Maximize cost over the tableau in place. Entering: lowest index; leaving: min ratio, lowest basic index."""
    eps = PIVOT_TOL * max(1.0, float(np.abs(cost).max(initial=0.0)))
    for iteration in range(max_iterations):
        reduced = cost - cost[basis] @ tab
        reduced[basis] = 0.0
        entering = np.flatnonzero(reduced > eps)
        if entering.size == 0:
            return "optimal", iteration
        j = int(entering[0])
        col = tab[:, j]
        rows = np.flatnonzero(col > PIVOT_TOL)
        if rows.size == 0:
            return "unbounded", iteration
        ratios = rhs[rows] / col[rows]
        best = ratios.min()
        ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
        i = int(min(ties, key=lambda r: basis[r]))

        piv = tab[i, j]
        tab[i] /= piv
        rhs[i] /= piv
        factor = tab[:, j].copy()
        factor[i] = 0.0
        tab -= np.outer(factor, tab[i])
        rhs -= factor * rhs[i]
        rhs[np.abs(rhs) < 1e-14] = 0.0
        basis[i] = j
    return "iteration_limit", max_iterations


def solve_lp(lp: LinearProgram, max_iterations: Optional[int] = None) -> LpResult:
    """
    Solve a LinearProgram (maximization) with the two-phase Bland simplex.

    Optimal results carry dual multipliers whose objective matches the primal
    value; numeric breakdown is reported as FAILED, never as a wrong OPTIMAL.
    """
    n = lp.n_vars
    free_idx = np.flatnonzero(lp.free)
    a_ub = np.hstack([lp.a_ub, -lp.a_ub[:, free_idx]])
    a_eq = np.hstack([lp.a_eq, -lp.a_eq[:, free_idx]])
    cost_struct = np.concatenate([lp.c, -lp.c[free_idx]])
    n_struct = cost_struct.size
    m_ub, m_eq = a_ub.shape[0], a_eq.shape[0]
    m = m_ub + m_eq

    if m == 0:
        if np.any(cost_struct > PIVOT_TOL):
            return LpResult(LpStatus.UNBOUNDED)
        return LpResult(LpStatus.OPTIMAL, np.zeros(n), 0.0, np.zeros(0), np.zeros(0))

    # rows: [a_ub | I] then [a_eq | 0], rhs made nonnegative
    matrix = np.zeros((m, n_struct + m_ub))
    matrix[:m_ub, :n_struct] = a_ub
    matrix[:m_ub, n_struct:] = np.eye(m_ub)
    matrix[m_ub:, :n_struct] = a_eq
    rhs = np.concatenate([lp.b_ub, lp.b_eq])
    signs = np.where(rhs < 0, -1.0, 1.0)
    matrix *= signs[:, None]
    rhs = rhs * signs

    needs_artificial = [i for i in range(m) if i >= m_ub or signs[i] < 0]
    n_base = n_struct + m_ub
    n_art = len(needs_artificial)
    tab = np.hstack([matrix, np.zeros((m, n_art))])
    basis = []
    art_col = {}
    for k, i in enumerate(needs_artificial):
        tab[i, n_base + k] = 1.0
        art_col[i] = n_base + k
    for i in range(m):
        basis.append(art_col.get(i, n_struct + i))

    limit = max_iterations or 50 * (m + n_base + n_art) + 100
    iterations = 0

    if n_art:
        phase1 = np.zeros(n_base + n_art)
        phase1[n_base:] = -1.0
        status, it = _bland_simplex(tab, rhs, basis, phase1, limit)
        iterations += it
        if status != "optimal":
            logger.debug("Phase I stopped with %s", status)
            return LpResult(LpStatus.FAILED, iterations=iterations)
        infeasibility = float(rhs[[i for i, b in enumerate(basis) if b >= n_base]].sum())
        if infeasibility > FEAS_TOL * max(1.0, float(np.abs(rhs).max())):
            return LpResult(LpStatus.INFEASIBLE, iterations=iterations)

        # drive artificials out of the basis; rows left with only artificials are redundant
        keep_rows = []
        for i in range(m):
            if basis[i] >= n_base:
                candidates = np.flatnonzero(np.abs(tab[i, :n_base]) > PIVOT_TOL)
                if candidates.size == 0:
                    continue
                j = int(candidates[0])
                piv = tab[i, j]
                tab[i] /= piv
                rhs[i] /= piv
                factor = tab[:, j].copy()
                factor[i] = 0.0
                tab -= np.outer(factor, tab[i])
                rhs -= factor * rhs[i]
                basis[i] = j
            keep_rows.append(i)
        tab = tab[keep_rows, :n_base]
        rhs = rhs[keep_rows]
        basis = [basis[i] for i in keep_rows]
    else:
        keep_rows = list(range(m))

    cost = np.concatenate([cost_struct, np.zeros(m_ub)])
    status, it = _bland_simplex(tab, rhs, basis, cost, limit)
    iterations += it
    if status == "unbounded":
        return LpResult(LpStatus.UNBOUNDED, iterations=iterations)
    if status != "optimal":
        logger.warning("Simplex hit the iteration limit (%d)", limit)
        return LpResult(LpStatus.FAILED, iterations=iterations)

    # refactor from the original data for accuracy
    full = matrix[keep_rows]
    b_rows = (np.concatenate([lp.b_ub, lp.b_eq]) * signs)[keep_rows]
    basis_matrix = full[:, basis]
    try:
        x_basic = np.linalg.solve(basis_matrix, b_rows)
        y_rows = np.linalg.solve(basis_matrix.T, cost[basis])
    except np.linalg.LinAlgError:
        return LpResult(LpStatus.FAILED, iterations=iterations)

    std = np.zeros(n_base)
    std[basis] = x_basic
    x = std[:n].copy()
    x[free_idx] -= std[n:n_struct]
    value = float(lp.c @ x)

    duals = np.zeros(m)
    duals[keep_rows] = y_rows * signs[keep_rows]
    duals_ub, duals_eq = duals[:m_ub], duals[m_ub:]

    scale = 1.0 + float(np.abs(rhs).max(initial=0.0))
    violation = max(
        float(np.max(lp.a_ub @ x - lp.b_ub, initial=0.0)),
        float(np.max(np.abs(lp.a_eq @ x - lp.b_eq), initial=0.0)),
        float(np.max(-x[~lp.free], initial=0.0)),
    )
    dual_value = float(lp.b_ub @ duals_ub + lp.b_eq @ duals_eq)
    magnitude = 1.0 + abs(value) + float(np.abs(lp.b_ub * duals_ub).sum() + np.abs(lp.b_eq * duals_eq).sum())
    if violation > 100 * FEAS_TOL * scale or abs(dual_value - value) > DUALITY_TOL * magnitude:
        logger.warning("LP certificate check failed: violation=%.3e duality=%.3e", violation, dual_value - value)
        return LpResult(LpStatus.FAILED, iterations=iterations)

    return LpResult(LpStatus.OPTIMAL, x, value, duals_ub, duals_eq, iterations)


# ---------------- SIMPLEX PROJECTION ---------------- #

def project_simplex(c: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """Euclidean projection onto {v : v >= floor, sum(v) = 1} (sort and threshold)."""
    c = np.asarray(c, dtype=float)
    n = c.size
    radius = 1.0 - n * floor
    if radius <= 0:
        raise DomainError(f"floor {floor} too large for a simplex of dimension {n}")
    shifted = c - floor
    a = -np.sort(-shifted)
    lambdas = (np.cumsum(a) - radius) / np.arange(1, n + 1)
    for k in range(n - 1, -1, -1):
        if a[k] > lambdas[k]:
            return np.maximum(shifted - lambdas[k], 0.0) + floor
    return np.full(n, 1.0 / n)


def spg_ascent(phi: Callable[[np.ndarray], float], grad: Callable[[np.ndarray], np.ndarray],
               lam: np.ndarray, tol: float, max_iterations: int = 500,
               floor: float = 0.0) -> Tuple[np.ndarray, float, int]:
    """
    Spectral projected gradient ascent over the (floored) unit simplex.

    Armijo backtracking along the projected direction; stops when the
    simplex Frank-Wolfe gap max(g) - g.lam falls below tol.
    """
    lam = project_simplex(lam, floor)
    f = phi(lam)
    g = grad(lam)
    alpha = 1.0 / max(1e-12, float(np.abs(g).max(initial=0.0)))
    for iteration in range(max_iterations):
        stationarity = float(g.max() - g @ lam) if floor == 0.0 else float(g @ (project_simplex(lam + 1e6 * g, floor) - lam))
        if stationarity <= tol:
            return lam, f, iteration
        d = project_simplex(lam + alpha * g, floor) - lam
        slope = float(g @ d)
        if slope <= 0:
            alpha = max(alpha * 0.1, 1e-16)
            continue
        theta = 1.0
        while True:
            cand = lam + theta * d
            fc = phi(cand)
            if fc >= f + 1e-4 * theta * slope:
                break
            theta *= 0.5
            if theta < 1e-14:
                return lam, f, iteration
        g_new = grad(cand)
        s = cand - lam
        y = g_new - g
        sy = float(s @ y)
        alpha = float(s @ s) / -sy if sy < 0 else alpha * 2.0
        alpha = min(max(alpha, 1e-12), 1e12)
        lam, f, g = cand, fc, g_new
    return lam, f, max_iterations


# ---------------- CONCAVE PROGRAMMING ---------------- #

class ConcaveStatus(str, Enum):
    CONVERGED = "converged"
    ABSORBED = "absorbed"
    NONCONVERGED = "nonconverged"


@dataclass
class ConcaveProgram:
    """
    Maximize W(image @ x + offset) over a LinearProgram-style polyhedron (its c is ignored).

    With `minimize`, W is convex and is minimized instead.
    """

    objective: UtilitySpec
    image: np.ndarray
    offset: np.ndarray
    feasible: LinearProgram
    minimize: bool = False

    def __post_init__(self):
        self.image = np.atleast_2d(np.asarray(self.image, dtype=float))
        self.offset = np.asarray(self.offset, dtype=float).ravel()
        if self.image.shape != (self.offset.size, self.feasible.n_vars):
            raise DimensionMismatchError(
                f"image {self.image.shape} does not map {self.feasible.n_vars} variables to {self.offset.size} arguments"
            )

    def arguments(self, x: np.ndarray) -> np.ndarray:
        return np.maximum(self.image @ x + self.offset, 0.0)

    def absorbing(self) -> bool:
        if self.minimize:
            return False
        if isinstance(self.objective, CobbDouglas):
            return True
        p = self.objective.p
        return p.kind == "neg_inf" or (p.is_finite and p.value <= 0.0)


@dataclass
class ConcaveResult:
    x: np.ndarray
    value: float
    gap: float
    status: ConcaveStatus
    iterations: int = 0
    lp_solves: int = 0
    vertices: int = 0
    diagnostics: dict = field(default_factory=dict)


def _solve_or_raise(lp: LinearProgram) -> LpResult:
    res = solve_lp(lp)
    if res.status == LpStatus.INFEASIBLE:
        raise InfeasibleError("Concave program has an empty feasible set")
    if res.status == LpStatus.UNBOUNDED:
        raise DomainError("Concave program feasible set is unbounded")
    if not res.optimal:
        raise SolverFailure("LP subproblem failed inside solve_concave")
    return res


def solve_concave(cp: ConcaveProgram, tol: float = 1e-9, max_outer: int = 200,
                  master_iterations: int = 400) -> ConcaveResult:
    """
    Maximize a concave utility of an affine image over a polytope.

    Absorbing objectives (p <= 0, Cobb-Douglas) first maximize min_k argument
    by LP; a zero optimum returns value 0 without iterating.
    """
    feasible = cp.feasible
    n = feasible.n_vars
    k = cp.offset.size
    sign = -1.0 if cp.minimize else 1.0
    lp_solves = 0

    # per-argument maxima: initial vertices and the set of arguments pinned at zero
    vertices: List[np.ndarray] = []
    pinned = np.zeros(k, dtype=bool)
    for i in range(k):
        res = _solve_or_raise(feasible.with_objective(cp.image[i]))
        lp_solves += 1
        vertices.append(res.x)
        pinned[i] = res.value + cp.offset[i] <= ABSORB_TOL * (1.0 + abs(cp.offset[i]))

    if cp.absorbing():
        a_ub = np.hstack([feasible.a_ub, np.zeros((feasible.a_ub.shape[0], 1))])
        a_ub = np.vstack([a_ub, np.hstack([-cp.image, np.ones((k, 1))])])
        b_ub = np.concatenate([feasible.b_ub, cp.offset])
        a_eq = np.hstack([feasible.a_eq, np.zeros((feasible.a_eq.shape[0], 1))])
        c = np.zeros(n + 1)
        c[-1] = 1.0
        pre = _solve_or_raise(LinearProgram(c, a_ub, b_ub, a_eq, feasible.b_eq, np.append(feasible.free, False)))
        lp_solves += 1
        if pre.value <= ABSORB_TOL * (1.0 + float(np.abs(cp.offset).max(initial=0.0))):
            x = pre.x[:n]
            logger.debug("Absorbing objective: no strictly positive feasible argument")
            return ConcaveResult(x, 0.0, 0.0, ConcaveStatus.ABSORBED, 0, lp_solves, 0)
        start = pre.x[:n]
    elif cp.minimize:
        start = vertices[0]
    else:
        start = np.mean(vertices, axis=0)

    scale = max(1.0, float(np.abs(np.array(vertices) @ cp.image.T + cp.offset).max(initial=0.0)))
    floor = GRADIENT_FLOOR * scale

    def value_at(x: np.ndarray) -> float:
        return sign * p_mean_utility(cp.objective, cp.arguments(x))

    def gradient_at(x: np.ndarray) -> np.ndarray:
        args = np.maximum(cp.arguments(x), floor)
        g_args = utility_gradient(cp.objective, args)
        g_args = np.where(pinned | ~np.isfinite(g_args), 0.0, g_args)
        return sign * (cp.image.T @ g_args)

    columns = [start] + ([] if cp.minimize else vertices)
    lam = np.zeros(len(columns))
    lam[0] = 1.0
    gap = np.inf
    status = ConcaveStatus.NONCONVERGED
    total_master = 0
    x_hat = start
    stalls = 0

    for outer in range(max_outer):
        matrix = np.array(columns).T

        def phi(weights: np.ndarray) -> float:
            return value_at(matrix @ weights)

        def dphi(weights: np.ndarray) -> np.ndarray:
            return matrix.T @ gradient_at(matrix @ weights)

        lam, f_hat, used = spg_ascent(phi, dphi, lam, tol * 0.1 * (1.0 + abs(phi(lam))), master_iterations)
        total_master += used
        x_hat = matrix @ lam
        direction = gradient_at(x_hat)
        res = _solve_or_raise(feasible.with_objective(direction))
        lp_solves += 1
        gap = float(direction @ res.x - direction @ x_hat)
        if gap <= tol * (1.0 + abs(f_hat)):
            status = ConcaveStatus.CONVERGED
            break

        duplicate = any(np.max(np.abs(col - res.x)) <= 1e-12 * scale for col in columns)
        if duplicate:
            stalls += 1
            if stalls > 3:
                break
            master_iterations *= 2
            continue
        keep = [i for i in range(len(columns)) if lam[i] > 0]
        columns = [columns[i] for i in keep] + [res.x]
        lam = np.append(lam[keep], 0.0)

    value = p_mean_utility(cp.objective, cp.arguments(x_hat))
    if status != ConcaveStatus.CONVERGED:
        logger.warning("solve_concave stopped with Frank-Wolfe gap %.3e after %d outer iterations", gap, outer + 1)
    return ConcaveResult(
        x_hat, value, max(gap, 0.0), status, outer + 1, lp_solves, len(columns),
        {"master_iterations": total_master},
    )


# ---------------- VERTEX ENUMERATION ---------------- #

def _dedupe_rows(a: np.ndarray, b: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(a, axis=1)
    keep = norms > 1e-14
    a, b, norms = a[keep], b[keep], norms[keep]
    rows = np.hstack([a / norms[:, None], (b / norms)[:, None]])
    rows = np.unique(np.round(rows, 10), axis=0)
    return rows[:, :-1], rows[:, -1]


def _dedupe_points(points: np.ndarray) -> List[np.ndarray]:
    if points.size == 0:
        return []
    order = np.lexsort(points.T[::-1])
    out: List[np.ndarray] = []
    for p in points[order]:
        if not any(np.max(np.abs(p - q)) <= DEDUP_TOL * (1.0 + np.max(np.abs(q))) for q in out):
            out.append(p)
    return out


def vertices_from_arrays(a: np.ndarray, b: np.ndarray) -> List[np.ndarray]:
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.asarray(b, dtype=float).ravel()
    dim = a.shape[1]
    if dim > ENUM_MAX_DIM:
        raise UnsupportedRegimeError(f"Vertex enumeration supports dimension <= {ENUM_MAX_DIM}, got {dim}")
    zero_rows = np.linalg.norm(a, axis=1) <= 1e-14
    if np.any(b[zero_rows] < -FEAS_TOL):
        return []
    a, b = _dedupe_rows(a, b)
    m = a.shape[0]
    if m < dim:
        return []

    found = []
    combos = itertools.combinations(range(m), dim)
    while True:
        chunk = np.array(list(itertools.islice(combos, _ENUM_CHUNK)), dtype=int)
        if chunk.size == 0:
            break
        mats = a[chunk]
        dets = np.linalg.det(mats)
        ok = np.abs(dets) > 1e-12
        if not np.any(ok):
            continue
        sols = np.linalg.solve(mats[ok], b[chunk[ok]][..., None])[..., 0]
        slack = a @ sols.T - b[:, None]
        feasible = np.all(slack <= FEAS_TOL * (1.0 + np.abs(b))[:, None], axis=0)
        found.append(sols[feasible])
    if not found:
        return []
    return _dedupe_points(np.vstack(found))


def enumerate_vertices(constraints: Sequence[Tuple[Sequence[float], float]],
                       box: Optional[Tuple[Sequence[float], Sequence[float]]] = None) -> List[np.ndarray]:
    """
    All vertices of {x : normal . x <= rhs for every constraint}, intersected with
    the optional box (lower, upper). Deduplicated at 1e-9, sorted lexicographically.
    """
    if not constraints and box is None:
        return []
    normals = [np.asarray(n, dtype=float).ravel() for n, _ in constraints]
    rhs = [float(r) for _, r in constraints]
    if box is not None:
        lower = np.asarray(box[0], dtype=float).ravel()
        upper = np.asarray(box[1], dtype=float).ravel()
        eye = np.eye(lower.size)
        normals.extend(list(eye) + list(-eye))
        rhs.extend(list(upper) + list(-lower))
    dims = {n.size for n in normals}
    if len(dims) != 1:
        raise DimensionMismatchError(f"Constraints disagree on dimension: {sorted(dims)}")
    return vertices_from_arrays(np.array(normals), np.array(rhs))
