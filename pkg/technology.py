"""
Production technologies and the queries the distance functions are built on.

A technology T is a set of netput vectors (inputs negative, outputs positive):

    VrsHull(points)  {u : u <= sum t_a a, sum t_a = 1, t >= 0}
    Fdh(points)      union over a of {u : u <= a}
    HRep(normals, rhs)  {u : normal_i . u <= rhs_i}

Every query works on the dominating set T_z = {u in T : u >= z}.
"""

import logging
import math
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from errors import (
    ConfigurationError,
    DimensionMismatchError,
    DomainError,
    InfeasibleError,
    SolverFailure,
    UnsupportedRegimeError,
)
from solver_kernels import LinearProgram, LpResult, LpStatus, solve_lp, vertices_from_arrays

logger = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-9
IMPROVEMENT_TOL = 1e-7
_BATCH_CHUNK = 200000


# ---------------- NETPUTS AND DIRECTIONS ---------------- #

@dataclass(frozen=True, eq=False)
class NetputVector:
    """Signed quantities: the first m slots are inputs (stored <= 0), the rest outputs."""

    values: np.ndarray
    m: int = 0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        if values.size == 0:
            raise DimensionMismatchError("NetputVector needs at least one coordinate")
        if not np.all(np.isfinite(values)):
            raise DomainError("NetputVector entries must be finite")
        if not 0 <= self.m <= values.size:
            raise DimensionMismatchError(f"m={self.m} outside 0..{values.size}")
        object.__setattr__(self, "values", values)

    @classmethod
    def from_quantities(cls, inputs: Sequence[float], outputs: Sequence[float]) -> "NetputVector":
        x = np.asarray(inputs, dtype=float).ravel()
        y = np.asarray(outputs, dtype=float).ravel()
        return cls(np.concatenate([-x, y]), x.size)

    @property
    def d(self) -> int:
        return self.values.size

    @property
    def n(self) -> int:
        return self.d - self.m

    def inputs(self) -> np.ndarray:
        return -self.values[: self.m]

    def outputs(self) -> np.ndarray:
        return self.values[self.m:]

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self) -> int:
        return self.d

    def __repr__(self) -> str:
        return f"NetputVector({self.values.tolist()}, m={self.m})"


Netput = Union[NetputVector, Sequence[float], np.ndarray]


def as_netput(z: Netput) -> np.ndarray:
    arr = np.asarray(z, dtype=float).ravel()
    if not np.all(np.isfinite(arr)):
        raise DomainError("Netput entries must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class Direction:
    """Nonnegative direction g with support K_g = {k : g_k > 0}."""

    values: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.values, dtype=float).ravel()
        if g.size == 0:
            raise DimensionMismatchError("Direction needs at least one coordinate")
        if not np.all(np.isfinite(g)) or np.any(g < 0):
            raise DomainError(f"Direction must be finite and nonnegative, got {g.tolist()}")
        object.__setattr__(self, "values", g)

    @classmethod
    def unit(cls, d: int) -> "Direction":
        return cls(np.ones(d))

    @classmethod
    def observed(cls, z: Netput) -> "Direction":
        return cls(np.abs(as_netput(z)))

    @property
    def dim(self) -> int:
        return self.values.size

    @property
    def support(self) -> Tuple[int, ...]:
        return tuple(int(k) for k in np.flatnonzero(self.values > 0))

    @property
    def support_values(self) -> np.ndarray:
        return self.values[list(self.support)]

    @property
    def d_g(self) -> int:
        return len(self.support)

    @property
    def is_zero(self) -> bool:
        return self.d_g == 0

    def embed(self, delta: Sequence[float]) -> np.ndarray:
        """Full d-vector from values on K_g (zeros elsewhere)."""
        delta = np.asarray(delta, dtype=float).ravel()
        if delta.size == self.dim:
            return delta.copy()
        if delta.size != self.d_g:
            raise DimensionMismatchError(f"expected {self.d_g} or {self.dim} components, got {delta.size}")
        full = np.zeros(self.dim)
        full[list(self.support)] = delta
        return full

    def step(self, delta: Sequence[float]) -> np.ndarray:
        """delta (.) g as a full d-vector."""
        return self.embed(delta) * self.values

    def __repr__(self) -> str:
        return f"Direction({self.values.tolist()})"


def as_direction(g: Union[Direction, Sequence[float], np.ndarray]) -> Direction:
    return g if isinstance(g, Direction) else Direction(g)


# ---------------- EFFICIENCY STATUS ---------------- #

class StatusKind(str, Enum):
    INFEASIBLE = "infeasible"
    EFFICIENT = "efficient"
    WEAKLY_EFFICIENT = "weakly_efficient"
    INEFFICIENT = "inefficient"


@dataclass(frozen=True)
class EfficiencyStatus:
    """Classification of z relative to the index set K; `witness` lists the k in K with no feasible improvement."""

    kind: StatusKind
    index_set: Tuple[int, ...] = ()
    witness: Tuple[int, ...] = ()

    @property
    def is_efficient(self) -> bool:
        return self.kind == StatusKind.EFFICIENT

    @property
    def at_least_weakly_efficient(self) -> bool:
        return self.kind in (StatusKind.EFFICIENT, StatusKind.WEAKLY_EFFICIENT)

    def __str__(self) -> str:
        return self.kind.value


# ---------------- LP LIFTING ---------------- #

@dataclass
class Lifted:
    """
    Rows expressing z + G x + h in T in the variables (x, aux).

    aux are technology-specific (intensity weights for VrsHull) and always >= 0.
    """

    n_x: int
    n_aux: int
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray

    def program(self, c_x: Sequence[float], extra_ub: Optional[Tuple[np.ndarray, np.ndarray]] = None,
                free_x: Optional[Sequence[bool]] = None) -> LinearProgram:
        c = np.concatenate([np.asarray(c_x, dtype=float).ravel(), np.zeros(self.n_aux)])
        a_ub, b_ub = self.a_ub, self.b_ub
        if extra_ub is not None:
            rows = np.atleast_2d(np.asarray(extra_ub[0], dtype=float))
            rows = np.hstack([rows, np.zeros((rows.shape[0], self.n_aux))])
            a_ub = np.vstack([a_ub, rows])
            b_ub = np.concatenate([b_ub, np.asarray(extra_ub[1], dtype=float).ravel()])
        free = np.zeros(self.n_x + self.n_aux, dtype=bool)
        if free_x is not None:
            free[: self.n_x] = np.asarray(free_x, dtype=bool)
        return LinearProgram(c, a_ub, b_ub, self.a_eq, self.b_eq, free)

    def pad(self, image: np.ndarray) -> np.ndarray:
        """Extend a matrix acting on x with zero columns for aux."""
        image = np.atleast_2d(image)
        return np.hstack([image, np.zeros((image.shape[0], self.n_aux))])


def _as_image(image: np.ndarray, d: int) -> np.ndarray:
    image = np.asarray(image, dtype=float)
    if image.ndim == 1:
        image = image[:, None]
    if image.shape[0] != d:
        raise DimensionMismatchError(f"image has {image.shape[0]} rows, technology has {d} coordinates")
    return image


def solve_region(tech: "Technology", lp: LinearProgram) -> Optional[LpResult]:
    """Solve an LP over a technology region; None when infeasible."""
    res = solve_lp(lp)
    if res.status == LpStatus.INFEASIBLE:
        return None
    if res.status == LpStatus.UNBOUNDED:
        raise ConfigurationError(f"{type(tech).__name__} is not bounded above on the dominating set (T2)")
    if not res.optimal:
        raise SolverFailure(f"LP over {type(tech).__name__} failed ({res.status.value})")
    return res


# ---------------- TECHNOLOGIES ---------------- #

class Technology:
    """Base class; subclasses are immutable after construction."""

    is_convex: bool = True
    dim: int = 0

    def _check(self, z: Netput) -> np.ndarray:
        arr = as_netput(z)
        if arr.size != self.dim:
            raise DimensionMismatchError(f"netput has {arr.size} coordinates, technology has {self.dim}")
        return arr

    def contains(self, z: Netput) -> bool:
        raise NotImplementedError

    def contains_batch(self, u: np.ndarray) -> np.ndarray:
        """Membership of every row of u (vectorized where the representation allows)."""
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.array([self.contains(row) for row in u], dtype=bool)

    def expansion_rows(self, z: np.ndarray, image: np.ndarray, offset: Optional[np.ndarray] = None) -> Lifted:
        raise UnsupportedRegimeError(f"{type(self).__name__} has no single LP description")

    def halfspaces(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        raise UnsupportedRegimeError(f"{type(self).__name__} has no halfspace description")

    def dominating_points(self, z: np.ndarray) -> np.ndarray:
        raise UnsupportedRegimeError(f"{type(self).__name__} is not a point-based technology")


class VrsHull(Technology):
    """Convex hull of the observations with free disposal (variable returns to scale)."""

    def __init__(self, points: Sequence[Netput]):
        pts = np.atleast_2d(np.asarray([as_netput(p) for p in points], dtype=float)) if len(points) else np.zeros((0, 0))
        if pts.shape[0] == 0:
            raise DomainError("VrsHull needs at least one point")
        self.points = pts
        self.dim = pts.shape[1]
        self.is_convex = True
        self._hulls: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}
        self._lock = threading.Lock()

    def __repr__(self) -> str:
        return f"VrsHull({self.points.shape[0]} points, d={self.dim})"

    def contains(self, z: Netput) -> bool:
        z = self._check(z)
        if np.any(np.all(self.points >= z - MEMBERSHIP_TOL, axis=1)):
            return True
        lifted = self.expansion_rows(z, np.zeros((self.dim, 0)), -np.full(self.dim, MEMBERSHIP_TOL))
        return solve_lp(lifted.program(np.zeros(0))).optimal

    def contains_batch(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        if u.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        a, b = self.halfspaces(u.min(axis=0))
        out = np.empty(u.shape[0], dtype=bool)
        for start in range(0, u.shape[0], _BATCH_CHUNK):
            block = u[start:start + _BATCH_CHUNK]
            out[start:start + _BATCH_CHUNK] = np.all(block @ a.T <= b + MEMBERSHIP_TOL * (1.0 + np.abs(b)), axis=1)
        return out

    def expansion_rows(self, z: np.ndarray, image: np.ndarray, offset: Optional[np.ndarray] = None) -> Lifted:
        image = _as_image(image, self.dim)
        offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        n_x, n_pts = image.shape[1], self.points.shape[0]
        a_ub = np.hstack([image, -self.points.T])
        b_ub = -(z + offset)
        a_eq = np.hstack([np.zeros((1, n_x)), np.ones((1, n_pts))])
        return Lifted(n_x, n_pts, a_ub, b_ub, a_eq, np.ones(1))

    def halfspaces(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Facets of conv{a - M 1_S : a observed, S a coordinate subset}.

        For M at least max_k (max_a a_k - z_k) the polytope agrees with T on
        {u >= z}; hulls are cached per power-of-two M.
        """
        z = self._check(z)
        reach = float(np.max(self.points.max(axis=0) - z))
        big = 2.0 ** math.ceil(math.log2(max(reach, 0.0) + 1.0) + 1)
        with self._lock:
            cached = self._hulls.get(big)
        if cached is not None:
            return cached

        if self.dim == 1:
            a, b = np.ones((1, 1)), np.array([float(self.points.max())])
        else:
            masks = np.array(list(np.ndindex(*([2] * self.dim))), dtype=float)
            cloud = (self.points[:, None, :] - big * masks[None, :, :]).reshape(-1, self.dim)
            try:
                hull = ConvexHull(cloud)
            except QhullError as e:
                raise SolverFailure(f"Facet computation failed: {e}")
            eq = hull.equations
            rows = np.unique(np.round(eq, 12), axis=0)
            a, b = rows[:, :-1], -rows[:, -1]
        logger.debug("VrsHull facets: %d halfspaces at M=%g", a.shape[0], big)
        with self._lock:
            self._hulls[big] = (a, b)
        return a, b

    def dominating_points(self, z: np.ndarray) -> np.ndarray:
        return self.points[np.all(self.points >= z - MEMBERSHIP_TOL, axis=1)]


class Fdh(Technology):
    """Free disposal hull: the union of the orthants below each observation."""

    def __init__(self, points: Sequence[Netput]):
        pts = np.atleast_2d(np.asarray([as_netput(p) for p in points], dtype=float)) if len(points) else np.zeros((0, 0))
        if pts.shape[0] == 0:
            raise DomainError("Fdh needs at least one point")
        self.points = pts
        self.dim = pts.shape[1]
        self.is_convex = False

    def __repr__(self) -> str:
        return f"Fdh({self.points.shape[0]} points, d={self.dim})"

    def dominating_points(self, z: np.ndarray) -> np.ndarray:
        z = self._check(z)
        return self.points[np.all(self.points >= z - MEMBERSHIP_TOL, axis=1)]

    def contains(self, z: Netput) -> bool:
        return self.dominating_points(z).shape[0] > 0

    def contains_batch(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        out = np.zeros(u.shape[0], dtype=bool)
        for a in self.points:
            out |= np.all(u <= a + MEMBERSHIP_TOL, axis=1)
        return out


class HRep(Technology):
    """Intersection of halfspaces normal_i . u <= rhs_i; boundedness on T_z is checked per query."""

    def __init__(self, normals: Sequence[Sequence[float]], rhs: Sequence[float]):
        a = np.atleast_2d(np.asarray(normals, dtype=float))
        b = np.asarray(rhs, dtype=float).ravel()
        if a.shape[0] == 0 or a.shape[0] != b.size:
            raise DimensionMismatchError(f"{a.shape[0]} normals but {b.size} right-hand sides")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise DomainError("HRep constraints must be finite")
        self.normals = a
        self.rhs = b
        self.dim = a.shape[1]
        self.is_convex = True

    def __repr__(self) -> str:
        return f"HRep({self.normals.shape[0]} constraints, d={self.dim})"

    def contains(self, z: Netput) -> bool:
        z = self._check(z)
        return bool(np.all(self.normals @ z <= self.rhs + MEMBERSHIP_TOL * (1.0 + np.abs(self.rhs))))

    def contains_batch(self, u: np.ndarray) -> np.ndarray:
        u = np.atleast_2d(np.asarray(u, dtype=float))
        return np.all(u @ self.normals.T <= self.rhs + MEMBERSHIP_TOL * (1.0 + np.abs(self.rhs)), axis=1)

    def expansion_rows(self, z: np.ndarray, image: np.ndarray, offset: Optional[np.ndarray] = None) -> Lifted:
        image = _as_image(image, self.dim)
        offset = np.zeros(self.dim) if offset is None else np.asarray(offset, dtype=float)
        n_x = image.shape[1]
        return Lifted(n_x, 0, self.normals @ image, self.rhs - self.normals @ (z + offset),
                      np.zeros((0, n_x)), np.zeros(0))

    def check_bounded(self, z: np.ndarray) -> None:
        """Bounding LPs: every coordinate must stay bounded above on T_z."""
        lifted = self.expansion_rows(z, np.eye(self.dim))
        for k in range(self.dim):
            c = np.zeros(self.dim)
            c[k] = 1.0
            res = solve_lp(lifted.program(c))
            if res.status == LpStatus.UNBOUNDED:
                raise ConfigurationError(f"HRep technology is unbounded above in coordinate {k + 1} on T_z")

    def halfspaces(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        self.check_bounded(self._check(z))
        return self.normals, self.rhs


# ---------------- QUERIES ---------------- #

def contains(tech: Technology, z: Netput) -> bool:
    return tech.contains(z)


def require_member(tech: Technology, z: Netput) -> np.ndarray:
    arr = tech._check(z)
    if not tech.contains(arr):
        raise InfeasibleError(f"netput {arr.tolist()} is not in the technology")
    return arr


def _check_prices(w: Sequence[float], d: int) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if w.size != d:
        raise DimensionMismatchError(f"prices have {w.size} components, expected {d}")
    if not np.all(np.isfinite(w)) or np.any(w < 0):
        raise DomainError("prices must be finite and nonnegative")
    return w


def best_profit(tech: Technology, z: np.ndarray, w: np.ndarray,
                free_coords: Sequence[int]) -> Tuple[float, np.ndarray]:
    """max w.u over u in T_z with u_k = z_k off free_coords; returns (value, maximizer)."""
    free_coords = list(free_coords)
    if isinstance(tech, Fdh):
        pts = tech.dominating_points(z)
        u = np.tile(z, (pts.shape[0], 1))
        u[:, free_coords] = pts[:, free_coords]
        values = u @ w
        i = int(np.argmax(values))
        return float(values[i]), u[i]

    image = np.eye(tech.dim)[:, free_coords]
    lifted = tech.expansion_rows(z, image)
    res = solve_region(tech, lifted.program(w[free_coords]))
    if res is None:
        raise InfeasibleError("dominating set is empty")
    u = z + image @ res.x[: len(free_coords)]
    return float(w @ u), u


def dominating_profit(tech: Technology, z: Netput, w: Sequence[float]) -> float:
    """Pi_z(w) = sup {w.u : u in T, u >= z}."""
    z = require_member(tech, z)
    w = _check_prices(w, tech.dim)
    if not np.any(w):
        return 0.0
    return best_profit(tech, z, w, range(tech.dim))[0]


def restricted_profit(tech: Technology, z: Netput, g: Union[Direction, Sequence[float]],
                      w: Sequence[float]) -> float:
    """Pi_{z,g}(w): like dominating_profit with u_k pinned at z_k off the support of g."""
    z = require_member(tech, z)
    g = as_direction(g)
    if g.dim != tech.dim:
        raise DimensionMismatchError(f"direction has {g.dim} coordinates, technology has {tech.dim}")
    if g.is_zero:
        raise DomainError("restricted_profit needs a nonzero direction")
    w = _check_prices(w, tech.dim)
    if not np.any(w):
        return 0.0
    return best_profit(tech, z, w, g.support)[0]


def improvement_potential(tech: Technology, z: Netput, k: int) -> float:
    """Largest feasible increase of coordinate k over T_z."""
    z = require_member(tech, z)
    if not 0 <= k < tech.dim:
        raise DimensionMismatchError(f"coordinate {k} outside 0..{tech.dim - 1}")
    w = np.zeros(tech.dim)
    w[k] = 1.0
    value, _ = best_profit(tech, z, w, range(tech.dim))
    return max(value - float(z[k]), 0.0)


def classify(tech: Technology, z: Netput, index_set: Iterable[int]) -> EfficiencyStatus:
    """
    Efficient: no coordinate of K can improve (z in E_K(T)).
    WeaklyEfficient: some coordinate of K cannot (z in W_K(T)).
    """
    K = tuple(sorted(set(int(k) for k in index_set)))
    if not K:
        raise DomainError("classify needs a nonempty index set")
    arr = tech._check(z)
    if not tech.contains(arr):
        return EfficiencyStatus(StatusKind.INFEASIBLE, K)
    blocked = tuple(k for k in K if improvement_potential(tech, arr, k) <= IMPROVEMENT_TOL)
    if len(blocked) == len(K):
        return EfficiencyStatus(StatusKind.EFFICIENT, K, blocked)
    if blocked:
        return EfficiencyStatus(StatusKind.WEAKLY_EFFICIENT, K, blocked)
    return EfficiencyStatus(StatusKind.INEFFICIENT, K)


def halfspaces(tech: Technology, z: Netput) -> Tuple[np.ndarray, np.ndarray]:
    """(A, b) with {u >= z : A u <= b} = T_z."""
    return tech.halfspaces(tech._check(z))


def dominating_vertices(tech: Technology, z: Netput) -> List[NetputVector]:
    """Vertices of T_z (VrsHull, HRep; d <= 3) or the dominating data points (Fdh)."""
    z = require_member(tech, z)
    if isinstance(tech, Fdh):
        return [NetputVector(a) for a in tech.dominating_points(z)]
    a, b = tech.halfspaces(z)
    rows = np.vstack([a, -np.eye(tech.dim)])
    rhs = np.concatenate([b, -z])
    return [NetputVector(v) for v in vertices_from_arrays(rows, rhs)]


def scaled(tech: Technology, factors: Sequence[float]) -> Technology:
    """The technology with coordinate k multiplied by factors[k] > 0."""
    f = np.asarray(factors, dtype=float).ravel()
    if f.size != tech.dim or np.any(f <= 0):
        raise DomainError("scaling factors must be positive, one per coordinate")
    if isinstance(tech, VrsHull):
        return VrsHull(tech.points * f)
    if isinstance(tech, Fdh):
        return Fdh(tech.points * f)
    return HRep(tech.normals / f, tech.rhs)
