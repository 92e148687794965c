"""
Generalized means used by the distance functions.

phi_p generalized sums, the directional p-mean utilities W_(p),g, Cobb-Douglas
utilities and the closed-form indirect utilities that normalize the dual
price programs.

Conventions:
    - p < 0 absorbs zeros: any zero component gives a zero sum.
    - |p| < MULTIPLICATIVE_EPS is the multiplicative (geometric) case.
    - +inf / -inf orders are max / min.
"""

import math
from dataclasses import dataclass
from functools import total_ordering
from fractions import Fraction
from typing import TYPE_CHECKING, Sequence, Tuple, Union

import numpy as np

from errors import DimensionMismatchError, DomainError, UnsupportedRegimeError

if TYPE_CHECKING:
    from technology import Direction

MULTIPLICATIVE_EPS = 1e-6
CD_EXPONENT_TOL = 1e-12

ArrayLike = Union[Sequence[float], np.ndarray]


# ---------------- MEAN ORDER ---------------- #

_RANK = {"neg_inf": 0, "finite": 1, "pos_inf": 2}


@total_ordering
@dataclass(frozen=True)
class PParameter:
    """Extended-real mean order: NegInfinity < Finite(p) < PosInfinity."""

    kind: str
    value: float = 0.0

    def __post_init__(self):
        if self.kind not in _RANK:
            raise DomainError(f"Unknown PParameter kind: {self.kind}")
        if self.kind == "finite" and not math.isfinite(self.value):
            raise DomainError(f"Finite PParameter needs a finite value, got {self.value}")

    @classmethod
    def neg_inf(cls) -> "PParameter":
        return cls("neg_inf", -math.inf)

    @classmethod
    def pos_inf(cls) -> "PParameter":
        return cls("pos_inf", math.inf)

    @classmethod
    def finite(cls, p: float) -> "PParameter":
        return cls("finite", float(p))

    @classmethod
    def of(cls, p: Union["PParameter", float, str]) -> "PParameter":
        if isinstance(p, PParameter):
            return p
        if isinstance(p, str):
            return cls.parse(p)
        if math.isinf(p):
            return cls.pos_inf() if p > 0 else cls.neg_inf()
        return cls.finite(p)

    @classmethod
    def parse(cls, token: str) -> "PParameter":
        """Parse "-inf", "inf", "+inf", real literals and simple fractions like "-1/2"."""
        text = token.strip().lower()
        if text in ("-inf", "-infinity"):
            return cls.neg_inf()
        if text in ("inf", "+inf", "infinity", "+infinity"):
            return cls.pos_inf()
        try:
            value = float(Fraction(text)) if "/" in text else float(text)
        except (ValueError, ZeroDivisionError):
            raise DomainError(f"Invalid p token: {token!r}")
        if not math.isfinite(value):
            raise DomainError(f"Invalid p token: {token!r}")
        return cls.finite(value)

    @property
    def is_finite(self) -> bool:
        return self.kind == "finite"

    @property
    def is_multiplicative(self) -> bool:
        return self.is_finite and abs(self.value) < MULTIPLICATIVE_EPS

    def as_float(self) -> float:
        return self.value

    def dual_order(self) -> float:
        """q with 1/p + 1/q = 1; 1 at both infinities, +inf at p = 1, 0 in the multiplicative case."""
        if not self.is_finite:
            return 1.0
        if self.is_multiplicative:
            return 0.0
        if self.value == 1.0:
            return math.inf
        return self.value / (self.value - 1.0)

    def _key(self) -> Tuple[int, float]:
        return (_RANK[self.kind], self.value if self.is_finite else 0.0)

    def __lt__(self, other: "PParameter") -> bool:
        if not isinstance(other, PParameter):
            return NotImplemented
        return self._key() < other._key()

    def __str__(self) -> str:
        if self.kind == "neg_inf":
            return "-inf"
        if self.kind == "pos_inf":
            return "inf"
        return format(self.value, ".12g")


# ---------------- GENERALIZED SUMS ---------------- #

def _as_nonnegative(delta: ArrayLike) -> np.ndarray:
    x = np.asarray(delta, dtype=float).ravel()
    if x.size == 0:
        raise DimensionMismatchError("Empty vector passed to a generalized mean")
    if np.any(np.isnan(x)):
        raise DomainError("NaN component in generalized mean")
    if np.any(x < 0):
        raise DomainError(f"Negative component in generalized mean: {x.min()}")
    return x


def _scaled_power_sum(p: float, x: np.ndarray) -> Tuple[float, float]:
    """Return (m, s) with sum(x**p) == m**p * s, m the max (p > 0) or min (p < 0) of x."""
    m = float(x.max()) if p > 0 else float(x.min())
    s = float(np.sum(np.power(x / m, p)))
    return m, s


def phi_sum(p: PParameter, delta: ArrayLike) -> float:
    """
    phi_p generalized sum of a nonnegative vector.

    p > 0: (sum delta_k^p)^(1/p); p < 0: same when min delta > 0, else 0;
    +inf: max; -inf: min. The multiplicative case goes through geo_mean.
    """
    x = _as_nonnegative(delta)
    if p.kind == "pos_inf":
        return float(x.max())
    if p.kind == "neg_inf":
        return float(x.min())
    if p.is_multiplicative:
        raise DomainError("phi_sum is undefined for p = 0; use geo_mean")
    if p.value > 0:
        if x.max() == 0:
            return 0.0
    elif x.min() == 0:
        return 0.0
    m, s = _scaled_power_sum(p.value, x)
    return m * s ** (1.0 / p.value)


def geo_mean(delta: ArrayLike) -> float:
    x = _as_nonnegative(delta)
    if x.min() == 0:
        return 0.0
    return float(np.exp(np.mean(np.log(x))))


def power_mean(p: PParameter, delta: ArrayLike) -> float:
    """Normalized mean (1/n sum delta_k^p)^(1/p) with the same conventions as phi_sum."""
    x = _as_nonnegative(delta)
    if not p.is_finite:
        return phi_sum(p, x)
    if p.is_multiplicative:
        return geo_mean(x)
    return phi_sum(p, x) / x.size ** (1.0 / p.value)


def power_mean_gradient(p: PParameter, delta: ArrayLike) -> np.ndarray:
    """
    Gradient of power_mean at a strictly positive point.

    Infinite orders return the subgradient carried by the first arg-extremum.
    """
    x = _as_nonnegative(delta)
    n = x.size
    grad = np.zeros(n)
    if p.kind == "pos_inf":
        grad[int(np.argmax(x))] = 1.0
        return grad
    if p.kind == "neg_inf":
        grad[int(np.argmin(x))] = 1.0
        return grad
    value = power_mean(p, x)
    if value == 0:
        return grad
    if p.is_multiplicative:
        with np.errstate(divide="ignore"):
            return value / (n * x)
    if p.value == 1.0:
        return np.full(n, 1.0 / n)
    with np.errstate(divide="ignore"):
        return np.power(x / value, p.value - 1.0) / n


# ---------------- UTILITY FAMILIES ---------------- #

class UtilitySpec:
    """Base class of the utility families accepted by p_mean_utility."""

    def dimension(self) -> int:
        raise NotImplementedError


def _positive_vector(values: ArrayLike, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0 or np.any(~np.isfinite(arr)) or np.any(arr <= 0):
        raise DomainError(f"{name} must be a nonempty strictly positive vector")
    return arr


@dataclass(frozen=True, eq=False)
class PMeanPlain(UtilitySpec):
    """W(delta) = phi_p-sum of a_k * delta_k."""

    p: PParameter
    coefficients: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coefficients", _positive_vector(self.coefficients, "coefficients"))

    def dimension(self) -> int:
        return self.coefficients.size


@dataclass(frozen=True, eq=False)
class PMeanDirectional(UtilitySpec):
    """W_(p),g on the support of g; `normalized` applies the 1/d_g^(1/p) factor."""

    p: PParameter
    direction: "Direction"
    normalized: bool = True

    def __post_init__(self):
        if self.direction.d_g == 0:
            raise DomainError("PMeanDirectional needs a direction with nonempty support")

    def dimension(self) -> int:
        return self.direction.d_g


@dataclass(frozen=True, eq=False)
class CobbDouglas(UtilitySpec):
    """W(v) = prod (a_k v_k)^t_k with exponents summing to one."""

    exponents: np.ndarray
    coefficients: np.ndarray

    def __post_init__(self):
        t = _positive_vector(self.exponents, "exponents")
        a = _positive_vector(self.coefficients, "coefficients")
        if t.size != a.size:
            raise DimensionMismatchError(f"exponents ({t.size}) and coefficients ({a.size}) differ in length")
        if abs(t.sum() - 1.0) > CD_EXPONENT_TOL:
            raise DomainError(f"Cobb-Douglas exponents must sum to 1, got {t.sum()!r}")
        object.__setattr__(self, "exponents", t)
        object.__setattr__(self, "coefficients", a)

    def dimension(self) -> int:
        return self.exponents.size


def _restrict(spec: PMeanDirectional, delta: ArrayLike) -> np.ndarray:
    x = np.asarray(delta, dtype=float).ravel()
    direction = spec.direction
    if x.size == direction.dim:
        return x[list(direction.support)]
    if x.size == direction.d_g:
        return x
    raise DimensionMismatchError(
        f"delta has {x.size} components, expected {direction.dim} or {direction.d_g}"
    )


def _check_dim(spec: UtilitySpec, x: np.ndarray) -> None:
    if x.size != spec.dimension():
        raise DimensionMismatchError(f"delta has {x.size} components, utility expects {spec.dimension()}")


def p_mean_utility(spec: UtilitySpec, delta: ArrayLike) -> float:
    """Evaluate W(delta) for any of the three utility families."""
    if isinstance(spec, PMeanDirectional):
        x = _restrict(spec, delta)
        scaled = _as_nonnegative(x) / spec.direction.support_values
        p = spec.p
        if spec.normalized:
            return power_mean(p, scaled)
        if p.is_multiplicative:
            return float(np.prod(scaled))
        return phi_sum(p, scaled)

    x = _as_nonnegative(delta)
    _check_dim(spec, x)
    if isinstance(spec, PMeanPlain):
        if spec.p.is_multiplicative:
            raise DomainError("PMeanPlain needs p != 0; use CobbDouglas for the multiplicative case")
        return phi_sum(spec.p, spec.coefficients * x)
    if isinstance(spec, CobbDouglas):
        y = spec.coefficients * x
        if y.min() == 0:
            return 0.0
        return float(np.exp(np.dot(spec.exponents, np.log(y))))
    raise DomainError(f"Unknown utility spec: {type(spec).__name__}")


def utility_gradient(spec: UtilitySpec, delta: ArrayLike) -> np.ndarray:
    """Gradient of W at a strictly positive point (subgradient at the infinite orders)."""
    if isinstance(spec, PMeanDirectional):
        g = spec.direction.support_values
        x = _restrict(spec, delta) / g
        p = spec.p
        if spec.normalized or not p.is_finite:
            return power_mean_gradient(p, x) / g
        if p.is_multiplicative:
            return float(np.prod(x)) / (x * g)
        return x.size ** (1.0 / p.value) * power_mean_gradient(p, x) / g

    x = _as_nonnegative(delta)
    _check_dim(spec, x)
    if isinstance(spec, PMeanPlain):
        a = spec.coefficients
        y = a * x
        if spec.p.is_finite:
            return y.size ** (1.0 / spec.p.value) * power_mean_gradient(spec.p, y) * a
        return power_mean_gradient(spec.p, y) * a
    if isinstance(spec, CobbDouglas):
        return p_mean_utility(spec, x) * spec.exponents / x
    raise DomainError(f"Unknown utility spec: {type(spec).__name__}")


def is_quasi_concave(spec: UtilitySpec) -> bool:
    if isinstance(spec, CobbDouglas):
        return True
    p = spec.p
    return p.kind == "neg_inf" or (p.is_finite and p.value < 1.0)


def to_plain(spec: UtilitySpec) -> UtilitySpec:
    """
    Rewrite a directional utility as an equivalent plain one on the support of g.

    Homogeneity of degree one lets the normalization factor move into the
    coefficients; the normalized multiplicative case becomes Cobb-Douglas.
    """
    if not isinstance(spec, PMeanDirectional):
        return spec
    g = spec.direction.support_values
    d_g = g.size
    p = spec.p
    if p.is_multiplicative:
        if not spec.normalized:
            raise DomainError("Unnormalized multiplicative utility is not homogeneous of degree one")
        return CobbDouglas(np.full(d_g, 1.0 / d_g), 1.0 / g)
    if p.is_finite and spec.normalized:
        return PMeanPlain(p, d_g ** (-1.0 / p.value) / g)
    return PMeanPlain(p, 1.0 / g)


# ---------------- INDIRECT UTILITY ---------------- #

def _check_prices(w: ArrayLike, spec: UtilitySpec) -> np.ndarray:
    w = np.asarray(w, dtype=float).ravel()
    if isinstance(spec, PMeanDirectional) and w.size == spec.direction.dim:
        w = w[list(spec.direction.support)]
    if np.any(np.isnan(w)) or np.any(w < 0):
        raise DomainError("Prices must be nonnegative")
    return w


def _require_dual_regime(spec: UtilitySpec) -> UtilitySpec:
    plain = to_plain(spec)
    if isinstance(plain, PMeanPlain):
        p = plain.p
        if p.kind == "pos_inf" or (p.is_finite and p.value >= 1.0):
            raise UnsupportedRegimeError(
                f"Indirect utility needs p < 1 (got p={p}); the norm dual applies instead"
            )
        if p.is_multiplicative:
            raise DomainError("PMeanPlain needs p != 0")
    return plain


def indirect_utility(spec: UtilitySpec, w: ArrayLike) -> float:
    """
    W_star(w) = sup {W(v) : w.v = 1, v >= 0}, in closed form.

    p < 1, p != 0: [phi_q-sum of w_k / a_k]^-1 with q = p / (p - 1).
    Cobb-Douglas: prod (a_k t_k / w_k)^t_k. Returns +inf when the sum vanishes.
    """
    w = _check_prices(w, spec)
    plain = _require_dual_regime(spec)
    _check_dim(plain, w)

    if isinstance(plain, CobbDouglas):
        if w.min() == 0:
            return math.inf
        a, t = plain.coefficients, plain.exponents
        return float(np.exp(np.dot(t, np.log(a * t / w))))

    x = w / plain.coefficients
    p = plain.p
    if p.kind == "neg_inf":
        total = float(x.sum())
        return math.inf if total == 0 else 1.0 / total
    q = PParameter.finite(p.dual_order())
    denominator = phi_sum(q, x)
    return math.inf if denominator == 0 else 1.0 / denominator


def budget_line_argmax(spec: UtilitySpec, b: ArrayLike, c: float) -> Tuple[np.ndarray, float]:
    """Closed-form maximizer of W on the budget line {v >= 0 : b.v = c} and its value."""
    plain = _require_dual_regime(spec)
    b = np.asarray(b, dtype=float).ravel()
    if isinstance(spec, PMeanDirectional) and b.size == spec.direction.dim:
        b = b[list(spec.direction.support)]
    if b.size == 0 or np.any(b <= 0) or not c > 0:
        raise DomainError("budget_line_argmax needs strictly positive prices and budget")
    _check_dim(plain, b)

    if isinstance(plain, CobbDouglas):
        v = c * plain.exponents / b
        return v, p_mean_utility(plain, v)

    a = plain.coefficients
    p = plain.p
    if p.kind == "neg_inf":
        total = float(np.sum(b / a))
        return c / (a * total), c / total

    q = p.dual_order()
    s = float(np.sum(np.power(b / a, q)))
    v = c / s * np.power(np.power(a, -p.value) * b, 1.0 / (p.value - 1.0))
    value = c * s ** (-1.0 / q)
    return v, value
