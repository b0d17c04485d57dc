"""Time boundaries b(t) for expanding-support diffusions.

Four closed-form families are supported; each knows its value, derivative,
the ratio db/b that drives every coefficient in the package, and which
solvability regime it falls into.  The families form a closed set so the
regime decision can be made analytically instead of by probing a black-box
callable.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass


class BoundaryError(ValueError):
    """Argument outside a boundary's domain, or an invalid parameterization."""


class Regime(enum.Enum):
    """Solvability regime of the expanding-support SDE for a given boundary."""

    STRONG_UNIQUE = "strong-unique"
    WEAK_ONLY = "weak-only"
    EXPONENTIAL_CONE = "exponential-cone"
    INVALID = "invalid"


@dataclass(frozen=True)
class BoundaryClass:
    regime: Regime
    reasons: tuple[str, ...]


class Boundary:
    """Common operations shared by all boundary families."""

    def value(self, t: float) -> float:
        raise NotImplementedError

    def derivative(self, t: float) -> float:
        raise NotImplementedError

    def log_ratio(self, t: float) -> float:
        """db(t)/b(t), in the closed form of the family (never by division
        of the two evaluators, which loses accuracy where both are small)."""
        raise NotImplementedError

    def inverse(self, y: float) -> float:
        """The time t with b(t) = y."""
        raise NotImplementedError

    def classify(self, horizon: float = 1.0) -> BoundaryClass:
        if horizon <= 0:
            raise BoundaryError("horizon must be positive")
        return self._classify(horizon)

    def _classify(self, horizon: float) -> BoundaryClass:
        raise NotImplementedError

    def time_change_gamma(self, t: float) -> float:
        """2 ln b(t), the quadratic-variation clock of the driving martingale."""
        return 2.0 * self.time_change_tau(t)

    def time_change_tau(self, t: float) -> float:
        """ln b(t), the deterministic clock mapping onto the ergodic diffusion."""
        b = self.value(t)
        if b <= 0.0:
            raise BoundaryError(f"time change undefined where b(t) <= 0 (t={t!r})")
        return math.log(b)

    def spec_token(self) -> str:
        raise NotImplementedError

    def _require_nonneg_time(self, t: float) -> None:
        if t < 0:
            raise BoundaryError(f"boundary not defined for negative time (t={t!r})")

    def _require_pos_time(self, t: float) -> None:
        if t <= 0:
            raise BoundaryError(f"operation requires t > 0 (t={t!r})")


def _fmt(x: float) -> str:
    return format(x, ".17g")


@dataclass(frozen=True)
class PowerBoundary(Boundary):
    """b(t) = k * t**alpha with k > 0, alpha > 0."""

    k: float
    alpha: float

    def __post_init__(self):
        if self.k <= 0 or self.alpha <= 0:
            raise BoundaryError("power boundary requires k > 0 and alpha > 0")

    def value(self, t):
        self._require_nonneg_time(t)
        return self.k * t ** self.alpha

    def derivative(self, t):
        if t <= 0:
            if self.alpha < 1:
                raise BoundaryError(
                    f"derivative of t**{self.alpha} is singular at t <= 0")
            if t < 0:
                raise BoundaryError("derivative requires t >= 0")
            return self.k if self.alpha == 1 else 0.0
        return self.k * self.alpha * t ** (self.alpha - 1.0)

    def log_ratio(self, t):
        self._require_pos_time(t)
        return self.alpha / t

    def inverse(self, y):
        if y < 0:
            raise BoundaryError("boundary values are nonnegative")
        return (y / self.k) ** (1.0 / self.alpha)

    def _classify(self, horizon):
        reasons = [f"b(0) = 0 and b strictly increasing on (0, {_fmt(horizon)}]"]
        if self.alpha >= 1.0:
            reasons.append(
                f"db = k*alpha*t**(alpha-1) stays bounded on (0, T] for alpha = {self.alpha}")
            return BoundaryClass(Regime.STRONG_UNIQUE, tuple(reasons))
        if self.alpha >= 0.5:
            reasons.append(
                f"db is unbounded near 0 for alpha = {self.alpha} < 1 (no strong uniqueness)")
            reasons.append(
                "b*db = k**2*alpha*t**(2*alpha-1) stays bounded on (0, T] for alpha >= 1/2")
            return BoundaryClass(Regime.WEAK_ONLY, tuple(reasons))
        reasons.append(
            f"b*db is unbounded near 0 for alpha = {self.alpha} < 1/2")
        return BoundaryClass(Regime.INVALID, tuple(reasons))

    def spec_token(self):
        return f"power:k={_fmt(self.k)},alpha={_fmt(self.alpha)}"


@dataclass(frozen=True)
class ExponentialBoundary(Boundary):
    """b(t) = b0 * exp(k*t) with b0 > 0, k > 0; b(0) = b0, not 0."""

    b0: float
    k: float

    def __post_init__(self):
        if self.b0 <= 0 or self.k <= 0:
            raise BoundaryError("exponential boundary requires b0 > 0 and k > 0")

    def value(self, t):
        self._require_nonneg_time(t)
        return self.b0 * math.exp(self.k * t)

    def derivative(self, t):
        if t < 0:
            raise BoundaryError("derivative requires t >= 0")
        return self.k * self.b0 * math.exp(self.k * t)

    def log_ratio(self, t):
        self._require_pos_time(t)
        return self.k

    def inverse(self, y):
        if y <= 0:
            raise BoundaryError("exponential boundary values are strictly positive")
        return math.log(y / self.b0) / self.k

    def _classify(self, horizon):
        return BoundaryClass(
            Regime.EXPONENTIAL_CONE,
            (f"b(0) = {_fmt(self.b0)} > 0: the support starts as an interval, "
             "so the process must start from a uniform draw on it",
             "db/b is the constant k: the rescaled process is time homogeneous"),
        )

    def spec_token(self):
        return f"exp:b0={_fmt(self.b0)},k={_fmt(self.k)}"


@dataclass(frozen=True)
class SaturatingExpBoundary(Boundary):
    """b(t) = B * (1 - exp(-beta*t)) with B > 0, beta > 0; concave, b -> B."""

    B: float
    beta: float

    def __post_init__(self):
        if self.B <= 0 or self.beta <= 0:
            raise BoundaryError("saturating boundary requires B > 0 and beta > 0")

    def value(self, t):
        self._require_nonneg_time(t)
        return self.B * -math.expm1(-self.beta * t)

    def derivative(self, t):
        if t < 0:
            raise BoundaryError("derivative requires t >= 0")
        return self.B * self.beta * math.exp(-self.beta * t)

    def log_ratio(self, t):
        self._require_pos_time(t)
        return self.beta / math.expm1(self.beta * t)

    def inverse(self, y):
        if not 0 <= y < self.B:
            raise BoundaryError(f"value {y!r} outside the range [0, B) of this boundary")
        return -math.log1p(-y / self.B) / self.beta

    def _classify(self, horizon):
        return BoundaryClass(
            Regime.STRONG_UNIQUE,
            ("b(0) = 0 and b strictly increasing",
             f"db = B*beta*exp(-beta*t) <= {_fmt(self.B * self.beta)} on [0, T]"),
        )

    def spec_token(self):
        return f"satexp:B={_fmt(self.B)},beta={_fmt(self.beta)}"


@dataclass(frozen=True)
class RationalBoundary(Boundary):
    """b(t) = B * t / (t + beta) with B > 0, beta > 0; concave, b -> B."""

    B: float
    beta: float

    def __post_init__(self):
        if self.B <= 0 or self.beta <= 0:
            raise BoundaryError("rational boundary requires B > 0 and beta > 0")

    def value(self, t):
        self._require_nonneg_time(t)
        return self.B * t / (t + self.beta)

    def derivative(self, t):
        if t < 0:
            raise BoundaryError("derivative requires t >= 0")
        return self.B * self.beta / ((t + self.beta) * (t + self.beta))

    def log_ratio(self, t):
        self._require_pos_time(t)
        return self.beta / (t * (t + self.beta))

    def inverse(self, y):
        if not 0 <= y < self.B:
            raise BoundaryError(f"value {y!r} outside the range [0, B) of this boundary")
        return y * self.beta / (self.B - y)

    def _classify(self, horizon):
        return BoundaryClass(
            Regime.STRONG_UNIQUE,
            ("b(0) = 0 and b strictly increasing",
             f"db = B*beta/(t+beta)**2 <= {_fmt(self.B / self.beta)} on [0, T]"),
        )

    def spec_token(self):
        return f"rational:B={_fmt(self.B)},beta={_fmt(self.beta)}"


_FAMILIES = {
    "power": (PowerBoundary, ("k", "alpha")),
    "exp": (ExponentialBoundary, ("b0", "k")),
    "satexp": (SaturatingExpBoundary, ("B", "beta")),
    "rational": (RationalBoundary, ("B", "beta")),
}


def parse_boundary(token: str) -> Boundary:
    """Build a boundary from a ``family:param=value,...`` string.

    Examples: ``power:k=1,alpha=0.5``  ``exp:b0=1,k=0.3``
    ``satexp:B=1,beta=3``  ``rational:B=2,beta=1``
    """
    name, _, rest = token.partition(":")
    name = name.strip().lower()
    if name not in _FAMILIES:
        raise BoundaryError(
            f"unknown boundary family {name!r}; expected one of {sorted(_FAMILIES)}")
    cls, fields = _FAMILIES[name]
    if not rest:
        raise BoundaryError(f"boundary {name!r} needs parameters {fields}")
    params = {}
    for part in rest.split(","):
        key, eq, val = part.partition("=")
        key = key.strip()
        if not eq or key not in fields:
            raise BoundaryError(
                f"bad boundary parameter {part!r}; {name} takes {fields}")
        try:
            params[key] = float(val)
        except ValueError:
            raise BoundaryError(f"boundary parameter {key}={val!r} is not a number")
    missing = [f for f in fields if f not in params]
    if missing:
        raise BoundaryError(f"boundary {name!r} missing parameters {missing}")
    return cls(**params)
