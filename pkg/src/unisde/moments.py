"""Exact conditional moments of the mean-reverting uniform diffusion.

The n-th conditional moment E[Z_t**n | Z_s = z] has a closed form built
from a lower-triangular coefficient matrix per order.  The matrices obey a
three-case recursion in n whose alternating sums cancel catastrophically in
floating point, so they are computed and cached as exact rationals; only
the final evaluation against powers of the support ratio r = b(s)/b(t) is
done in floats.

An independent Runge-Kutta integrator for the moment ODE chain is provided
as a cross-check oracle, along with the unconditional moments of the conic
martingale itself.
"""
from __future__ import annotations

import threading
from dataclasses import dataclass
from fractions import Fraction

from .boundary import Boundary

#: Largest order served by the closed form before rational sizes get silly;
#: use the ODE integrator beyond this.
DEFAULT_MAX_ORDER = 24


def parity(n: int) -> int:
    return n & 1


def uniform_moment(n: int) -> Fraction:
    """n-th raw moment of a uniform law on [-1, 1], exact."""
    if n < 0:
        raise ValueError("moment order must be nonnegative")
    if n & 1:
        return Fraction(0)
    return Fraction(1, n + 1)


@dataclass(frozen=True)
class AlphaMatrix:
    """Lower-triangular coefficient matrix of the order-n conditional moment."""

    order: int
    entries: tuple[tuple[Fraction, ...], ...]

    @property
    def dim(self) -> int:
        return len(self.entries)

    def entry(self, j: int, k: int) -> Fraction:
        """1-based access matching the usual triangular-index convention."""
        return self.entries[j - 1][k - 1]

    def rows(self):
        return [list(row) for row in self.entries]

    def __str__(self):
        width = max(len(str(e)) for row in self.entries for e in row)
        return "\n".join(
            "  ".join(str(e).rjust(width) for e in row) for row in self.entries)


_alpha_cache: dict[int, AlphaMatrix] = {}
_alpha_lock = threading.Lock()


def alpha_matrix(n: int) -> AlphaMatrix:
    """Coefficient matrix for order n, by recursion in n from orders 1 and 2.

    Thread-safe: concurrent first calls fill the cache idempotently.
    """
    if n < 1:
        raise ValueError("order must be >= 1")
    cached = _alpha_cache.get(n)
    if cached is not None:
        return cached
    with _alpha_lock:
        cached = _alpha_cache.get(n)
        if cached is not None:
            return cached
        for m in sorted(set(range(2 - (n & 1), n + 1, 2)) - _alpha_cache.keys()):
            _alpha_cache[m] = _compute_alpha(m)
        return _alpha_cache[n]


def _compute_alpha(n: int) -> AlphaMatrix:
    xi = parity(n)
    dim = (n + xi) // 2
    if n <= 2:
        return AlphaMatrix(n, ((Fraction(1),),))
    prev = _alpha_cache[n - 2].entries  # dim-1 square, already built
    rows = [[Fraction(0)] * dim for _ in range(dim)]
    # interior: rescale the order-(n-2) entries
    for j in range(1, dim):
        denom = n * (n + 1) - 2 * j * (2 * (j - xi) + 1)
        scale = Fraction(n * (n - 1), denom)
        for k in range(1, j + 1):
            rows[j - 1][k - 1] = prev[j - 1][k - 1] * scale
    # bottom-right anchor
    rows[dim - 1][dim - 1] = Fraction(1)
    # last row: the alternating column sums must cancel at r = 1
    sign_dim = -1 if dim & 1 else 1
    for k in range(1, dim):
        acc = Fraction(0)
        for i in range(k, dim):
            acc += rows[i - 1][k - 1] * (-1 if i & 1 else 1)
        rows[dim - 1][k - 1] = -sign_dim * acc
    return AlphaMatrix(n, tuple(tuple(row) for row in rows))


@dataclass(frozen=True)
class MomentQuery:
    """Inputs of a conditional-moment evaluation E[Z_t**n | Z_s = z]."""

    order: int
    s: float
    t: float
    z: float
    boundary: Boundary

    def __post_init__(self):
        if self.order < 1:
            raise ValueError("order must be >= 1")
        if not 0 < self.s <= self.t:
            raise ValueError("need 0 < s <= t")
        if not -1.0 <= self.z <= 1.0:
            raise ValueError("conditioning state must lie in [-1, 1]")

    @property
    def ratio(self) -> float:
        """r = b(s)/b(t), in (0, 1]."""
        return self.boundary.value(self.s) / self.boundary.value(self.t)


def conditional_moment(q: MomentQuery, max_order: int = DEFAULT_MAX_ORDER) -> float:
    """Closed-form conditional moment, exact coefficients, float powers of r."""
    n = q.order
    if n > max_order:
        raise ValueError(
            f"order {n} above the closed-form cap {max_order}; "
            "use conditional_moment_via_ode for high orders")
    return _evaluate_closed_form(n, q.ratio, q.z)


def _evaluate_closed_form(n: int, r: float, z: float) -> float:
    xi = parity(n)
    if r == 1.0:
        # the double sum telescopes to the initial condition exactly
        return z ** n
    alpha = alpha_matrix(n).entries
    dim = (n + xi) // 2
    mu_n = float(uniform_moment(n))
    total = mu_n
    for k in range(1, dim + 1):
        m = 2 * k - xi
        zfac = z ** m - float(uniform_moment(m))
        inner = 0.0
        for j in range(k, dim + 1):
            term = float(alpha[j - 1][k - 1]) * r ** (j * (2 * (j - xi) + 1))
            inner += -term if j & 1 else term
        total += (-inner if k & 1 else inner) * zfac
    return total


def conditional_moment_closed_form(n: int, r: float, z: float) -> float:
    """Hand-expanded formulas for orders 1..6 (golden cross-check path).

    ``r`` is the support ratio b(s)/b(t).
    """
    if not 1 <= n <= 6:
        raise ValueError("hand-expanded formulas cover orders 1..6 only")
    if n == 1:
        return z * r
    if n == 2:
        return 1.0 / 3.0 + (z * z - 1.0 / 3.0) * r ** 3
    if n == 3:
        return 0.6 * z * (r - r ** 6) + z ** 3 * r ** 6
    if n == 4:
        return (0.2 + (z ** 4 - 0.2) * r ** 10
                + (6.0 / 7.0) * (z * z - 1.0 / 3.0) * (r ** 3 - r ** 10))
    if n == 5:
        return ((1.0 / 21.0) * z * (9.0 * r - 14.0 * r ** 6 + 5.0 * r ** 15)
                + (10.0 / 9.0) * z ** 3 * (r ** 6 - r ** 15)
                + z ** 5 * r ** 15)
    return (1.0 / 7.0 + (z ** 6 - 1.0 / 7.0) * r ** 21
            + (15.0 / 11.0) * (z ** 4 - 0.2) * (r ** 10 - r ** 21)
            + (5.0 / 77.0) * (z * z - 1.0 / 3.0)
            * (11.0 * r ** 3 - 18.0 * r ** 10 + 7.0 * r ** 21))


def conditional_moment_via_ode(q: MomentQuery, substeps: int = 1000) -> float:
    """Independent oracle: integrate the coupled moment ODE chain.

    The chain  dM_m/dt = (m(m+1)/2) h(t) ((m-1)/(m+1) M_{m-2} - M_m)  with
    h = db/b and M_m(s) = z**m is integrated for m = 1..n with the classical
    4th-order one-step method on a uniform grid.
    """
    if substeps < 100:
        raise ValueError("need substeps >= 100")
    n, z, b = q.order, q.z, q.boundary
    if q.t == q.s:
        return z ** n
    state = [z ** m for m in range(1, n + 1)]

    def deriv(time, y):
        h = b.log_ratio(time)
        out = []
        for m in range(1, n + 1):
            prev = 1.0 if m == 2 else (y[m - 3] if m > 2 else 0.0)
            out.append(0.5 * m * h * ((m - 1) * prev - (m + 1) * y[m - 1]))
        return out

    dt = (q.t - q.s) / substeps
    time = q.s
    for _ in range(substeps):
        k1 = deriv(time, state)
        y2 = [y + 0.5 * dt * k for y, k in zip(state, k1)]
        k2 = deriv(time + 0.5 * dt, y2)
        y3 = [y + 0.5 * dt * k for y, k in zip(state, k2)]
        k3 = deriv(time + 0.5 * dt, y3)
        y4 = [y + dt * k for y, k in zip(state, k3)]
        k4 = deriv(time + dt, y4)
        state = [y + dt / 6.0 * (a + 2.0 * (b2 + c) + d)
                 for y, a, b2, c, d in zip(state, k1, k2, k3, k4)]
        time += dt
    return state[n - 1]


def conic_moment(n: int, t: float, boundary: Boundary) -> float:
    """Unconditional moment E[X_t**n] of the conic martingale: b(t)**n/(n+1)
    for even n, zero for odd n."""
    if n < 0:
        raise ValueError("moment order must be nonnegative")
    if t <= 0:
        raise ValueError("need t > 0")
    if n & 1:
        return 0.0
    return boundary.value(t) ** n / (n + 1)
