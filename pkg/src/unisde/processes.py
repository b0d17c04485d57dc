"""The five diffusion kinds with uniform marginal laws.

Each kind provides evaluable drift/diffusion coefficients and its state
support.  Coefficients are total in x: the diffusion returns 0 outside the
open support (the indicator convention), because a discretized path can
overshoot where the exact solution cannot.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._normal import inverse_normal_cdf, normal_pdf
from .boundary import Boundary


class ProcessError(ValueError):
    """State/time outside a process domain, or an unsupported operation."""


# Acceptance window for the normal-quantile argument p = (1+x)/2.  The
# quantile-transform coefficients blow up at +-1; the approximation is
# certified on this window only.
QUANTILE_P_MIN = 1e-12
# States are kept inside +-QUANTILE_STATE_BOUND during simulation so that p
# stays strictly inside the window above.
QUANTILE_STATE_BOUND = 1.0 - 4e-12


@dataclass(frozen=True)
class UniformLaw:
    """Uniform law on [lo, hi]: the target marginal of every process here."""

    lo: float
    hi: float

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def variance(self) -> float:
        w = self.hi - self.lo
        return w * w / 12.0

    def moment(self, n: int) -> float:
        """Raw moment E[U**n]."""
        if n < 0:
            raise ValueError("moment order must be nonnegative")
        # (hi**(n+1) - lo**(n+1)) / ((n+1) (hi - lo)), stable telescoped form
        acc = 0.0
        for i in range(n + 1):
            acc += self.lo ** i * self.hi ** (n - i)
        return acc / (n + 1)

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo),
                       0.0, 1.0)


class Process:
    """Abstract diffusion kind; subclasses fill in the coefficients."""

    needs_positive_time = True

    def support(self, t: float) -> tuple[float, float]:
        raise NotImplementedError

    def drift(self, t: float, x: float) -> float:
        raise NotImplementedError

    def diffusion(self, t: float, x: float) -> float:
        raise NotImplementedError

    def target_law(self, t: float) -> UniformLaw:
        lo, hi = self.support(t)
        return UniformLaw(lo, hi)

    def spec_token(self) -> str:
        raise NotImplementedError

    def _check_time(self, t: float) -> None:
        if self.needs_positive_time and t <= 0:
            raise ProcessError(f"coefficients require t > 0 (t={t!r})")

    def _check_state(self, t: float, x: float) -> None:
        lo, hi = self.support(t)
        if not lo <= x <= hi:
            raise ProcessError(
                f"state {x!r} outside the support [{lo!r}, {hi!r}] at t={t!r}")


@dataclass(frozen=True)
class ConicMartingale(Process):
    """Driftless diffusion uniform on [-b(t), b(t)] at every time."""

    boundary: Boundary

    def support(self, t):
        b = self.boundary.value(t)
        return (-b, b)

    def drift(self, t, x):
        self._check_time(t)
        self._check_state(t, x)
        return 0.0

    def diffusion(self, t, x):
        self._check_time(t)
        b = self.boundary.value(t)
        if not -b < x < b:
            return 0.0
        h = self.boundary.log_ratio(t)
        r = b * b - x * x
        if r < 0.0:
            r = 0.0
        return math.sqrt(h * r)

    def sigma_bound(self, t):
        """sqrt(db(t) * b(t)): uniform upper bound of the diffusion in x."""
        self._check_time(t)
        return math.sqrt(self.boundary.derivative(t) * self.boundary.value(t))

    def spec_token(self):
        return "x"


@dataclass(frozen=True)
class MeanRevertingUniform(Process):
    """Rescaled conic martingale: uniform on [-1, 1], drift -(db/b) x."""

    boundary: Boundary

    def support(self, t):
        return (-1.0, 1.0)

    def drift(self, t, x):
        self._check_time(t)
        self._check_state(t, x)
        return -(self.boundary.log_ratio(t) * x)

    def diffusion(self, t, x):
        self._check_time(t)
        if not -1.0 < x < 1.0:
            return 0.0
        r = 1.0 - x * x
        if r < 0.0:
            r = 0.0
        return math.sqrt(self.boundary.log_ratio(t) * r)

    def spec_token(self):
        return "z"


@dataclass(frozen=True)
class MeanRevertingUnitUniform(Process):
    """Affine shift of the previous kind: uniform on [0, 1], reverts to 1/2."""

    boundary: Boundary

    def support(self, t):
        return (0.0, 1.0)

    def drift(self, t, x):
        self._check_time(t)
        self._check_state(t, x)
        return self.boundary.log_ratio(t) * (0.5 - x)

    def diffusion(self, t, x):
        self._check_time(t)
        if not 0.0 < x < 1.0:
            return 0.0
        r = x * (1.0 - x)
        if r < 0.0:
            r = 0.0
        return math.sqrt(self.boundary.log_ratio(t) * r)

    def spec_token(self):
        return "y"


@dataclass(frozen=True)
class ErgodicUniform(Process):
    """Time-homogeneous diffusion with invariant law U(-1, 1) and pull kappa."""

    kappa: float
    needs_positive_time = False

    def __post_init__(self):
        if self.kappa <= 0:
            raise ProcessError("kappa must be positive")

    def support(self, t):
        return (-1.0, 1.0)

    def drift(self, t, x):
        if t < 0:
            raise ProcessError("time must be nonnegative")
        self._check_state(t, x)
        return -(self.kappa * x)

    def diffusion(self, t, x):
        if t < 0:
            raise ProcessError("time must be nonnegative")
        if not -1.0 < x < 1.0:
            return 0.0
        r = 1.0 - x * x
        if r < 0.0:
            r = 0.0
        return math.sqrt(self.kappa * r)

    def spec_token(self):
        return f"xi:kappa={format(self.kappa, '.17g')}"


@dataclass(frozen=True)
class NormalCdfUniform(Process):
    """Normal-quantile transform of scaled Brownian motion, uniform on (-1, 1).

    The coefficients involve the standard-normal quantile of p = (1+x)/2 and
    are evaluated only for p inside the certified window; outside it the
    drift refuses and the diffusion takes its continuous limit 0.
    """

    def support(self, t):
        return (-1.0, 1.0)

    def _quantile(self, x):
        p = (1.0 + x) * 0.5
        if p < QUANTILE_P_MIN or p > 1.0 - QUANTILE_P_MIN:
            raise ProcessError(
                f"state {x!r} too close to +-1 for the quantile transform "
                f"(needs (1+x)/2 within ({QUANTILE_P_MIN}, {1 - QUANTILE_P_MIN}))")
        return inverse_normal_cdf(p)

    def drift(self, t, x):
        self._check_time(t)
        self._check_state(t, x)
        q = self._quantile(x)
        return (-2.0 / t) * (q * normal_pdf(q))

    def diffusion(self, t, x):
        self._check_time(t)
        if not -1.0 < x < 1.0:
            return 0.0
        p = (1.0 + x) * 0.5
        if p < QUANTILE_P_MIN or p > 1.0 - QUANTILE_P_MIN:
            return 0.0
        return (2.0 / math.sqrt(t)) * normal_pdf(inverse_normal_cdf(p))

    def spec_token(self):
        return "phi"


def sigma_bound(process: Process, t: float) -> float:
    if not isinstance(process, ConicMartingale):
        raise ProcessError("sigma_bound is defined for the conic martingale kind only")
    return process.sigma_bound(t)


def parse_process(token: str, boundary: Boundary | None = None) -> Process:
    """Build a process from its CLI token: x, z, y, xi:kappa=..., phi."""
    name, _, rest = token.partition(":")
    name = name.strip().lower()
    if name in ("x", "z", "y"):
        if boundary is None:
            raise ProcessError(f"process {name!r} requires a boundary")
        cls = {"x": ConicMartingale,
               "z": MeanRevertingUniform,
               "y": MeanRevertingUnitUniform}[name]
        return cls(boundary)
    if name == "xi":
        kappa = 1.0
        if rest:
            key, eq, val = rest.partition("=")
            if key.strip() != "kappa" or not eq:
                raise ProcessError("ergodic process takes a single parameter kappa")
            kappa = float(val)
        return ErgodicUniform(kappa)
    if name == "phi":
        return NormalCdfUniform()
    raise ProcessError(f"unknown process {token!r}; expected x, z, y, xi:kappa=..., phi")
