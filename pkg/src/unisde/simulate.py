"""Euler-Maruyama Monte Carlo engine with deterministic parallelism.

Paths are advanced in fixed-size blocks; each path draws its noise from its
own counter-based stream keyed by (seed, path index), so the result is
bit-identical no matter how many worker threads run or which stepping
backend is active.  Moves that leave
the closed support at the next grid time are clamped back onto it; how
often that fires is reported as a diagnostic fraction.
"""
from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng
from ._kernels import get_kernels
from .boundary import Boundary, Regime
from .processes import (
    QUANTILE_STATE_BOUND,
    ConicMartingale,
    ErgodicUniform,
    MeanRevertingUniform,
    MeanRevertingUnitUniform,
    NormalCdfUniform,
    Process,
)

BLOCK_PATHS = 8192
CHUNK_STEPS = 256
# refuse value matrices above ~2 GiB; marginal storage avoids this
MAX_STORED_VALUES = 2 ** 28


class ConfigError(ValueError):
    """A simulation configuration violates its invariants."""


class NonFiniteStateError(RuntimeError):
    """A path left the finite floats; carries the offending location."""

    def __init__(self, path_index, step_index, time):
        self.path_index = int(path_index)
        self.step_index = int(step_index)
        self.time = float(time)
        super().__init__(
            f"non-finite state on path {path_index} at step {step_index} "
            f"(t={time!r})")


@dataclass(frozen=True)
class PointMass:
    x0: float

    def spec_token(self):
        return f"point:{format(self.x0, '.17g')}"


@dataclass(frozen=True)
class UniformOnSupport:
    def spec_token(self):
        return "uniform"


@dataclass(frozen=True)
class Conditional:
    s: float
    z: float

    def spec_token(self):
        return f"cond:s={format(self.s, '.17g')},z={format(self.z, '.17g')}"


@dataclass(frozen=True)
class FullPaths:
    def spec_token(self):
        return "full"


@dataclass(frozen=True)
class TerminalOnly:
    def spec_token(self):
        return "terminal"


@dataclass(frozen=True)
class Marginals:
    at: tuple[float, ...]

    def spec_token(self):
        return "marginals:" + ",".join(format(t, ".17g") for t in self.at)


def parse_initial(token: str):
    name, _, rest = token.partition(":")
    name = name.strip().lower()
    if name == "uniform":
        return UniformOnSupport()
    if name == "point":
        try:
            return PointMass(float(rest))
        except ValueError:
            raise ConfigError(f"bad point-mass value {rest!r}")
    if name == "cond":
        params = {}
        for part in rest.split(","):
            key, eq, val = part.partition("=")
            if not eq or key.strip() not in ("s", "z"):
                raise ConfigError(f"bad conditional-start parameter {part!r}")
            params[key.strip()] = float(val)
        if set(params) != {"s", "z"}:
            raise ConfigError("conditional start needs both s= and z=")
        return Conditional(params["s"], params["z"])
    raise ConfigError(
        f"unknown initial condition {token!r}; expected uniform, point:X0 "
        "or cond:s=S,z=Z")


def parse_store(token: str):
    name, _, rest = token.partition(":")
    name = name.strip().lower()
    if name == "full":
        return FullPaths()
    if name == "terminal":
        return TerminalOnly()
    if name == "marginals":
        try:
            times = tuple(float(v) for v in rest.split(",") if v.strip())
        except ValueError:
            raise ConfigError(f"bad marginal times {rest!r}")
        if not times:
            raise ConfigError("marginals store needs at least one time")
        return Marginals(times)
    raise ConfigError(
        f"unknown store mode {token!r}; expected full, terminal or marginals:t1,t2,...")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t0, t0+dt, ..., t_end; the last step may be shorter."""

    t0: float
    t_end: float
    dt: float

    def __post_init__(self):
        if self.t0 < 0:
            raise ConfigError("t0 must be nonnegative")
        if self.t_end <= self.t0:
            raise ConfigError("t_end must exceed t0")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")

    def times(self) -> np.ndarray:
        span = self.t_end - self.t0
        ratio = span / self.dt
        k = int(round(ratio))
        if k >= 1 and abs(ratio - k) <= 1e-9 * max(1.0, ratio):
            out = self.t0 + self.dt * np.arange(k + 1, dtype=np.float64)
        else:
            k = int(math.floor(ratio))
            out = np.concatenate(
                [self.t0 + self.dt * np.arange(k + 1, dtype=np.float64),
                 [self.t_end]])
        out[-1] = self.t_end
        return out


@dataclass(frozen=True)
class SimConfig:
    process: Process
    grid: TimeGrid
    n_paths: int
    seed: int
    initial: object
    store: object

    def spec_token(self) -> str:
        return "|".join([
            self.process.spec_token(),
            getattr(getattr(self.process, "boundary", None), "spec_token", lambda: "-")(),
            f"grid:{self.grid.t0!r},{self.grid.t_end!r},{self.grid.dt!r}",
            f"paths:{self.n_paths}",
            f"seed:{self.seed}",
            self.initial.spec_token(),
            self.store.spec_token(),
        ])

    def to_dict(self) -> dict:
        boundary = getattr(self.process, "boundary", None)
        return {
            "process": self.process.spec_token(),
            "boundary": boundary.spec_token() if boundary is not None else None,
            "t0": self.grid.t0,
            "t_end": self.grid.t_end,
            "dt": self.grid.dt,
            "paths": self.n_paths,
            "seed": self.seed,
            "initial": self.initial.spec_token(),
            "store": self.store.spec_token(),
        }


@dataclass(frozen=True, eq=False)
class PathSet:
    """Simulated values at the stored times, one row per path."""

    config: SimConfig
    process: Process
    times: np.ndarray
    values: np.ndarray
    clamp_fraction: float
    scheme: str
    rng_fingerprint: str

    @property
    def n_paths(self) -> int:
        return self.values.shape[0]

    def marginal(self, t: float) -> np.ndarray:
        """Column of values at a stored time (snapped within half a step)."""
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > 0.5 * self.config.grid.dt + 1e-9:
            raise KeyError(f"time {t!r} was not stored (have {self.times})")
        return self.values[:, idx]


def _fingerprint(config, scheme, times, values):
    digest = hashlib.sha256()
    digest.update(config.spec_token().encode())
    digest.update(scheme.encode())
    digest.update(np.ascontiguousarray(times).tobytes())
    digest.update(np.ascontiguousarray(values).tobytes())
    return digest.hexdigest()


def default_threads() -> int:
    env = os.environ.get("UNISDE_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _boundary_of(process) -> Boundary | None:
    return getattr(process, "boundary", None)


def _validate_config(cfg: SimConfig) -> None:
    if not 1 <= cfg.n_paths < rng.MAX_PATHS:
        raise ConfigError("n_paths must be between 1 and 2**32 - 1")
    if not 0 <= cfg.seed <= rng.MAX_SEED:
        raise ConfigError("seed must fit in an unsigned 64-bit integer")
    p, grid = cfg.process, cfg.grid
    t0 = grid.t0
    boundary = _boundary_of(p)

    if boundary is not None:
        regime = boundary.classify(horizon=grid.t_end).regime
        if regime is Regime.INVALID:
            raise ConfigError(
                "boundary fails the solvability assumptions "
                f"({'; '.join(boundary.classify(horizon=grid.t_end).reasons)})")
    else:
        regime = None

    if isinstance(p, ConicMartingale):
        if t0 == 0.0:
            if regime is not Regime.STRONG_UNIQUE:
                raise ConfigError(
                    f"this boundary is {regime.value}: it admits no start at the "
                    "cone tip; set t0 > 0 (e.g. t0 = dt) with initial 'uniform', "
                    "or give an explicit conditional start 'cond:s=...,z=...'")
            if not (isinstance(cfg.initial, PointMass) and cfg.initial.x0 == 0.0):
                raise ConfigError(
                    "starting at t0 = 0 requires the point mass at 0 "
                    "(initial 'point:0'); other initial laws need t0 > 0")
        elif regime in (Regime.WEAK_ONLY, Regime.EXPONENTIAL_CONE):
            if isinstance(cfg.initial, PointMass):
                raise ConfigError(
                    f"this boundary is {regime.value}: start with initial "
                    "'uniform' at t0 > 0 or an explicit 'cond:s=...,z=...' start")
    elif isinstance(p, (MeanRevertingUniform, MeanRevertingUnitUniform,
                        NormalCdfUniform)):
        if t0 <= 0.0:
            raise ConfigError(
                f"process {p.spec_token()!r} is defined for t > 0; "
                "choose t0 > 0 (t0 = dt approximates a start at the origin)")

    lo0, hi0 = p.support(t0)
    if isinstance(p, NormalCdfUniform):
        lo0, hi0 = -QUANTILE_STATE_BOUND, QUANTILE_STATE_BOUND
    if isinstance(cfg.initial, PointMass):
        if not lo0 <= cfg.initial.x0 <= hi0:
            raise ConfigError(
                f"point mass {cfg.initial.x0!r} outside the support "
                f"[{lo0!r}, {hi0!r}] at t0={t0!r}")
    elif isinstance(cfg.initial, Conditional):
        s = cfg.initial.s
        if abs(s - t0) > 1e-12 * max(1.0, abs(t0)):
            raise ConfigError(
                f"conditional start time s={s!r} must equal the grid origin "
                f"t0={t0!r}")
        if not lo0 <= cfg.initial.z <= hi0:
            raise ConfigError(
                f"conditional state {cfg.initial.z!r} outside the support "
                f"[{lo0!r}, {hi0!r}] at s={s!r}")
    elif not isinstance(cfg.initial, UniformOnSupport):
        raise ConfigError(f"unknown initial condition {cfg.initial!r}")


def _stored_indices(cfg: SimConfig, times: np.ndarray) -> np.ndarray:
    store = cfg.store
    if isinstance(store, FullPaths):
        idx = np.arange(times.size)
    elif isinstance(store, TerminalOnly):
        idx = np.array([times.size - 1])
    elif isinstance(store, Marginals):
        picks = []
        for t in store.at:
            j = int(np.argmin(np.abs(times - t)))
            if abs(times[j] - t) > 0.5 * cfg.grid.dt + 1e-9:
                raise ConfigError(
                    f"marginal time {t!r} outside the grid [{times[0]!r}, {times[-1]!r}]")
            picks.append(j)
        idx = np.unique(np.array(picks, dtype=np.int64))
    else:
        raise ConfigError(f"unknown store mode {cfg.store!r}")
    if cfg.n_paths * idx.size > MAX_STORED_VALUES:
        raise ConfigError(
            "stored value matrix would be too large; "
            "use store 'marginals:...' or 'terminal'")
    return idx


@dataclass
class _StepPlan:
    kind: str
    times: np.ndarray
    h: np.ndarray
    b2: np.ndarray | None
    tk: np.ndarray | None
    dt: np.ndarray
    sqdt: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    lo0: float
    hi0: float


def _build_step_plan(process: Process, times: np.ndarray) -> _StepPlan:
    n_steps = times.size - 1
    dt = np.diff(times)
    sqdt = np.sqrt(dt)
    b2 = tk = None
    boundary = _boundary_of(process)

    if isinstance(process, ConicMartingale):
        kind = "conic"
        bvals = np.array([boundary.value(t) for t in times])
        h = np.array([boundary.log_ratio(t) if t > 0.0 else 0.0
                      for t in times[:-1]])
        b2 = bvals[:-1] * bvals[:-1]
        lo, hi = -bvals[1:], bvals[1:]
        lo0, hi0 = -bvals[0], bvals[0]
    elif isinstance(process, (MeanRevertingUniform, MeanRevertingUnitUniform)):
        kind = "sym" if isinstance(process, MeanRevertingUniform) else "unit"
        h = np.array([boundary.log_ratio(t) for t in times[:-1]])
        lo0, hi0 = process.support(times[0])
        lo = np.full(n_steps, lo0)
        hi = np.full(n_steps, hi0)
    elif isinstance(process, ErgodicUniform):
        kind = "sym"
        h = np.full(n_steps, process.kappa)
        lo0, hi0 = -1.0, 1.0
        lo = np.full(n_steps, -1.0)
        hi = np.full(n_steps, 1.0)
    elif isinstance(process, NormalCdfUniform):
        kind = "quantile"
        tk = times[:-1].copy()
        h = np.zeros(n_steps)
        lo0, hi0 = -QUANTILE_STATE_BOUND, QUANTILE_STATE_BOUND
        lo = np.full(n_steps, lo0)
        hi = np.full(n_steps, hi0)
    else:
        raise ConfigError(f"unsupported process {process!r}")
    return _StepPlan(kind, times, h, b2, tk, dt, sqdt, lo, hi, lo0, hi0)


def _initial_values(cfg: SimConfig, plan: _StepPlan, paths: np.ndarray) -> np.ndarray:
    initial = cfg.initial
    if isinstance(initial, PointMass):
        return np.full(paths.size, float(initial.x0))
    if isinstance(initial, Conditional):
        return np.full(paths.size, float(initial.z))
    u = rng.uniforms(cfg.seed, paths, 0, 1, rng.STREAM_INIT)[:, 0]
    return plan.lo0 + (plan.hi0 - plan.lo0) * u


def _run_paths(cfg, plan, stored_idx, kernels, threads, scheme):
    n_steps = plan.times.size - 1
    n_stored = stored_idx.size
    store_pos = np.full(n_steps, -1, dtype=np.int64)
    for col, j in enumerate(stored_idx):
        if j >= 1:
            store_pos[j - 1] = col
    t0_col = int(np.where(stored_idx == 0)[0][0]) if 0 in stored_idx else -1

    out = np.empty((cfg.n_paths, n_stored), dtype=np.float64)
    kern = kernels[plan.kind]

    def run_block(b0, b1):
        paths = np.arange(b0, b1, dtype=np.uint64)
        x = _initial_values(cfg, plan, paths)
        if t0_col >= 0:
            out[b0:b1, t0_col] = x
        hits = 0
        for k0 in range(0, n_steps, CHUNK_STEPS):
            k1 = min(k0 + CHUNK_STEPS, n_steps)
            z = rng.normals(cfg.seed, paths, k0, k1 - k0)
            args = (x, z, plan.h[k0:k1])
            if plan.kind == "conic":
                args += (plan.b2[k0:k1],)
            elif plan.kind == "quantile":
                args = (x, z, plan.tk[k0:k1])
            args += (plan.dt[k0:k1], plan.sqdt[k0:k1],
                     plan.lo[k0:k1], plan.hi[k0:k1],
                     store_pos[k0:k1], out[b0:b1])
            hits += kern(*args)
        if not np.isfinite(x).all():
            bad = b0 + int(np.flatnonzero(~np.isfinite(x))[0])
            step = _locate_non_finite(cfg, plan, kernels, bad)
            raise NonFiniteStateError(bad, step, plan.times[min(step + 1, n_steps)])
        return hits

    blocks = [(b0, min(b0 + BLOCK_PATHS, cfg.n_paths))
              for b0 in range(0, cfg.n_paths, BLOCK_PATHS)]
    if threads <= 1 or len(blocks) == 1:
        hit_events = sum(run_block(b0, b1) for b0, b1 in blocks)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            hit_events = sum(pool.map(lambda span: run_block(*span), blocks))

    clamp_fraction = hit_events / (cfg.n_paths * n_steps)
    stored_times = plan.times[stored_idx]
    return PathSet(
        config=cfg,
        process=cfg.process,
        times=stored_times,
        values=out,
        clamp_fraction=clamp_fraction,
        scheme=scheme,
        rng_fingerprint=_fingerprint(cfg, scheme, stored_times, out),
    )


def _locate_non_finite(cfg, plan, kernels, path_index):
    """Re-run one offending path step by step to pinpoint the failure."""
    paths = np.array([path_index], dtype=np.uint64)
    x = _initial_values(cfg, plan, paths)
    n_steps = plan.times.size - 1
    kern = kernels[plan.kind]
    dummy = np.empty((1, 1))
    nostore = np.full(1, -1, dtype=np.int64)
    for k in range(n_steps):
        z = rng.normals(cfg.seed, paths, k, 1)
        args = (x, z, plan.h[k:k + 1])
        if plan.kind == "conic":
            args += (plan.b2[k:k + 1],)
        elif plan.kind == "quantile":
            args = (x, z, plan.tk[k:k + 1])
        args += (plan.dt[k:k + 1], plan.sqdt[k:k + 1],
                 plan.lo[k:k + 1], plan.hi[k:k + 1], nostore, dummy)
        kern(*args)
        if not np.isfinite(x[0]):
            return k
    return n_steps - 1


def euler_simulate(cfg: SimConfig, threads: int | None = None,
                   backend: str | None = None) -> PathSet:
    """Simulate the configured process on its grid; see the module docstring."""
    _validate_config(cfg)
    times = cfg.grid.times()
    stored_idx = _stored_indices(cfg, times)
    plan = _build_step_plan(cfg.process, times)
    kernels = get_kernels(backend)
    threads = default_threads() if threads is None else max(1, threads)
    return _run_paths(cfg, plan, stored_idx, kernels, threads, "euler")


def time_change_simulate(cfg: SimConfig, threads: int | None = None,
                         backend: str | None = None) -> PathSet:
    """Simulate the rescaled process through its deterministic clock.

    The unit-pull ergodic diffusion is stepped on the transformed grid
    ln b(t_k); states are reported at the original times.  Marginals agree
    in law with :func:`euler_simulate` of the same configuration.
    """
    if not isinstance(cfg.process, MeanRevertingUniform):
        raise ConfigError("the time-change sampler applies to process 'z' only")
    _validate_config(cfg)
    boundary = cfg.process.boundary
    t_start = boundary.inverse(1.0)
    if cfg.grid.t0 < t_start - 1e-12 * max(1.0, t_start):
        raise ConfigError(
            f"time-change sampling needs t0 >= {t_start!r} "
            "(where the boundary reaches 1) so the transformed clock is "
            "nonnegative")
    times = cfg.grid.times()
    stored_idx = _stored_indices(cfg, times)
    tau = np.array([boundary.time_change_tau(t) for t in times])
    dt = np.diff(tau)
    plan = _StepPlan(
        kind="sym",
        times=times,
        h=np.ones(times.size - 1),
        b2=None,
        tk=None,
        dt=dt,
        sqdt=np.sqrt(dt),
        lo=np.full(times.size - 1, -1.0),
        hi=np.full(times.size - 1, 1.0),
        lo0=-1.0,
        hi0=1.0,
    )
    kernels = get_kernels(backend)
    threads = default_threads() if threads is None else max(1, threads)
    return _run_paths(cfg, plan, stored_idx, kernels, threads, "time-change")


def rescale_to_unit_support(paths: PathSet) -> PathSet:
    """Divide conic-martingale paths by b(t) pointwise, mapping onto [-1, 1]."""
    if not isinstance(paths.process, ConicMartingale):
        raise ConfigError("rescaling applies to conic-martingale paths")
    if np.any(paths.times <= 0.0):
        raise ConfigError("rescaling needs every stored time > 0 (b(0) = 0)")
    boundary = paths.process.boundary
    scale = np.array([boundary.value(t) for t in paths.times])
    values = paths.values / scale[None, :]
    process = MeanRevertingUniform(boundary)
    return PathSet(
        config=paths.config,
        process=process,
        times=paths.times,
        values=values,
        clamp_fraction=paths.clamp_fraction,
        scheme="rescaled",
        rng_fingerprint=_fingerprint(paths.config, "rescaled", paths.times, values),
    )


def exact_uniform_reference(n: int, seed: int) -> np.ndarray:
    """n i.i.d. draws from the uniform law on [-1, 1], deterministic in seed."""
    if n < 1:
        raise ValueError("need n >= 1")
    u = rng.uniforms(seed, np.arange(n, dtype=np.uint64), 0, 1,
                     rng.STREAM_REFERENCE)[:, 0]
    return 2.0 * u - 1.0
