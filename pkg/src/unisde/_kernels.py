"""Euler stepping kernels, NumPy backend, plus backend selection.

Each kernel advances a block of paths through a chunk of steps:

    x[k+1] = x[k] + mu(t_k, x[k]) * dt_k + sigma(t_k, x[k]) * sqrt(dt_k) * N

then clamps any move that left the closed support at t_{k+1} back onto
it and writes any stored columns.  The arithmetic here fixes the reference evaluation order; the
compiled kernels in ``_speedups`` repeat it operation for operation so both
backends produce bit-identical paths.

All per-step coefficient arrays (h = db/b at t_k, squared boundary, support
bounds at t_{k+1}, step sizes) are precomputed by the engine and shared by
both backends.
"""
from __future__ import annotations

import os

import numpy as np

from ._normal import INV_SQRT_2PI, inverse_normal_cdf


def _finish_step(xn, k, lo, hi, store_pos, out):
    hits = np.count_nonzero((xn < lo[k]) | (xn > hi[k]))
    if hits:
        np.clip(xn, lo[k], hi[k], out=xn)
    pos = store_pos[k]
    if pos >= 0:
        out[:, pos] = xn
    return hits


def step_sym(x, z, h, dt, sqdt, lo, hi, store_pos, out):
    """mu = -h x, sigma = sqrt(h (1 - x^2)): the fixed-support symmetric kinds."""
    hits = 0
    for k in range(z.shape[1]):
        dw = z[:, k] * sqdt[k]
        mu = -(h[k] * x)
        r = 1.0 - x * x
        np.maximum(r, 0.0, out=r)
        sig = np.sqrt(h[k] * r)
        xn = (x + mu * dt[k]) + sig * dw
        hits += _finish_step(xn, k, lo, hi, store_pos, out)
        x[:] = xn
    return hits


def step_unit(x, z, h, dt, sqdt, lo, hi, store_pos, out):
    """mu = h (1/2 - x), sigma = sqrt(h x (1 - x)): the unit-interval kind."""
    hits = 0
    for k in range(z.shape[1]):
        dw = z[:, k] * sqdt[k]
        mu = h[k] * (0.5 - x)
        r = x * (1.0 - x)
        np.maximum(r, 0.0, out=r)
        sig = np.sqrt(h[k] * r)
        xn = (x + mu * dt[k]) + sig * dw
        hits += _finish_step(xn, k, lo, hi, store_pos, out)
        x[:] = xn
    return hits


def step_conic(x, z, h, b2, dt, sqdt, lo, hi, store_pos, out):
    """Driftless expanding-support kind: sigma = sqrt(h (b^2 - x^2))."""
    hits = 0
    for k in range(z.shape[1]):
        dw = z[:, k] * sqdt[k]
        r = b2[k] - x * x
        np.maximum(r, 0.0, out=r)
        sig = np.sqrt(h[k] * r)
        xn = x + sig * dw
        hits += _finish_step(xn, k, lo, hi, store_pos, out)
        x[:] = xn
    return hits


def step_quantile(x, z, t, dt, sqdt, lo, hi, store_pos, out):
    """Normal-quantile transform kind.

    Transcendental coefficients keep this kernel on the shared NumPy path
    for every backend (a libm/NumPy mismatch in exp or log would break the
    bit-identity contract between backends).
    """
    hits = 0
    for k in range(z.shape[1]):
        dw = z[:, k] * sqdt[k]
        p = (1.0 + x) * 0.5
        q = inverse_normal_cdf(p)
        pdf = np.exp(-0.5 * q * q) * INV_SQRT_2PI
        mu = (-2.0 / t[k]) * (q * pdf)
        sig = (2.0 / np.sqrt(t[k])) * pdf
        xn = (x + mu * dt[k]) + sig * dw
        hits += _finish_step(xn, k, lo, hi, store_pos, out)
        x[:] = xn
    return hits


try:
    from . import _speedups
except ImportError:  # extension not built: pure-Python install
    _speedups = None

_PYTHON_KERNELS = {
    "sym": step_sym,
    "unit": step_unit,
    "conic": step_conic,
    "quantile": step_quantile,
}


def available_backends():
    names = ["python"]
    if _speedups is not None:
        names.append("compiled")
    return names


def default_backend():
    forced = os.environ.get("UNISDE_BACKEND")
    if forced:
        if forced not in available_backends():
            raise ValueError(f"UNISDE_BACKEND={forced!r} is not available "
                             f"(have {available_backends()})")
        return forced
    return "compiled" if _speedups is not None else "python"


def get_kernels(backend=None):
    """Kernel table for a backend name (None picks the default)."""
    if backend is None:
        backend = default_backend()
    if backend == "python":
        return dict(_PYTHON_KERNELS)
    if backend == "compiled":
        if _speedups is None:
            raise ValueError("compiled backend requested but the extension is not built")
        table = dict(_PYTHON_KERNELS)
        table["sym"] = _speedups.step_sym
        table["unit"] = _speedups.step_unit
        table["conic"] = _speedups.step_conic
        # quantile intentionally stays on the shared NumPy path
        return table
    raise ValueError(f"unknown backend {backend!r}")
