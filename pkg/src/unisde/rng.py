"""Counter-based random streams for reproducible parallel simulation.

Every variate is a pure function of (seed, path index, draw index, stream
tag) through a vectorized Philox4x32-10 block cipher, so the draws a path
sees never depend on how many paths are simulated, how paths are split
across workers, or which stepping backend is active.

Stream tags keep the per-path noise draws, the initial-condition draw and
the reference sampler on disjoint counters.
"""
from __future__ import annotations

import numpy as np

from ._normal import inverse_normal_cdf

STREAM_NOISE = 0
STREAM_INIT = 1
STREAM_REFERENCE = 2

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_SHIFT32 = np.uint64(32)
_MASK32 = np.uint64(0xFFFFFFFF)
_TWO_NEG_53 = 2.0 ** -53

MAX_SEED = 2 ** 64 - 1
MAX_PATHS = 2 ** 32


def _round_keys(seed):
    if not 0 <= seed <= MAX_SEED:
        raise ValueError("seed must fit in an unsigned 64-bit integer")
    k0 = seed & 0xFFFFFFFF
    k1 = (seed >> 32) & 0xFFFFFFFF
    keys = []
    for _ in range(10):
        keys.append((np.uint32(k0), np.uint32(k1)))
        k0 = (k0 + 0x9E3779B9) & 0xFFFFFFFF
        k1 = (k1 + 0xBB67AE85) & 0xFFFFFFFF
    return keys


def philox4x32(c0, c1, c2, c3, seed):
    """One Philox4x32-10 block per counter; inputs/outputs are uint32 arrays."""
    keys = _round_keys(seed)
    c0 = np.asarray(c0, dtype=np.uint32)
    c1 = np.asarray(c1, dtype=np.uint32)
    c2 = np.asarray(c2, dtype=np.uint32)
    c3 = np.asarray(c3, dtype=np.uint32)
    for k0, k1 in keys:
        p0 = c0.astype(np.uint64) * _M0
        p1 = c2.astype(np.uint64) * _M1
        hi0 = (p0 >> _SHIFT32).astype(np.uint32)
        lo0 = (p0 & _MASK32).astype(np.uint32)
        hi1 = (p1 >> _SHIFT32).astype(np.uint32)
        lo1 = (p1 & _MASK32).astype(np.uint32)
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


def _words_to_unit(w_hi, w_lo):
    # 26 + 27 mantissa bits, then center inside the half-open cell: the
    # result is strictly inside (0, 1) and symmetric under u -> 1 - u.
    hi = (w_hi >> np.uint32(6)).astype(np.uint64)
    lo = (w_lo >> np.uint32(5)).astype(np.uint64)
    k = hi * np.uint64(1 << 27) + lo
    return (k.astype(np.float64) + 0.5) * _TWO_NEG_53


def uniforms(seed, paths, first_draw, n_draws, stream=STREAM_NOISE):
    """Uniform (0, 1) draws ``first_draw .. first_draw + n_draws - 1`` for each path.

    Returns a C-contiguous (len(paths), n_draws) array.
    """
    paths = np.asarray(paths, dtype=np.uint64)
    if paths.ndim != 1:
        raise ValueError("paths must be one-dimensional")
    if np.any(paths >= MAX_PATHS):
        raise ValueError("path indices must be below 2**32")
    if n_draws < 1 or first_draw < 0:
        raise ValueError("need first_draw >= 0 and n_draws >= 1")

    first_block = first_draw >> 1
    last_block = (first_draw + n_draws - 1) >> 1
    n_blocks = last_block - first_block + 1
    blocks = np.uint64(first_block) + np.arange(n_blocks, dtype=np.uint64)

    c0 = (blocks & _MASK32).astype(np.uint32)[None, :]
    c1 = (blocks >> _SHIFT32).astype(np.uint32)[None, :]
    c2 = (paths & _MASK32).astype(np.uint32)[:, None]
    c3 = np.full((paths.size, 1), stream, dtype=np.uint32)

    w0, w1, w2, w3 = philox4x32(c0, c1, c2, c3, seed)

    u = np.empty((paths.size, 2 * n_blocks))
    u[:, 0::2] = _words_to_unit(w0, w1)
    u[:, 1::2] = _words_to_unit(w2, w3)
    lane = first_draw & 1
    return np.ascontiguousarray(u[:, lane:lane + n_draws])


def normals(seed, paths, first_draw, n_draws, stream=STREAM_NOISE):
    """Standard-normal draws via the inverse CDF applied to :func:`uniforms`."""
    return inverse_normal_cdf(uniforms(seed, paths, first_draw, n_draws, stream))
