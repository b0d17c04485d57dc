# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled Euler stepping kernels.

Arithmetic mirrors unisde._kernels operation for operation (same order,
only IEEE +,-,*,sqrt and comparisons), so paths are bit-identical to the
NumPy backend.  Loops run without the GIL, so blocks scale across threads.
"""
from libc.math cimport sqrt
from libc.stdint cimport int64_t


def step_sym(double[::1] x, double[:, ::1] z, double[::1] h,
             double[::1] dt, double[::1] sqdt, double[::1] lo, double[::1] hi,
             int64_t[::1] store_pos, double[:, ::1] out):
    cdef Py_ssize_t n_paths = x.shape[0]
    cdef Py_ssize_t n_steps = z.shape[1]
    cdef Py_ssize_t i, k
    cdef int64_t pos
    cdef long long clamped = 0
    cdef double xi, dw, mu, r, sig, xn
    with nogil:
        for i in range(n_paths):
            xi = x[i]
            for k in range(n_steps):
                dw = z[i, k] * sqdt[k]
                mu = -(h[k] * xi)
                r = 1.0 - xi * xi
                if r < 0.0:
                    r = 0.0
                sig = sqrt(h[k] * r)
                xn = (xi + mu * dt[k]) + sig * dw
                if xn > hi[k]:
                    xn = hi[k]
                    clamped += 1
                elif xn < lo[k]:
                    xn = lo[k]
                    clamped += 1
                pos = store_pos[k]
                if pos >= 0:
                    out[i, pos] = xn
                xi = xn
            x[i] = xi
    return clamped


def step_unit(double[::1] x, double[:, ::1] z, double[::1] h,
              double[::1] dt, double[::1] sqdt, double[::1] lo, double[::1] hi,
              int64_t[::1] store_pos, double[:, ::1] out):
    cdef Py_ssize_t n_paths = x.shape[0]
    cdef Py_ssize_t n_steps = z.shape[1]
    cdef Py_ssize_t i, k
    cdef int64_t pos
    cdef long long clamped = 0
    cdef double xi, dw, mu, r, sig, xn
    with nogil:
        for i in range(n_paths):
            xi = x[i]
            for k in range(n_steps):
                dw = z[i, k] * sqdt[k]
                mu = h[k] * (0.5 - xi)
                r = xi * (1.0 - xi)
                if r < 0.0:
                    r = 0.0
                sig = sqrt(h[k] * r)
                xn = (xi + mu * dt[k]) + sig * dw
                if xn > hi[k]:
                    xn = hi[k]
                    clamped += 1
                elif xn < lo[k]:
                    xn = lo[k]
                    clamped += 1
                pos = store_pos[k]
                if pos >= 0:
                    out[i, pos] = xn
                xi = xn
            x[i] = xi
    return clamped


def step_conic(double[::1] x, double[:, ::1] z, double[::1] h, double[::1] b2,
               double[::1] dt, double[::1] sqdt, double[::1] lo, double[::1] hi,
               int64_t[::1] store_pos, double[:, ::1] out):
    cdef Py_ssize_t n_paths = x.shape[0]
    cdef Py_ssize_t n_steps = z.shape[1]
    cdef Py_ssize_t i, k
    cdef int64_t pos
    cdef long long clamped = 0
    cdef double xi, dw, r, sig, xn
    with nogil:
        for i in range(n_paths):
            xi = x[i]
            for k in range(n_steps):
                dw = z[i, k] * sqdt[k]
                r = b2[k] - xi * xi
                if r < 0.0:
                    r = 0.0
                sig = sqrt(h[k] * r)
                xn = xi + sig * dw
                if xn > hi[k]:
                    xn = hi[k]
                    clamped += 1
                elif xn < lo[k]:
                    xn = lo[k]
                    clamped += 1
                pos = store_pos[k]
                if pos >= 0:
                    out[i, pos] = xn
                xi = xn
            x[i] = xi
    return clamped
