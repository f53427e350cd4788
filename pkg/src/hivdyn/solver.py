"""Embedded Runge-Kutta-Verner 5(6) integrator.

The same routine runs in two modes: compiled by numba when the right-hand
side is itself a numba function (the path used inside the sampler), and as
plain Python for arbitrary callables.  Right-hand sides have the signature
``rhs(t, y, args, dy)`` and write the derivative into ``dy``.

The solution is propagated with the fifth-order weights; the sixth-order
weights serve only for the local error estimate.
"""

from __future__ import annotations

import numpy as np
from numba import njit

STATUS_OK = 0
STATUS_MAX_STEPS = 1
STATUS_DIVERGED = 2

# Verner's 8-stage 6(5) pair.
C = np.array([0.0, 1 / 6, 4 / 15, 2 / 3, 5 / 6, 1.0, 1 / 15, 1.0])
A = np.zeros((8, 8))
A[1, :1] = [1 / 6]
A[2, :2] = [4 / 75, 16 / 75]
A[3, :3] = [5 / 6, -8 / 3, 5 / 2]
A[4, :4] = [-165 / 64, 55 / 6, -425 / 64, 85 / 96]
A[5, :5] = [12 / 5, -8.0, 4015 / 612, -11 / 36, 88 / 255]
A[6, :6] = [-8263 / 15000, 124 / 75, -643 / 680, -81 / 250, 2484 / 10625, 0.0]
A[7, :7] = [3501 / 1720, -300 / 43, 297275 / 52632, -319 / 2322, 24068 / 84065, 0.0, 3850 / 26703]
B5 = np.array([13 / 160, 0.0, 2375 / 5984, 5 / 16, 12 / 85, 3 / 44, 0.0, 0.0])
B6 = np.array([3 / 40, 0.0, 875 / 2244, 23 / 72, 264 / 1955, 0.0, 125 / 11592, 43 / 616])
E = B6 - B5

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 5.0


def _solve(rhs, args, y0, times, breaks, rtol, atol, max_steps, out):
    """Adaptive integration of ``rhs`` from ``times[0]`` over ``times``.

    Fills ``out[j]`` with the state at ``times[j]`` and returns
    ``(status, n_steps)``.  No step crosses an element of ``times`` or
    ``breaks``; at a breakpoint the first stage is evaluated just to the
    right of it so piecewise inputs take their right-hand limit.
    """
    n = y0.shape[0]
    n_out = times.shape[0]
    t0 = times[0]
    t_end = times[n_out - 1]
    y = y0.copy()
    for i in range(n):
        out[0, i] = y[i]
    if n_out == 1 or t_end <= t0:
        for j in range(1, n_out):
            for i in range(n):
                out[j, i] = y[i]
        return STATUS_OK, 0

    k = np.empty((8, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)

    # initial step from the scale of y and y'
    f0 = np.empty(n)
    rhs(t0, y, args, f0)
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d0 = max(d0, abs(y[i]) / sc)
        d1 = max(d1, abs(f0[i]) / sc)
    if d0 < 1e-5 or d1 < 1e-5:
        h = 1e-6
    else:
        h = 0.01 * d0 / d1
    h = min(h, t_end - t0)

    n_steps = 0
    j_out = 1
    i_brk = 0
    n_brk = breaks.shape[0]
    while i_brk < n_brk and breaks[i_brk] <= t0:
        i_brk += 1
    t = t0
    at_break = False
    while j_out < n_out:
        # next stopping point: output time or breakpoint, whichever is first
        stop = times[j_out]
        is_break = False
        if i_brk < n_brk and breaks[i_brk] < stop:
            stop = breaks[i_brk]
            is_break = True
        while t < stop:
            if n_steps >= max_steps:
                return STATUS_MAX_STEPS, n_steps
            n_steps += 1
            h_try = min(h, stop - t)
            # avoid leaving a sliver shorter than a rounding error
            if stop - (t + h_try) < 1e-12 * max(1.0, abs(stop)):
                h_try = stop - t
            t_first = t
            if at_break:
                t_first = t + 1e-10 * max(1.0, abs(t))
            finite = True
            for s in range(8):
                for i in range(n):
                    acc = y[i]
                    for r in range(s):
                        acc += h_try * A[s, r] * k[r, i]
                    ytmp[i] = acc
                ts = t_first if s == 0 else t + C[s] * h_try
                rhs(ts, ytmp, args, k[s])
                for i in range(n):
                    if not np.isfinite(k[s, i]):
                        finite = False
                if not finite:
                    break
            err = 0.0
            if finite:
                for i in range(n):
                    acc5 = 0.0
                    acce = 0.0
                    for s in range(8):
                        acc5 += B5[s] * k[s, i]
                        acce += E[s] * k[s, i]
                    ynew[i] = y[i] + h_try * acc5
                    if not np.isfinite(ynew[i]):
                        finite = False
                    sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
                    err = max(err, abs(h_try * acce) / sc)
            if not finite:
                h = _MIN_FACTOR * h_try
                if h < 1e-14 * max(1.0, abs(t)):
                    return STATUS_DIVERGED, n_steps
                continue
            if err <= 1.0:
                t = stop if h_try == stop - t else t + h_try
                for i in range(n):
                    y[i] = ynew[i]
                at_break = False
                if err == 0.0:
                    fac = _MAX_FACTOR
                else:
                    fac = min(_MAX_FACTOR, max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 6.0)))
                # a step shortened to hit a stop should not shrink the next one
                h = max(h, h_try * fac) if h_try < h else h_try * fac
            else:
                fac = max(_MIN_FACTOR, _SAFETY * err ** (-1.0 / 6.0))
                h = h_try * fac
                if h < 1e-14 * max(1.0, abs(t)):
                    return STATUS_DIVERGED, n_steps
        if is_break:
            i_brk += 1
            at_break = True
        else:
            while j_out < n_out and times[j_out] <= t:
                for i in range(n):
                    out[j_out, i] = y[i]
                j_out += 1
    return STATUS_OK, n_steps


def _fixed(rhs, args, y0, t0, t1, n_steps):
    """Fixed-step fifth-order propagation, used as a convergence reference."""
    n = y0.shape[0]
    y = y0.copy()
    h = (t1 - t0) / n_steps
    k = np.empty((8, n))
    ytmp = np.empty(n)
    for step in range(n_steps):
        t = t0 + step * h
        for s in range(8):
            for i in range(n):
                acc = y[i]
                for r in range(s):
                    acc += h * A[s, r] * k[r, i]
                ytmp[i] = acc
            rhs(t + C[s] * h, ytmp, args, k[s])
        for i in range(n):
            acc = 0.0
            for s in range(8):
                acc += B5[s] * k[s, i]
            y[i] += h * acc
    return y


solve_jit = njit(nogil=True)(_solve)
fixed_jit = njit(nogil=True)(_fixed)
solve_py = _solve
fixed_py = _fixed


def is_compiled(fn) -> bool:
    """True if ``fn`` is a numba dispatcher that compiled kernels can call."""
    return hasattr(fn, "py_func") and hasattr(fn, "signatures")
