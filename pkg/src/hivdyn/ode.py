"""Target-cell limited viral dynamics, original and rescaled forms.

Original model (cells T, infected cells T*, virus V)::

    T'  = lambda - dT*T - (1 - gamma(t)) k T V
    T*' = (1 - gamma(t)) k T V - delta T*
    V'  = N delta T* - c V

Rescaled with Tr = (dT/lambda) T, Tr* = (delta/lambda) T*, Vr = (k/dT) V::

    Tr'  = dT (1 - Tr - (1 - gamma) Tr Vr)
    Tr*' = delta ((1 - gamma) Tr Vr - Tr*)
    Vr'  = c (R0 Tr* - Vr),          R0 = k N lambda / (c dT)

Observed viral load is ``1e4 * rho * Vr`` copies/mL.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np
from numba import njit

from . import solver
from .efficacy import EfficacyInputs, gamma_packed
from .errors import (
    ConvergenceError,
    DivergenceError,
    DomainError,
    EvaluationError,
    InfeasibleSteadyStateError,
    NonFiniteInputError,
)

PARAM_NAMES = ("phi", "c", "delta", "dT", "rho", "R0")
LOG_PARAM_NAMES = tuple(f"log_{p}" for p in PARAM_NAMES)

VL_SCALE = 1.0e4
"""Copies/mL represented by one unit of rho * Vr."""

GammaLike = Union[float, Callable[[float], float]]


class State(NamedTuple):
    t_cells: float
    infected_cells: float
    virus: float


@dataclass(frozen=True)
class DynamicParams:
    """Log-scale per-subject parameters (phi, c, delta, dT, rho, R0)."""

    log_phi: float
    log_c: float
    log_delta: float
    log_dT: float
    log_rho: float
    log_R0: float

    def __post_init__(self):
        for name in LOG_PARAM_NAMES:
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise NonFiniteInputError(f"{name} is not finite")
            object.__setattr__(self, name, v)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> DynamicParams:
        if len(values) != 6:
            raise ValueError("expected 6 log-parameters")
        return cls(*(float(v) for v in values))

    @classmethod
    def from_natural(cls, phi, c, delta, dT, rho, R0) -> DynamicParams:
        vals = (phi, c, delta, dT, rho, R0)
        if any(not v > 0 for v in vals):
            raise DomainError("natural-scale parameters must be positive")
        return cls(*(math.log(v) for v in vals))

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in LOG_PARAM_NAMES])

    def natural(self) -> dict[str, float]:
        return {p: math.exp(getattr(self, f"log_{p}")) for p in PARAM_NAMES}

    phi = property(lambda self: math.exp(self.log_phi))
    c = property(lambda self: math.exp(self.log_c))
    delta = property(lambda self: math.exp(self.log_delta))
    dT = property(lambda self: math.exp(self.log_dT))
    rho = property(lambda self: math.exp(self.log_rho))
    R0 = property(lambda self: math.exp(self.log_R0))


@dataclass(frozen=True)
class OriginalParams:
    lam: float
    d_T: float
    k: float
    delta: float
    n_burst: float
    c: float

    def __post_init__(self):
        for name in ("lam", "d_T", "k", "delta", "n_burst", "c"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DomainError(f"{name} must be positive and finite, got {v}")

    @property
    def R0(self) -> float:
        return self.k * self.n_burst * self.lam / (self.c * self.d_T)

    def rescale(self, state) -> np.ndarray:
        """Map an original-scale state (T, T*, V) to rescaled variables."""
        y = np.asarray(state, dtype=float)
        return np.array(
            [self.d_T / self.lam * y[..., 0], self.delta / self.lam * y[..., 1], self.k / self.d_T * y[..., 2]]
        ).T

    def to_dynamic(self, phi: float = 1.0, rho: float = 1.0) -> DynamicParams:
        """Rescaled-model parameters; phi and rho do not enter the ODE itself."""
        return DynamicParams.from_natural(phi, self.c, self.delta, self.d_T, rho, self.R0)


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-6
    abs_tol: float = 1e-8
    max_steps: int = 20_000
    breakpoints: tuple[float, ...] = ()

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.max_steps < 1:
            raise DomainError("max_steps must be positive")
        bp = tuple(float(b) for b in self.breakpoints)
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise DomainError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)


# Viral loads are compared on the log10 scale, so predictions need relative
# accuracy even after many orders of magnitude of decline.
PREDICTION_CONFIG = IntegratorConfig(rel_tol=1e-6, abs_tol=1e-200)


def _gamma_fn(gamma: GammaLike) -> Callable[[float], float]:
    if callable(gamma):
        return gamma
    g = float(gamma)
    return lambda t: g


def _check_finite(*values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise NonFiniteInputError("non-finite input")


def rhs_rescaled(state, t: float, params: DynamicParams, gamma: GammaLike) -> np.ndarray:
    tt, ti, v = (float(x) for x in state)
    _check_finite(tt, ti, v, t)
    g = _gamma_fn(gamma)(t)
    dT, delta, c, r0 = params.dT, params.delta, params.c, params.R0
    infect = (1.0 - g) * tt * v
    return np.array([dT * (1.0 - tt - infect), delta * (infect - ti), c * (r0 * ti - v)])


def rhs_original(state, t: float, params: OriginalParams, gamma: GammaLike) -> np.ndarray:
    T, Ti, V = (float(x) for x in state)
    _check_finite(T, Ti, V, t)
    g = _gamma_fn(gamma)(t)
    p = params
    infect = (1.0 - g) * p.k * T * V
    return np.array(
        [p.lam - p.d_T * T - infect, infect - p.delta * Ti, p.n_burst * p.delta * Ti - p.c * V]
    )


def initial_state_rescaled(v0_tilde: float) -> State:
    if not v0_tilde >= 0:
        raise DomainError(f"initial rescaled viral load must be >= 0, got {v0_tilde}")
    return State(1.0 / (1.0 + v0_tilde), v0_tilde / (1.0 + v0_tilde), float(v0_tilde))


def initial_state_original(params: OriginalParams) -> State:
    p = params
    v0 = p.lam * p.n_burst / p.c - p.d_T / p.k
    if not v0 > 0:
        raise InfeasibleSteadyStateError(
            f"steady-state viral load {v0:.6g} <= 0; virus cannot persist (R0 = {p.R0:.6g})"
        )
    return State(p.c / (p.k * p.n_burst), p.c * v0 / (p.delta * p.n_burst), v0)


def efficacy_threshold(r0: float) -> float:
    if not r0 > 0:
        raise DomainError(f"R0 must be positive, got {r0}")
    return 1.0 - 1.0 / r0


def half_life(rate: float) -> float:
    if not rate > 0:
        raise DomainError(f"rate must be positive, got {rate}")
    return math.log(2.0) / rate


# ---------------------------------------------------------------- integration


def _raise_for_status(status: int, n_steps: int):
    if status == solver.STATUS_MAX_STEPS:
        raise ConvergenceError(f"step budget exhausted after {n_steps} steps")
    if status == solver.STATUS_DIVERGED:
        raise DivergenceError(f"non-finite state after {n_steps} steps")


def integrate(rhs, state0, times, config: IntegratorConfig | None = None, args=None) -> np.ndarray:
    """Integrate ``rhs`` and return the state at each of ``times``.

    ``rhs`` is either a plain callable ``rhs(t, y)`` returning the
    derivative or, when ``args`` is given, a function ``rhs(t, y, args, dy)``
    filling ``dy`` in place; numba-compiled functions of the latter form run
    through the compiled solver.
    """
    config = config or IntegratorConfig()
    y0 = np.array(state0, dtype=float)
    times = np.asarray(times, dtype=float)
    _check_finite(y0, times)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("times must be a nonempty 1-d grid")
    if np.any(np.diff(times) < 0):
        raise DomainError("times must be nondecreasing")
    breaks = np.asarray(config.breakpoints, dtype=float)
    out = np.empty((times.size, y0.size))
    if args is not None and solver.is_compiled(rhs):
        status, n_steps = solver.solve_jit(
            rhs, args, y0, times, breaks, config.rel_tol, config.abs_tol, config.max_steps, out
        )
    else:
        if args is None:
            def fn(t, y, _a, dy):
                dy[:] = rhs(t, y)
        else:
            fn = rhs.py_func if solver.is_compiled(rhs) else rhs
        status, n_steps = solver.solve_py(
            fn, args, y0, times, breaks, config.rel_tol, config.abs_tol, config.max_steps, out
        )
    _raise_for_status(status, n_steps)
    return out


def integrate_fixed(rhs, state0, t_end: float, n_steps: int, args=None) -> np.ndarray:
    """Fixed-step fifth-order integration from t=0 to ``t_end``; no error control."""
    y0 = np.array(state0, dtype=float)
    if args is not None and solver.is_compiled(rhs):
        return solver.fixed_jit(rhs, args, y0, 0.0, float(t_end), int(n_steps))
    if args is None:
        def fn(t, y, _a, dy):
            dy[:] = rhs(t, y)
    else:
        fn = rhs.py_func if solver.is_compiled(rhs) else rhs
    return solver.fixed_py(fn, args, y0, 0.0, float(t_end), int(n_steps))


# ------------------------------------------------------------ compiled kernels


@njit(nogil=True, cache=True)
def rescaled_rhs_kernel(t, y, args, out):
    """Rescaled model with efficacy built from packed inputs.

    ``args = (dT, delta, c, R0, phi, drug_params, visits, rates)``.
    """
    dT, delta, c, r0, phi, drug_params, visits, rates = args
    g = gamma_packed(t, phi, drug_params, visits, rates)
    infect = (1.0 - g) * y[0] * y[2]
    out[0] = dT * (1.0 - y[0] - infect)
    out[1] = delta * (infect - y[1])
    out[2] = c * (r0 * y[1] - y[2])


@njit(nogil=True, cache=True)
def rescaled_rhs_const_kernel(t, y, args, out):
    """Rescaled model with constant efficacy; ``args = (dT, delta, c, R0, gamma0)``."""
    dT, delta, c, r0, g = args
    infect = (1.0 - g) * y[0] * y[2]
    out[0] = dT * (1.0 - y[0] - infect)
    out[1] = delta * (infect - y[1])
    out[2] = c * (r0 * y[1] - y[2])


@njit(nogil=True, cache=True)
def original_rhs_const_kernel(t, y, args, out):
    """Original model, piecewise-constant efficacy on ``edges``.

    ``args = (lam, dT, k, delta, N, c, edges, values)``; ``values[i]`` holds
    on ``(edges[i], edges[i+1]]`` and the last value persists.
    """
    lam, dT, k, delta, nb, c, edges, values = args
    i = 0
    while i + 1 < edges.shape[0] and edges[i + 1] < t:
        i += 1
    g = values[i]
    infect = (1.0 - g) * k * y[0] * y[2]
    out[0] = lam - dT * y[0] - infect
    out[1] = infect - delta * y[1]
    out[2] = nb * delta * y[1] - c * y[2]


@njit(nogil=True, cache=True)
def _initial_rescaled(log10_v0, log_rho):
    v0 = 10.0**log10_v0 / (1.0e4 * np.exp(log_rho))
    y0 = np.empty(3)
    y0[0] = 1.0 / (1.0 + v0)
    y0[1] = v0 / (1.0 + v0)
    y0[2] = v0
    return y0


@njit(nogil=True)
def predict_kernel(theta, log10_v0, times, drug_params, visits, rates, breaks, rtol, atol, max_steps):
    """Predicted log10 viral load at ``times``; returns ``(status, values)``.

    Status 3 flags a nonpositive viral level at an output time.
    """
    args = (
        np.exp(theta[3]),
        np.exp(theta[2]),
        np.exp(theta[1]),
        np.exp(theta[5]),
        np.exp(theta[0]),
        drug_params,
        visits,
        rates,
    )
    y0 = _initial_rescaled(log10_v0, theta[4])
    out = np.empty((times.shape[0], 3))
    status, _ = solver.solve_jit(rescaled_rhs_kernel, args, y0, times, breaks, rtol, atol, max_steps, out)
    f = np.empty(times.shape[0])
    if status != 0:
        f[:] = np.nan
        return status, f
    scale = 1.0e4 * np.exp(theta[4])
    for j in range(times.shape[0]):
        v = out[j, 2]
        if not v > 0.0:
            f[:] = np.nan
            return 3, f
        f[j] = np.log10(scale * v)
    return 0, f


@njit(nogil=True)
def residual_ss_kernel(theta, y_obs, times, drug_params, visits, rates, breaks, rtol, atol, max_steps):
    """Sum of squared residuals, ``inf`` when the prediction fails.

    ``times[0]`` must be 0 and ``y_obs[0]`` is the baseline that fixes Vr(0).
    """
    status, f = predict_kernel(
        theta, y_obs[0], times, drug_params, visits, rates, breaks, rtol, atol, max_steps
    )
    if status != 0:
        return np.inf
    ss = 0.0
    for j in range(y_obs.shape[0]):
        r = y_obs[j] - f[j]
        ss += r * r
    return ss


def predict_log10_viral_load(
    theta: DynamicParams | np.ndarray,
    inputs: EfficacyInputs,
    baseline_vl: float,
    times,
    config: IntegratorConfig | None = None,
) -> np.ndarray:
    """Model log10 viral load (copies/mL) at ``times`` for one subject.

    The rescaled initial state is pinned by the baseline load:
    ``Vr(0) = baseline_vl / (1e4 * rho)``.
    """
    if not baseline_vl > 0:
        raise DomainError(f"baseline viral load must be positive, got {baseline_vl}")
    config = config or PREDICTION_CONFIG
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0 or np.any(np.diff(times) < 0) or times[0] < 0:
        raise DomainError("times must be a nonempty nondecreasing grid of days >= 0")
    grid = times if times[0] == 0.0 else np.concatenate(([0.0], times))
    breaks = np.union1d(inputs.breakpoints(), np.asarray(config.breakpoints, dtype=float))
    theta = theta.as_array() if isinstance(theta, DynamicParams) else np.asarray(theta, dtype=float)
    status, f = predict_kernel(
        theta,
        math.log10(baseline_vl),
        grid,
        *inputs.packed,
        breaks,
        config.rel_tol,
        config.abs_tol,
        config.max_steps,
    )
    if status == 3:
        raise EvaluationError("predicted viral level is not positive")
    _raise_for_status(status, 0)
    return f if grid is times else f[1:]


def gamma_series(inputs: EfficacyInputs, phi: float, times) -> np.ndarray:
    """Efficacy evaluated on a grid through the compiled path."""
    dp, vi, ra = inputs.packed
    return np.array([gamma_packed(float(t), phi, dp, vi, ra) for t in np.asarray(times, dtype=float)])
