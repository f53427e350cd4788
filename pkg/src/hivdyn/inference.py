"""Hierarchical Bayesian nonlinear mixed-effects model and its sampler.

Three stages::

    y_i | theta_i, sigma^2  ~ N(f_i(theta_i), sigma^2 I)
    theta_i | mu, Sigma     ~ N(mu, Sigma)
    sigma^-2 ~ Ga(a, b),  mu ~ N(eta, Lambda),  Sigma^-1 ~ Wi(Omega, nu)

The Gamma distribution uses the shape-scale parameterization, so the prior
mean of sigma^-2 is ``a * b``.  sigma^-2, mu and Sigma^-1 are drawn from their
conjugate full conditionals; each theta_i is updated by a random-walk
Metropolis-Hastings step on the log-parameter scale.
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .errors import ChainAbortError, DomainError, LinAlgError
from .ode import LOG_PARAM_NAMES, PREDICTION_CONFIG, DynamicParams, IntegratorConfig, residual_ss_kernel
from .records import SubjectRecord

log = logging.getLogger(__name__)

PAPER_ETA = (4.0, 1.1, -1.0, -2.5, 1.4, 0.28)


@dataclass(frozen=True)
class Hyperpriors:
    a: float = 4.5
    b: float = 9.0
    eta: np.ndarray = field(default_factory=lambda: np.array(PAPER_ETA))
    lam: np.ndarray = field(default_factory=lambda: np.diag(np.full(6, 1000.0)))
    omega: np.ndarray = field(default_factory=lambda: np.diag(np.full(6, 2.0)))
    nu: float = 8.0

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        lam = np.atleast_2d(np.asarray(self.lam, dtype=float))
        omega = np.atleast_2d(np.asarray(self.omega, dtype=float))
        p = eta.size
        if not (self.a > 0 and self.b > 0):
            raise DomainError("Gamma hyperparameters must be positive")
        for name, m in (("lam", lam), ("omega", omega)):
            if m.shape != (p, p) or not np.allclose(m, m.T):
                raise DomainError(f"{name} must be a symmetric {p}x{p} matrix")
            try:
                np.linalg.cholesky(m)
            except np.linalg.LinAlgError:
                raise DomainError(f"{name} must be positive definite") from None
        if not self.nu > p - 1:
            raise DomainError(f"Wishart degrees of freedom must exceed {p - 1}")
        for name, v in (("eta", eta), ("lam", lam), ("omega", omega)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.eta.size

    def __eq__(self, other):
        if not isinstance(other, Hyperpriors):
            return NotImplemented
        return (
            self.a == other.a
            and self.b == other.b
            and self.nu == other.nu
            and np.array_equal(self.eta, other.eta)
            and np.array_equal(self.lam, other.lam)
            and np.array_equal(self.omega, other.omega)
        )

    __hash__ = None


@dataclass(frozen=True)
class PopulationState:
    mu: np.ndarray
    sigma_inv: np.ndarray
    error_prec: float

    def __post_init__(self):
        if not self.error_prec > 0:
            raise DomainError("error precision must be positive")


@dataclass(frozen=True)
class SubjectState:
    """Current theta_i with its cached residual sum of squares.

    The residual sum is cached rather than the log-likelihood, which would go
    stale every time sigma^-2 is redrawn.
    """

    theta: np.ndarray
    residual_ss: float
    n_obs: int
    step_scales: np.ndarray

    def log_likelihood(self, error_prec: float) -> float:
        return _gaussian_loglik(self.residual_ss, self.n_obs, error_prec)

    @property
    def params(self) -> DynamicParams:
        return DynamicParams.from_array(self.theta)


@dataclass(frozen=True)
class MCMCConfig:
    burn_in: int = 30_000
    post_iterations: int = 120_000
    thin: int = 5
    seed: int = 0
    adapt_during_burn_in: bool = True
    target_accept: float = 0.30
    initial_step: float = 0.05
    proposal: str = "diagonal"
    population_shift: bool = False

    def __post_init__(self):
        if self.proposal not in ("diagonal", "full"):
            raise DomainError("proposal must be 'diagonal' or 'full'")
        if self.burn_in < 0 or self.post_iterations < 1 or self.thin < 1:
            raise DomainError("burn_in >= 0, post_iterations >= 1 and thin >= 1 required")
        if not 0 < self.target_accept < 1:
            raise DomainError("target acceptance must lie in (0, 1)")

    @property
    def n_retained(self) -> int:
        return self.post_iterations // self.thin


@dataclass
class ChainOutput:
    """Retained draws.  ``theta`` has shape (n_subjects, n_draws, dim)."""

    subject_ids: tuple[str, ...]
    mu: np.ndarray
    sigma_inv: np.ndarray
    error_prec: np.ndarray
    theta: np.ndarray
    acceptance_rates: np.ndarray
    step_scales: np.ndarray
    config: MCMCConfig
    priors: Hyperpriors
    param_names: tuple[str, ...] = LOG_PARAM_NAMES
    iterations_completed: int = 0
    shift_acceptance: float = math.nan
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.mu.shape[0]

    @property
    def population_draws(self) -> dict[str, np.ndarray]:
        return {"mu": self.mu, "sigma_inv": self.sigma_inv, "error_prec": self.error_prec}

    @property
    def subject_draws(self) -> dict[str, np.ndarray]:
        return {sid: self.theta[i] for i, sid in enumerate(self.subject_ids)}


# ------------------------------------------------------------------ models


class ViralLoadModel:
    """Forward model f_i(theta_i): rescaled ODE seeded by the day-0 load."""

    def __init__(self, config: IntegratorConfig | None = None):
        self.config = config or PREDICTION_CONFIG

    def validate(self, subject: SubjectRecord):
        if subject.n_obs < 2:
            raise DomainError(f"subject {subject.subject_id} needs at least 2 observations")

    def n_obs(self, subject) -> int:
        return subject.n_obs

    def residual_ss(self, theta: np.ndarray, subject: SubjectRecord) -> float:
        a = subject.arrays
        c = self.config
        return residual_ss_kernel(
            theta, a.y, a.times, a.drug_params, a.visits, a.rates, a.breaks, c.rel_tol, c.abs_tol, c.max_steps
        )


@dataclass(frozen=True)
class LinearSubject:
    """Subject for the linear surrogate model, ``y ~ N(design @ theta, sigma^2)``."""

    subject_id: str
    y: np.ndarray
    design: np.ndarray


class LinearModel:
    """f_i(theta) = X_i theta; makes every full conditional Gaussian."""

    def validate(self, subject):
        pass

    def n_obs(self, subject) -> int:
        return len(subject.y)

    def residual_ss(self, theta, subject) -> float:
        r = subject.y - subject.design @ theta
        return float(r @ r)


def _gaussian_loglik(ssr: float, m: int, error_prec: float) -> float:
    if not math.isfinite(ssr):
        return -math.inf
    return 0.5 * m * math.log(error_prec / (2 * math.pi)) - 0.5 * error_prec * ssr


def log_likelihood_subject(theta, subject, error_prec: float, model=None) -> float:
    """Gaussian log-density of a subject's loads; ``-inf`` if the solver fails."""
    model = model or ViralLoadModel()
    theta = _as_theta(theta)
    return _gaussian_loglik(model.residual_ss(theta, subject), model.n_obs(subject), error_prec)


def log_target_theta(theta, subject, pop: PopulationState, model=None) -> float:
    """Unnormalized log full conditional of theta_i."""
    model = model or ViralLoadModel()
    theta = _as_theta(theta)
    ssr = model.residual_ss(theta, subject)
    if not math.isfinite(ssr):
        return -math.inf
    d = theta - pop.mu
    return -0.5 * pop.error_prec * ssr - 0.5 * d @ pop.sigma_inv @ d


def _as_theta(theta) -> np.ndarray:
    if isinstance(theta, DynamicParams):
        return theta.as_array()
    return np.asarray(theta, dtype=float)


# ----------------------------------------------------------- Gibbs updates


def sample_error_precision(residual_ss: float, total_obs: int, priors: Hyperpriors, rng) -> float:
    shape = priors.a + total_obs / 2.0
    scale = 1.0 / (1.0 / priors.b + residual_ss / 2.0)
    return float(rng.gamma(shape, scale))


def _cholesky(m: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        raise LinAlgError(f"{what} is not positive definite") from None


def sample_population_mean(thetas: np.ndarray, sigma_inv: np.ndarray, priors: Hyperpriors, rng) -> np.ndarray:
    thetas = np.atleast_2d(thetas)
    n = thetas.shape[0]
    lam_inv = np.linalg.inv(priors.lam)
    prec = n * sigma_inv + lam_inv
    chol = _cholesky(prec, "conditional precision of mu")
    rhs = sigma_inv @ thetas.sum(axis=0) + lam_inv @ priors.eta
    # mean = prec^-1 rhs, draw = mean + L^-T z
    mean = np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    z = rng.standard_normal(priors.dim)
    return mean + np.linalg.solve(chol.T, z)


def wishart_draw(scale: np.ndarray, df: float, rng) -> np.ndarray:
    """Bartlett-decomposition draw from Wishart(scale, df); mean is df * scale."""
    p = scale.shape[0]
    chol = _cholesky(scale, "Wishart scale")
    a = np.zeros((p, p))
    a[np.diag_indices(p)] = np.sqrt(rng.chisquare(df - np.arange(p)))
    a[np.tril_indices(p, -1)] = rng.standard_normal(p * (p - 1) // 2)
    la = chol @ a
    w = la @ la.T
    return 0.5 * (w + w.T)


def sample_population_precision(thetas: np.ndarray, mu: np.ndarray, priors: Hyperpriors, rng) -> np.ndarray:
    thetas = np.atleast_2d(thetas)
    n = thetas.shape[0]
    d = thetas - mu
    inner = np.linalg.inv(priors.omega) + d.T @ d
    scale = np.linalg.inv(inner)
    scale = 0.5 * (scale + scale.T)
    return wishart_draw(scale, n + priors.nu, rng)


# ------------------------------------------------------------ M-H update


def mh_step_theta(
    state: SubjectState,
    subject,
    pop: PopulationState,
    rng,
    model=None,
    prior_only: bool = False,
) -> tuple[SubjectState, bool]:
    """One joint random-walk proposal for theta_i.

    ``step_scales`` is either a vector of per-coordinate standard deviations
    or a lower-triangular factor ``L`` of the proposal covariance ``L L^T``.
    """
    model = model or ViralLoadModel()
    z = rng.standard_normal(state.theta.size)
    step = state.step_scales
    prop = state.theta + (step @ z if step.ndim == 2 else step * z)
    ssr_new = 0.0 if prior_only else model.residual_ss(prop, subject)
    log_u = math.log(1.0 - rng.random())  # drawn unconditionally to keep streams aligned
    if not math.isfinite(ssr_new):
        return state, False
    d_old = state.theta - pop.mu
    d_new = prop - pop.mu
    log_ratio = -0.5 * pop.error_prec * (ssr_new - state.residual_ss) - 0.5 * (
        d_new @ pop.sigma_inv @ d_new - d_old @ pop.sigma_inv @ d_old
    )
    if log_u < log_ratio:
        return replace(state, theta=prop, residual_ss=ssr_new), True
    return state, False


def population_shift_step(
    states: Sequence[SubjectState],
    pop: PopulationState,
    priors: Hyperpriors,
    step: np.ndarray,
    rng,
    residual_fn: Callable[[np.ndarray], list[float]],
) -> tuple[list[SubjectState], np.ndarray, bool]:
    """Translate mu and every theta_i by one common random-walk increment.

    The deviations theta_i - mu are unchanged, so the ratio involves only the
    likelihood and the prior on mu.  ``residual_fn`` maps the stacked shifted
    thetas to their residual sums of squares.
    """
    d = step * rng.standard_normal(pop.mu.size)
    log_u = math.log(1.0 - rng.random())
    thetas = np.array([st.theta for st in states]) + d
    ssr_new = residual_fn(thetas)
    if not all(math.isfinite(x) for x in ssr_new):
        return list(states), pop.mu, False
    lam_inv = np.linalg.inv(priors.lam)
    old = pop.mu - priors.eta
    new = old + d
    log_ratio = -0.5 * pop.error_prec * (math.fsum(ssr_new) - math.fsum(st.residual_ss for st in states)) - 0.5 * (
        new @ lam_inv @ new - old @ lam_inv @ old
    )
    if log_u < log_ratio:
        moved = [replace(st, theta=th, residual_ss=r) for st, th, r in zip(states, thetas, ssr_new)]
        return moved, pop.mu + d, True
    return list(states), pop.mu, False


# -------------------------------------------------------------- the chain


def _subject_key(subject_id: str) -> int:
    return int.from_bytes(hashlib.sha256(subject_id.encode()).digest()[:8], "little")


class _Adapter:
    """Burn-in tuning of one subject's random-walk proposal.

    A Robbins-Monro recursion drives a global log-multiplier towards the
    target acceptance rate.  The proposal shape follows the chain's running
    spread: per-coordinate standard deviations for a diagonal proposal, or a
    Cholesky factor of the running covariance for a full one.
    """

    SHAPE_START = 500
    SHAPE_EVERY = 200

    def __init__(self, p: int, initial_step: float, full: bool = False):
        self.full = full
        self.log_factor = 0.0
        self.shape = np.eye(p) * initial_step if full else np.full(p, initial_step)
        self.count = 0
        self.mean = np.zeros(p)
        self.m2 = np.zeros((p, p)) if full else np.zeros(p)

    def _log_size(self, shape) -> float:
        return float(np.sum(np.log(np.diag(shape) if self.full else shape)))

    def update(self, it: int, accepted: bool, theta: np.ndarray, target: float) -> np.ndarray:
        self.log_factor += (float(accepted) - target) / (it + 1) ** 0.6
        if it >= self.SHAPE_START:
            self.count += 1
            delta = theta - self.mean
            self.mean += delta / self.count
            after = theta - self.mean
            self.m2 += np.outer(delta, after) if self.full else delta * after
            if self.count >= self.SHAPE_EVERY and self.count % self.SHAPE_EVERY == 0:
                p = theta.size
                if self.full:
                    cov = self.m2 / (self.count - 1)
                    cov = 0.5 * (cov + cov.T) + 1e-8 * np.eye(p)
                    new_shape = np.linalg.cholesky(cov) * 2.38 / math.sqrt(p)
                else:
                    new_shape = np.maximum(np.sqrt(self.m2 / (self.count - 1)), 1e-4) * 2.38 / math.sqrt(p)
                # keep the realized step volume continuous across shape changes
                self.log_factor += (self._log_size(self.shape) - self._log_size(new_shape)) / p
                self.shape = new_shape
        return self.shape * math.exp(self.log_factor)


@dataclass
class InitialValues:
    theta: np.ndarray | None = None
    mu: np.ndarray | None = None
    sigma_inv: np.ndarray | None = None
    error_prec: float | None = None


def run_chain(
    dataset: Sequence,
    priors: Hyperpriors | None = None,
    config: MCMCConfig | None = None,
    *,
    model=None,
    workers: int = 1,
    init: InitialValues | None = None,
    prior_only: bool = False,
    progress: Callable[[int, int], None] | None = None,
    progress_every: int = 1000,
) -> ChainOutput:
    """Gibbs-within-Metropolis sampler over all subjects.

    Each sweep draws sigma^-2, mu and Sigma^-1 from their full conditionals and
    then makes one M-H proposal per subject.  With ``population_shift`` the
    sweep ends with a joint translation of mu and all theta_i, which moves the
    population along directions the per-subject updates explore slowly.  Subjects are processed in
    sorted-id order and each owns an RNG stream keyed by its id, so the output
    depends only on the seed, not on input order or worker count.

    ``prior_only`` drops the likelihood entirely, so the chain targets the
    prior; ``init`` overrides the default start at the prior means.
    """
    priors = priors or Hyperpriors()
    config = config or MCMCConfig()
    model = model or ViralLoadModel()
    if len(dataset) == 0:
        raise DomainError("dataset is empty")
    subjects = sorted(dataset, key=lambda s: s.subject_id)
    ids = tuple(s.subject_id for s in subjects)
    if len(set(ids)) != len(ids):
        raise DomainError("subject ids must be unique")
    if not prior_only:
        for s in subjects:
            model.validate(s)
    n, p = len(subjects), priors.dim
    init = init or InitialValues()

    ss = np.random.SeedSequence(config.seed)
    pop_rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(ss.entropy, spawn_key=(0,))))
    subj_rngs = [
        np.random.Generator(np.random.PCG64(np.random.SeedSequence(ss.entropy, spawn_key=(1, _subject_key(sid)))))
        for sid in ids
    ]

    theta0 = np.broadcast_to(priors.eta if init.theta is None else init.theta, (n, p))
    n_obs = [0 if prior_only else model.n_obs(s) for s in subjects]
    states = []
    for i, s in enumerate(subjects):
        th = np.array(theta0[i], dtype=float)
        ssr = 0.0 if prior_only else model.residual_ss(th, s)
        if not math.isfinite(ssr):
            raise DomainError(f"initial parameters give no valid prediction for subject {ids[i]}")
        full = config.proposal == "full"
        step0 = np.eye(p) * config.initial_step if full else np.full(p, config.initial_step)
        states.append(SubjectState(th, ssr, n_obs[i], step0))
    adapters = [_Adapter(p, config.initial_step, config.proposal == "full") for _ in range(n)]
    shift_adapter = _Adapter(p, config.initial_step)
    shift_step = np.full(p, config.initial_step)
    shift_accepts = 0

    mu = np.array(priors.eta if init.mu is None else init.mu, dtype=float)
    sigma_inv = np.array(priors.nu * priors.omega if init.sigma_inv is None else init.sigma_inv, dtype=float)
    error_prec = priors.a * priors.b if init.error_prec is None else float(init.error_prec)
    total_obs = sum(n_obs)

    k = config.n_retained
    out_mu = np.empty((k, p))
    out_sigma_inv = np.empty((k, p, p))
    out_prec = np.empty(k)
    out_theta = np.empty((n, k, p))
    accepts = np.zeros(n, dtype=np.int64)
    n_total = config.burn_in + config.post_iterations
    kept = 0

    def make_output(completed: int) -> ChainOutput:
        post = max(completed - config.burn_in, 0)
        rates = accepts / post if post else np.zeros(n)
        shift_rate = shift_accepts / post if post and config.population_shift else math.nan
        return ChainOutput(
            subject_ids=ids,
            mu=out_mu[:kept].copy(),
            sigma_inv=out_sigma_inv[:kept].copy(),
            error_prec=out_prec[:kept].copy(),
            theta=out_theta[:, :kept].copy(),
            acceptance_rates=np.repeat(rates[:, None], p, axis=1),
            step_scales=np.array([st.step_scales for st in states]),
            config=config,
            priors=priors,
            param_names=LOG_PARAM_NAMES if p == 6 else tuple(f"theta_{j + 1}" for j in range(p)),
            iterations_completed=completed,
            shift_acceptance=shift_rate,
        )

    executor = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def residuals(thetas):
        if prior_only:
            return [0.0] * n
        calc = lambda i: model.residual_ss(thetas[i], subjects[i])  # noqa: E731
        return list(executor.map(calc, range(n))) if executor else [calc(i) for i in range(n)]

    try:
        for it in range(n_total):
            try:
                ssr_total = math.fsum(st.residual_ss for st in states)
                error_prec = sample_error_precision(ssr_total, total_obs, priors, pop_rng)
                thetas = np.array([st.theta for st in states])
                mu = sample_population_mean(thetas, sigma_inv, priors, pop_rng)
                sigma_inv = sample_population_precision(thetas, mu, priors, pop_rng)
            except LinAlgError as exc:
                raise ChainAbortError(str(exc), it, make_output(it)) from exc
            pop = PopulationState(mu, sigma_inv, error_prec)

            def update(i, pop=pop):
                return mh_step_theta(states[i], subjects[i], pop, subj_rngs[i], model, prior_only)

            results = list(executor.map(update, range(n))) if executor else [update(i) for i in range(n)]
            adapting = config.adapt_during_burn_in and it < config.burn_in
            for i, (st, acc) in enumerate(results):
                if adapting:
                    st = replace(st, step_scales=adapters[i].update(it, acc, st.theta, config.target_accept))
                elif it >= config.burn_in and acc:
                    accepts[i] += 1
                states[i] = st
            if config.population_shift:
                pop = PopulationState(mu, sigma_inv, error_prec)
                states, mu, acc = population_shift_step(states, pop, priors, shift_step, pop_rng, residuals)
                if adapting:
                    shift_step = shift_adapter.update(it, acc, mu, config.target_accept)
                elif it >= config.burn_in and acc:
                    shift_accepts += 1
            if it >= config.burn_in and (it - config.burn_in + 1) % config.thin == 0 and kept < k:
                out_mu[kept] = mu
                out_sigma_inv[kept] = sigma_inv
                out_prec[kept] = error_prec
                for i, st in enumerate(states):
                    out_theta[i, kept] = st.theta
                kept += 1
            if progress and (it + 1) % progress_every == 0:
                progress(it + 1, n_total)
    finally:
        if executor:
            executor.shutdown()

    chain = make_output(n_total)
    chain.diagnostics = trace_diagnostics(chain)
    return chain


# ------------------------------------------------------------ diagnostics


def effective_sample_size(x: np.ndarray) -> float:
    """Geyer initial-positive-sequence ESS of a 1-d trace."""
    x = np.asarray(x, dtype=float)
    m = x.size
    if m < 4 or np.var(x) == 0:
        return float(m)
    xc = x - x.mean()
    nfft = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(xc, nfft)
    acf = np.fft.irfft(f * np.conj(f), nfft)[:m]
    acf /= acf[0]
    s = 0.0
    for t in range(0, m - 1, 2):
        pair = acf[t] + acf[t + 1]
        if pair <= 0:
            break
        s += pair
    tau = max(2 * s - 1, 1e-12)
    return float(m / tau)


def geweke_z(x: np.ndarray, first: float = 0.1, last: float = 0.5) -> float:
    """Difference of early and late means in units of its naive standard error."""
    x = np.asarray(x, dtype=float)
    a = x[: int(first * x.size)]
    b = x[int((1 - last) * x.size):]
    if a.size < 2 or b.size < 2:
        return float("nan")
    se = math.sqrt(a.var(ddof=1) / effective_sample_size(a) + b.var(ddof=1) / effective_sample_size(b))
    return float((a.mean() - b.mean()) / se) if se > 0 else 0.0


def trace_diagnostics(chain: ChainOutput) -> dict:
    out = {}
    traces = {name: chain.mu[:, j] for j, name in enumerate(chain.param_names)}
    traces["error_prec"] = chain.error_prec
    for name, tr in traces.items():
        if tr.size == 0:
            continue
        out[name] = {
            "mean": float(tr.mean()),
            "sd": float(tr.std(ddof=1)) if tr.size > 1 else 0.0,
            "ess": effective_sample_size(tr),
            "geweke_z": geweke_z(tr),
        }
    out["acceptance_min"] = float(chain.acceptance_rates.min()) if chain.acceptance_rates.size else float("nan")
    out["acceptance_max"] = float(chain.acceptance_rates.max()) if chain.acceptance_rates.size else float("nan")
    out["shift_acceptance"] = chain.shift_acceptance
    return out


# ---------------------------------------------------------------- summary


@dataclass(frozen=True)
class ParamSummary:
    mean: float
    lower: float
    upper: float


@dataclass(frozen=True)
class CrossSection:
    """Spread of per-subject estimates; ``cv`` is SD / mean in percent."""

    min: float
    median: float
    max: float
    mean: float
    sd: float
    cv: float


@dataclass(frozen=True)
class ChainSummary:
    param_names: tuple[str, ...]
    population: dict[str, ParamSummary]
    subjects: dict[str, dict[str, ParamSummary]]
    across_subjects: dict[str, CrossSection]
    error_sd: ParamSummary


def equal_tail(draws, level: float = 0.95) -> ParamSummary:
    """Mean and equal-tail interval of a 1-d sample."""
    x = np.asarray(draws, dtype=float)
    if x.size == 0:
        raise DomainError("cannot summarize an empty sample")
    alpha = (1.0 - level) / 2.0
    lo, hi = np.quantile(x, [alpha, 1.0 - alpha])
    # a constant sample's mean can wobble in the last ulp; report the value itself
    mean = float(lo) if lo == hi else float(x.mean())
    return ParamSummary(mean, float(lo), float(hi))


def cross_section(values) -> CrossSection:
    v = np.asarray(values, dtype=float)
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    return CrossSection(float(v.min()), float(np.median(v)), float(v.max()), mean, sd, 100.0 * sd / mean)


def summarize(chain: ChainOutput, level: float = 0.95) -> ChainSummary:
    """Natural-scale posterior means and credible intervals.

    Log-scale draws are exponentiated before summarizing, so the reported mean
    is the posterior mean of the natural parameter.
    """
    if chain.n_draws == 0:
        raise DomainError("chain has no retained draws")
    names = _natural_names(chain.param_names)
    population = {n: equal_tail(np.exp(chain.mu[:, j]), level) for j, n in enumerate(names)}
    subjects = {}
    for i, sid in enumerate(chain.subject_ids):
        subjects[sid] = {n: equal_tail(np.exp(chain.theta[i, :, j]), level) for j, n in enumerate(names)}
    across = {n: cross_section([subjects[s][n].mean for s in chain.subject_ids]) for n in names}
    error_sd = equal_tail(1.0 / np.sqrt(chain.error_prec), level)
    return ChainSummary(names, population, subjects, across, error_sd)


def _natural_names(log_names: Sequence[str]) -> tuple[str, ...]:
    return tuple(n[4:] if n.startswith("log_") else n for n in log_names)
