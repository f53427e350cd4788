"""Synthetic cohorts and the post-hoc analyses run on fitted subjects."""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
from scipy import stats

from .efficacy import AdherenceProfile, DrugInputs, EfficacyInputs, IC50Profile
from .errors import (
    ConvergenceError,
    DivergenceError,
    DomainError,
    EvaluationError,
    InsufficientDataError,
    UndefinedCorrelationError,
)
from .inference import PAPER_ETA
from .ode import PARAM_NAMES, IntegratorConfig, predict_log10_viral_load
from .records import Baselines, SubjectRecord

STUDY_DAYS = (0, 7, 14, 28, 56, 84, 112, 140, 168)
SUCCESS_THRESHOLD = 200.0  # copies/mL


@dataclass(frozen=True)
class DrugDesign:
    """Lognormal trough and baseline IC50 (ng/mL) for one drug."""

    cmin_median: float
    cmin_log_sd: float
    ic50_median: float
    ic50_log_sd: float


@dataclass(frozen=True)
class EfficacyDesign:
    """Random generator of efficacy inputs.

    With probability ``resistance_prob`` a drug's IC50 climbs linearly by a
    ``fold_range`` factor until a day drawn from ``failure_day_range``.  Each
    visit interval is fully adherent with probability ``full_adherence_prob``
    and otherwise has a rate drawn from ``lapse_rate_range``.
    """

    drugs: tuple[DrugDesign, ...] = (
        DrugDesign(500.0, 0.5, 10.0, 0.4),
        DrugDesign(200.0, 0.5, 12.0, 0.4),
    )
    resistance_prob: float = 0.3
    fold_range: tuple[float, float] = (5.0, 40.0)
    failure_day_range: tuple[float, float] = (28.0, 168.0)
    full_adherence_prob: float = 0.7
    lapse_rate_range: tuple[float, float] = (0.2, 0.9)

    def draw(self, visits: Sequence[float], rng: np.random.Generator) -> EfficacyInputs:
        visits = tuple(sorted(set(float(v) for v in visits)))
        out = []
        for d in self.drugs:
            cmin = d.cmin_median * math.exp(d.cmin_log_sd * rng.standard_normal())
            i0 = d.ic50_median * math.exp(d.ic50_log_sd * rng.standard_normal())
            if rng.random() < self.resistance_prob:
                ic50 = IC50Profile(i0, i0 * rng.uniform(*self.fold_range), rng.uniform(*self.failure_day_range))
            else:
                ic50 = IC50Profile(i0)
            rates = [
                1.0 if rng.random() < self.full_adherence_prob else rng.uniform(*self.lapse_rate_range)
                for _ in range(max(len(visits) - 1, 1))
            ]
            out.append(DrugInputs(cmin, ic50, AdherenceProfile(visits, tuple(rates))))
        return EfficacyInputs(tuple(out))


@dataclass(frozen=True)
class CohortDesign:
    """Generative settings for a synthetic study.

    ``vl_c_slope`` adds ``slope * (baseline log10 VL - mean)`` to each
    subject's log c, to plant a baseline dependence for the correlation tools.
    """

    n_subjects: int = 42
    observation_days: tuple[float, ...] = STUDY_DAYS
    mu_true: np.ndarray = field(default_factory=lambda: np.array(PAPER_ETA))
    sigma_true: np.ndarray = field(default_factory=lambda: 0.04 * np.eye(6))
    error_sd: float = 0.25
    efficacy: EfficacyDesign = field(default_factory=EfficacyDesign)
    baseline_log10_vl: tuple[float, float] = (4.8, 0.6)
    baseline_cd4: tuple[float, float] = (250.0, 0.6)
    vl_c_slope: float = 0.0
    max_redraws: int = 20

    def __post_init__(self):
        days = tuple(float(d) for d in self.observation_days)
        if self.n_subjects < 1:
            raise DomainError("n_subjects must be at least 1")
        if not days or days[0] != 0.0 or any(b < a for a, b in zip(days, days[1:])):
            raise DomainError("observation days must be nondecreasing and start at 0")
        if self.error_sd < 0:
            raise DomainError("error_sd must be nonnegative")
        mu = np.asarray(self.mu_true, dtype=float)
        sigma = np.asarray(self.sigma_true, dtype=float)
        if mu.shape != (6,) or sigma.shape != (6, 6):
            raise DomainError("mu_true must have 6 entries and sigma_true be 6x6")
        try:
            np.linalg.cholesky(sigma)
        except np.linalg.LinAlgError:
            raise DomainError("sigma_true must be positive definite") from None
        object.__setattr__(self, "observation_days", days)
        object.__setattr__(self, "mu_true", mu)
        object.__setattr__(self, "sigma_true", sigma)


class SimulatedCohort(NamedTuple):
    records: list[SubjectRecord]
    true_thetas: dict[str, np.ndarray]
    redraws: dict[str, int]


def simulate_cohort(design: CohortDesign, seed: int, config: IntegratorConfig | None = None) -> SimulatedCohort:
    """Draw subjects from the hierarchical model and observe them with noise.

    The day-0 value is the drawn baseline load itself: it pins the initial
    state, so the model reproduces it exactly and no noise is added there.
    A subject whose parameters cannot be integrated is redrawn, up to
    ``design.max_redraws`` times.
    """
    rng = np.random.default_rng(seed)
    chol = np.linalg.cholesky(design.sigma_true)
    days = np.array(design.observation_days)
    vl_mean, vl_sd = design.baseline_log10_vl
    cd4_med, cd4_sd = design.baseline_cd4
    width = len(str(design.n_subjects - 1))
    records, truths, redraws = [], {}, {}
    for i in range(design.n_subjects):
        sid = f"S{i:0{width}d}"
        inputs = design.efficacy.draw(days, rng)
        vl0 = vl_mean + vl_sd * rng.standard_normal()
        cd4 = cd4_med * math.exp(cd4_sd * rng.standard_normal())
        for attempt in range(design.max_redraws + 1):
            theta = design.mu_true + chol @ rng.standard_normal(6)
            theta[1] += design.vl_c_slope * (vl0 - vl_mean)
            try:
                f = predict_log10_viral_load(theta, inputs, 10.0**vl0, days, config)
            except (ConvergenceError, DivergenceError, EvaluationError):
                continue
            break
        else:
            raise DivergenceError(f"{sid}: no integrable parameters after {design.max_redraws} redraws")
        y = f + design.error_sd * rng.standard_normal(f.size)
        y[days == 0.0] = f[days == 0.0]
        records.append(SubjectRecord(sid, tuple(days), tuple(y), inputs, Baselines(log10_vl=float(vl0), cd4=cd4)))
        truths[sid] = theta
        redraws[sid] = attempt
    return SimulatedCohort(records, truths, redraws)


# ------------------------------------------------------ response status


class ResponseStatus(enum.Enum):
    SUCCESS = "success"
    FAILURE = "failure"
    MISSING = "missing"


def classify_response(
    record: SubjectRecord,
    threshold: float = SUCCESS_THRESHOLD,
    early_day: float = 56.0,
    end_day: float = 168.0,
    min_drop: float = 1.0,
) -> ResponseStatus:
    """Label a subject by the first decisive event in its load sequence.

    "Consecutive" means adjacent measurements in the record.  Success is the
    first pair of loads below ``threshold``.  Early failure is a load at
    ``early_day`` that is at or above ``threshold``, has fallen less than
    ``min_drop`` log10 from baseline and is confirmed by the next load.  A
    record reaching ``end_day`` with no success pair by then is a failure.
    Anything else is missing.
    """
    days = np.asarray(record.days)
    y = np.asarray(record.log10_vl)
    cut = math.log10(threshold)
    below = y < cut

    success_at = math.inf
    for j in range(len(y) - 1):
        if below[j] and below[j + 1] and days[j + 1] <= end_day:
            success_at = days[j + 1]
            break

    failure_at = math.inf
    hits = np.flatnonzero(days == early_day)
    if hits.size and hits[0] + 1 < len(y):
        j = hits[0]
        if not below[j] and not below[j + 1] and record.baseline_log10_vl - y[j] < min_drop:
            failure_at = days[j + 1]

    if success_at < failure_at:
        return ResponseStatus.SUCCESS
    if failure_at < math.inf:
        return ResponseStatus.FAILURE
    if days.size and days[-1] >= end_day:
        return ResponseStatus.FAILURE
    return ResponseStatus.MISSING


# ---------------------------------------------------------- statistics


class StatResult(NamedTuple):
    statistic: float
    pvalue: float


def spearman(x, y) -> StatResult:
    """Spearman rho with average ranks; p from the t approximation on n - 2 df."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DomainError("x and y must be 1-d and of equal length")
    if x.size < 3:
        raise DomainError("need at least 3 pairs")
    if np.all(x == x[0]) or np.all(y == y[0]):
        raise UndefinedCorrelationError("rank correlation of a constant vector is undefined")
    res = stats.spearmanr(x, y)
    return StatResult(float(res.statistic), float(res.pvalue))


EXACT_MAX_TOTAL = 12


def wilcoxon_rank_sum(group_a, group_b) -> StatResult:
    """Rank sum of ``group_a`` in the pooled sample, with a two-sided p.

    Ties get average ranks.  Up to ``EXACT_MAX_TOTAL`` values in total the p
    is exact, by enumerating every split of the pooled ranks; beyond that a
    tie-corrected normal approximation with continuity correction is used.
    """
    a = np.asarray(group_a, dtype=float)
    b = np.asarray(group_b, dtype=float)
    if a.size == 0 or b.size == 0:
        raise InsufficientDataError("both groups must be nonempty")
    ranks = stats.rankdata(np.concatenate([a, b]))
    w = float(ranks[: a.size].sum())
    null_mean = a.size * (ranks.size + 1) / 2.0
    if ranks.size <= EXACT_MAX_TOTAL:
        return StatResult(w, _exact_rank_sum_p(ranks, a.size, w, null_mean))
    res = stats.mannwhitneyu(a, b, alternative="two-sided", method="asymptotic", use_continuity=True)
    return StatResult(w, float(res.pvalue))


def _exact_rank_sum_p(ranks: np.ndarray, k: int, w: float, null_mean: float) -> float:
    # ranks are multiples of 1/2, so compare on the doubled integer scale
    doubled = np.rint(2 * ranks).astype(np.int64)
    obs = abs(int(round(2 * w)) - int(round(2 * null_mean)))
    total = int(round(2 * null_mean))
    extreme = count = 0
    for combo in itertools.combinations(doubled, k):
        count += 1
        if abs(sum(combo) - total) >= obs:
            extreme += 1
    return extreme / count


# ------------------------------------------------ post-hoc study tables


class CorrelationRow(NamedTuple):
    factor: str
    parameter: str
    rho: float
    pvalue: float
    n: int


def correlate_baseline(
    fitted: Mapping[str, Mapping[str, float]],
    baselines: Mapping[str, Baselines],
    factors: Sequence[str] = ("log10_vl", "cd4"),
    parameters: Sequence[str] = PARAM_NAMES,
) -> list[CorrelationRow]:
    """Spearman correlation of each baseline factor with each fitted parameter.

    Subjects lacking a factor value are left out of that factor's rows.
    """
    missing = set(fitted) ^ set(baselines)
    if missing:
        raise DomainError(f"subject sets differ: {sorted(missing)}")
    ids = sorted(fitted)
    rows = []
    for factor in factors:
        keep = [s for s in ids if getattr(baselines[s], factor) is not None]
        xs = [getattr(baselines[s], factor) for s in keep]
        for param in parameters:
            res = spearman(xs, [fitted[s][param] for s in keep])
            rows.append(CorrelationRow(factor, param, res.statistic, res.pvalue, len(keep)))
    return rows


class ComparisonRow(NamedTuple):
    parameter: str
    statistic: float
    pvalue: float
    median_success: float
    median_failure: float


@dataclass(frozen=True)
class GroupComparison:
    rows: list[ComparisonRow]
    n_success: int
    n_failure: int
    n_excluded: int


def compare_groups(
    fitted: Mapping[str, Mapping[str, float]],
    statuses: Mapping[str, ResponseStatus],
    parameters: Sequence[str] = PARAM_NAMES,
) -> GroupComparison:
    """Wilcoxon rank-sum comparison of success against failure, per parameter.

    The statistic is the rank sum of the success group.  Subjects labelled
    missing are excluded.
    """
    ids = sorted(fitted)
    if set(ids) != set(statuses):
        raise DomainError("fitted parameters and statuses cover different subjects")
    succ = [s for s in ids if statuses[s] is ResponseStatus.SUCCESS]
    fail = [s for s in ids if statuses[s] is ResponseStatus.FAILURE]
    if not succ or not fail:
        raise InsufficientDataError(f"need both groups nonempty (success={len(succ)}, failure={len(fail)})")
    rows = []
    for param in parameters:
        a = [fitted[s][param] for s in succ]
        b = [fitted[s][param] for s in fail]
        res = wilcoxon_rank_sum(a, b)
        rows.append(ComparisonRow(param, res.statistic, res.pvalue, float(np.median(a)), float(np.median(b))))
    return GroupComparison(rows, len(succ), len(fail), len(ids) - len(succ) - len(fail))


def posterior_means(summary) -> dict[str, dict[str, float]]:
    """Per-subject natural-scale posterior means from a chain summary."""
    return {sid: {k: v.mean for k, v in params.items()} for sid, params in summary.subjects.items()}
