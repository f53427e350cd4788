"""Per-subject study records."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

from .efficacy import EfficacyInputs
from .errors import DomainError


@dataclass(frozen=True)
class Baselines:
    """Baseline covariates; any may be unknown (None)."""

    log10_vl: float | None = None
    cd4: float | None = None
    age: float | None = None
    weight: float | None = None


class SubjectArrays(NamedTuple):
    times: np.ndarray
    y: np.ndarray
    drug_params: np.ndarray
    visits: np.ndarray
    rates: np.ndarray
    breaks: np.ndarray


@dataclass(frozen=True)
class SubjectRecord:
    """Observed log10 viral loads (copies/mL) and efficacy inputs for one subject.

    Missing measurements are simply absent, so subjects may have different
    numbers of observations.
    """

    subject_id: str
    days: tuple[float, ...]
    log10_vl: tuple[float, ...]
    efficacy_inputs: EfficacyInputs
    baselines: Baselines = field(default_factory=Baselines)

    def __post_init__(self):
        days = tuple(float(d) for d in self.days)
        vl = tuple(float(v) for v in self.log10_vl)
        object.__setattr__(self, "subject_id", str(self.subject_id))
        object.__setattr__(self, "days", days)
        object.__setattr__(self, "log10_vl", vl)
        if len(days) != len(vl):
            raise DomainError(f"{self.subject_id}: days and loads differ in length")
        if any(b < a for a, b in zip(days, days[1:])):
            raise DomainError(f"{self.subject_id}: observation days must be nondecreasing")
        if days and days[0] != 0.0:
            raise DomainError(f"{self.subject_id}: first observation must be at day 0")
        if not all(math.isfinite(v) for v in vl):
            raise DomainError(f"{self.subject_id}: viral loads must be finite")

    @property
    def n_obs(self) -> int:
        return len(self.days)

    @property
    def observations(self) -> list[tuple[float, float]]:
        return list(zip(self.days, self.log10_vl))

    @property
    def baseline_log10_vl(self) -> float:
        if self.baselines.log10_vl is not None:
            return self.baselines.log10_vl
        return self.log10_vl[0]

    @cached_property
    def arrays(self) -> SubjectArrays:
        """Contiguous arrays consumed by the compiled likelihood."""
        dp, vi, ra = self.efficacy_inputs.packed
        return SubjectArrays(
            np.array(self.days),
            np.array(self.log10_vl),
            dp,
            vi,
            ra,
            self.efficacy_inputs.breakpoints(),
        )
