"""Time-varying antiviral drug efficacy.

Efficacy combines, for each drug, the trough concentration, an adherence
record and an IC50 profile that rises linearly once resistance emerges::

    IQ_d(t)  = Cmin_d / IC50_d(t)
    gamma(t) = S(t) / (phi + S(t)),   S(t) = sum_d IQ_d(t) * A_d(t)

Adherence intervals are half-open, ``(T_k, T_{k+1}]``.  Time zero takes the
first interval's rate and times after the last visit keep the last rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from numba import njit

from .errors import DomainError


@dataclass(frozen=True)
class IC50Profile:
    """Baseline IC50 ``i0``, failure IC50 ``ir`` reached at day ``tr``.

    With ``tr`` unset the profile stays at ``i0`` for all time.
    """

    i0: float
    ir: float | None = None
    tr: float | None = None

    def __post_init__(self):
        if not self.i0 > 0:
            raise DomainError(f"baseline IC50 must be positive, got {self.i0}")
        if self.tr is not None:
            if self.ir is None or not self.ir > 0:
                raise DomainError("a failure time needs a positive failure IC50")
            if not self.tr > 0:
                raise DomainError(f"resistance time must be positive, got {self.tr}")
        elif self.ir is not None and not self.ir > 0:
            raise DomainError(f"failure IC50 must be positive, got {self.ir}")


@dataclass(frozen=True)
class AdherenceProfile:
    """Adherence fractions on the intervals between consecutive visits.

    ``rates`` has one entry per interval, i.e. ``len(visit_times) - 1``
    entries, or ``len(visit_times)`` when the last rate applies to an open
    interval after the final visit.
    """

    visit_times: tuple[float, ...]
    rates: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "visit_times", tuple(float(v) for v in self.visit_times))
        object.__setattr__(self, "rates", tuple(float(r) for r in self.rates))
        v, r = self.visit_times, self.rates
        if len(v) < 1 or v[0] != 0.0:
            raise DomainError("visit times must start at day 0")
        if any(b <= a for a, b in zip(v, v[1:])):
            raise DomainError("visit times must be strictly increasing")
        if len(r) not in (len(v) - 1, len(v)) or len(r) == 0:
            raise DomainError(
                f"{len(v)} visit times need {len(v) - 1} or {len(v)} rates, got {len(r)}"
            )
        if any(not 0.0 <= x <= 1.0 for x in r):
            raise DomainError("adherence rates must lie in [0, 1]")

    @classmethod
    def full(cls) -> AdherenceProfile:
        """Perfect adherence throughout."""
        return cls((0.0,), (1.0,))


@dataclass(frozen=True)
class DrugInputs:
    cmin: float
    ic50: IC50Profile
    adherence: AdherenceProfile = field(default_factory=AdherenceProfile.full)

    def __post_init__(self):
        if not self.cmin >= 0 or not math.isfinite(self.cmin):
            raise DomainError(f"trough concentration must be >= 0, got {self.cmin}")


@dataclass(frozen=True)
class EfficacyInputs:
    """Per-subject efficacy inputs for one or two drugs."""

    drugs: tuple[DrugInputs, ...]

    def __post_init__(self):
        object.__setattr__(self, "drugs", tuple(self.drugs))
        if not 1 <= len(self.drugs) <= 2:
            raise DomainError("efficacy inputs cover one or two drugs")

    @classmethod
    def constant(cls, gamma0: float, phi: float) -> EfficacyInputs:
        """Inputs whose efficacy is ``gamma0`` at all times for the given phi."""
        if not 0.0 <= gamma0 < 1.0:
            raise DomainError("constant efficacy must lie in [0, 1)")
        s = phi * gamma0 / (1.0 - gamma0)
        return cls((DrugInputs(cmin=s, ic50=IC50Profile(1.0)),))

    def breakpoints(self) -> np.ndarray:
        """Times at which gamma or its derivative jumps."""
        pts = set()
        for d in self.drugs:
            pts.update(t for t in d.adherence.visit_times if t > 0)
            if d.ic50.tr is not None:
                pts.add(float(d.ic50.tr))
        return np.array(sorted(pts), dtype=float)

    @cached_property
    def packed(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Array form consumed by :func:`gamma_packed`.

        Returns ``(drug_params, visits, rates)`` where ``drug_params`` rows are
        ``(cmin, i0, ir, tr)`` with ``tr = inf`` for a constant profile,
        ``visits`` is padded with ``inf`` and ``rates`` with the last rate.
        """
        n = len(self.drugs)
        width = max(len(d.adherence.visit_times) for d in self.drugs)
        drug_params = np.empty((n, 4))
        visits = np.full((n, width), np.inf)
        rates = np.empty((n, width))
        for i, d in enumerate(self.drugs):
            if d.ic50.tr is None:
                drug_params[i] = (d.cmin, d.ic50.i0, d.ic50.i0, np.inf)
            else:
                drug_params[i] = (d.cmin, d.ic50.i0, d.ic50.ir, d.ic50.tr)
            v = d.adherence.visit_times
            r = d.adherence.rates
            visits[i, : len(v)] = v
            rates[i, : len(r)] = r
            rates[i, len(r):] = r[-1]
        for a in (drug_params, visits, rates):
            a.setflags(write=False)
        return drug_params, visits, rates


def ic50_at(profile: IC50Profile, t: float) -> float:
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    if profile.tr is None:
        return profile.i0
    if t >= profile.tr:
        return profile.ir
    return profile.i0 + (profile.ir - profile.i0) * t / profile.tr


def adherence_at(profile: AdherenceProfile, t: float) -> float:
    if t < 0:
        raise DomainError(f"time must be >= 0, got {t}")
    v = profile.visit_times
    # interval k covers (v[k], v[k+1]]
    k = 0
    while k + 1 < len(v) and v[k + 1] < t:
        k += 1
    return profile.rates[min(k, len(profile.rates) - 1)]


def inhibitory_quotient(cmin: float, ic50: float) -> float:
    if not ic50 > 0:
        raise DomainError(f"IC50 must be positive, got {ic50}")
    if cmin < 0:
        raise DomainError(f"trough concentration must be >= 0, got {cmin}")
    return cmin / ic50


def exposure_at(inputs: EfficacyInputs, t: float) -> float:
    """Adherence-weighted sum of inhibitory quotients, S(t)."""
    return sum(
        inhibitory_quotient(d.cmin, ic50_at(d.ic50, t)) * adherence_at(d.adherence, t)
        for d in inputs.drugs
    )


def gamma_at(inputs: EfficacyInputs, phi: float, t: float) -> float:
    if not phi > 0:
        raise DomainError(f"phi must be positive, got {phi}")
    s = exposure_at(inputs, t)
    return s / (phi + s)


@njit(nogil=True, cache=True)
def gamma_packed(t, phi, drug_params, visits, rates):
    s = 0.0
    for d in range(drug_params.shape[0]):
        cmin = drug_params[d, 0]
        i0 = drug_params[d, 1]
        ir = drug_params[d, 2]
        tr = drug_params[d, 3]
        if t >= tr:
            ic50 = ir
        else:
            ic50 = i0 + (ir - i0) * t / tr
        k = 0
        width = visits.shape[1]
        while k + 1 < width and visits[d, k + 1] < t:
            k += 1
        s += cmin / ic50 * rates[d, k]
    return s / (phi + s)
