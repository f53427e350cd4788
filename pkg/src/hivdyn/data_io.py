"""Delimited-text readers and writers for study data, chains and derived tables.

Input files are comma-separated with one header row.  Lines starting with
``#`` are comments; a ``# unit: <name>`` comment declares the concentration
unit of a pk or ic50 file.  Empty fields are missing values.

=============  ====================================================
file           columns
=============  ====================================================
viral load     subject, day, log10_vl
pk             subject, drug, cmin
adherence      subject, drug, interval_start_day, interval_end_day, rate
ic50           subject, drug, i0, ir, tr
baselines      subject, log10_vl, cd4, age, weight
=============  ====================================================

An empty ``interval_end_day`` marks an interval that stays open after the last
visit; an empty ``tr`` marks an IC50 that never rises.
"""

from __future__ import annotations

import csv
import io
import json
import math
import re
from collections import defaultdict
from dataclasses import asdict
from pathlib import Path
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

from .efficacy import (
    AdherenceProfile,
    DrugInputs,
    EfficacyInputs,
    IC50Profile,
    adherence_at,
    gamma_at,
    gamma_packed,
    ic50_at,
    inhibitory_quotient,
)
from .errors import (
    ConvergenceError,
    DivergenceError,
    DomainError,
    EvaluationError,
    JoinError,
    ParseError,
)
from .inference import ChainOutput, ChainSummary, Hyperpriors, MCMCConfig, trace_diagnostics
from .ode import LOG_PARAM_NAMES, IntegratorConfig, efficacy_threshold, predict_log10_viral_load
from .records import Baselines, SubjectRecord

VL_COLUMNS = ("subject", "day", "log10_vl")
PK_COLUMNS = ("subject", "drug", "cmin")
ADHERENCE_COLUMNS = ("subject", "drug", "interval_start_day", "interval_end_day", "rate")
IC50_COLUMNS = ("subject", "drug", "i0", "ir", "tr")
BASELINE_COLUMNS = ("subject", "log10_vl", "cd4", "age", "weight")

DATASET_FILES = {
    "viral_load": "viral_load.csv",
    "pk": "pk.csv",
    "adherence": "adherence.csv",
    "ic50": "ic50.csv",
    "baselines": "baselines.csv",
}

_UNIT_RE = re.compile(r"#\s*unit\s*:\s*(\S.*?)\s*$", re.IGNORECASE)
_SAFE_ID = re.compile(r"^[A-Za-z0-9_.-]+$")


def fmt(x: float | None) -> str:
    """Shortest text that parses back to the same float; empty for None."""
    if x is None:
        return ""
    x = float(x)
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


class _Table(NamedTuple):
    path: Path
    rows: list[tuple[int, dict[str, str]]]
    unit: str | None


def _read_table(path, columns: Sequence[str], optional: Sequence[str] = ()) -> _Table:
    path = Path(path)
    text = path.read_text()
    unit = None
    header, rows = None, []
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped:
            continue
        if stripped.startswith("#"):
            m = _UNIT_RE.match(stripped)
            if m:
                unit = m.group(1)
            continue
        fields = [f.strip() for f in next(csv.reader([line]))]
        if header is None:
            missing = [c for c in columns if c not in fields and c not in optional]
            if missing:
                raise ParseError(path, lineno, f"header lacks column(s) {', '.join(missing)}")
            header = fields
            continue
        if len(fields) != len(header):
            raise ParseError(path, lineno, f"expected {len(header)} fields, got {len(fields)}")
        row = dict(zip(header, fields))
        if not row.get("subject"):
            raise ParseError(path, lineno, "empty subject id")
        rows.append((lineno, row))
    return _Table(path, rows, unit)


def _number(table: _Table, lineno: int, row: dict, column: str, required: bool = True) -> float | None:
    raw = row.get(column, "")
    if raw == "":
        if required:
            raise ParseError(table.path, lineno, f"missing value for {column}")
        return None
    try:
        value = float(raw)
    except ValueError:
        raise ParseError(table.path, lineno, f"{column}: not a number: {raw!r}") from None
    if not math.isfinite(value):
        raise ParseError(table.path, lineno, f"{column}: not finite: {raw!r}")
    return value


class LoadedDataset(NamedTuple):
    records: list[SubjectRecord]
    rejections: dict[str, str]


def load_dataset(
    viral_load,
    pk,
    adherence,
    ic50,
    baselines=None,
    *,
    raw_copies: bool = False,
) -> LoadedDataset:
    """Join the study files into subject records.

    Subjects appear in the order of first appearance in the viral-load file,
    and drugs in the order of first appearance in the pk file.  A subject
    whose efficacy inputs are incomplete or inconsistent is left out, with
    the reason given in ``rejections``.  With ``raw_copies`` the viral-load
    column holds copies/mL and is converted to log10.
    """
    vl = _read_table(viral_load, VL_COLUMNS)
    pk_t = _read_table(pk, PK_COLUMNS)
    ad_t = _read_table(adherence, ADHERENCE_COLUMNS)
    ic_t = _read_table(ic50, IC50_COLUMNS)
    if pk_t.unit and ic_t.unit and pk_t.unit != ic_t.unit:
        raise ParseError(ic_t.path, 1, f"concentration unit {ic_t.unit!r} differs from pk unit {pk_t.unit!r}")

    obs: dict[str, list[tuple[float, float]]] = {}
    for lineno, row in vl.rows:
        day = _number(vl, lineno, row, "day")
        value = _number(vl, lineno, row, "log10_vl", required=False)
        series = obs.setdefault(row["subject"], [])
        if day < 0:
            raise ParseError(vl.path, lineno, "negative day")
        if value is None:
            continue
        if raw_copies:
            if value <= 0:
                raise ParseError(vl.path, lineno, "raw viral load must be positive")
            value = math.log10(value)
        series.append((day, value))

    def check_join(table: _Table):
        for lineno, row in table.rows:
            if row["subject"] not in obs:
                raise JoinError(f"{table.path}:{lineno}: subject {row['subject']!r} not in viral-load file")

    for t in (pk_t, ad_t, ic_t):
        check_join(t)

    cmin: dict[str, dict[str, float]] = defaultdict(dict)
    for lineno, row in pk_t.rows:
        if row["drug"] in cmin[row["subject"]]:
            raise ParseError(pk_t.path, lineno, f"duplicate pk row for drug {row['drug']!r}")
        cmin[row["subject"]][row["drug"]] = _number(pk_t, lineno, row, "cmin")

    ic: dict[tuple[str, str], tuple[float, float | None, float | None]] = {}
    for lineno, row in ic_t.rows:
        key = (row["subject"], row["drug"])
        if key in ic:
            raise ParseError(ic_t.path, lineno, f"duplicate ic50 row for drug {row['drug']!r}")
        ic[key] = (
            _number(ic_t, lineno, row, "i0"),
            _number(ic_t, lineno, row, "ir", required=False),
            _number(ic_t, lineno, row, "tr", required=False),
        )

    intervals: dict[tuple[str, str], list[tuple[float, float | None, float]]] = defaultdict(list)
    for lineno, row in ad_t.rows:
        intervals[(row["subject"], row["drug"])].append(
            (
                _number(ad_t, lineno, row, "interval_start_day"),
                _number(ad_t, lineno, row, "interval_end_day", required=False),
                _number(ad_t, lineno, row, "rate"),
            )
        )

    base: dict[str, Baselines] = {}
    if baselines is not None:
        bt = _read_table(baselines, ("subject",), optional=BASELINE_COLUMNS[1:])
        check_join(bt)
        for lineno, row in bt.rows:
            base[row["subject"]] = Baselines(
                *(_number(bt, lineno, row, c, required=False) for c in BASELINE_COLUMNS[1:])
            )

    records, rejections = [], {}
    for sid, series in obs.items():
        try:
            inputs = _efficacy_for(sid, cmin.get(sid, {}), ic, intervals)
            series.sort(key=lambda p: p[0])
            if not series:
                raise DomainError("no viral-load measurements")
            days, loads = zip(*series)
            records.append(SubjectRecord(sid, days, loads, inputs, base.get(sid, Baselines())))
        except DomainError as exc:
            rejections[sid] = str(exc)
    return LoadedDataset(records, rejections)


def _efficacy_for(sid, cmins, ic, intervals) -> EfficacyInputs:
    if not cmins:
        raise DomainError("no pk rows")
    drugs = []
    for drug, c in cmins.items():
        if (sid, drug) not in ic:
            raise DomainError(f"no ic50 row for drug {drug!r}")
        if (sid, drug) not in intervals:
            raise DomainError(f"no adherence rows for drug {drug!r}")
        i0, ir, tr = ic[(sid, drug)]
        drugs.append(DrugInputs(c, IC50Profile(i0, ir, tr), _adherence_profile(drug, intervals[(sid, drug)])))
    return EfficacyInputs(tuple(drugs))


def _adherence_profile(drug, rows) -> AdherenceProfile:
    rows = sorted(rows, key=lambda r: r[0])
    visits = [rows[0][0]]
    for k, (start, end, _) in enumerate(rows):
        if start != visits[-1]:
            raise DomainError(f"adherence intervals for drug {drug!r} are not contiguous at day {start:g}")
        if end is None:
            if k != len(rows) - 1:
                raise DomainError(f"only the last adherence interval of drug {drug!r} may be open")
        else:
            visits.append(end)
    return AdherenceProfile(tuple(visits), tuple(r[2] for r in rows))


def load_dataset_dir(directory, *, raw_copies: bool = False) -> LoadedDataset:
    """Load the standard file names written by :func:`write_dataset`."""
    d = Path(directory)
    b = d / DATASET_FILES["baselines"]
    return load_dataset(
        d / DATASET_FILES["viral_load"],
        d / DATASET_FILES["pk"],
        d / DATASET_FILES["adherence"],
        d / DATASET_FILES["ic50"],
        b if b.exists() else None,
        raw_copies=raw_copies,
    )


def _write_csv(path, header: Sequence[str], rows: Iterable[Sequence], comments: Sequence[str] = ()) -> Path:
    path = Path(path)
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(r)
    path.write_text(buf.getvalue())
    return path


def write_dataset(records: Sequence[SubjectRecord], directory, unit: str = "ng/mL") -> dict[str, Path]:
    """Write records as the five study files; drugs are named d1, d2."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    vl, pk, ad, ic, bl = [], [], [], [], []
    for r in records:
        vl.extend((r.subject_id, fmt(day), fmt(v)) for day, v in zip(r.days, r.log10_vl))
        for k, drug in enumerate(r.efficacy_inputs.drugs, start=1):
            name = f"d{k}"
            pk.append((r.subject_id, name, fmt(drug.cmin)))
            ic.append((r.subject_id, name, fmt(drug.ic50.i0), fmt(drug.ic50.ir), fmt(drug.ic50.tr)))
            v, rates = drug.adherence.visit_times, drug.adherence.rates
            for j, rate in enumerate(rates):
                end = v[j + 1] if j + 1 < len(v) else None
                ad.append((r.subject_id, name, fmt(v[j]), fmt(end), fmt(rate)))
        b = r.baselines
        bl.append((r.subject_id, fmt(b.log10_vl), fmt(b.cd4), fmt(b.age), fmt(b.weight)))
    unit_line = [f"unit: {unit}"]
    return {
        "viral_load": _write_csv(d / DATASET_FILES["viral_load"], VL_COLUMNS, vl),
        "pk": _write_csv(d / DATASET_FILES["pk"], PK_COLUMNS, pk, unit_line),
        "adherence": _write_csv(d / DATASET_FILES["adherence"], ADHERENCE_COLUMNS, ad),
        "ic50": _write_csv(d / DATASET_FILES["ic50"], IC50_COLUMNS, ic, unit_line),
        "baselines": _write_csv(d / DATASET_FILES["baselines"], BASELINE_COLUMNS, bl),
    }


def write_truth(thetas: Mapping[str, np.ndarray], path) -> Path:
    rows = [(sid, *(fmt(x) for x in th)) for sid, th in thetas.items()]
    return _write_csv(path, ("subject", *LOG_PARAM_NAMES), rows)


# ----------------------------------------------------------------- chains


def _natural(name: str) -> str:
    return name[4:] if name.startswith("log_") else f"exp_{name}"


def _population_header(names: Sequence[str]) -> list[str]:
    p = len(names)
    tri = [f"sigma_inv_{i + 1}_{j + 1}" for i in range(p) for j in range(i, p)]
    return ["draw", *names, *(_natural(n) for n in names), "error_prec", *tri]


def write_chain(chain: ChainOutput, directory) -> dict[str, Path]:
    """Persist retained draws.

    ``population.csv`` holds one row per draw: mu on the log and natural
    scales, sigma^-2 and the upper triangle of Sigma^-1.  Each subject's
    theta draws go to ``subjects/<id>.csv``.  ``chain.json`` records the
    configuration, priors and sampler state needed to reload the chain.
    """
    if chain.n_draws == 0:
        raise DomainError("chain has no retained draws")
    for sid in chain.subject_ids:
        if not _SAFE_ID.match(sid):
            raise DomainError(f"subject id {sid!r} is not usable as a file name")
    d = Path(directory)
    (d / "subjects").mkdir(parents=True, exist_ok=True)
    names = chain.param_names
    p = len(names)
    iu = np.triu_indices(p)
    comment = [f"seed={chain.config.seed}"]

    pop_rows = (
        [str(k), *map(fmt, chain.mu[k]), *map(fmt, np.exp(chain.mu[k])), fmt(chain.error_prec[k]),
         *map(fmt, chain.sigma_inv[k][iu])]
        for k in range(chain.n_draws)
    )
    paths = {"population": _write_csv(d / "population.csv", _population_header(names), pop_rows, comment)}
    sub_header = ["draw", *names, *(_natural(n) for n in names)]
    for i, sid in enumerate(chain.subject_ids):
        th = chain.theta[i]
        rows = ([str(k), *map(fmt, th[k]), *map(fmt, np.exp(th[k]))] for k in range(chain.n_draws))
        paths[sid] = _write_csv(d / "subjects" / f"{sid}.csv", sub_header, rows, comment)

    meta = {
        "seed": chain.config.seed,
        "config": asdict(chain.config),
        "priors": {
            "a": chain.priors.a,
            "b": chain.priors.b,
            "eta": chain.priors.eta.tolist(),
            "lam": chain.priors.lam.tolist(),
            "omega": chain.priors.omega.tolist(),
            "nu": chain.priors.nu,
        },
        "param_names": list(names),
        "subject_ids": list(chain.subject_ids),
        "acceptance_rates": chain.acceptance_rates.tolist(),
        "step_scales": chain.step_scales.tolist(),
        "iterations_completed": chain.iterations_completed,
        "shift_acceptance": None if math.isnan(chain.shift_acceptance) else chain.shift_acceptance,
    }
    meta_path = d / "chain.json"
    meta_path.write_text(json.dumps(meta, indent=1) + "\n")
    paths["meta"] = meta_path
    return paths


def _read_matrix(path) -> tuple[list[str], np.ndarray]:
    lines = [ln for ln in Path(path).read_text().splitlines() if ln and not ln.startswith("#")]
    header = lines[0].split(",")
    data = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(len(lines) - 1, len(header))
    return header, data


def read_chain(directory) -> ChainOutput:
    d = Path(directory)
    meta = json.loads((d / "chain.json").read_text())
    names = tuple(meta["param_names"])
    p = len(names)
    header, pop = _read_matrix(d / "population.csv")
    if header != _population_header(names):
        raise ParseError(d / "population.csv", 2, "unexpected header")
    k = pop.shape[0]
    mu = pop[:, 1 : 1 + p]
    error_prec = pop[:, 1 + 2 * p]
    tri = pop[:, 2 + 2 * p :]
    sigma_inv = np.empty((k, p, p))
    iu = np.triu_indices(p)
    for r in range(k):
        sigma_inv[r][iu] = tri[r]
        sigma_inv[r].T[iu] = tri[r]
    theta = np.empty((len(meta["subject_ids"]), k, p))
    for i, sid in enumerate(meta["subject_ids"]):
        _, sub = _read_matrix(d / "subjects" / f"{sid}.csv")
        theta[i] = sub[:, 1 : 1 + p]
    pr = meta["priors"]
    chain = ChainOutput(
        subject_ids=tuple(meta["subject_ids"]),
        mu=mu.copy(),
        sigma_inv=sigma_inv,
        error_prec=error_prec.copy(),
        theta=theta,
        acceptance_rates=np.array(meta["acceptance_rates"]),
        step_scales=np.array(meta["step_scales"]),
        config=MCMCConfig(**meta["config"]),
        priors=Hyperpriors(pr["a"], pr["b"], np.array(pr["eta"]), np.array(pr["lam"]), np.array(pr["omega"]), pr["nu"]),
        param_names=names,
        iterations_completed=meta["iterations_completed"],
        shift_acceptance=math.nan if meta.get("shift_acceptance") is None else meta["shift_acceptance"],
    )
    chain.diagnostics = trace_diagnostics(chain)
    return chain


# --------------------------------------------------------------- summaries


TABLE1_ROWS = (("Min", "min"), ("Median", "median"), ("Max", "max"), ("Mean", "mean"), ("SD", "sd"), ("CV(%)", "cv"))


def write_summary(summary: ChainSummary, chain: ChainOutput, directory) -> dict[str, Path]:
    """Population table (PM, L_CI, R_CI), spread of subject estimates, per-subject intervals and a run record."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    names = summary.param_names
    comment = [f"seed={chain.config.seed}"]
    pop = summary.population
    t2 = [
        ("PM", *(fmt(pop[n].mean) for n in names)),
        ("L_CI", *(fmt(pop[n].lower) for n in names)),
        ("R_CI", *(fmt(pop[n].upper) for n in names)),
    ]
    t1 = [(label, *(fmt(getattr(summary.across_subjects[n], attr)) for n in names)) for label, attr in TABLE1_ROWS]
    subj = [
        (sid, n, fmt(s[n].mean), fmt(s[n].lower), fmt(s[n].upper))
        for sid, s in summary.subjects.items()
        for n in names
    ]
    paths = {
        "population": _write_csv(d / "population_summary.csv", ("stat", *names), t2, comment),
        "subjects_table": _write_csv(d / "subject_table.csv", ("stat", *names), t1, comment),
        "subjects": _write_csv(d / "subject_summary.csv", ("subject", "parameter", "mean", "lower", "upper"), subj, comment),
    }
    paths["run"] = write_run_record(chain, d / "run.ini", summary)
    return paths


def write_run_record(chain: ChainOutput, path, summary: ChainSummary | None = None) -> Path:
    """Hyperparameters, schedule and seed of a run, plus acceptance and the error SD."""
    pr = chain.priors
    cfg = chain.config
    lines = [
        "[mcmc]",
        f"seed = {cfg.seed}",
        f"burn_in = {cfg.burn_in}",
        f"post_iterations = {cfg.post_iterations}",
        f"thin = {cfg.thin}",
        f"retained_draws = {chain.n_draws}",
        f"iterations_completed = {chain.iterations_completed}",
        f"target_accept = {fmt(cfg.target_accept)}",
        f"proposal = {cfg.proposal}",
        f"population_shift = {str(cfg.population_shift).lower()}",
        "",
        "[priors]",
        f"a = {fmt(pr.a)}",
        f"b = {fmt(pr.b)}",
        f"nu = {fmt(pr.nu)}",
        f"eta = {' '.join(map(fmt, pr.eta))}",
        f"lambda_diag = {' '.join(map(fmt, np.diag(pr.lam)))}",
        f"omega_diag = {' '.join(map(fmt, np.diag(pr.omega)))}",
        "",
        "[diagnostics]",
        f"acceptance_min = {fmt(float(chain.acceptance_rates.min()))}",
        f"acceptance_max = {fmt(float(chain.acceptance_rates.max()))}",
    ]
    if not math.isnan(chain.shift_acceptance):
        lines.append(f"shift_acceptance = {fmt(chain.shift_acceptance)}")
    if summary is not None:
        lines.append(f"error_sd_mean = {fmt(summary.error_sd.mean)}")
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_subject_means(path) -> dict[str, dict[str, float]]:
    """Per-subject posterior means from ``subject_summary.csv``."""
    t = _read_table(path, ("subject", "parameter", "mean"))
    out: dict[str, dict[str, float]] = defaultdict(dict)
    for lineno, row in t.rows:
        out[row["subject"]][row["parameter"]] = _number(t, lineno, row, "mean")
    return dict(out)


def write_correlations(rows, path) -> Path:
    return _write_csv(
        path,
        ("factor", "parameter", "rho", "p_value", "n"),
        ((r.factor, r.parameter, fmt(r.rho), fmt(r.pvalue), r.n) for r in rows),
    )


def write_comparison(result, path) -> Path:
    return _write_csv(
        path,
        ("parameter", "rank_sum_success", "p_value", "median_success", "median_failure"),
        ((r.parameter, fmt(r.statistic), fmt(r.pvalue), fmt(r.median_success), fmt(r.median_failure)) for r in result.rows),
        [f"n_success={result.n_success}", f"n_failure={result.n_failure}", f"excluded_missing={result.n_excluded}"],
    )


def write_statuses(statuses: Mapping, path) -> Path:
    return _write_csv(path, ("subject", "status"), ((s, v.value) for s, v in statuses.items()))


# ------------------------------------------------------------ plot series


def write_trajectories(
    records: Sequence[SubjectRecord],
    thetas: Mapping[str, np.ndarray],
    grid,
    path,
    config: IntegratorConfig | None = None,
) -> Path:
    """Fitted curve, efficacy and threshold for each subject on ``grid``.

    ``thetas`` maps subject ids to log-parameter vectors (for instance
    posterior means).  Points where the model cannot be evaluated are written
    as empty fields instead of aborting.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise DomainError("grid must be nonempty")
    rows = []
    for r in records:
        th = np.asarray(thetas[r.subject_id], dtype=float)
        phi, r0 = math.exp(th[0]), math.exp(th[5])
        e_c = efficacy_threshold(r0)
        try:
            fitted = predict_log10_viral_load(th, r.efficacy_inputs, 10.0 ** r.log10_vl[0], grid, config)
        except (ConvergenceError, DivergenceError, EvaluationError):
            fitted = [None] * grid.size
        dp, vi, ra = r.efficacy_inputs.packed
        for t, f in zip(grid, fitted):
            rows.append((r.subject_id, fmt(t), fmt(f), fmt(gamma_packed(float(t), phi, dp, vi, ra)), fmt(e_c)))
    return _write_csv(path, ("subject", "day", "fitted_log10_vl", "gamma", "e_c"), rows)


def efficacy_table(inputs: EfficacyInputs, phi: float, grid) -> tuple[list[str], list[list[float]]]:
    """gamma(t) with each drug's IC50, adherence and inhibitory quotient."""
    header = ["day", "gamma"]
    for k in range(1, len(inputs.drugs) + 1):
        header += [f"ic50_{k}", f"adherence_{k}", f"iq_{k}"]
    rows = []
    for t in np.asarray(grid, dtype=float):
        row = [float(t), gamma_at(inputs, phi, float(t))]
        for d in inputs.drugs:
            ic = ic50_at(d.ic50, float(t))
            row += [ic, adherence_at(d.adherence, float(t)), inhibitory_quotient(d.cmin, ic)]
        rows.append(row)
    return header, rows


def write_efficacy_series(inputs: EfficacyInputs, phi: float, grid, path) -> Path:
    header, rows = efficacy_table(inputs, phi, grid)
    return _write_csv(path, header, ([fmt(x) for x in row] for row in rows))
