"""Command-line entry point.

Settings come from an optional INI file (``--config``) with sections
``[mcmc]``, ``[priors]``, ``[design]`` and ``[paths]``; command-line flags
override the file.
"""

from __future__ import annotations

import argparse
import configparser
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import data_io, study
from .efficacy import EfficacyInputs
from .errors import ChainAbortError, HivDynError
from .inference import Hyperpriors, MCMCConfig, run_chain, summarize

COMMANDS = ("simulate", "fit", "summarize", "analyze", "efficacy")


@dataclass(frozen=True)
class RunConfig:
    command: str
    out_dir: Path | None = None
    data_dir: Path | None = None
    chain_dir: Path | None = None
    fitted: Path | None = None
    mcmc: MCMCConfig = field(default_factory=MCMCConfig)
    priors: Hyperpriors = field(default_factory=Hyperpriors)
    design: study.CohortDesign = field(default_factory=study.CohortDesign)
    workers: int = 1
    raw_copies: bool = False
    subject: str | None = None
    phi: float | None = None
    constant_gamma: float | None = None
    grid_end: float = 168.0
    grid_step: float = 1.0

    @property
    def seed(self) -> int:
        return self.mcmc.seed


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.replace(",", " ").split()]


def _floats(text: str, n: int) -> np.ndarray:
    vals = _float_list(text)
    if len(vals) == 1:
        vals = vals * n
    if len(vals) != n:
        raise ValueError(f"expected 1 or {n} numbers, got {len(vals)}")
    return np.array(vals)


def read_config(path) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    unknown = set(cp.sections()) - {"mcmc", "priors", "design", "paths"}
    if unknown:
        raise ValueError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    return cp


def resolve(args: argparse.Namespace) -> RunConfig:
    """Merge the config file and flags into a RunConfig; flags win."""
    cp = read_config(args.config)
    m = cp["mcmc"] if cp.has_section("mcmc") else {}
    p = cp["priors"] if cp.has_section("priors") else {}
    d = cp["design"] if cp.has_section("design") else {}
    paths = cp["paths"] if cp.has_section("paths") else {}

    def pick(flag, section, key, conv, default):
        v = getattr(args, flag, None)
        if v is not None:
            return v
        if key in section:
            return conv(section[key])
        return default

    base = MCMCConfig()
    mcmc = MCMCConfig(
        burn_in=pick("burn_in", m, "burn_in", int, base.burn_in),
        post_iterations=pick("iterations", m, "post_iterations", int, base.post_iterations),
        thin=pick("thin", m, "thin", int, base.thin),
        seed=pick("seed", m, "seed", int, base.seed),
        target_accept=float(m.get("target_accept", base.target_accept)),
        initial_step=float(m.get("initial_step", base.initial_step)),
        proposal=m.get("proposal", base.proposal),
        population_shift=m.getboolean("population_shift", base.population_shift) if m else base.population_shift,
    )
    hp = Hyperpriors()
    priors = Hyperpriors(
        a=float(p.get("a", hp.a)),
        b=float(p.get("b", hp.b)),
        eta=_floats(p["eta"], 6) if "eta" in p else hp.eta,
        lam=np.diag(_floats(p["lambda_diag"], 6)) if "lambda_diag" in p else hp.lam,
        omega=np.diag(_floats(p["omega_diag"], 6)) if "omega_diag" in p else hp.omega,
        nu=float(p.get("nu", hp.nu)),
    )
    cd = study.CohortDesign()
    design = replace(
        cd,
        n_subjects=pick("n_subjects", d, "n_subjects", int, cd.n_subjects),
        error_sd=pick("error_sd", d, "error_sd", float, cd.error_sd),
        observation_days=tuple(_float_list(d["observation_days"])) if "observation_days" in d else cd.observation_days,
        mu_true=_floats(d["mu_true"], 6) if "mu_true" in d else cd.mu_true,
        sigma_true=np.diag(_floats(d["sigma_diag"], 6)) if "sigma_diag" in d else cd.sigma_true,
        vl_c_slope=float(d.get("vl_c_slope", cd.vl_c_slope)),
    )

    def path_opt(flag, key):
        v = getattr(args, flag, None) or paths.get(key)
        return Path(v) if v else None

    return RunConfig(
        command=args.command,
        out_dir=path_opt("out_dir", "out_dir"),
        data_dir=path_opt("data_dir", "data_dir"),
        chain_dir=path_opt("chain_dir", "chain_dir"),
        fitted=path_opt("fitted", "fitted"),
        mcmc=mcmc,
        priors=priors,
        design=design,
        workers=pick("workers", m, "workers", int, 1),
        raw_copies=getattr(args, "raw_copies", False),
        subject=getattr(args, "subject", None),
        phi=getattr(args, "phi", None),
        constant_gamma=getattr(args, "constant", None),
        grid_end=getattr(args, "days", None) or 168.0,
        grid_step=getattr(args, "step", None) or 1.0,
    )


def _err(msg: str):
    print(msg, file=sys.stderr)


def _require(value, what: str):
    if value is None:
        raise ValueError(f"{what} is required")
    return value


def _load(cfg: RunConfig):
    ds = data_io.load_dataset_dir(_require(cfg.data_dir, "--data-dir"), raw_copies=cfg.raw_copies)
    for sid, reason in ds.rejections.items():
        _err(f"rejected subject {sid}: {reason}")
    return ds.records


def cmd_simulate(cfg: RunConfig) -> int:
    cohort = study.simulate_cohort(cfg.design, cfg.seed)
    out = cfg.out_dir
    data_io.write_dataset(cohort.records, out)
    data_io.write_truth(cohort.true_thetas, out / "truth.csv")
    d = cfg.design
    lines = [
        "[design]",
        f"seed = {cfg.seed}",
        f"n_subjects = {d.n_subjects}",
        f"observation_days = {' '.join(map(data_io.fmt, d.observation_days))}",
        f"mu_true = {' '.join(map(data_io.fmt, d.mu_true))}",
        f"sigma_diag = {' '.join(map(data_io.fmt, np.diag(d.sigma_true)))}",
        f"error_sd = {data_io.fmt(d.error_sd)}",
        f"vl_c_slope = {data_io.fmt(d.vl_c_slope)}",
        f"redraws = {sum(cohort.redraws.values())}",
    ]
    (out / "simulation.ini").write_text("\n".join(lines) + "\n")
    _err(f"wrote {len(cohort.records)} subjects to {out}")
    return 0


def _posterior_mean_thetas(chain) -> dict[str, np.ndarray]:
    return {sid: chain.theta[i].mean(axis=0) for i, sid in enumerate(chain.subject_ids)}


def _write_fit_outputs(chain, cfg: RunConfig, records=None):
    summary = summarize(chain)
    data_io.write_summary(summary, chain, cfg.out_dir / "summary")
    if records is not None:
        grid = np.arange(0.0, cfg.grid_end + cfg.grid_step / 2, cfg.grid_step)
        data_io.write_trajectories(records, _posterior_mean_thetas(chain), grid, cfg.out_dir / "trajectories.csv")
    return summary


def cmd_fit(cfg: RunConfig) -> int:
    records = _load(cfg)
    total = cfg.mcmc.burn_in + cfg.mcmc.post_iterations

    def progress(i, n):
        _err(f"iteration {i}/{n}")

    try:
        chain = run_chain(records, cfg.priors, cfg.mcmc, workers=cfg.workers, progress=progress)
    except ChainAbortError as exc:
        partial = cfg.out_dir / "chain_partial"
        if exc.partial is not None and exc.partial.n_draws:
            data_io.write_chain(exc.partial, partial)
            data_io.write_run_record(exc.partial, partial / "run.ini")
            _err(f"chain aborted: {exc}; {exc.partial.n_draws} draws flushed to {partial}")
        else:
            _err(f"chain aborted: {exc}; no draws retained")
        return 3
    data_io.write_chain(chain, cfg.out_dir / "chain")
    summary = _write_fit_outputs(chain, cfg, records)
    _err(f"completed {total} iterations, {chain.n_draws} draws retained")
    pop = summary.population
    print("stat," + ",".join(summary.param_names))
    for label, attr in (("PM", "mean"), ("L_CI", "lower"), ("R_CI", "upper")):
        print(label + "," + ",".join(f"{getattr(pop[n], attr):.4g}" for n in summary.param_names))
    return 0


def cmd_summarize(cfg: RunConfig) -> int:
    chain = data_io.read_chain(_require(cfg.chain_dir, "--chain-dir"))
    records = _load(cfg) if cfg.data_dir is not None else None
    _write_fit_outputs(chain, cfg, records)
    return 0


def cmd_analyze(cfg: RunConfig) -> int:
    records = _load(cfg)
    fitted = data_io.read_subject_means(_require(cfg.fitted, "--fitted"))
    records = [r for r in records if r.subject_id in fitted]
    fitted = {r.subject_id: fitted[r.subject_id] for r in records}
    out = cfg.out_dir
    rows = study.correlate_baseline(fitted, {r.subject_id: r.baselines for r in records})
    data_io.write_correlations(rows, out / "correlations.csv")
    statuses = {r.subject_id: study.classify_response(r) for r in records}
    data_io.write_statuses(statuses, out / "statuses.csv")
    result = study.compare_groups(fitted, statuses)
    data_io.write_comparison(result, out / "group_comparison.csv")
    _err(f"success={result.n_success} failure={result.n_failure} excluded (missing)={result.n_excluded}")
    return 0


def cmd_efficacy(cfg: RunConfig) -> int:
    phi = _require(cfg.phi, "--phi")
    if cfg.constant_gamma is not None:
        inputs, name = EfficacyInputs.constant(cfg.constant_gamma, phi), "constant"
    else:
        records = {r.subject_id: r for r in _load(cfg)}
        sid = _require(cfg.subject, "--subject or --constant")
        if sid not in records:
            raise ValueError(f"subject {sid!r} not found")
        inputs, name = records[sid].efficacy_inputs, sid
    grid = np.arange(0.0, cfg.grid_end + cfg.grid_step / 2, cfg.grid_step)
    header, rows = data_io.efficacy_table(inputs, phi, grid)
    if cfg.out_dir is not None:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        data_io.write_efficacy_series(inputs, phi, grid, cfg.out_dir / f"efficacy_{name}.csv")
    else:
        print(",".join(header))
        for row in rows:
            print(",".join(data_io.fmt(x) for x in row))
    return 0


HANDLERS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "summarize": cmd_summarize,
    "analyze": cmd_analyze,
    "efficacy": cmd_efficacy,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    common.add_argument("--config", type=Path, help="INI file with [mcmc], [priors], [design], [paths]")
    common.add_argument("--seed", type=int, help="random seed (default 0)")
    common.add_argument("--out-dir", type=Path, help="output directory (default: current; efficacy prints to stdout)")
    common.add_argument("--workers", type=int, help="threads for per-subject updates (default 1)")

    sched = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    sched.add_argument("--burn-in", type=int, help="discarded iterations (default 30000)")
    sched.add_argument("--iterations", type=int, help="iterations after burn-in (default 120000)")
    sched.add_argument("--thin", type=int, help="keep every n-th draw (default 5)")

    data = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    data.add_argument("--data-dir", type=Path, help="directory with viral_load.csv, pk.csv, adherence.csv, ic50.csv")
    data.add_argument("--raw-copies", action="store_true", help="viral loads are copies/mL, not log10")

    grid = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    grid.add_argument("--days", type=float, help="last day of the output grid (default 168)")
    grid.add_argument("--step", type=float, help="grid spacing in days (default 1)")

    parser = argparse.ArgumentParser(prog="hivdyn", description="HIV viral dynamics with drug efficacy: simulation, Bayesian fitting and analysis.", allow_abbrev=False)
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate", parents=[common], help="simulate a synthetic cohort", allow_abbrev=False)
    p.add_argument("--n-subjects", type=int, help="number of subjects (default 42)")
    p.add_argument("--error-sd", type=float, help="measurement error SD on log10 scale (default 0.25)")

    sub.add_parser("fit", parents=[common, sched, data, grid], help="run the MCMC sampler on a dataset", allow_abbrev=False)

    p = sub.add_parser("summarize", parents=[common, data, grid], help="summarize a saved chain", allow_abbrev=False)
    p.add_argument("--chain-dir", type=Path, help="directory written by fit (its chain/ subdirectory)")

    p = sub.add_parser("analyze", parents=[common, data], help="baseline correlations and response-group comparison", allow_abbrev=False)
    p.add_argument("--fitted", type=Path, help="subject_summary.csv written by fit or summarize")

    p = sub.add_parser("efficacy", parents=[common, data, grid], help="efficacy time course for one subject", allow_abbrev=False)
    p.add_argument("--subject", help="subject id in the dataset")
    p.add_argument("--phi", type=float, help="phi (required)")
    p.add_argument("--constant", type=float, help="use constant efficacy gamma0 instead of a dataset subject")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve(args)
        if cfg.workers < 1:
            raise ValueError("--workers must be at least 1")
        if cfg.command != "efficacy":
            cfg = replace(cfg, out_dir=cfg.out_dir or Path("."))
            cfg.out_dir.mkdir(parents=True, exist_ok=True)
        return HANDLERS[cfg.command](cfg)
    except (HivDynError, ValueError, OSError, configparser.Error) as exc:
        _err(f"error: {exc}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
