"""Command-line runner: ``hppa-cert {iterate,rates,certify,example5}``.

Exit status: 0 on success (for ``certify``/``example5``: every non-vacuous
check passed), 1 when a certification fails, 2 for configuration errors and
missing moduli, 3 when an iterate becomes non-finite.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import moduli
from .certify import (CertReport, b_for_instance, check_asymptotic_regularity, check_b,
                      check_lemma_inequalities, check_rate_of_convergence, inject_fault,
                      metastability_witness_record, residuals, soundness_check, validate_moduli)
from .config import CHECK_GROUPS, ConfigError, ExperimentConfig, default_section5_config
from .counterfunctions import IterationBudget
from .dynamics import NonFiniteIterate, browder_path, run_halpern, run_hppa, run_ppa
from .export import atomic_write_text, rate_table_csv, residual_csv, to_json, trajectory_csv
from .moduli import MissingModulus, ModuliPack
from .operators import as_point
from .showcase import delta_bar_L, rate_rows, run_section5, sigma_bars, theta0

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_NUMERIC = 0, 1, 2, 3
GENERIC_RATES = ("theta_v1", "theta_v2", "sigma", "sigma_star", "phi_v1", "phi_v2", "delta_L")
CLOSED_FORM_RATES = ("theta0", "sigma_bar", "sigma_bar_star", "delta_bar_L")


class CliError(Exception):
    """Structured failure reported as one JSON object on stderr."""

    def __init__(self, kind: str, message: str, status: int = EXIT_USAGE, **extra):
        super().__init__(message)
        self.payload = {"error": kind, "message": message, **extra}
        self.status = status


def _warn(message: str):
    print(f"warning: {message}", file=sys.stderr)


# ---------------------------------------------------------------- configuration


def load_config(args) -> ExperimentConfig:
    """Read ``--config`` (or the worked-example default) and apply command-line overrides."""
    overrides = {}
    for flag, key in (("budget", "budget"), ("kmax", "k_max"), ("seed", "seed"), ("out", "out")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides[key] = value
    if args.config is None:
        return default_section5_config(**overrides)
    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", "config") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg}", None, exc.lineno, exc.colno) from None
    if isinstance(data, dict):
        data.update(overrides)
    return ExperimentConfig.from_dict(data, text)


def _instance(cfg: ExperimentConfig):
    op = cfg.build_operator()
    u = as_point(cfg.u, op.dim)
    x0 = as_point(cfg.x0, op.dim)
    return op, cfg.build_schedule(), u, x0


def _pack(cfg: ExperimentConfig, op, u, x0) -> tuple[int, ModuliPack | None]:
    b = b_for_instance(op, u, x0)
    pack = cfg.build_pack(b)
    return (pack.b if pack else b), pack


def _theta(pack: ModuliPack):
    """``||x_n - z_n||`` rate from the first branch whose moduli are available."""
    for version, branch in ((1, "C1"), (1, "C2"), (2, "C1"), (2, "C2")):
        fn = moduli.theta_v1 if version == 1 else moduli.theta_v2
        try:
            fn(pack, 0, branch)
        except MissingModulus:
            continue
        return (lambda k: fn(pack, k, branch)), f"theta_v{version}[{branch}]"
    raise MissingModulus("no rate of ||x_n - z_n|| -> 0 is available for these moduli")


def _out_dir(cfg: ExperimentConfig) -> Path:
    return Path(cfg.out)


# ---------------------------------------------------------------- iterate


def cmd_iterate(cfg: ExperimentConfig) -> int:
    op, schedule, u, x0 = _instance(cfg)
    if cfg.algorithm == "ppa":
        traj = run_ppa(op, schedule, x0, cfg.budget)
    elif cfg.algorithm == "halpern":
        beta = cfg.halpern_beta if cfg.halpern_beta is not None else schedule.beta_limit
        traj = run_halpern(op, beta, schedule, u, x0, cfg.budget)
    else:
        traj = run_hppa(op, schedule, u, x0, cfg.budget)
    out = _out_dir(cfg)
    atomic_write_text(out / "trajectory.csv", trajectory_csv(traj))
    beta_ref = traj.beta[0] if cfg.algorithm == "halpern" else schedule.beta_limit
    atomic_write_text(out / "residuals.csv", residual_csv(residuals(traj, op, beta_ref)))
    return EXIT_OK


# ---------------------------------------------------------------- rates


def _generic_rate_tables(cfg: ExperimentConfig, pack: ModuliPack) -> dict:
    """Name -> row generator for every rate formula over the configured moduli."""
    ks = range(cfg.k_max + 1)
    gs = cfg.counterfunctions()
    b = pack.b

    def per_k(fn):
        return lambda: [(k, "", fn(k)) for k in ks]

    def per_g(fn):
        return lambda: [(k, g.describe(), fn(k, g)) for k in ks for g in gs]

    def per_L(fn):
        return lambda: [(k, L, fn(k, L)) for k in ks for L in cfg.constant_Ls()]

    def theta():
        return _theta(pack)[0]

    def sigma(k):
        pack.require("sigma0", why="rate of asymptotic regularity")
        return moduli.asreg_sigma(pack.sigma0, b, theta(), k)

    def sigma_star(k):
        pack.require("sigma0", "sigma4", why="rate of asymptotic regularity for the family")
        return moduli.asreg_rates(pack.sigma0, pack.sigma4, b, pack.ell, theta(), k).sigma_fam

    return {
        "theta_v1": per_k(lambda k: moduli.theta_v1(pack, k, "C1" if pack.sigma1 else "C2")),
        "theta_v2": per_k(lambda k: moduli.theta_v2(pack, k, "C1" if pack.sigma1 else "C2")),
        "sigma": per_k(sigma),
        "sigma_star": per_k(sigma_star),
        "phi_v1": per_g(lambda k, g: moduli.phi_v1(pack, k, g, "C1" if pack.sigma1 else "C2",
                                                   budget=cfg.budget)),
        "phi_v2": per_g(lambda k, g: moduli.phi_v2(pack, k, g, "C1" if pack.sigma1 else "C2",
                                                   budget=cfg.budget)),
        "delta_L": per_L(lambda k, L: moduli.delta_L(theta(), b, L, k)),
    }


def _closed_form_tables(cfg: ExperimentConfig, b: int) -> dict:
    ks = range(cfg.k_max + 1)
    return {
        "theta0": lambda: [(k, "", theta0(b, k)) for k in ks],
        "sigma_bar": lambda: [(k, "", sigma_bars(b, k).bar) for k in ks],
        "sigma_bar_star": lambda: [(k, "", sigma_bars(b, k).bar_star) for k in ks],
        "delta_bar_L": lambda: [(k, L, delta_bar_L(b, L, k)) for k in ks for L in cfg.constant_Ls()],
    }


def rate_tables(cfg: ExperimentConfig, op, u, x0) -> dict:
    """``{rate_name: rows}`` for the requested rates, or every applicable one by default.

    An explicitly requested rate whose moduli are missing raises
    :class:`CliError`; in the default mode such rates are skipped.
    """
    b, pack = _pack(cfg, op, u, x0)
    tables = {}
    if pack is not None:
        tables.update(_generic_rate_tables(cfg, pack))
    if cfg.moduli == "section5":
        tables.update(_closed_form_tables(cfg, b))
    requested = cfg.rates
    names = requested if requested is not None else list(tables)
    result = {}
    for name in names:
        if name not in GENERIC_RATES + CLOSED_FORM_RATES:
            raise CliError("UnknownRate", f"unknown rate '{name}'; expected one of "
                           f"{GENERIC_RATES + CLOSED_FORM_RATES}", rate=name)
        if name not in tables:
            need = "a moduli pack" if name in GENERIC_RATES else "the 'section5' moduli preset"
            raise CliError("MissingModulus", f"rate '{name}' needs {need} in the config", rate=name)
        try:
            rows = tables[name]()
        except (MissingModulus, IterationBudget) as exc:
            if requested is not None:
                raise CliError(type(exc).__name__, str(exc), rate=name) from None
            _warn(f"skipping rate '{name}': {exc}")
            continue
        result[name] = [(name, k, g, value) for k, g, value in rows]
    return result


def cmd_rates(cfg: ExperimentConfig) -> int:
    op, _, u, x0 = _instance(cfg)
    tables = rate_tables(cfg, op, u, x0)
    if not tables:
        _warn("no rate is applicable to this configuration")
    out = _out_dir(cfg)
    for name, rows in tables.items():
        atomic_write_text(out / f"rates_{name}.csv", rate_table_csv(rows))
    return EXIT_OK


# ---------------------------------------------------------------- certify


def certify_config(cfg: ExperimentConfig, fault: bool = False) -> CertReport:
    """Run every configured check group on the HPPA trajectory of the instance."""
    op, schedule, u, x0 = _instance(cfg)
    tol = cfg.build_tolerance()
    groups = list(CHECK_GROUPS) if cfg.checks is None else cfg.checks
    report = CertReport(instance={"config": cfg.to_dict(), "config_hash": cfg.config_hash(),
                                  "operator": op.describe(), "fault_injected": fault}, tolerance=tol)
    if not groups:
        return report
    budget = cfg.budget
    b, pack = _pack(cfg, op, u, x0)
    report.instance["b"] = str(b)
    traj = run_hppa(op, schedule, u, x0, budget)
    beta = schedule.beta_limit
    zpath = browder_path(op, beta, schedule, u, n_max=budget)
    perturb = None
    if fault and budget >= 2:
        index = max(1, budget // 2)
        traj, zpath, perturb = inject_fault("step_bound", traj, zpath, op, u, min(index, budget - 1))

    skipped = []
    if "lemmas" in groups:
        report.extend(check_lemma_inequalities(traj, zpath, op, u, tol, perturb))
    needs_pack = [g for g in ("moduli", "convergence", "asreg", "witnesses") if g in groups]
    if pack is None:
        skipped = needs_pack
    else:
        theta = None
        try:
            theta, theta_name = _theta(pack)
        except MissingModulus:
            pass
        if "moduli" in groups:
            report.checks.append(check_b(pack.b, op, u, x0))
            report.extend(validate_moduli(pack, schedule, budget, tol))
        if "convergence" in groups:
            if theta is None:
                skipped.append("convergence")
            else:
                dist = np.linalg.norm(traj.points - zpath.points, axis=1)
                report.extend(check_rate_of_convergence(dist, 0.0, theta, cfg.k_max, budget, tol,
                                                        rate_name=theta_name))
        if "asreg" in groups:
            if theta is None or pack.sigma0 is None:
                skipped.append("asreg")
            else:
                rate = lambda k: moduli.asreg_sigma(pack.sigma0, pack.b, theta, k)  # noqa: E731
                report.extend(check_asymptotic_regularity(traj, op, beta, rate, cfg.k_max, budget, tol,
                                                          rate_name="sigma"))
        if "witnesses" in groups:
            for k in range(cfg.k_max + 1):
                for g in cfg.counterfunctions():
                    try:
                        bound = moduli.phi_v1(pack, k, g, "C1" if pack.sigma1 else "C2", budget=budget)
                    except (MissingModulus, IterationBudget):
                        bound = None
                    report.witnesses.append(metastability_witness_record(traj.points, k, g, budget, bound))
            report.checks.append(soundness_check(report.witnesses))
    if skipped:
        report.instance["skipped_groups"] = skipped
        _warn(f"check groups {skipped} skipped: the configured moduli do not support them")
    return report


def _write_report(out: Path, report: CertReport):
    atomic_write_text(out / "report.json", to_json(report.to_dict()))
    for failure in report.failures:
        print(f"FAIL {failure.name}: {failure.paper_anchor}", file=sys.stderr)
    for witness in report.unsound_witnesses:
        print(f"FAIL witness {witness.kind}[k={witness.k}, g={witness.g}] beats its bound", file=sys.stderr)


def cmd_certify(cfg: ExperimentConfig, fault: bool = False) -> int:
    report = certify_config(cfg, fault)
    if cfg.checks is not None and not cfg.checks:
        _warn("the check list is empty; the report contains no checks")
    _write_report(_out_dir(cfg), report)
    return EXIT_OK if report.passed else EXIT_FAILED


# ---------------------------------------------------------------- example5


def cmd_example5(cfg: ExperimentConfig, fault: bool = False) -> int:
    op, _, u, x0 = _instance(cfg)
    report, artifacts = run_section5(op, u, x0, cfg.budget, k_max=cfg.k_max, gs=cfg.g,
                                     perturbed=cfg.perturbed, tol=cfg.build_tolerance(), fault=fault,
                                     seed=cfg.seed)
    report.instance["config"] = cfg.to_dict()
    report.instance["config_hash"] = cfg.config_hash()
    out = _out_dir(cfg)
    traj = artifacts["trajectory"]
    rows = rate_rows(artifacts["b"], cfg.k_max, cfg.constant_Ls())
    for name in dict.fromkeys(r[0] for r in rows):
        atomic_write_text(out / f"rates_{name}.csv", rate_table_csv([r for r in rows if r[0] == name]))
    atomic_write_text(out / "trajectory.csv", trajectory_csv(traj))
    atomic_write_text(out / "residuals.csv", residual_csv(residuals(traj, op, 1.0)))
    _write_report(out, report)
    return EXIT_OK if report.passed else EXIT_FAILED


# ---------------------------------------------------------------- entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hppa-cert",
                                     description="Run and certify Halpern-type proximal point iterations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="experiment config (JSON); defaults to the worked example")
    common.add_argument("--out", help="output directory (overrides the config)")
    common.add_argument("--budget", type=int, help="number of iterations")
    common.add_argument("--kmax", type=int, help="largest k for rates and witnesses")
    common.add_argument("--seed", type=int, help="seed for pseudo-random error directions")
    common.add_argument("--fault-inject", action="store_true",
                        help="corrupt one iterate to confirm that certification fails")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("iterate", parents=[common], help="write trajectory.csv and residuals.csv")
    sub.add_parser("rates", parents=[common], help="write one rates_<name>.csv per rate")
    sub.add_parser("certify", parents=[common], help="write report.json; nonzero exit on failure")
    sub.add_parser("example5", parents=[common], help="the worked example end to end")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "iterate":
            return cmd_iterate(cfg)
        if args.command == "rates":
            return cmd_rates(cfg)
        if args.command == "certify":
            return cmd_certify(cfg, args.fault_inject)
        return cmd_example5(cfg, args.fault_inject)
    except ConfigError as exc:
        err = CliError("ConfigError", str(exc), field=exc.field, line=exc.line, column=exc.column)
    except CliError as exc:
        err = exc
    except MissingModulus as exc:
        err = CliError("MissingModulus", str(exc))
    except NonFiniteIterate as exc:
        err = CliError("NonFiniteIterate", str(exc), status=EXIT_NUMERIC)
    print(json.dumps(err.payload), file=sys.stderr)
    return err.status


if __name__ == "__main__":
    sys.exit(main())
