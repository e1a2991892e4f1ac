"""Command-line entry point.

Subcommands drive the experiments from flat INI config files (sections
of ``key = value`` pairs) and write CSV/JSON results under the output
directory. Exit codes: 0 when every enabled assertion passes, 1 on an
assertion failure, 2 on a usage or config error. Identical argv +
config + seed produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import configparser
import json
import sys
from pathlib import Path

import numpy as np
from scipy.special import kolmogi

from . import rate_harness, sgd_diffusion, stable_ou
from .chain_compare import identity_max_error
from .sampling import (
    RngStream,
    empirical_cf,
    pareto_sample,
    stable_constants,
    stable_sample,
)

USAGE_ERROR = 2
IDENTITY_TOL = 1e-10


class CliConfigError(Exception):
    pass


def _floats(raw: str) -> list[float]:
    return [float(tok) for tok in raw.replace(",", " ").split()]


def _ints(raw: str) -> list[int]:
    return [int(tok) for tok in raw.replace(",", " ").split()]


def _load_config(path: str | None) -> configparser.ConfigParser:
    if path is None:
        raise CliConfigError("missing --config")
    cfg = configparser.ConfigParser()
    read = cfg.read(path)
    if not read:
        raise CliConfigError(f"config file not found: {path}")
    return cfg


def _resolve_seed(args, section: configparser.SectionProxy | None) -> int:
    if args.seed is not None:
        return args.seed
    if section is not None and "seed" in section:
        return int(section["seed"])
    return 0


def _model_from_section(section: configparser.SectionProxy) -> sgd_diffusion.QuadraticModel:
    variant = section.get("variant", "shifted_data")
    if "hessian_diag" in section:
        hessian = np.diag(_floats(section["hessian_diag"]))
    else:
        rows = [_floats(r) for r in section["hessian"].split(";")]
        hessian = np.array(rows)
    if variant == "shifted_data":
        return sgd_diffusion.shifted_data_model(hessian)
    return sgd_diffusion.random_curvature_from_hessian(
        hessian, section.getfloat("gamma")
    )


def _write_json(out_dir: Path, name: str, payload: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    with open(path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# --- subcommands -------------------------------------------------------------


def cmd_verify_framework(args) -> int:
    seed = args.seed if args.seed is not None else 0
    err = identity_max_error(args.trials, RngStream(seed))
    ok = err <= IDENTITY_TOL
    _say(args, f"telescoping identity over {args.trials} random chains: "
               f"max |lhs - rhs| = {err:.3e} (tolerance {IDENTITY_TOL:g})")
    _write_json(
        Path(args.out),
        "verify_framework.json",
        {"trials": args.trials, "max_error": err, "tolerance": IDENTITY_TOL,
         "seed": seed, "pass": ok},
    )
    return 0 if ok else 1


def _run_rate(args, spec: rate_harness.SweepSpec, name: str) -> int:
    Path(args.out).mkdir(parents=True, exist_ok=True)
    result = rate_harness.run_sweep(spec)
    _, window, correction = rate_harness.expected_rate(spec)
    try:
        fit = rate_harness.fit_rate(result, correction)
    except rate_harness.FitError as exc:
        _say(args, f"{name}: fit failed: {exc}")
        fit = None
    csv_path, json_path = rate_harness.emit(result, fit, Path(args.out) / f"{name}.csv")
    for row in result.rows:
        flag = "  [floor]" if row.flagged else ""
        _say(args, f"  param={row.param:<12g} w1={row.w1:.6g} stderr={row.stderr:.3g}{flag}")
    if fit is not None:
        _say(args, f"{name}: slope={fit.slope:.4f} +/- {fit.half_width:.4f} "
                   f"(correction={fit.log_correction}) -> {csv_path}")
        return 0 if (window is None or window[0] <= fit.slope <= window[1]) else 1
    return 1


def cmd_sgd_rate(args) -> int:
    cfg = _load_config(args.config)
    model_sec, sweep = cfg["model"], cfg["sweep"]
    fixed = {
        "variant": model_sec.get("variant", "shifted_data"),
        "hessian": np.diag(_floats(model_sec["hessian_diag"]))
        if "hessian_diag" in model_sec
        else np.array([_floats(r) for r in model_sec["hessian"].split(";")]),
        "T": sweep.getfloat("t"),
        "x0": np.array(_floats(sweep["x0"])),
    }
    if fixed["variant"] == "random_curvature":
        fixed["gamma"] = model_sec.getfloat("gamma")
    spec = rate_harness.SweepSpec(
        experiment="sgd",
        grid=_floats(sweep["eta_grid"]),
        fixed=fixed,
        n_paths=args.paths or sweep.getint("n_paths"),
        seed=_resolve_seed(args, sweep),
    )
    return _run_rate(args, spec, "sgd_rate")


def cmd_stable_rate(args) -> int:
    cfg = _load_config(args.config)
    sec = cfg["stable"]
    spec = rate_harness.SweepSpec(
        experiment="stable",
        grid=_floats(sec["eta_grid"]),
        fixed={
            "alpha": sec.getfloat("alpha"),
            "d": sec.getint("d"),
            "T": sec.getfloat("t"),
            "x0": _floats(sec.get("x0", "0")),
        },
        n_paths=args.paths or sec.getint("n_paths"),
        seed=_resolve_seed(args, sec),
    )
    return _run_rate(args, spec, "stable_rate")


def cmd_clt_rate(args) -> int:
    cfg = _load_config(args.config)
    sec = cfg["clt"]
    spec = rate_harness.SweepSpec(
        experiment="clt",
        grid=[float(n) for n in _ints(sec["n_grid"])],
        fixed={"d": sec.getint("d"), "innovation": sec["innovation"]},
        n_paths=args.paths or sec.getint("n_paths"),
        seed=_resolve_seed(args, sec),
    )
    return _run_rate(args, spec, "clt_rate")


def cmd_sampler_audit(args) -> int:
    cfg = _load_config(args.config)
    sec = cfg["sampler"]
    seed = _resolve_seed(args, sec)
    alphas = _floats(sec.get("alphas", "1.2 1.5 1.8"))
    dims = _ints(sec.get("dims", "1 2"))
    lambdas = _floats(sec.get("lambdas", "0.5 1 2"))
    m_cf = sec.getint("m_cf", 1_000_000)
    m_ks = sec.getint("m_ks", 100_000)
    root = RngStream(seed)
    checks = []
    ok = True
    tol = 3.0 / np.sqrt(m_cf)
    for i, alpha in enumerate(alphas):
        for j, dim in enumerate(dims):
            params = stable_constants(alpha, dim)
            draws = stable_sample(root.substream(1000 + 10 * i + j), params, m_cf)
            for lam_norm in lambdas:
                lam = np.zeros(dim)
                lam[0] = lam_norm
                gap = float(abs(empirical_cf(draws, lam) - np.exp(-lam_norm**alpha)))
                good = bool(gap <= tol)
                ok &= good
                checks.append(
                    {"check": "stable_cf", "alpha": alpha, "d": dim,
                     "lambda": lam_norm, "gap": gap, "tol": tol, "pass": good}
                )
            pareto = pareto_sample(root.substream(2000 + 10 * i + j), params, m_ks)
            radii = np.linalg.norm(pareto, axis=1)
            grid = np.sort(radii)
            ecdf = np.arange(1, m_ks + 1) / m_ks
            model_cdf = 1.0 - grid**-alpha
            ks = float(
                np.maximum(np.abs(ecdf - model_cdf), np.abs(ecdf - 1.0 / m_ks - model_cdf)).max()
            )
            crit = float(kolmogi(0.01) / np.sqrt(m_ks))
            support_violations = int(np.sum(radii <= 1.0))
            good = bool(ks <= crit and support_violations == 0)
            ok &= good
            checks.append(
                {"check": "pareto_ks", "alpha": alpha, "d": dim, "ks": ks,
                 "critical_1pct": crit, "support_violations": support_violations,
                 "pass": good}
            )
    for c in checks:
        _say(args, "  " + json.dumps(c, sort_keys=True))
    _write_json(Path(args.out), "sampler_audit.json",
                {"seed": seed, "checks": checks, "pass": ok})
    return 0 if ok else 1


def cmd_assumptions(args) -> int:
    cfg = _load_config(args.config)
    model = _model_from_section(cfg["model"])
    sec = cfg["assumptions"] if cfg.has_section("assumptions") else None
    n_probe = int(sec["n_probe"]) if sec and "n_probe" in sec else 10_000
    seed = _resolve_seed(args, sec)
    report = sgd_diffusion.check_assumptions(model, n_probe, RngStream(seed))
    c = report.constants
    _say(args, f"theta0={c.theta0:.6g} delta={c.delta:.6g} kappa={c.kappa:.6g} "
               f"theta1..5=({c.theta1:g},{c.theta2:g},{c.theta3:g},{c.theta4:g},{c.theta5:g})")
    for chk in report.checks:
        _say(args, f"  {chk.name}: max relative violation {chk.max_rel_violation:.3e} "
                   f"{'ok' if chk.passed else 'VIOLATED'}")
    payload = {
        "seed": seed,
        "n_probe": n_probe,
        "constants": {
            "theta0": c.theta0, "theta1": c.theta1, "theta2": c.theta2,
            "theta3": c.theta3, "theta4": c.theta4, "theta5": c.theta5,
            "delta": c.delta, "kappa": c.kappa, "ell0": list(c.ell0),
        },
        "checks": [
            {"name": chk.name, "max_rel_violation": chk.max_rel_violation,
             "pass": chk.passed}
            for chk in report.checks
        ],
        "pass": report.passed,
    }
    _write_json(Path(args.out), "assumptions.json", payload)
    return 0 if report.passed else 1


def cmd_moments(args) -> int:
    cfg = _load_config(args.config)
    payload: dict = {"pass": True}
    ok = True
    if cfg.has_section("sgd_moments"):
        sec = cfg["sgd_moments"]
        model = _model_from_section(cfg["model"])
        seed = _resolve_seed(args, sec)
        eta_raw = sec.get("eta", "auto")
        eta = (
            sgd_diffusion.admissible_eta(model) / 2.0
            if eta_raw == "auto"
            else float(eta_raw)
        )
        mcfg = sgd_diffusion.SgdConfig(
            eta=eta,
            horizon_n=sec.getint("steps", 10_000),
            x0=np.array(_floats(sec.get("x0", " ".join(["0"] * model.dim)))),
            n_paths=sec.getint("n_paths", 2000),
        )
        report = sgd_diffusion.moment_audit(model, mcfg, RngStream(seed))
        ok &= not report.flagged
        payload["sgd"] = {
            "eta": eta, "steps": mcfg.horizon_n, "budget": report.budget,
            "max_estimate": float(report.estimates.max()), "flagged": report.flagged,
        }
        _say(args, f"sgd fourth moment: max E|w|^4 = {report.estimates.max():.6g} "
                   f"(budget {report.start_value + report.budget:.6g})"
                   f"{' FLAGGED' if report.flagged else ''}")
    if cfg.has_section("stable_moments"):
        sec = cfg["stable_moments"]
        seed = _resolve_seed(args, sec)
        params = stable_constants(sec.getfloat("alpha", 1.5), sec.getint("d", 1))
        scfg = stable_ou.StableOuConfig(
            params=params,
            eta=sec.getfloat("eta", 0.5),
            horizon_n=sec.getint("steps", 10_000),
            x0=np.resize(np.array(_floats(sec.get("x0", "0"))), params.dim),
            n_paths=sec.getint("n_paths", 2000),
        )
        report = stable_ou.em_moment_audit(scfg, RngStream(seed))
        ok &= not report.flagged
        payload["stable"] = {
            "eta": scfg.eta, "steps": scfg.horizon_n, "budget": report.budget,
            "max_estimate": float(report.estimates.max()), "flagged": report.flagged,
        }
        _say(args, f"euler chain first moment: max E|Y| = {report.estimates.max():.6g} "
                   f"(budget {report.start_norm + report.budget:.6g})"
                   f"{' FLAGGED' if report.flagged else ''}")
    payload["pass"] = ok
    _write_json(Path(args.out), "moments.json", payload)
    return 0 if ok else 1


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="markov-approx",
        description="Desk-scale verification of Markov-process approximation rates",
    )
    sub = parser.add_subparsers(dest="command")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    common.add_argument("--paths", type=int, default=None,
                        help="override the configured path count")
    common.add_argument("--quiet", action="store_true")

    p = sub.add_parser("verify-framework", parents=[common],
                       help="machine-precision check of the telescoping identity")
    p.add_argument("--trials", type=int, default=500)
    p.set_defaults(func=cmd_verify_framework)
    for name, func, hlp in (
        ("sgd-rate", cmd_sgd_rate, "SGD vs diffusion rate sweep"),
        ("stable-rate", cmd_stable_rate, "Euler chain vs heavy-tailed OU rate sweep"),
        ("clt-rate", cmd_clt_rate, "partial sums vs normal rate sweep"),
        ("sampler-audit", cmd_sampler_audit, "stable CF and Pareto tail audits"),
        ("assumptions", cmd_assumptions, "model constant probes"),
        ("moments", cmd_moments, "moment boundedness audits"),
    ):
        p = sub.add_parser(name, parents=[common], help=hlp)
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return USAGE_ERROR if exc.code not in (0, None) else 0
    if not getattr(args, "command", None):
        parser.print_usage(sys.stderr)
        return USAGE_ERROR
    needs_config = args.command not in ("verify-framework",)
    if needs_config and not args.config:
        print(f"error: {args.command} requires --config", file=sys.stderr)
        return USAGE_ERROR
    try:
        return args.func(args)
    except (KeyError, ValueError, CliConfigError, configparser.Error) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return USAGE_ERROR


if __name__ == "__main__":
    sys.exit(main())
