"""Command-line entry point: ``ccel fit | simulate | analyze``.

Exit status: 0 on success, 2 for usage, config or data errors, 3 for
numerical failures (non-convergence, infeasible constraints, singular or
inconsistent covariance blocks, separation).
"""
from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import analyze_real, get_protocol, standin_path
from .baselines import fit_prospective_mle
from .errors import (CcelError, ConfigError, ConstraintInfeasibleError, DiagnosticsError,
                     IdentifiabilityError, InvalidInputError, NonConvergenceError,
                     ProtocolError, SeparationError, SingularBlockError)
from .inference import algorithm1, covariance, summary_rows
from .io import (RunConfig, check_columns, drop_zero_rows, load_config, read_table,
                 render_text, resolve_roles, standardize, to_sample, validate_frame,
                 write_report)
from .model import ExternalSummary
from .simulation import ESTIMATORS, Scheme, get_scheme, run_monte_carlo
from .solver import fit_known_mu, fit_mele

NUMERICAL = (NonConvergenceError, ConstraintInfeasibleError, SingularBlockError,
             DiagnosticsError, SeparationError, IdentifiabilityError)


class UsageError(CcelError):
    pass


def _floats(text, name):
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise UsageError(f"--{name} expects comma-separated numbers, got {text!r}")


def _config_for(args, mode) -> RunConfig:
    if args.config:
        cfg = load_config(args.config)
        if cfg.mode != mode:
            raise cfg.error("mode", f"is {cfg.mode!r} but the subcommand is {mode!r}")
        return cfg
    return RunConfig(mode=mode)


def _weight_from_flag(text):
    if text in ("optimal", "population"):
        return text
    path = Path(text)
    if path.is_file():
        return np.loadtxt(path, delimiter=",", ndmin=2)
    raise UsageError("--weight must be 'optimal', 'population' or a CSV file holding W")


def cmd_fit(args):
    cfg = _config_for(args, "fit")
    d = cfg.data
    if args.data:
        d["path"] = args.data
    if args.outcome:
        d["outcome"] = args.outcome
    if args.covariates:
        d["covariates"] = args.covariates.split(",")
    if args.standardize:
        d["standardize"] = True
    if args.constraint:
        kind, _, rest = args.constraint.partition(":")
        cfg.constraint = {"kind": kind}
        if kind == "subset":
            cfg.constraint["indices"] = [int(i) for i in rest.split(",")]
    ext = cfg.external
    if args.mu_tilde:
        ext["mu_tilde"] = _floats(args.mu_tilde, "mu-tilde")
    if args.n_external is not None:
        ext["n_external"] = args.n_external
    if args.weight:
        w = _weight_from_flag(args.weight)
        ext["weight"] = w.tolist() if isinstance(w, np.ndarray) else w
    if "path" not in d:
        raise UsageError("fit needs --data or data.path in the config")

    frame = read_table(d["path"])
    check_columns(cfg, frame)
    outcome, covs = resolve_roles(frame, d.get("outcome"), d.get("covariates"))
    frame = validate_frame(frame, outcome, covs, source=str(d["path"]))
    frame = drop_zero_rows(frame, d.get("drop_zero"))
    if d.get("standardize"):
        frame, _ = standardize(frame, covs)
    sample = to_sample(frame, outcome, covs)
    spec = cfg.constraint_spec(sample.p)
    external = cfg.external_summary(spec.q)

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        if external.mode == "optimal":
            fit, cov = algorithm1(sample, external, spec, cfg.solver)
        elif external.mode == "population":
            fit = fit_known_mu(sample, external.mu_tilde, spec, cfg.solver)
            cov = covariance(fit, sample, spec)
        else:
            fit = fit_mele(sample, external, spec, cfg.solver)
            cov = covariance(fit, sample, spec)
    try:
        mle = fit_prospective_mle(sample)
        names = ["alpha"] + [f"beta{j + 1}" for j in range(sample.p)]
        mle_rows = [{"parameter": n, "estimate": e, "se": s}
                    for n, e, s in zip(names, mle.params, mle.se)]
    except CcelError:
        mle_rows = []
    doc = {
        "kind": "fit",
        "inputs": {"data": str(d["path"]), "outcome": outcome, "covariates": covs,
                   "n": sample.n, "n1": sample.n1, "n0": sample.n0,
                   "standardized": bool(d.get("standardize", False)),
                   "constraint": spec.to_dict(), "mu_tilde": external.mu_tilde,
                   "n_external": external.n_external, "weight_mode": external.mode},
        "solver": cfg.solver.to_dict(),
        "fit": {"converged": fit.converged, "iterations": fit.iterations,
                "gradient_norm": fit.gradient_norm, "objective": fit.objective,
                "theta": fit.theta_hat.to_vector(), "labels": fit.theta_hat.labels(),
                "algorithm1_iterations": fit.diagnostics.get("algorithm1_iterations"),
                "covariance_form": cov.form, "sigma": cov.sigma,
                "warnings": sorted({str(w.message) for w in caught})},
        "estimates": summary_rows(fit, cov),
        "mle": mle_rows,
    }
    return doc, args.out or cfg.output or "fit_report"


def cmd_simulate(args):
    cfg = _config_for(args, "simulate")
    sim = cfg.simulation
    scheme = sim.get("scheme", "A1")
    if args.scheme:
        scheme = args.scheme
    mult = args.external_multiplier if args.external_multiplier is not None else sim.get(
        "external_multiplier")
    if isinstance(scheme, dict):
        try:
            scheme = Scheme.from_dict(scheme)
        except (KeyError, TypeError, ValueError) as exc:
            raise cfg.error("simulation.scheme", f"invalid scheme definition ({exc})") from exc
        if mult is not None:
            scheme = scheme.with_multiplier(int(mult))
    else:
        scheme = get_scheme(str(scheme), None if mult is None else int(mult))
    reps = args.reps if args.reps is not None else sim.get("reps", 200)
    seed = args.seed if args.seed is not None else cfg.seed
    est = args.estimators.split(",") if args.estimators else sim.get("estimators", list(ESTIMATORS))
    if scheme.n_external == 0:
        est = [e for e in est if e == "mle"]
    report = run_monte_carlo(scheme, est, reps=reps, master_seed=seed, cfg=cfg.solver)
    return report.to_dict(), args.out or cfg.output or f"simulate_{scheme.name}"


def cmd_analyze(args):
    cfg = _config_for(args, "analyze")
    an = cfg.analysis
    path = args.data or cfg.data.get("path")
    if path is None:
        path = standin_path()
        print("no --data given: using the bundled synthetic stand-in", file=sys.stderr)
    name = args.protocol or an.get("protocol", "paper")
    protocol = get_protocol(name, reps=args.reps if args.reps is not None else an.get("reps"),
                            outcome=cfg.data.get("outcome"),
                            covariates=tuple(cfg.data["covariates"]) if cfg.data.get("covariates") else None)
    seed = args.seed if args.seed is not None else cfg.seed
    doc = analyze_real(path, protocol, seed=seed, cfg=cfg.solver)
    doc["metadata"]["protocol"] = name
    return doc, args.out or cfg.output or "analyze_report"


def build_parser():
    parser = argparse.ArgumentParser(
        prog="ccel", description="Case-control logistic regression with external summary data.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit one data set")
    f.add_argument("--config", help="YAML run config")
    f.add_argument("--data", help="delimited data file with a header row")
    f.add_argument("--outcome", help="0/1 outcome column")
    f.add_argument("--covariates", help="comma-separated covariate columns")
    f.add_argument("--standardize", action="store_true", help="z-score covariates first")
    f.add_argument("--constraint", help="identity (default) or subset:i,j,...")
    f.add_argument("--mu-tilde", help="external means, comma-separated")
    f.add_argument("--n-external", type=int, help="external sample size N")
    f.add_argument("--weight", help="optimal, population, or CSV file with W")
    f.add_argument("--out", help="report path prefix (writes .json and .txt)")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="Monte Carlo study on a built-in scheme")
    s.add_argument("--config")
    s.add_argument("--scheme", help="A1, A2, B1, B2, C1 or C2")
    s.add_argument("--reps", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--external-multiplier", type=int, choices=(0, 1, 4))
    s.add_argument("--estimators", help=f"comma-separated subset of {','.join(ESTIMATORS)}")
    s.add_argument("--out")
    s.set_defaults(func=cmd_simulate)

    a = sub.add_parser("analyze", help="split/resample protocol on a real data set")
    a.add_argument("--config")
    a.add_argument("--data")
    a.add_argument("--protocol", choices=("paper", "generic"))
    a.add_argument("--reps", type=int)
    a.add_argument("--seed", type=int)
    a.add_argument("--out")
    a.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc, prefix = args.func(args)
        jpath, _ = write_report(doc, prefix)
    except NUMERICAL as exc:
        print(f"ccel: numerical failure [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 3
    except (UsageError, ConfigError, InvalidInputError, ProtocolError, CcelError) as exc:
        print(f"ccel: error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 2
    print(render_text(doc), end="")
    print(f"report written to {jpath}", file=sys.stderr)
    return 0


if __name__ == "__main__":
    sys.exit(main())
