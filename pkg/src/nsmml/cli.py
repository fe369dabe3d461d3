"""Command-line harness.

Subcommands: ``estimate``, ``simulate``, ``sweep``, ``regularity``,
``locality``, ``smml``.  Tables are CSV and reports are versioned
structured text; ``--json`` switches both to JSON.  ``NSMML_SEED`` and
``NSMML_OUTDIR`` provide environment defaults for the seed and the output
directory; explicit flags take precedence.  Exit codes: 0 on success, 1
when a requested check fails (with a diagnostic line on stderr), 2 on
malformed input.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from .model import (
    InvalidConfigError,
    NeymanScottError,
    Parameter,
    ProblemConfig,
    SufficientStat,
    sufficient_stats,
)
from .estimators import (
    METHOD_IP,
    METHOD_MARGINALIZED,
    METHOD_ML,
    METHOD_WF,
    ip_estimate,
    marginalized_sigma2_ml,
    ml_estimate,
    wf_estimate,
)
from . import codebook as cbk
from . import regularity as reg
from .harness import (
    SweepSpec,
    parse_sweep_config,
    resolve_prior,
    rows_to_csv,
    run_sweep,
    simulate,
)
from .reporting import render_json, render_report, table_to_csv

_METHOD_ALIASES = {
    "ml": METHOD_ML,
    "ip": METHOD_IP,
    "wf": METHOD_WF,
    "marginalized": METHOD_MARGINALIZED,
    "marginalized_sigma2": METHOD_MARGINALIZED,
}


def _default_seed() -> int:
    return int(os.environ.get("NSMML_SEED", "0"))


def _resolve_out(path: str | None, outdir: str | None) -> Path | None:
    if path is None:
        return None
    p = Path(path)
    base = outdir if outdir is not None else os.environ.get("NSMML_OUTDIR")
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _emit(text: str, args) -> None:
    out = _resolve_out(getattr(args, "out", None), getattr(args, "outdir", None))
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text)


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip() != ""])


def _parse_methods(text: str) -> list[str]:
    if text.strip().lower() == "all":
        return [METHOD_ML, METHOD_IP, METHOD_WF, METHOD_MARGINALIZED]
    out = []
    for name in text.split(","):
        key = name.strip().lower()
        if key not in _METHOD_ALIASES:
            raise InvalidConfigError(f"unknown method {name!r}")
        out.append(_METHOD_ALIASES[key])
    return out


def _read_raw_matrix(source: str) -> np.ndarray:
    text = sys.stdin.read() if source == "-" else Path(source).read_text()
    rows = [
        [float(v) for v in line.replace(",", " ").split()]
        for line in text.splitlines()
        if line.strip()
    ]
    if not rows or any(len(r) != len(rows[0]) for r in rows):
        raise InvalidConfigError("raw data must be a rectangular numeric matrix")
    return np.array(rows)


def _cmd_estimate(args) -> int:
    if args.raw is not None:
        data = _read_raw_matrix(args.raw)
        cfg = ProblemConfig(N=data.shape[0], J=data.shape[1])
        stat = sufficient_stats(data, cfg)
    else:
        if args.m is None or args.s2 is None or args.J is None:
            raise InvalidConfigError("estimate needs either --raw or all of --J/--m/--s2")
        m = _parse_floats(args.m)
        cfg = ProblemConfig(N=m.shape[0], J=args.J)
        stat = SufficientStat(m=m, s2=args.s2)

    methods = _parse_methods(args.method)
    prior_names = [p.strip() for p in args.prior.split(",") if p.strip()]
    rows = []
    for method in methods:
        if method == METHOD_ML:
            est = ml_estimate(stat, cfg)
            rows.append([method, None, est.theta.sigma2, est.theta.mu])
        elif method == METHOD_MARGINALIZED:
            # variance-only estimator: no mean estimate to report
            rows.append([method, None, marginalized_sigma2_ml(stat, cfg), None])
        else:
            for name in prior_names:
                prior = resolve_prior(name, cfg)
                est = ip_estimate(stat, prior, cfg) if method == METHOD_IP else wf_estimate(stat, prior, cfg)
                rows.append([method, prior.p, est.theta.sigma2, est.theta.mu])

    if args.json:
        payload = [
            {
                "method": r[0],
                "prior_p": r[1],
                "sigma2_hat": r[2],
                "mu_hat": None if r[3] is None else [float(v) for v in r[3]],
            }
            for r in rows
        ]
        _emit(render_json("estimates", {"rows": payload}), args)
    else:
        table = [
            [r[0], r[1], r[2], None if r[3] is None else ";".join(repr(float(v)) for v in r[3])]
            for r in rows
        ]
        _emit(table_to_csv(["method", "prior_p", "sigma2_hat", "mu_hat"], table), args)
    return 0


def _cmd_simulate(args) -> int:
    cfg = ProblemConfig(N=args.N, J=args.J)
    mu = _parse_floats(args.mu) if "," in args.mu else np.full(cfg.N, float(args.mu))
    if mu.shape[0] != cfg.N:
        raise InvalidConfigError(f"--mu must broadcast to N={cfg.N} groups")
    data = simulate(cfg, args.sigma2, mu, args.seed)
    if args.json:
        _emit(render_json("raw-data", {"data": data}), args)
    else:
        lines = [",".join(repr(float(v)) for v in row) for row in data]
        _emit("\n".join(lines) + "\n", args)
    return 0


def _cmd_sweep(args) -> int:
    spec = parse_sweep_config(Path(args.config).read_text())
    if args.seed is not None:
        spec = SweepSpec(
            J=spec.J,
            N_list=spec.N_list,
            trials=spec.trials,
            sigma2_true=spec.sigma2_true,
            mu_law=spec.mu_law,
            estimators=spec.estimators,
            priors=spec.priors,
            seed=args.seed,
        )
    rows = run_sweep(spec)
    if args.json:
        payload = [
            {
                "N": r.N,
                "estimator": r.estimator,
                "prior_p": r.prior_p,
                "mean_ratio": r.mean_ratio,
                "sd_ratio": r.sd_ratio,
                "trials": r.trials,
            }
            for r in rows
        ]
        _emit(render_json("sweep", {"rows": payload}), args)
    else:
        _emit(rows_to_csv(rows), args)
    return 0


def _cmd_regularity(args) -> int:
    cfg = ProblemConfig(N=args.N, J=args.J)
    prior = resolve_prior(args.prior, cfg)
    rng = np.random.default_rng(args.seed)
    checks = ["homogeneity", "comprehensiveness", "automorphism"] if args.check == "all" else [args.check]
    report: dict = {"N": cfg.N, "J": cfg.J, "prior_p": prior.p, "seed": args.seed}
    failed = []

    if "homogeneity" in checks:
        thetas = [
            Parameter(math.exp(rng.normal(0.0, 1.0)), rng.normal(0.0, 2.0, cfg.N))
            for _ in range(args.samples)
        ]
        res = reg.homogeneity_check(prior, cfg, thetas, tol=args.tol)
        report["homogeneity"] = res.to_dict()
        if not res.is_homogeneous:
            failed.append("homogeneity")
    if "comprehensiveness" in checks:
        stats = [
            SufficientStat(rng.normal(0.0, 2.0, cfg.N), math.exp(rng.normal(0.0, 1.0)))
            for _ in range(args.samples)
        ]
        res = reg.comprehensiveness_check(prior, cfg, stats, tol=args.tol)
        report["comprehensiveness"] = res.to_dict()
        if not res.is_comprehensive:
            failed.append("comprehensiveness")
    if "automorphism" in checks:
        aut = reg.Automorphism(args.alpha, np.full(cfg.N, args.beta))
        res = reg.check_automorphism(aut, prior, cfg, samples=args.samples, seed=args.seed, tol=args.tol)
        report["automorphism"] = {"alpha": args.alpha, "beta": args.beta, **res.to_dict()}
        if not (res.marginal_ok and res.likelihood_ok):
            failed.append("automorphism")

    report["failed_checks"] = failed
    text = render_json("regularity", report) if args.json else render_report("regularity", report)
    _emit(text, args)
    if failed:
        print(f"regularity check failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


def _cmd_locality(args) -> int:
    cfg = ProblemConfig(N=args.N, J=args.J)
    mu = _parse_floats(args.mu) if args.mu else np.zeros(cfg.N)
    if mu.shape[0] != cfg.N:
        raise InvalidConfigError(f"--mu must have N={cfg.N} components")
    theta = Parameter(args.sigma2, mu)
    grid = reg.GridSpec(points_scale=args.points_scale, points_mean=args.points_mean)
    try:
        cert, rep = reg.locality_certificate(theta, cfg, c=args.c, grid=grid, seed=args.seed)
    except reg.CertificateError as exc:
        print(f"locality verification failed: {exc}", file=sys.stderr)
        if exc.report is not None:
            data = exc.report.to_dict()
            _emit(render_json("locality", data) if args.json else render_report("locality", data), args)
        return 1
    data = rep.to_dict()
    text = render_json("locality", data) if args.json else render_report("locality", data)
    _emit(text, args)
    return 0


def _build_smml_problem(args) -> cbk.DiscreteProblem:
    if args.load_problem:
        return cbk.problem_from_text(Path(args.load_problem).read_text())
    cfg = ProblemConfig(N=args.N, J=args.J)
    prior = resolve_prior(args.prior, cfg)
    if args.torus:
        return cbk.torus_problem(
            cfg,
            prior,
            args.torus,
            log_s_lo=args.log_s_lo,
            log_s_hi=args.log_s_hi,
            mean_coord=args.torus_mean,
            candidate_stride=args.torus_stride,
        )
    w = args.box_half_width
    box = np.array([[-w, w]] * (cfg.N + 1))
    return cbk.discretize(
        cfg,
        prior,
        box,
        args.resolution,
        cbk.CandidateSpec(extension=args.cand_extension),
    )


def _cmd_smml(args) -> int:
    problem = _build_smml_problem(args)
    if args.solver == "exhaustive":
        optima = cbk.smml_exhaustive(problem)
        book = optima[0]
        n_optima = len(optima)
    else:
        book = cbk.smml_local_search(problem, restarts=args.restarts, seed=args.seed)
        n_optima = None

    audit = cbk.region_mass_audit(problem, book)
    report: dict = {
        "cells": problem.n_cells,
        "candidates": problem.n_candidates,
        "topology": problem.topology,
        "prior_p": problem.prior.p,
        "solver": args.solver,
        "L_E": book.cost.L_E,
        "L_P": book.cost.L_P,
        "L": book.cost.L,
        "audit": audit.to_dict(),
    }
    if n_optima is not None:
        report["n_optimal_codebooks"] = n_optima
    if problem.lattice is not None and args.interior_margin:
        try:
            overlap = cbk.smml_ip_overlap(problem, book, interior_margin=args.interior_margin)
            report["overlap"] = overlap.to_dict()
        except InvalidConfigError as exc:
            report["overlap"] = {"skipped": str(exc)}
    if args.shift:
        shift = [int(v) for v in args.shift.split(",")]
        shift_arg = shift[0] if len(shift) == 1 else shift
        moved = cbk.codebook_transport(problem, book, shift_arg)
        report["transport"] = {
            "shift": shift,
            "delta_L": moved.cost.L - book.cost.L,
            "bound": cbk.transport_cost_bound(problem, shift_arg)
            if problem.topology == "truncated"
            else 0.0,
        }
    if args.save_problem:
        _resolve_out(args.save_problem, args.outdir).write_text(cbk.problem_to_text(problem))
    if args.save_codebook:
        _resolve_out(args.save_codebook, args.outdir).write_text(cbk.codebook_to_text(book))

    text = render_json("smml", report) if args.json else render_report("smml", report)
    _emit(text, args)
    return 0


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--json", action="store_true", help="emit JSON instead of CSV/structured text")
    p.add_argument("--out", help="write output to this file instead of stdout")
    p.add_argument("--outdir", help="base directory for relative output paths (env NSMML_OUTDIR)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nsmml",
        description="Estimators, regularity checks, locality certificates and discrete "
        "strict-MML codebooks for the Neyman-Scott problem.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate parameters from a statistic or raw matrix")
    p.add_argument("--J", type=int, help="observations per group (with --m/--s2)")
    p.add_argument("--m", help="comma-separated group means")
    p.add_argument("--s2", type=float, help="pooled within-group variance")
    p.add_argument("--raw", help="CSV matrix of raw data (path or - for stdin)")
    p.add_argument("--method", default="all", help="comma list of ml,ip,wf,marginalized or 'all'")
    p.add_argument("--prior", default="wallace,scale-free", help="comma list: wallace, scale-free, or numeric p")
    _add_common(p)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("simulate", help="draw a raw data matrix")
    p.add_argument("--N", type=int, required=True)
    p.add_argument("--J", type=int, required=True)
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--mu", default="0.0", help="scalar or comma-separated true means")
    p.add_argument("--seed", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="run a Monte Carlo consistency sweep from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    _add_common(p)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("regularity", help="homogeneity / comprehensiveness / automorphism checks")
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--J", type=int, default=2)
    p.add_argument("--prior", default="scale-free")
    p.add_argument("--check", default="all", choices=["all", "homogeneity", "comprehensiveness", "automorphism"])
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--tol", type=float, default=1e-9)
    p.add_argument("--alpha", type=float, default=2.0, help="automorphism scale")
    p.add_argument("--beta", type=float, default=0.7, help="automorphism translation (per coordinate)")
    _add_common(p)
    p.set_defaults(func=_cmd_regularity)

    p = sub.add_parser("locality", help="build and verify a locality certificate")
    p.add_argument("--N", type=int, default=2)
    p.add_argument("--J", type=int, default=2)
    p.add_argument("--c", type=int, default=None, help="grid constant (default: smallest valid)")
    p.add_argument("--sigma2", type=float, default=1.0)
    p.add_argument("--mu", default="", help="comma-separated center means (default zeros)")
    p.add_argument("--points-scale", type=int, default=48)
    p.add_argument("--points-mean", type=int, default=24)
    p.add_argument("--seed", type=int, default=None)
    _add_common(p)
    p.set_defaults(func=_cmd_locality)

    p = sub.add_parser("smml", help="build, solve, audit and serialize discrete instances")
    p.add_argument("--N", type=int, default=1)
    p.add_argument("--J", type=int, default=2)
    p.add_argument("--prior", default="scale-free")
    p.add_argument("--box-half-width", type=float, default=1.5)
    p.add_argument("--resolution", type=int, default=16)
    p.add_argument("--cand-extension", type=float, default=1.0)
    p.add_argument("--torus", type=int, default=0, help="build a scale-circle torus with this many cells")
    p.add_argument("--torus-stride", type=int, default=1)
    p.add_argument("--torus-mean", type=float, default=0.0)
    p.add_argument("--log-s-lo", type=float, default=-2.0)
    p.add_argument("--log-s-hi", type=float, default=2.0)
    p.add_argument("--solver", default="local", choices=["local", "exhaustive"])
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--interior-margin", type=int, default=0, help="report Ideal-Point overlap with this margin")
    p.add_argument("--shift", default="", help="transport the codebook by this lattice shift (comma ints)")
    p.add_argument("--load-problem", help="load a serialized problem instead of building one")
    p.add_argument("--save-problem")
    p.add_argument("--save-codebook")
    _add_common(p)
    p.set_defaults(func=_cmd_smml)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is None and hasattr(args, "seed"):
        args.seed = _default_seed()
    try:
        return args.func(args)
    except reg.CertificateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except reg.LocalityConstructionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (InvalidConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NeymanScottError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
