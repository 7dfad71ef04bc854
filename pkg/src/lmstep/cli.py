"""Command-line interface: simulate, fit, montecarlo, bootstrap, scores.

Exit codes: 0 success, 1 usage or parse error, 2 non-convergence,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import io
from .em import FitOptions, fit_basic_lm_fml, fit_cov_lm_fml
from .errors import (ConvergenceError, DataFormatError, DegenerateLikelihoodError,
                     LmStepError, SeparationError)
from .params import DIFFERENCE, PAIRWISE, CovariateLatentParams, LatentChainParams
from .report import bootstrap_se, score_table
from .simulate import (gen_panel, preset_names, run_monte_carlo, scenario_preset)
from .threestep import ThreeStepOptions, fit_3s, fit_3s_imp

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOCONV = 2
EXIT_NUMERIC = 3


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _add_common(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--threads", type=int, default=1, help="worker budget hint")
    p.add_argument("--config", default=None, help="INI config file; flags override it")


def build_parser() -> _Parser:
    parser = _Parser(prog="lmstep", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    p.add_argument("--scenario", required=True)
    p.add_argument("--r", type=int, default=None, help="item-count override")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--T", type=int, default=None)
    _add_common(p)

    p = sub.add_parser("fit", help="fit one model to a dataset")
    p.add_argument("--data", default=None, help="directory holding responses.csv (+covariates.csv)")
    p.add_argument("--responses", default=None)
    p.add_argument("--covariates", default=None)
    p.add_argument("--method", choices=["fml", "3s", "3s-imp"], required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--layout", choices=[PAIRWISE, DIFFERENCE], default=PAIRWISE)
    p.add_argument("--n-starts", type=int, default=10)
    p.add_argument("--max-iter", type=int, default=1000)
    p.add_argument("--rel-tol", type=float, default=1e-8)
    p.add_argument("--imp-max-iter", type=int, default=200)
    p.add_argument("--imp-tol", type=float, default=1e-6)
    _add_common(p)

    p = sub.add_parser("montecarlo", help="replicated estimator comparison")
    p.add_argument("--scenario", required=True)
    p.add_argument("--methods", required=True, help="comma list from fml,3s,3s-imp")
    p.add_argument("--reps", type=int, required=True)
    p.add_argument("--r", type=int, default=None)
    p.add_argument("--layout", choices=[PAIRWISE, DIFFERENCE], default=PAIRWISE)
    p.add_argument("--n-starts", type=int, default=10)
    _add_common(p)

    p = sub.add_parser("bootstrap", help="nonparametric bootstrap standard errors")
    p.add_argument("--data", default=None)
    p.add_argument("--responses", default=None)
    p.add_argument("--covariates", default=None)
    p.add_argument("--method", choices=["fml", "3s", "3s-imp"], default="3s")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--layout", choices=[PAIRWISE, DIFFERENCE], default=PAIRWISE)
    p.add_argument("--B", type=int, default=99)
    p.add_argument("--allow-fml", action="store_true",
                   help="permit the expensive full-likelihood bootstrap")
    _add_common(p)

    p = sub.add_parser("scores", help="item/section mean scores and state order")
    p.add_argument("--phi", required=True, help="fitted response tables (phi.csv)")
    p.add_argument("--sections", required=True, help="item,section assignment file")
    p.add_argument("--pivot", required=True, help="section name used to order states")
    _add_common(p)
    return parser


def _apply_config(args):
    """Fill arguments from the INI section named after the subcommand;
    explicit flags win (they already sit on ``args``)."""
    if not args.config:
        return args
    cp = configparser.ConfigParser()
    read = cp.read(args.config)
    if not read:
        raise DataFormatError(f"config file not found: {args.config}")
    if not cp.has_section(args.command):
        return args
    defaults = {k.replace("-", "_"): v for k, v in cp.items(args.command)}
    argv_flags = {a.lstrip("-").replace("-", "_").split("=")[0] for a in sys.argv
                  if a.startswith("--")}
    for key, raw in defaults.items():
        if key in argv_flags or not hasattr(args, key):
            continue
        current = getattr(args, key)
        if isinstance(current, bool):
            value = raw.lower() in ("1", "true", "yes", "on")
        elif isinstance(current, int):
            value = int(raw)
        elif isinstance(current, float):
            value = float(raw)
        else:
            value = raw
        setattr(args, key, value)
    return args


def _echo_config(args, extra=None):
    os.makedirs(args.out, exist_ok=True)
    resolved = {k: v for k, v in sorted(vars(args).items())}
    if extra:
        resolved.update(extra)
    with open(os.path.join(args.out, "run_config.json"), "w", encoding="utf-8") as fh:
        json.dump(resolved, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _scenario_from_args(args):
    scenario = scenario_preset(args.scenario)
    if getattr(args, "r", None):
        scenario = scenario.with_items(args.r)
    if getattr(args, "n", None):
        scenario = replace(scenario, n=args.n)
    if getattr(args, "T", None):
        scenario = replace(scenario, T=args.T)
    return scenario


def _load_panel(args):
    resp = args.responses or (os.path.join(args.data, "responses.csv") if args.data else None)
    if not resp:
        raise _UsageError("provide --data DIR or --responses FILE")
    panel = io.read_responses(resp)
    covs = None
    cov_path = args.covariates or (os.path.join(args.data, "covariates.csv")
                                   if args.data else None)
    if cov_path and os.path.exists(cov_path):
        covs = io.read_covariates(cov_path)
        covs.check_matches(panel)
    return panel, covs


def cmd_simulate(args) -> int:
    scenario = _scenario_from_args(args)
    _echo_config(args)
    panel, covs, states = gen_panel(scenario, args.seed)
    io.write_responses(os.path.join(args.out, "responses.csv"), panel)
    if covs is not None:
        io.write_covariates(os.path.join(args.out, "covariates.csv"), covs)
    io.write_states(os.path.join(args.out, "states.csv"), states)
    from .simulate import param_vector
    names, values = param_vector(scenario.truth)
    manifest = {
        "scenario": scenario.id, "n": scenario.n, "T": scenario.T, "r": scenario.r,
        "k": scenario.k, "cats": scenario.cats.tolist(), "seed": args.seed,
        "has_covariates": covs is not None,
        "truth": {name: float(v) for name, v in zip(names, values)},
    }
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_fit(args) -> int:
    panel, covs = _load_panel(args)
    _echo_config(args)
    fit_opts = FitOptions(max_iter=args.max_iter, rel_tol=args.rel_tol,
                          n_starts=args.n_starts, seed=args.seed)
    ts_opts = ThreeStepOptions(improved=args.method == "3s-imp",
                               imp_max_iter=args.imp_max_iter, imp_tol=args.imp_tol,
                               lc_opts=fit_opts)
    t0 = time.perf_counter()
    if args.method == "fml":
        if covs is None:
            fit = fit_basic_lm_fml(panel, args.k, fit_opts)
        else:
            fit = fit_cov_lm_fml(panel, covs, args.k, args.layout, fit_opts)
    elif args.method == "3s":
        fit = fit_3s(panel, args.k, covs, args.layout, ts_opts)
    else:
        fit = fit_3s_imp(panel, args.k, covs, args.layout, ts_opts)
    wall = time.perf_counter() - t0

    io.write_phi(os.path.join(args.out, "phi.csv"), fit.params.measurement)
    latent = fit.params.latent
    if isinstance(latent, LatentChainParams):
        io.write_chain(os.path.join(args.out, "pi.csv"), os.path.join(args.out, "Pi.csv"),
                       latent)
    else:
        io.write_beta(os.path.join(args.out, "beta.csv"), latent.beta)
        io.write_gamma(os.path.join(args.out, "gamma.csv"), latent.trans,
                       slopes_path=os.path.join(args.out, "gamma_slopes.csv"))
    log = {
        "method": args.method, "k": args.k, "layout": args.layout, "seed": args.seed,
        "loglik": fit.loglik, "loglik_kind": fit.loglik_kind, "converged": fit.converged,
        "iterations": fit.iterations, "start_logliks": fit.start_logliks,
        "cycles": fit.cycles, "degenerate": fit.degenerate,
        "loglik_trace": fit.loglik_traces[int(np.argmax(fit.start_logliks))],
    }
    with open(os.path.join(args.out, "fit_log.json"), "w", encoding="utf-8") as fh:
        json.dump(log, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"fit: method={args.method} loglik={fit.loglik:.6f} "
          f"converged={fit.converged} wall={wall:.3f}s", file=sys.stderr)
    return EXIT_OK if fit.converged else EXIT_NOCONV


def cmd_montecarlo(args) -> int:
    scenario = _scenario_from_args(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    _echo_config(args, {"methods": methods})
    fit_opts = FitOptions(n_starts=args.n_starts, seed=0)
    ts_opts = ThreeStepOptions(lc_opts=fit_opts)
    reports = run_monte_carlo(scenario, methods, args.reps, args.seed,
                              fit_opts=fit_opts, ts_opts=ts_opts, layout=args.layout,
                              n_jobs=max(args.threads, 1))
    first = reports[methods[0]]
    header = ["name", "truth"]
    for m in methods:
        header += [f"{m}_bias", f"{m}_se", f"{m}_rmse"]
    rows = []
    for p, name in enumerate(first.names):
        row = [name, io.fmt(first.truth[p])]
        for m in methods:
            rep = reports[m]
            row += [io.fmt(rep.bias[p]), io.fmt(rep.se[p]), io.fmt(rep.rmse[p])]
        rows.append(row)
    io._write_table(os.path.join(args.out, "report.csv"), header, rows)
    diag = {m: {"n_failed": reports[m].n_failed,
                "n_converged": int(sum(reports[m].converged)),
                "cycles": [c for c in reports[m].cycles if c is not None]}
            for m in methods}
    with open(os.path.join(args.out, "diagnostics.json"), "w", encoding="utf-8") as fh:
        json.dump(diag, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    panel, covs = _load_panel(args)
    _echo_config(args)
    res = bootstrap_se(panel, args.k, args.B, args.seed, covs=covs, layout=args.layout,
                       estimator=args.method, allow_fml=args.allow_fml)
    io._write_table(os.path.join(args.out, "se.csv"), ["name", "estimate", "se"],
                    ([name, io.fmt(res.base[p]), io.fmt(res.se[p])]
                     for p, name in enumerate(res.names)))
    io._write_table(os.path.join(args.out, "draws.csv"), ["draw"] + res.names,
                    ([str(b + 1)] + [io.fmt(v) for v in res.estimates[b]]
                     for b in range(res.estimates.shape[0])))
    return EXIT_OK


def cmd_scores(args) -> int:
    meas = io.read_phi(args.phi)
    section_map, names = io.read_sections(args.sections)
    if args.pivot not in names:
        raise _UsageError(f"pivot section {args.pivot!r} not among {names}")
    _echo_config(args)
    table = score_table(meas, section_map, names.index(args.pivot))
    k = meas.k
    io._write_table(os.path.join(args.out, "item_scores.csv"),
                    ["item"] + [f"state_{u + 1}" for u in range(k)],
                    ([str(j + 1)] + [io.fmt(v) for v in table.mu[j]]
                     for j in range(meas.r)))
    io._write_table(os.path.join(args.out, "section_scores.csv"),
                    ["section"] + [f"state_{u + 1}" for u in range(k)],
                    ([names[d]] + [io.fmt(v) for v in table.mu_bar[d]]
                     for d in range(len(names))))
    io._write_table(os.path.join(args.out, "state_order.csv"), ["rank", "state"],
                    ([str(rank + 1), str(int(state) + 1)]
                     for rank, state in enumerate(table.state_order)))
    return EXIT_OK


_COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "montecarlo": cmd_montecarlo,
    "bootstrap": cmd_bootstrap,
    "scores": cmd_scores,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config(args)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataFormatError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except (DegenerateLikelihoodError, SeparationError, LmStepError, RuntimeError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
