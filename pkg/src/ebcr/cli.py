"""Command-line interface.

Three subcommands::

    ebcr simulate --config cfg.json [--out PREFIX] [--threads N]
    ebcr analyze  --data data.csv --target-id ID --coef 1 --method pa
                  [--alpha 0.05] [--seed S] [--estimator auto|ols|lasso] ...
    ebcr region   --summaries s.csv [--target-id ID] [--method pa]
                  [--alpha 0.05] [--seed S] [--out PREFIX]

Exit codes: 0 success, 1 input error, 2 numerical failure.  Worker
parallelism for ``simulate`` is capped by ``--threads`` or the
``EBCR_THREADS`` environment variable (0 = auto).
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .dataio import (
    DatasetSchema,
    load_dataset,
    read_summaries_csv,
    results_markdown,
    write_report,
)
from .errors import NumericalError
from .linear import EstimateSummary, debiased_lasso, ols_fit
from .priors import fit_deconv_prior, fit_gaussian_prior, fit_kde_prior
from .regions import (
    Region,
    TauSolveConfig,
    classical_interval,
    eb_gaussian_interval,
    hybrid_select,
    region_for_target,
)
from .simulate import ExperimentConfig, run_experiment

_MC_METHODS = ("kd", "dc", "hybrid")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); the contract is exit 1
        raise _UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="ebcr", description="Empirical Bayes confidence regions")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a simulation study from a JSON config")
    sim.add_argument("--config", required=True, help="JSON experiment configuration")
    sim.add_argument("--out", default=None, help="report path prefix (writes .md/.csv/.json)")
    sim.add_argument("--threads", type=int, default=None, help="worker threads (0 = auto)")

    ana = sub.add_parser("analyze", help="EB and classical regions for one dataset")
    ana.add_argument("--data", required=True, help="CSV dataset")
    ana.add_argument("--target-id", required=True, help="population id of the target")
    ana.add_argument("--coef", type=int, default=1, help="1-based covariate index of interest")
    ana.add_argument("--method", choices=("pa", "kd", "dc", "hybrid"), default="pa")
    ana.add_argument("--alpha", type=float, default=0.05)
    ana.add_argument("--seed", type=int, default=None)
    ana.add_argument("--estimator", choices=("auto", "ols", "lasso"), default="auto")
    ana.add_argument("--id-col", default="id")
    ana.add_argument("--response-col", default="y")
    ana.add_argument("--min-rows", type=int, default=50)
    ana.add_argument("--mc-draws", type=int, default=4000)
    ana.add_argument("--out", default=None)

    reg = sub.add_parser("region", help="region from precomputed estimate summaries")
    reg.add_argument("--summaries", required=True, help="CSV with id,theta_hat,sigma_hat_sq,n")
    reg.add_argument("--target-id", default=None, help="summary row to condition on (omit for n0=0)")
    reg.add_argument("--method", choices=("pa", "kd", "dc", "hybrid"), default="pa")
    reg.add_argument("--alpha", type=float, default=0.05)
    reg.add_argument("--seed", type=int, default=None)
    reg.add_argument("--mc-draws", type=int, default=4000)
    reg.add_argument("--out", default=None)
    return parser


def _region_payload(region: Region) -> dict:
    return {
        "intervals": [[lo, hi] for lo, hi in region.intervals],
        "measure": region.measure,
        "tau": region.tau,
        "plateau": region.plateau,
        "full_support": region.full_support,
    }


def _format_region(label: str, region: Region) -> str:
    parts = ", ".join(f"({lo:.6g}, {hi:.6g})" for lo, hi in region.intervals)
    return f"{label}: {parts}  measure={region.measure:.6g}"


def _fit_prior(method: str, summaries: list[EstimateSummary]):
    if method == "pa":
        return fit_gaussian_prior(summaries)
    if method == "dc":
        return fit_deconv_prior(summaries)
    return fit_kde_prior(summaries)  # kd and hybrid


def _require_seed(method: str, n0: int, seed: int | None) -> int:
    if method in _MC_METHODS and n0 > 0 and seed is None:
        raise ValueError(f"--seed is required for method {method!r} (randomized solver)")
    return 0 if seed is None else seed


def _emit(args, payload: dict, lines: list[str]) -> None:
    for line in lines:
        print(line)
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.with_suffix(".json").write_text(json.dumps(payload, indent=2), encoding="utf-8")
        print(f"wrote {out.with_suffix('.json')}")


def _cmd_simulate(args) -> int:
    cfg_path = Path(args.config)
    if not cfg_path.exists():
        raise ValueError(f"no such file: {cfg_path}")
    cfg = ExperimentConfig.from_dict(json.loads(cfg_path.read_text(encoding="utf-8")))
    results = run_experiment(cfg, threads=args.threads)
    print(results_markdown(results), end="")
    if args.out:
        paths = write_report(results, args.out, extra={"config": cfg.to_dict()})
        for path in paths.values():
            print(f"wrote {path}")
    return 0


def _cmd_analyze(args) -> int:
    schema = DatasetSchema(id_column=args.id_col, response_column=args.response_col)
    study = load_dataset(
        args.data, schema, min_rows=args.min_rows,
        target_id=args.target_id, target_index=args.coef - 1, alpha=args.alpha,
    )
    if args.coef < 1 or args.coef > study.populations[0].p:
        raise ValueError(f"--coef must lie in [1, {study.populations[0].p}]")
    target = study.target()
    use_ols = args.estimator == "ols" or (
        args.estimator == "auto" and min(pop.n for pop in study.populations) > study.populations[0].p
    )

    def estimate(pop):
        if use_ols:
            return ols_fit(pop, study.target_index).summary
        return debiased_lasso(pop, study.target_index)

    obs = estimate(target)
    summaries = [estimate(pop) for pop in study.others()]
    seed = _require_seed(args.method, obs.n, args.seed)
    cfg = TauSolveConfig(mc_draws=args.mc_draws, seed=seed)
    prior = _fit_prior(args.method, summaries)
    if args.method == "pa":
        eb = eb_gaussian_interval(prior, obs, args.alpha)
        chosen = "eb"
    elif args.method == "hybrid":
        picked = hybrid_select(prior, obs, args.alpha, cfg)
        eb, chosen = picked.region, picked.method
    else:
        eb = region_for_target(prior, obs, args.alpha, cfg)
        chosen = "eb"
    cl = classical_interval(obs, args.alpha)
    payload = {
        "target_id": study.target_id,
        "coef": args.coef,
        "method": args.method,
        "chosen": chosen,
        "alpha": args.alpha,
        "estimator": "ols" if use_ols else "lasso",
        "target_estimate": {
            "theta_hat": obs.theta_hat, "sigma_hat_sq": obs.sigma_hat_sq, "n": obs.n,
        },
        "eb": _region_payload(eb),
        "classical": _region_payload(cl),
    }
    _emit(args, payload, [
        f"target {study.target_id}, coefficient {args.coef} "
        f"({'ols' if use_ols else 'debiased lasso'}): theta_hat={obs.theta_hat:.6g}",
        _format_region(f"EB ({args.method})", eb),
        _format_region("classical", cl),
    ])
    return 0


def _cmd_region(args) -> int:
    summaries = read_summaries_csv(args.summaries)
    obs = None
    if args.target_id is not None:
        matches = [s for s in summaries if s.id == args.target_id]
        if len(matches) != 1:
            raise ValueError(f"target_id {args.target_id!r} matches {len(matches)} summary rows")
        obs = matches[0]
        summaries = [s for s in summaries if s.id != args.target_id]
    if len(summaries) < 2:
        raise ValueError("need at least 2 non-target summaries to fit a prior")
    seed = _require_seed(args.method, 0 if obs is None else obs.n, args.seed)
    cfg = TauSolveConfig(mc_draws=args.mc_draws, seed=seed)
    prior = _fit_prior(args.method, summaries)
    if args.method == "pa" and obs is not None:
        region = eb_gaussian_interval(prior, obs, args.alpha)
    elif args.method == "hybrid" and obs is not None:
        region = hybrid_select(prior, obs, args.alpha, cfg).region
    else:
        region = region_for_target(prior, obs, args.alpha, cfg)
    payload = {
        "target_id": args.target_id,
        "method": args.method,
        "alpha": args.alpha,
        "mode": "posterior" if obs is not None else "prior-level-set",
        "region": _region_payload(region),
    }
    _emit(args, payload, [_format_region(f"region ({payload['mode']})", region)])
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "simulate":
            return _cmd_simulate(args)
        if args.command == "analyze":
            return _cmd_analyze(args)
        return _cmd_region(args)
    except _UsageError as exc:
        print(parser.format_usage(), file=sys.stderr, end="")
        print(f"ebcr: error: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"ebcr: input error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"ebcr: numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
