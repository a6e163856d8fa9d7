"""Command-line entry point: ``bsds <command> [options]``.

Exit codes: 0 success, 2 input or usage error, 3 internal error, 4 a
self-check property failed. ``BSDS_OUTPUT_DIR`` sets the default output
directory (otherwise ``./bsds-report``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time

from .config import RunConfig, load_config
from .datasets import SyntheticSpec, generate_synthetic, load_pool, load_scores, write_pool, write_scores
from .errors import ArgumentError, InputError, StructuralError
from .experiments import cmd_bootstrap, cmd_deployment, cmd_evaluate, cmd_sensitivity, cmd_temperature_sweep
from .report import FORMATS, emit_report
from .selfcheck import run_checks

EXIT_OK, EXIT_INPUT, EXIT_INTERNAL, EXIT_PROPERTY = 0, 2, 3, 4

log = logging.getLogger("bsds")


def _floats(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _score_arg(text: str) -> tuple:
    name, sep, path = text.partition("=")
    if not sep or not name or not path:
        raise argparse.ArgumentTypeError(f"expected NAME=PATH, got {text!r}")
    return name, path


def _campaign_parser(sub, name: str, help_text: str) -> argparse.ArgumentParser:
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--pool", required=True, help="pool CSV (id,label[,group,fingerprint,columns...])")
    p.add_argument("--scores", action="append", type=_score_arg, default=[], metavar="NAME=PATH",
                   help="score table; repeatable (adds to the config's tables)")
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=FORMATS, default="tabular")
    p.add_argument("--seed", type=int, help="master seed (overrides config)")
    p.add_argument("--lam", type=float, help="false-discovery penalty")
    p.add_argument("--gamma", type=float, help="abstention penalty")
    p.add_argument("--budgets", type=_floats, help="budget fractions, e.g. 0.01,0.05,0.1")
    p.add_argument("--fold-mode", choices=("random_stratified", "by_group"))
    p.add_argument("--lenient-scores", action="store_true", help="fill missing score ids with 0 instead of failing")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bsds", description="Budget-sensitive evaluation of candidate selection.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    _campaign_parser(sub, "evaluate", "seed-0 evaluation of every configured proposer")
    p = _campaign_parser(sub, "bootstrap", "bootstrap campaign with BCa intervals")
    p.add_argument("--replicates", type=int, help="seeds including the full-data seed 0")
    p.add_argument("--workers", type=int)
    p.add_argument("--jackknife-cap", type=int)
    p.add_argument("--checkpoint", help="directory for per-seed results (enables resume)")
    p = _campaign_parser(sub, "sweep-temperature", "generative proposer DQS per softmax temperature")
    p.add_argument("--temperatures", type=_floats)
    p.add_argument("--score-name", default="ml")
    p = _campaign_parser(sub, "sensitivity-grid", "proposer ranking stability over (lambda, gamma)")
    p.add_argument("--lambdas", type=_floats)
    p.add_argument("--gammas", type=_floats)
    p = _campaign_parser(sub, "deployment-sim", "hits, cost and ROI at absolute budgets")
    p.add_argument("--unit-cost", type=float)
    p.add_argument("--hit-value", type=float)
    p.add_argument("--deploy-budgets", type=_floats)

    p = sub.add_parser("synth-gen", help="write a synthetic pool and score file")
    p.add_argument("--out", help="output directory")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--prevalence", type=float, default=0.05)
    p.add_argument("--auroc", type=float, default=0.85)
    p.add_argument("--width", type=int, default=2048)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("self-check", help="run the embedded property checks")
    p.add_argument("--corrupt-lambda-sign", action="store_true", help=argparse.SUPPRESS)
    return parser


def _output_dir(args) -> str:
    return args.out or os.environ.get("BSDS_OUTPUT_DIR") or "bsds-report"


def _resolve_config(args) -> RunConfig:
    cfg = load_config(args.config)
    d = cfg.to_dict()
    if args.seed is not None:
        d["seed"] = args.seed
        d["bootstrap"]["master_seed"] = args.seed
    if args.lam is not None:
        d["params"]["lam"] = args.lam
    if args.gamma is not None:
        d["params"]["gamma"] = args.gamma
    if args.budgets:
        d["budgets"] = args.budgets
    if args.fold_mode:
        d["settings"]["fold_mode"] = args.fold_mode
    d["scores"].update({name: os.path.abspath(path) for name, path in args.scores})
    for flag, key in (("replicates", "replicates"), ("workers", "workers"), ("jackknife_cap", "jackknife_cap")):
        if getattr(args, flag, None) is not None:
            d["bootstrap"][key] = getattr(args, flag)
    if getattr(args, "temperatures", None):
        d["temperatures"] = args.temperatures
    if getattr(args, "lambdas", None):
        d["sensitivity"]["lambdas"] = args.lambdas
    if getattr(args, "gammas", None):
        d["sensitivity"]["gammas"] = args.gammas
    for flag, key in (("unit_cost", "unit_cost"), ("hit_value", "hit_value")):
        if getattr(args, flag, None) is not None:
            d["deployment"][key] = getattr(args, flag)
    if getattr(args, "deploy_budgets", None):
        d["deployment"]["budgets"] = [int(b) for b in args.deploy_budgets]
    return RunConfig.from_dict(d)


def _load_inputs(args, cfg: RunConfig) -> tuple:
    data = load_pool(args.pool)
    scores = {
        name: load_scores(path, data.pool, strict=not args.lenient_scores)
        for name, path in sorted(cfg.scores.items())
    }
    for name, table in scores.items():
        if table.filled:
            log.warning("score table %s: %d missing ids filled with 0", name, len(table.filled))
    return data, scores


def _emit(bundle, args) -> None:
    out = _output_dir(args)
    for path in emit_report(bundle, out, args.format):
        print(path)


def _run(args) -> int:
    if args.command == "self-check":
        results = run_checks(corrupt_lambda_sign=args.corrupt_lambda_sign)
        for r in results:
            print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.detail}")
        failed = sum(not r.passed for r in results)
        print(f"{len(results) - failed}/{len(results)} checks passed")
        return EXIT_PROPERTY if failed else EXIT_OK

    if args.command == "synth-gen":
        ds = generate_synthetic(SyntheticSpec(n=args.n, prevalence=args.prevalence, target_auroc=args.auroc,
                                              width=args.width, seed=args.seed))
        out = _output_dir(args)
        os.makedirs(out, exist_ok=True)
        meta = {"realized_auroc": format(ds.realized_auroc, ".17g"), "seed": str(args.seed)}
        write_pool(os.path.join(out, "pool.csv"), ds.data, meta)
        write_scores(os.path.join(out, "scores.csv"), ds.scores, ds.data.pool)
        print(f"{ds.data.n} candidates, {ds.data.pool.n_hits} hits, realized AUROC {ds.realized_auroc:.4f}")
        return EXIT_OK

    cfg = _resolve_config(args)
    data, scores = _load_inputs(args, cfg)
    if args.command == "evaluate":
        bundle = cmd_evaluate(data, scores, cfg)
    elif args.command == "bootstrap":
        start = time.perf_counter()
        bundle, result = cmd_bootstrap(data, scores, cfg, args.checkpoint)
        elapsed = time.perf_counter() - start
        _emit(bundle, args)
        timing = os.path.join(_output_dir(args), "timing.json")
        with open(timing, "w", encoding="utf-8") as fh:
            json.dump({"wall_clock_seconds": elapsed, "seeds": cfg.bootstrap.replicates,
                       "seed_failures": len(result.failures)}, fh, indent=2)
        print(timing)
        return EXIT_OK
    elif args.command == "sweep-temperature":
        bundle = cmd_temperature_sweep(data, scores, cfg, args.score_name)
    elif args.command == "sensitivity-grid":
        bundle = cmd_sensitivity(data, scores, cfg)
    elif args.command == "deployment-sim":
        bundle = cmd_deployment(data, scores, cfg)
    else:
        raise ArgumentError(f"unknown command {args.command}")
    _emit(bundle, args)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (InputError, ArgumentError, StructuralError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:
        log.exception("internal error")
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
