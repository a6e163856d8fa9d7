"""Experiment drivers behind the command-line tool; each returns a ReportBundle."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .campaign import BootstrapResult, SeedResult, bootstrap_campaign, evaluate_seed
from .config import DeploymentEconomics, RunConfig
from .data import PoolData
from .errors import ArgumentError
from .metrics import LabeledPool, Selection, auxiliary_metrics, bsds, dqs
from .proposers import TRAINED_KINDS, ProposerConfig, ProposerKind, run_campaign
from .report import ReportBundle
from .resample import sensitivity_grid


def base_meta(cfg: RunConfig, command: str, data: PoolData) -> dict:
    return {
        "command": command,
        "config_hash": cfg.config_hash(),
        "lam": cfg.params.lam,
        "gamma": cfg.params.gamma,
        "master_seed": cfg.bootstrap.master_seed,
        "n": data.n,
        "n_hits": data.pool.n_hits,
    }


def selection_mcc(pool: LabeledPool, sel: Selection) -> Optional[float]:
    """MCC of the proposer's own selection, counting every unselected candidate as a negative call."""
    k = int(sel.selected.size)
    tp = int(pool.labels[sel.selected].sum()) if k else 0
    fp = k - tp
    fn = pool.n_hits - tp
    tn = pool.n - k - fn
    denom = float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    return (tp * tn - fp * fn) / math.sqrt(denom) if denom > 0 else None


def _proposer_scores(config: ProposerConfig, run) -> Optional[np.ndarray]:
    ctx = run.context
    if config.kind in (ProposerKind.RANDOM, ProposerKind.FIXED):
        return None
    if config.kind in TRAINED_KINDS:
        return ctx.trained_scores(config)
    try:
        return ctx.table(config.scores)
    except ArgumentError:
        return None


def _check_proposers(cfg: RunConfig) -> None:
    if not cfg.proposers:
        raise ArgumentError("no proposers configured")


def evaluation_tables(bundle: ReportBundle, cfg: RunConfig, data: PoolData, seed0: SeedResult) -> None:
    """Seed-0 rates, BSDS and auxiliary metrics per proposer and budget."""
    run = seed0.run
    fractions = cfg.budgets
    rates = bundle.table("rates", (
        "proposer", "fraction", "budget", "hr", "fdr", "cov", "tp", "n_selected", "n_abstained",
        "bsds", "ef", "auroc", "mcc", "selection_mcc",
    ))
    curves = {}
    for config in cfg.proposers:
        if config.name not in seed0.rates:
            continue
        s = _proposer_scores(config, run)
        curve = []
        for f, b, r, sel in zip(fractions, seed0.budgets, seed0.rates[config.name], run.selections[config.name]):
            aux = auxiliary_metrics(data.pool, s, b) if s is not None else None
            value = bsds(r, cfg.params)
            curve.append(value)
            rates.add(config.name, f, b, r.hr, r.fdr, r.cov, r.tp, r.n_selected, r.n_abstained, value,
                      aux and aux.ef, aux and aux.auroc, aux and aux.mcc, selection_mcc(data.pool, sel))
        curves[config.name] = curve
    names = list(curves)
    series = bundle.table("series/budget_curves", ("fraction", "budget", *names))
    for i, (f, b) in enumerate(zip(fractions, seed0.budgets)):
        series.add(f, b, *[curves[n][i] for n in names])
    for name, msg in sorted(seed0.failures.items()):
        bundle.notes.append(f"{name} skipped: {msg}")


def cmd_evaluate(data: PoolData, scores: dict, cfg: RunConfig) -> ReportBundle:
    _check_proposers(cfg)
    seed0 = evaluate_seed(data, scores, cfg.proposers, cfg.grid, cfg.params, cfg.bootstrap.master_seed, 0,
                          cfg.settings, keep_run=True)
    bundle = ReportBundle(meta=base_meta(cfg, "evaluate", data))
    bundle.meta["seeds"] = "0"
    evaluation_tables(bundle, cfg, data, seed0)
    dq = bundle.table("dqs", ("proposer", "dqs"))
    for config in cfg.proposers:
        if config.name in seed0.rates:
            dq.add(config.name, seed0.dqs(config.name, cfg.params))
    return bundle


def cmd_bootstrap(data: PoolData, scores: dict, cfg: RunConfig, checkpoint_dir: Optional[str] = None) -> tuple:
    """Full bootstrap; returns ``(bundle, result)``."""
    _check_proposers(cfg)
    plan = cfg.bootstrap
    result = bootstrap_campaign(data, scores, cfg.proposers, cfg.grid, cfg.params, plan, cfg.settings,
                                checkpoint_dir, cfg.config_hash())
    bundle = ReportBundle(meta=base_meta(cfg, "bootstrap", data))
    bundle.meta["seeds"] = f"0-{plan.replicates - 1}"
    bundle.meta["level"] = plan.level
    seed0 = evaluate_seed(data, scores, cfg.proposers, cfg.grid, cfg.params, plan.master_seed, 0,
                          cfg.settings, keep_run=True)
    evaluation_tables(bundle, cfg, data, seed0)
    bootstrap_tables(bundle, cfg, result)
    return bundle, result


def bootstrap_tables(bundle: ReportBundle, cfg: RunConfig, result: BootstrapResult) -> None:
    names = [n for n in result.names if n in result.summaries]
    dq = bundle.table("dqs", ("proposer", "dqs", "mean", "lo", "hi", "z0", "acceleration", "n_ok", "n_failed"))
    for name in names:
        s = result.summaries[name]
        d = s.dqs
        dq.add(name, d.point, d.mean, d.lo, d.hi, d.z0, d.acceleration, d.n_ok, s.n_failed)
    per = bundle.table("budget_bsds", ("proposer", "fraction", "budget", "bsds", "mean", "lo", "hi"))
    for name in names:
        for f, b, s in zip(cfg.budgets, result.budgets, result.summaries[name].per_budget):
            per.add(name, f, b, s.point, s.mean, s.lo, s.hi)
    dist = bundle.table("series/dqs_distribution", ("seed", *names))
    for r in result.seeds:
        dist.add(r.seed_index, *[r.dqs(n, cfg.params) if n in r.rates else None for n in names])
    fails = bundle.table("failures", ("seed", "proposer", "message"))
    for seed, name, msg in result.failures:
        fails.add(seed, name, msg)
    bundle.notes.extend(result.notes)


def per_proposer_rates(seed0: SeedResult) -> dict:
    return {name: list(rates) for name, rates in seed0.rates.items()}


def cmd_sensitivity(data: PoolData, scores: dict, cfg: RunConfig) -> ReportBundle:
    """Seed-0 rates evaluated once, then re-scored over the (lambda, gamma) grid."""
    _check_proposers(cfg)
    seed0 = evaluate_seed(data, scores, cfg.proposers, cfg.grid, cfg.params, cfg.bootstrap.master_seed, 0,
                          cfg.settings)
    bundle = ReportBundle(meta=base_meta(cfg, "sensitivity-grid", data))
    bundle.meta["seeds"] = "0"
    sensitivity_tables(bundle, per_proposer_rates(seed0), cfg)
    for name, msg in sorted(seed0.failures.items()):
        bundle.notes.append(f"{name} skipped: {msg}")
    return bundle


def sensitivity_tables(bundle: ReportBundle, rates: dict, cfg: RunConfig) -> list:
    cells = sensitivity_grid(rates, cfg.lambdas, cfg.gammas, cfg.params)
    names = list(rates)
    grid = bundle.table("sensitivity", ("lam", "gamma", "tau", "ranking", *names))
    heat = bundle.table("series/sensitivity_heat", ("lam", "gamma", "tau"))
    for c in cells:
        grid.add(c.lam, c.gamma, c.tau, ";".join(c.ranking), *[c.dqs[n] for n in names])
        heat.add(c.lam, c.gamma, c.tau)
    return cells


@dataclass(frozen=True)
class DeploymentRow:
    strategy: str
    budget: int
    hits: int
    hit_rate: float
    cost: float
    roi: float
    roi_pct: float


def deployment_row(strategy: str, hits: int, budget: int, economics: DeploymentEconomics) -> DeploymentRow:
    """Hits, hit rate, spend and return on investment of validating ``budget`` candidates."""
    if budget < 1:
        raise ArgumentError("budget must be >= 1")
    cost = budget * economics.unit_cost
    gain = hits * economics.hit_value - cost
    return DeploymentRow(strategy, budget, hits, hits / budget, cost, gain / cost, gain * 100 / cost)


def deployment_rows(pool: LabeledPool, selections: dict, budgets: Sequence[int],
                    economics: DeploymentEconomics) -> list:
    rows = []
    for name, sels in selections.items():
        for b, sel in zip(budgets, sels):
            hits = int(pool.labels[sel.selected].sum()) if sel.selected.size else 0
            rows.append(deployment_row(name, hits, b, economics))
    return rows


def cmd_deployment(data: PoolData, scores: dict, cfg: RunConfig) -> ReportBundle:
    """Seed-0 selections of every proposer at the absolute deployment budgets."""
    _check_proposers(cfg)
    budgets = sorted(set(cfg.deployment.budgets))
    too_big = [b for b in budgets if b > data.n]
    if too_big:
        raise ArgumentError(f"deployment budgets {too_big} exceed the pool size {data.n}")
    run = run_campaign(data, cfg.proposers, scores, cfg.grid, cfg.params, cfg.bootstrap.master_seed, 0,
                       cfg.settings, budgets=budgets)
    bundle = ReportBundle(meta=base_meta(cfg, "deployment-sim", data))
    bundle.meta.update(seeds="0", unit_cost=cfg.deployment.unit_cost, hit_value=cfg.deployment.hit_value)
    t = bundle.table("deployment", ("strategy", "budget", "hits", "hit_rate", "cost", "roi", "roi_pct"))
    for r in deployment_rows(data.pool, run.selections, budgets, cfg.deployment):
        t.add(r.strategy, r.budget, r.hits, r.hit_rate, r.cost, r.roi, r.roi_pct)
    for name, msg in sorted(run.failures.items()):
        bundle.notes.append(f"{name} skipped: {msg}")
    return bundle


def temperature_dqs(data: PoolData, scores: dict, cfg: RunConfig, temperatures: Sequence[float],
                    score_name: str = "ml", seeds: Sequence[int] = (0,)) -> list:
    """Generative-proposer DQS per temperature, mean over ``seeds``.

    Every temperature shares the proposer name, so each seed draws the same
    Gumbel noise at every temperature and only the temperature differs.
    """
    if not temperatures:
        raise ArgumentError("temperature list is empty")
    out = []
    for t in temperatures:
        config = ProposerConfig(name="Generative", kind=ProposerKind.GENERATIVE, scores=score_name, temperature=t)
        values = []
        for s in seeds:
            r = evaluate_seed(data, scores, [config], cfg.grid, cfg.params, cfg.bootstrap.master_seed, s,
                              cfg.settings)
            if config.name not in r.rates:
                raise ArgumentError(r.failures[config.name])
            values.append(r.dqs(config.name, cfg.params))
        out.append((float(t), math.fsum(values) / len(values)))
    return out


def cmd_temperature_sweep(data: PoolData, scores: dict, cfg: RunConfig, score_name: str = "ml",
                          temperatures: Optional[Sequence[float]] = None) -> ReportBundle:
    temps = tuple(cfg.temperatures if temperatures is None else temperatures)
    rows = temperature_dqs(data, scores, cfg, temps, score_name)
    bundle = ReportBundle(meta=base_meta(cfg, "sweep-temperature", data))
    bundle.meta.update(seeds="0", scores=score_name)
    t = bundle.table("temperature", ("temperature", "dqs"))
    for temp, value in rows:
        t.add(temp, value)
    return bundle
