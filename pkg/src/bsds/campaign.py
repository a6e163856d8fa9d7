"""Seed-level campaign evaluation and the bootstrap driver.

Seed 0 runs every proposer on the full pool. Seed ``s >= 1`` runs them on the
with-replacement replicate ``resample_indices(N, s, master_seed)``; score
tables, pool columns, fingerprints and the cached similarity matrix all travel
with their candidates through the same index map. Results are reduced in seed
order, so worker count and scheduling never change the output.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np

from .data import PoolData
from .errors import ArgumentError, InputError
from .metrics import BsdsParams, BudgetGrid, ComponentRates, bsds, component_rates, dqs
from .proposers import (
    TRAINED_KINDS,
    CampaignRun,
    CampaignSettings,
    ProposerConfig,
    run_campaign,
    stream,
)
from .resample import BootstrapPlan, BootstrapSummary, resample_indices, summarize

log = logging.getLogger(__name__)


@dataclass
class SeedResult:
    """Per-proposer, per-budget component rates of one seed."""

    seed_index: int
    budgets: tuple
    rates: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    run: Optional[CampaignRun] = field(default=None, compare=False, repr=False)

    def bsds(self, name: str, params: BsdsParams) -> list:
        return [bsds(r, params) for r in self.rates[name]]

    def dqs(self, name: str, params: BsdsParams) -> float:
        return dqs(self.bsds(name, params))

    def to_dict(self) -> dict:
        return {
            "seed_index": self.seed_index,
            "budgets": list(self.budgets),
            "rates": {k: [asdict(r) for r in v] for k, v in self.rates.items()},
            "failures": dict(self.failures),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SeedResult":
        return cls(
            seed_index=int(d["seed_index"]),
            budgets=tuple(int(b) for b in d["budgets"]),
            rates={k: [ComponentRates(**r) for r in v] for k, v in d["rates"].items()},
            failures=dict(d["failures"]),
        )


def _replicate(data: PoolData, scores: dict, index_map, similarity):
    if index_map is None:
        return data, scores, similarity
    idx = np.asarray(index_map, dtype=np.int64)
    sim = None if similarity is None else similarity[np.ix_(idx, idx)]
    return data.take(idx), {k: t.take(idx) for k, t in scores.items()}, sim


def evaluate_seed(
    data: PoolData,
    scores: dict,
    configs: Sequence[ProposerConfig],
    grid: BudgetGrid,
    params: BsdsParams,
    master_seed: int = 0,
    seed_index: int = 0,
    settings: Optional[CampaignSettings] = None,
    index_map=None,
    similarity: Optional[np.ndarray] = None,
    keep_run: bool = False,
) -> SeedResult:
    """Run the campaign on the pool (or its replicate under ``index_map``) and score every selection."""
    rep_data, rep_scores, rep_sim = _replicate(data, scores, index_map, similarity)
    run = run_campaign(rep_data, configs, rep_scores, grid, params, master_seed, seed_index, settings, rep_sim)
    rates = {
        name: [component_rates(rep_data.pool, sel) for sel in sels]
        for name, sels in run.selections.items()
    }
    return SeedResult(seed_index, run.budgets, rates, dict(run.failures), run if keep_run else None)


@dataclass
class ProposerSummary:
    dqs: BootstrapSummary
    per_budget: list
    n_failed: int = 0


@dataclass
class BootstrapResult:
    names: tuple
    budgets: tuple
    seeds: list
    summaries: dict
    failures: list
    notes: list = field(default_factory=list)

    def seed_zero(self) -> SeedResult:
        return self.seeds[0]


MIN_BCA_REPLICATES = 100

# Worker-process state for parallel replicate evaluation; set once per worker.
_WORKER: dict = {}


def _init_worker(payload: dict) -> None:
    _WORKER.clear()
    _WORKER.update(payload)


def _worker_seed(seed_index: int) -> dict:
    w = _WORKER
    return _run_seed(w["data"], w["scores"], w["configs"], w["grid"], w["params"], w["master_seed"],
                     seed_index, w["settings"], w["similarity"]).to_dict()


def _run_seed(data, scores, configs, grid, params, master_seed, seed_index, settings, similarity) -> SeedResult:
    index_map = None if seed_index == 0 else resample_indices(data.n, seed_index, master_seed)
    return evaluate_seed(data, scores, configs, grid, params, master_seed, seed_index, settings,
                         index_map, similarity)


def _checkpoint_path(directory: str, seed_index: int) -> str:
    return os.path.join(directory, f"seed_{seed_index:05d}.json")


def _load_checkpoint(directory: str, seed_index: int, tag: str) -> Optional[SeedResult]:
    path = _checkpoint_path(directory, seed_index)
    if not os.path.exists(path):
        return None
    with open(path, encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError:
            log.warning("ignoring unreadable checkpoint %s", path)
            return None
    if d.get("tag") != tag:
        raise InputError(f"checkpoint {path} belongs to a different configuration")
    return SeedResult.from_dict(d["result"])


def _save_checkpoint(directory: str, result: SeedResult, tag: str) -> None:
    path = _checkpoint_path(directory, result.seed_index)
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump({"tag": tag, "result": result.to_dict()}, fh, sort_keys=True)
    os.replace(tmp, path)


def jackknife_positions(n: int, cap: int, master_seed: int) -> np.ndarray:
    """Candidates left out in turn; a uniform subsample of ``cap`` when N exceeds it."""
    if cap <= 0 or n < 3:
        return np.empty(0, dtype=np.int64)
    if n <= cap:
        return np.arange(n)
    return np.sort(stream(master_seed, 0, "jackknife").choice(n, size=cap, replace=False))


def bootstrap_campaign(
    data: PoolData,
    scores: dict,
    configs: Sequence[ProposerConfig],
    grid: BudgetGrid,
    params: BsdsParams,
    plan: BootstrapPlan,
    settings: Optional[CampaignSettings] = None,
    checkpoint_dir: Optional[str] = None,
    checkpoint_tag: str = "",
) -> BootstrapResult:
    """Seed 0 plus ``plan.replicates - 1`` resamples, summarised per proposer with BCa intervals.

    With ``checkpoint_dir`` every finished seed is written as JSON and reused
    on the next call, so an interrupted run resumes to the same result.
    Trained proposers are left out of the jackknife (their acceleration is 0).
    """
    settings = settings or CampaignSettings()
    similarity = None
    if data.fingerprints is not None and data.n <= settings.similarity_cache_max:
        similarity = data.fingerprints.similarity()
    if checkpoint_dir:
        os.makedirs(checkpoint_dir, exist_ok=True)

    seeds: list = [None] * plan.replicates
    todo = []
    for s in range(plan.replicates):
        cached = _load_checkpoint(checkpoint_dir, s, checkpoint_tag) if checkpoint_dir else None
        if cached is not None:
            seeds[s] = cached
        else:
            todo.append(s)

    def finish(result: SeedResult) -> None:
        seeds[result.seed_index] = result
        if checkpoint_dir:
            _save_checkpoint(checkpoint_dir, result, checkpoint_tag)

    if plan.workers > 1 and len(todo) > 1:
        payload = dict(data=data, scores=scores, configs=list(configs), grid=grid, params=params,
                       master_seed=plan.master_seed, settings=settings, similarity=similarity)
        with ProcessPoolExecutor(plan.workers, initializer=_init_worker, initargs=(payload,)) as ex:
            for d in ex.map(_worker_seed, todo):
                finish(SeedResult.from_dict(d))
    else:
        for s in todo:
            finish(_run_seed(data, scores, configs, grid, params, plan.master_seed, s, settings, similarity))

    names = tuple(c.name for c in configs)
    notes = []
    if 1 < plan.replicates < MIN_BCA_REPLICATES:
        msg = f"only {plan.replicates} replicates: BCa endpoints are unstable below {MIN_BCA_REPLICATES}"
        log.warning(msg)
        notes.append(msg)
    jk = _jackknife(data, scores, configs, grid, params, plan, settings, similarity, notes)
    failures = [(r.seed_index, name, msg) for r in seeds for name, msg in sorted(r.failures.items())]
    base = seeds[0]
    summaries = {}
    for name in names:
        if name not in base.rates:
            notes.append(f"{name}: failed on the full pool, no summary")
            continue
        ok = [r for r in seeds[1:] if name in r.rates]
        jk_dqs = jk.get(name, {}).get("dqs", ())
        per_budget = []
        for b in range(len(base.budgets)):
            per_budget.append(summarize(
                bsds(base.rates[name][b], params),
                [bsds(r.rates[name][b], params) for r in ok],
                jk.get(name, {}).get("bsds", [()] * len(base.budgets))[b],
                plan.level,
            ))
        summaries[name] = ProposerSummary(
            dqs=summarize(base.dqs(name, params), [r.dqs(name, params) for r in ok], jk_dqs, plan.level),
            per_budget=per_budget,
            n_failed=len(seeds) - 1 - len(ok),
        )
    return BootstrapResult(names, base.budgets, seeds, summaries, failures, notes)


def _jackknife(data, scores, configs, grid, params, plan, settings, similarity, notes) -> dict:
    if plan.replicates < 2:
        return {}
    positions = jackknife_positions(data.n, plan.jackknife_cap, plan.master_seed)
    if positions.size == 0:
        notes.append("jackknife disabled: acceleration set to 0")
        return {}
    eligible = [c for c in configs if c.kind not in TRAINED_KINDS]
    for c in configs:
        if c.kind in TRAINED_KINDS:
            log.warning("%s: per-candidate retraining is infeasible, BCa acceleration set to 0", c.name)
            notes.append(f"{c.name}: BCa acceleration set to 0 (no per-candidate retraining)")
    if not eligible:
        return {}
    values: dict = {c.name: {"dqs": [], "bsds": [[] for _ in grid.fractions]} for c in eligible}
    everyone = np.arange(data.n)
    for i in positions:
        result = evaluate_seed(data, scores, eligible, grid, params, plan.master_seed, 0, settings,
                               np.delete(everyone, i), similarity)
        for name, rates in result.rates.items():
            values[name]["dqs"].append(dqs([bsds(r, params) for r in rates]))
            for b, r in enumerate(rates):
                values[name]["bsds"][b].append(bsds(r, params))
    return values
