"""Candidate-selection strategies ("proposers") and the campaign fan-out.

Every proposer maps a pool, its scores and a budget to a full-coverage
:class:`~bsds.metrics.Selection`. Stochastic proposers draw from a
``numpy.random.Generator`` that the campaign derives from
``(master seed, seed index, proposer name, budget index)``, so results do not
depend on execution order.
"""

from __future__ import annotations

import enum
import logging
import zlib
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .data import PoolData, ScoreTable
from .errors import ArgumentError, BsdsError, ContractViolation, StructuralError
from .metrics import BsdsParams, BudgetGrid, LabeledPool, Selection, ranking
from .similarity import FingerprintSet, KnowledgeBase, retrieval_scores, sample_knowledge_base

log = logging.getLogger(__name__)


class ProposerKind(str, enum.Enum):
    RANDOM = "random"
    GREEDY_ML = "greedy_ml"
    INFORMED_PRIOR = "informed_prior"
    RETRIEVAL = "retrieval"
    GENERATIVE = "generative"
    BSDS_GUIDED = "bsds_guided"
    ENSEMBLE = "ensemble"
    EXTERNAL = "external"
    FIXED = "fixed"
    BSDS_RECURSIVE = "bsds_recursive"
    BSDS_NOAUG = "bsds_noaug"
    BSDS_1ROUND = "bsds_1round"
    GREEDY_MLP_NN = "greedy_mlp_nn"


TRAINED_KINDS = frozenset(
    {ProposerKind.BSDS_RECURSIVE, ProposerKind.BSDS_NOAUG, ProposerKind.BSDS_1ROUND, ProposerKind.GREEDY_MLP_NN}
)

_DEFAULT_WEIGHTS = {
    ProposerKind.INFORMED_PRIOR: (0.6, 0.4),
    ProposerKind.RETRIEVAL: (0.5, 0.3, 0.2),
}


@dataclass(frozen=True)
class ProposerConfig:
    """One named proposer in a campaign.

    ``scores`` names the score table the proposer ranks by. ``prior`` names the
    score table or pool column holding the drug-likeness prior. ``components``
    lists the proposer kinds an ensemble aggregates. ``selected_ids`` and
    ``abstained_ids`` are only used by the ``fixed`` kind (a scripted selection).
    """

    name: str
    kind: ProposerKind
    scores: str = "ml"
    prior: str = "prior"
    weights: tuple = ()
    temperature: float = 0.1
    rounds: int = 3
    boost: float = 0.3
    components: tuple = ("informed_prior", "retrieval", "generative")
    selected_ids: tuple = ()
    abstained_ids: tuple = ()
    seed: int = 0

    def __post_init__(self):
        try:
            kind = ProposerKind(self.kind)
        except ValueError:
            raise ArgumentError(f"unknown proposer kind {self.kind!r}") from None
        object.__setattr__(self, "kind", kind)
        weights = tuple(float(w) for w in (self.weights or _DEFAULT_WEIGHTS.get(kind, ())))
        if weights and abs(sum(weights) - 1.0) > 1e-9:
            raise ArgumentError(f"{self.name}: mixing weights {weights} do not sum to 1")
        object.__setattr__(self, "weights", weights)
        if not self.temperature > 0:
            raise ArgumentError(f"{self.name}: temperature must be positive")
        if kind is ProposerKind.BSDS_1ROUND:
            object.__setattr__(self, "rounds", 1)
        if int(self.rounds) < 1:
            raise ArgumentError(f"{self.name}: rounds must be at least 1")
        for name in ("components", "selected_ids", "abstained_ids"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if kind is ProposerKind.ENSEMBLE and len(self.components) < 2:
            raise ArgumentError(f"{self.name}: an ensemble needs at least two components")

    @classmethod
    def from_dict(cls, d: dict) -> "ProposerConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ArgumentError(f"unknown proposer fields: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        d["weights"] = list(self.weights)
        for name in ("components", "selected_ids", "abstained_ids"):
            d[name] = list(d[name])
        return d


def stream(master_seed: int, seed_index: int, label: str, budget_index: int = 0, offset: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, label, budget) work unit.

    The key is hashed by ``SeedSequence`` from the master seed and the spawn key
    ``(seed_index, crc32(label), budget_index, offset)``.
    """
    key = (int(seed_index), zlib.crc32(label.encode()), int(budget_index), int(offset))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(master_seed), spawn_key=key)))


def _check_budget(budget: int, n: int) -> None:
    if not 1 <= budget <= n:
        raise ArgumentError(f"budget {budget} outside [1, {n}]")


def _aligned(scores, n: int) -> np.ndarray:
    s = np.asarray(getattr(scores, "values", scores), dtype=np.float64)
    if s.shape != (n,):
        raise StructuralError(f"{s.size} scores for a pool of {n}")
    return s


def propose_random(pool: LabeledPool, budget: int, rng: np.random.Generator) -> Selection:
    _check_budget(budget, pool.n)
    return Selection.full_coverage(rng.choice(pool.n, size=budget, replace=False), budget)


def propose_greedy(pool: LabeledPool, scores, budget: int) -> Selection:
    _check_budget(budget, pool.n)
    return Selection.full_coverage(ranking(_aligned(scores, pool.n))[:budget], budget)


def informed_prior_scores(scores, prior_scores, weights=(0.6, 0.4)) -> np.ndarray:
    s = np.asarray(getattr(scores, "values", scores), dtype=np.float64)
    prior = np.asarray(getattr(prior_scores, "values", prior_scores), dtype=np.float64)
    if prior.shape != s.shape:
        raise StructuralError(f"prior has {prior.size} entries, scores have {s.size}")
    if ((prior < 0) | (prior > 1)).any():
        raise ArgumentError("prior scores must lie in [0, 1]")
    return weights[0] * s + weights[1] * prior


def propose_informed_prior(pool: LabeledPool, scores, prior_scores, budget: int, weights=(0.6, 0.4)) -> Selection:
    _check_budget(budget, pool.n)
    blended = informed_prior_scores(_aligned(scores, pool.n), prior_scores, weights)
    return Selection.full_coverage(ranking(blended)[:budget], budget)


def retrieval_order(
    scores,
    fingerprints: FingerprintSet,
    kb: KnowledgeBase,
    length: int,
    weights=(0.5, 0.3, 0.2),
    similarity: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Sequential greedy picks under ``w0*s + w1*retrieval + w2*diversity``.

    Diversity is recomputed against the growing selection after every pick.
    The pick sequence does not depend on the budget, so a budget-B selection
    is the first B entries. ``similarity`` may be a precomputed pool Tanimoto
    matrix; otherwise each pick computes its own row.
    """
    s = np.asarray(getattr(scores, "values", scores), dtype=np.float64)
    n = s.size
    if fingerprints is None or len(fingerprints) != n:
        raise StructuralError("retrieval needs one fingerprint per candidate")
    w_score, w_retr, w_div = weights
    base = w_score * s + w_retr * retrieval_scores(fingerprints, kb)
    diversity = np.zeros(n)
    taken = np.zeros(n, dtype=bool)
    order = np.empty(min(length, n), dtype=np.int64)
    for step in range(order.size):
        combined = base + w_div * diversity
        combined[taken] = -np.inf
        pick = int(np.argmax(combined))
        order[step] = pick
        taken[pick] = True
        row = similarity[pick] if similarity is not None else fingerprints.similarity([pick])[0]
        np.minimum(diversity, -row, out=diversity)
    return order


def propose_retrieval(
    pool: LabeledPool,
    scores,
    fingerprints: FingerprintSet,
    kb: KnowledgeBase,
    budget: int,
    weights=(0.5, 0.3, 0.2),
    similarity: Optional[np.ndarray] = None,
) -> Selection:
    _check_budget(budget, pool.n)
    order = retrieval_order(_aligned(scores, pool.n), fingerprints, kb, budget, weights, similarity)
    return Selection.full_coverage(order, budget)


def generative_order(scores, temperature: float, rng: np.random.Generator, length: Optional[int] = None) -> np.ndarray:
    """Sample without replacement from ``softmax(s / temperature)``, renormalising after each draw.

    Uses the Gumbel-top-k construction: ranking ``s/T + Gumbel noise`` yields
    exactly the sequential renormalised draw distribution in one pass.
    """
    if not temperature > 0:
        raise ArgumentError("temperature must be positive")
    s = np.asarray(getattr(scores, "values", scores), dtype=np.float64)
    keys = s / temperature + rng.gumbel(size=s.size)
    return np.argsort(-keys, kind="stable")[:length]


def propose_generative(pool: LabeledPool, scores, budget: int, temperature: float, rng: np.random.Generator) -> Selection:
    _check_budget(budget, pool.n)
    return Selection.full_coverage(generative_order(_aligned(scores, pool.n), temperature, rng, budget), budget)


class LabelOracle:
    """Reveals true labels, but only for candidates that have been selected."""

    def __init__(self, labels):
        self._labels = np.asarray(labels)
        self._selected: set = set()

    def mark_selected(self, indices) -> None:
        self._selected.update(int(i) for i in np.asarray(indices).reshape(-1))

    def reveal(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64).reshape(-1)
        for i in indices:
            if int(i) not in self._selected:
                raise ContractViolation(f"label requested for unselected candidate {int(i)}")
        return self._labels[indices]


def guided_round_sizes(budget: int, rounds: int) -> list:
    """Equal shares of ``floor(B / rounds)``; the last round takes the remainder."""
    share = budget // rounds
    return [share] * (rounds - 1) + [budget - share * (rounds - 1)]


def propose_bsds_guided(
    pool: LabeledPool,
    scores,
    fingerprints: FingerprintSet,
    budget: int,
    rounds: int = 3,
    label_oracle: Optional[LabelOracle] = None,
    boost: float = 0.3,
    similarity: Optional[np.ndarray] = None,
) -> Selection:
    """Multi-round selection with label feedback.

    Round 1 takes the top-scored share. After each round the picked labels are
    revealed, and later rounds rank by ``s + boost * max Tanimoto to any
    confirmed hit``. With ``rounds=1`` this is plain greedy.
    """
    _check_budget(budget, pool.n)
    if rounds < 1:
        raise ArgumentError("rounds must be at least 1")
    s = _aligned(scores, pool.n)
    oracle = label_oracle if label_oracle is not None else LabelOracle(pool.labels)
    taken = np.zeros(pool.n, dtype=bool)
    hit_similarity = np.zeros(pool.n)
    chosen = []
    for r, size in enumerate(guided_round_sizes(budget, rounds)):
        if size == 0:
            continue
        key = s if r == 0 else s + boost * hit_similarity
        key = np.where(taken, -np.inf, key)
        picks = ranking(key)[:size]
        oracle.mark_selected(picks)
        revealed = oracle.reveal(picks)
        chosen.extend(int(i) for i in picks)
        taken[picks] = True
        hits = picks[revealed == 1]
        if hits.size:
            if fingerprints is None:
                raise StructuralError("guided proposer needs fingerprints")
            sims = similarity[hits] if similarity is not None else fingerprints.similarity(hits)
            hit_similarity = np.maximum(hit_similarity, sims.max(axis=0))
    return Selection.full_coverage(chosen, budget)


def order_points(order, n: int) -> np.ndarray:
    """Turn a (possibly partial) ranking into scores; unranked candidates tie at the bottom."""
    points = np.full(n, -1.0)
    order = np.asarray(order, dtype=np.int64)
    points[order] = n - np.arange(order.size, dtype=np.float64)
    return points


def borda_points(components: Sequence) -> np.ndarray:
    """Borda totals: rank r (1-based, ties at their mean rank) earns ``N - r`` points."""
    arrays = [np.asarray(getattr(c, "values", c), dtype=np.float64) for c in components]
    if len(arrays) < 2:
        raise ArgumentError("Borda aggregation needs at least two rankings")
    n = arrays[0].size
    if any(a.shape != (n,) for a in arrays):
        raise StructuralError("component rankings have different lengths")
    return sum(n - rankdata(-a, method="average") for a in arrays)


def expected_bsds_curve(probabilities, order, budget: int, params: BsdsParams) -> np.ndarray:
    """Expected full-coverage BSDS of the top-k of ``order`` for k = 1..budget."""
    p = np.clip(np.asarray(probabilities, dtype=np.float64), 0.0, 1.0)
    total = p.sum()
    cum = np.cumsum(p[np.asarray(order)[:budget]])
    k = np.arange(1, cum.size + 1)
    hr = cum / total if total > 0 else np.zeros_like(cum)
    return hr - params.lam * (k - cum) / k


def propose_ensemble(components: Sequence, pool: LabeledPool, scores, budget: int, params: BsdsParams) -> Selection:
    """Borda-aggregate the component rankings, then keep the top-k* with k* <= B
    maximising expected BSDS (scores read as calibrated probabilities)."""
    _check_budget(budget, pool.n)
    s = _aligned(scores, pool.n)
    points = borda_points(components)
    if points.size != pool.n:
        raise StructuralError("component rankings do not match the pool")
    order = ranking(points)
    k_star = int(np.argmax(expected_bsds_curve(s, order, budget, params))) + 1
    return Selection.full_coverage(order[:k_star], budget)


@dataclass(frozen=True)
class CampaignSettings:
    """Campaign-wide knobs that are not per-proposer."""

    kb_fraction: float = 0.1
    similarity_cache_max: int = 6000
    fold_count: int = 5
    fold_mode: str = "random_stratified"
    feature_columns: tuple = ("ml", "mw", "logp", "hbd", "hba", "tpsa", "rings", "nearest_active", "prior", "admet")
    trainer: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "feature_columns", tuple(self.feature_columns))
        object.__setattr__(self, "trainer", dict(self.trainer))


class ReplicateContext:
    """Per-seed caches shared by all proposers of one campaign replicate."""

    def __init__(
        self,
        data: PoolData,
        scores: dict,
        master_seed: int = 0,
        seed_index: int = 0,
        settings: Optional[CampaignSettings] = None,
        similarity: Optional[np.ndarray] = None,
        params: Optional[BsdsParams] = None,
    ):
        self.data = data
        self.params = params or BsdsParams()
        self.scores = scores
        self.master_seed = master_seed
        self.seed_index = seed_index
        self.settings = settings or CampaignSettings()
        self._similarity = similarity
        self._kb: Optional[KnowledgeBase] = None
        self._retrieval: dict = {}
        self._trained: dict = {}
        for name, table in scores.items():
            table.check_aligned(data.n)

    @property
    def pool(self) -> LabeledPool:
        return self.data.pool

    def rng(self, label: str, budget_index: int = 0, offset: int = 0) -> np.random.Generator:
        return stream(self.master_seed, self.seed_index, label, budget_index, offset)

    def table(self, name: str) -> np.ndarray:
        if name in self.scores:
            return self.scores[name].values
        if name in self.data.columns:
            return self.data.columns[name]
        raise ArgumentError(f"no score table or column named {name!r}")

    def fingerprints(self) -> FingerprintSet:
        if self.data.fingerprints is None:
            raise StructuralError("this proposer needs fingerprints but the pool has none")
        return self.data.fingerprints

    def similarity(self) -> Optional[np.ndarray]:
        if self._similarity is None and self.data.fingerprints is not None and self.data.n <= self.settings.similarity_cache_max:
            self._similarity = self.data.fingerprints.similarity()
        return self._similarity

    def knowledge_base(self) -> KnowledgeBase:
        if self._kb is None:
            self._kb = sample_knowledge_base(
                self.pool, self.fingerprints(), self.settings.kb_fraction, self.rng("knowledge_base")
            )
        return self._kb

    def retrieval_order(self, config: ProposerConfig) -> np.ndarray:
        key = (config.scores, config.weights or _DEFAULT_WEIGHTS[ProposerKind.RETRIEVAL])
        if key not in self._retrieval:
            self._retrieval[key] = retrieval_order(
                self.table(config.scores), self.fingerprints(), self.knowledge_base(), self.data.n, key[1], self.similarity()
            )
        return self._retrieval[key]

    def trained_scores(self, config: ProposerConfig) -> np.ndarray:
        key = (config.kind, config.scores, config.rounds)
        if key not in self._trained:
            from .datasets import train_campaign_scores

            self._trained[key] = train_campaign_scores(self, config)
        return self._trained[key]


def _ensemble_components(config: ProposerConfig, ctx: ReplicateContext, budget_index: int) -> list:
    n = ctx.data.n
    s = ctx.table(config.scores)
    out = []
    for comp in config.components:
        kind = ProposerKind(comp)
        if kind is ProposerKind.INFORMED_PRIOR:
            out.append(informed_prior_scores(s, ctx.table(config.prior), _DEFAULT_WEIGHTS[kind]))
        elif kind is ProposerKind.RETRIEVAL:
            sub = ProposerConfig(name=f"{config.name}/retrieval", kind=kind, scores=config.scores)
            out.append(order_points(ctx.retrieval_order(sub), n))
        elif kind is ProposerKind.GENERATIVE:
            rng = ctx.rng(f"{config.name}/generative", budget_index, config.seed)
            out.append(order_points(generative_order(s, config.temperature, rng), n))
        elif kind in (ProposerKind.GREEDY_ML, ProposerKind.EXTERNAL):
            out.append(s)
        else:
            raise ArgumentError(f"{config.name}: unsupported ensemble component {comp!r}")
    return out


def _fixed_selection(config: ProposerConfig, pool: LabeledPool, budget: int) -> Selection:
    rows: dict = {}
    for i, cid in enumerate(pool.ids):
        rows.setdefault(cid, []).append(i)

    def lookup(ids):
        missing = [c for c in ids if c not in rows]
        if missing:
            raise ArgumentError(f"{config.name}: unknown candidate ids {missing[:5]}")
        return [i for c in ids for i in rows[c]]

    return Selection(np.asarray(lookup(config.selected_ids), dtype=np.int64),
                     np.asarray(lookup(config.abstained_ids), dtype=np.int64), budget)


def propose(config: ProposerConfig, ctx: ReplicateContext, budget: int, budget_index: int, params: BsdsParams) -> Selection:
    """Dispatch one configured proposer at one budget."""
    pool = ctx.pool
    kind = config.kind
    if kind is ProposerKind.RANDOM:
        return propose_random(pool, budget, ctx.rng(config.name, budget_index, config.seed))
    if kind in (ProposerKind.GREEDY_ML, ProposerKind.EXTERNAL):
        return propose_greedy(pool, ctx.table(config.scores), budget)
    if kind is ProposerKind.INFORMED_PRIOR:
        return propose_informed_prior(pool, ctx.table(config.scores), ctx.table(config.prior), budget, config.weights)
    if kind is ProposerKind.RETRIEVAL:
        _check_budget(budget, pool.n)
        return Selection.full_coverage(ctx.retrieval_order(config)[:budget], budget)
    if kind is ProposerKind.GENERATIVE:
        rng = ctx.rng(config.name, budget_index, config.seed)
        return propose_generative(pool, ctx.table(config.scores), budget, config.temperature, rng)
    if kind is ProposerKind.BSDS_GUIDED:
        return propose_bsds_guided(
            pool, ctx.table(config.scores), ctx.fingerprints(), budget, config.rounds,
            boost=config.boost, similarity=ctx.similarity(),
        )
    if kind is ProposerKind.ENSEMBLE:
        comps = _ensemble_components(config, ctx, budget_index)
        return propose_ensemble(comps, pool, ctx.table(config.scores), budget, params)
    if kind is ProposerKind.FIXED:
        return _fixed_selection(config, pool, budget)
    if kind in TRAINED_KINDS:
        return propose_greedy(pool, ctx.trained_scores(config), budget)
    raise ArgumentError(f"unhandled proposer kind {kind}")


@dataclass
class CampaignRun:
    """Selections of every proposer at every resolved budget."""

    budgets: tuple
    selections: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    context: Optional[ReplicateContext] = field(default=None, repr=False, compare=False)


def run_campaign(
    data: PoolData,
    configs: Sequence[ProposerConfig],
    scores: dict,
    grid: BudgetGrid,
    params: BsdsParams,
    master_seed: int = 0,
    seed_index: int = 0,
    settings: Optional[CampaignSettings] = None,
    similarity: Optional[np.ndarray] = None,
    context: Optional[ReplicateContext] = None,
    budgets: Optional[Sequence[int]] = None,
) -> CampaignRun:
    """Run every proposer at every budget of ``grid``.

    A proposer that raises is recorded in ``failures`` and the rest continue.
    ``budgets`` (absolute sizes) replaces the grid when given.
    """
    if not configs:
        raise ArgumentError("no proposers configured")
    names = [c.name for c in configs]
    if len(set(names)) != len(names):
        raise ArgumentError(f"duplicate proposer names in {names}")
    ctx = context or ReplicateContext(data, scores, master_seed, seed_index, settings, similarity, params)
    budgets = grid.resolve(data.n) if budgets is None else tuple(int(b) for b in budgets)
    run = CampaignRun(budgets=budgets, context=ctx)
    for config in configs:
        try:
            run.selections[config.name] = [
                propose(config, ctx, b, i, params) for i, b in enumerate(budgets)
            ]
        except BsdsError as exc:
            log.warning("proposer %s failed: %s", config.name, exc)
            run.failures[config.name] = f"{type(exc).__name__}: {exc}"
    return run
