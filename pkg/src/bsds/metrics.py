"""Budget-sensitive selection metrics.

Component rates of a budgeted selection, the Budget-Sensitive Discovery Score
(BSDS), its budget average (DQS), analytic baselines and the standard
virtual-screening metrics (EF, AUROC, MCC) used for comparison.

Conventions
-----------
* A pool with no hits yields ``hr = 0`` and ``degenerate = True`` instead of
  raising, so bootstrap replicates that lose every hit still evaluate.
* Top-B cuts order by score descending, then candidate index ascending.
* Budgets are resolved from fractions as ``max(1, floor(f * N + 0.5))``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.stats import rankdata

from .errors import ArgumentError, StructuralError

DEFAULT_BUDGET_FRACTIONS = (0.01, 0.02, 0.05, 0.10, 0.20, 0.50)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class LabeledPool:
    """Candidate identifiers with binary hit labels."""

    ids: tuple
    labels: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1 or labels.size == 0:
            raise StructuralError("a pool needs a non-empty 1-d label vector")
        if not np.isin(labels, (0, 1)).all():
            raise StructuralError("labels must be 0 or 1")
        ids = tuple(self.ids)
        if len(ids) != labels.size:
            raise StructuralError(f"{len(ids)} ids for {labels.size} labels")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "labels", _frozen(labels.astype(np.int8)))

    @classmethod
    def from_labels(cls, labels: Iterable[int]) -> "LabeledPool":
        labels = np.asarray(list(labels) if not isinstance(labels, np.ndarray) else labels)
        return cls(tuple(f"c{i}" for i in range(labels.size)), labels)

    @property
    def n(self) -> int:
        return int(self.labels.size)

    @property
    def n_hits(self) -> int:
        return int(self.labels.sum())

    @property
    def prevalence(self) -> float:
        return self.n_hits / self.n

    @property
    def hit_indices(self) -> np.ndarray:
        return np.flatnonzero(self.labels)

    def take(self, index_map: Sequence[int]) -> "LabeledPool":
        """Pool made of the given source rows, duplicates allowed."""
        index_map = np.asarray(index_map, dtype=np.int64)
        return LabeledPool(tuple(self.ids[i] for i in index_map), self.labels[index_map])

    def __eq__(self, other):
        if not isinstance(other, LabeledPool):
            return NotImplemented
        return self.ids == other.ids and np.array_equal(self.labels, other.labels)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class Selection:
    """Selected set S, abstention set A, and the budget B it was made under.

    ``selected`` keeps pick order, which matters for sequential proposers.
    Equality compares the sets, not the order.
    """

    selected: np.ndarray
    abstained: np.ndarray
    budget: int

    def __post_init__(self):
        sel = np.asarray(self.selected, dtype=np.int64).reshape(-1)
        abst = np.asarray(self.abstained, dtype=np.int64).reshape(-1)
        budget = int(self.budget)
        if budget < 1:
            raise StructuralError(f"budget must be positive, got {budget}")
        if sel.size > budget:
            raise StructuralError(f"{sel.size} selected exceeds budget {budget}")
        if (sel < 0).any() or (abst < 0).any():
            raise StructuralError("negative candidate index")
        both = np.sort(np.concatenate([sel, abst]))
        if (both[1:] == both[:-1]).any():
            if np.unique(sel).size != sel.size or np.unique(abst).size != abst.size:
                raise StructuralError("duplicate index in selection")
            raise StructuralError("selected and abstained sets overlap")
        object.__setattr__(self, "selected", _frozen(sel))
        object.__setattr__(self, "abstained", _frozen(abst))
        object.__setattr__(self, "budget", budget)

    @classmethod
    def full_coverage(cls, selected, budget: int) -> "Selection":
        return cls(np.asarray(selected, dtype=np.int64), np.empty(0, dtype=np.int64), budget)

    def check_indices(self, n: int) -> None:
        for arr in (self.selected, self.abstained):
            if arr.size and arr.max() >= n:
                raise StructuralError(f"index {int(arr.max())} out of range for pool of {n}")

    def __eq__(self, other):
        if not isinstance(other, Selection):
            return NotImplemented
        return (
            self.budget == other.budget
            and np.array_equal(np.sort(self.selected), np.sort(other.selected))
            and np.array_equal(np.sort(self.abstained), np.sort(other.abstained))
        )

    __hash__ = None


@dataclass(frozen=True)
class BsdsParams:
    """False-discovery penalty ``lam`` and abstention penalty ``gamma``."""

    lam: float = 1.0
    gamma: float = 0.3

    def __post_init__(self):
        for name in ("lam", "gamma"):
            value = float(getattr(self, name))
            if not math.isfinite(value) or value < 0:
                raise ArgumentError(f"{name} must be a finite non-negative number, got {value}")
            object.__setattr__(self, name, value)


def resolve_budget(fraction: float, n: int) -> int:
    """Absolute budget for a fraction of an ``n``-candidate pool (round half up)."""
    return min(n, max(1, math.floor(fraction * n + 0.5)))


@dataclass(frozen=True)
class BudgetGrid:
    fractions: tuple = DEFAULT_BUDGET_FRACTIONS

    def __post_init__(self):
        fr = tuple(float(f) for f in self.fractions)
        if not fr:
            raise ArgumentError("budget grid is empty")
        if any(not (0.0 < f <= 1.0) for f in fr):
            raise ArgumentError(f"budget fractions must lie in (0, 1]: {fr}")
        if any(b <= a for a, b in zip(fr, fr[1:])):
            raise ArgumentError(f"budget fractions must be strictly increasing: {fr}")
        object.__setattr__(self, "fractions", fr)

    def resolve(self, n: int) -> tuple:
        return tuple(resolve_budget(f, n) for f in self.fractions)

    def __len__(self):
        return len(self.fractions)


@dataclass(frozen=True)
class ComponentRates:
    """HR, FDR and coverage of one selection, plus the counts behind them."""

    hr: float
    fdr: float
    cov: float
    tp: int = 0
    n_selected: int = 0
    n_abstained: int = 0
    n: int = 0
    n_hits: int = 0
    degenerate: bool = False

    @property
    def ppv(self) -> float:
        return 1.0 - self.fdr if self.n_selected > 0 else 0.0


def component_rates(pool: LabeledPool, sel: Selection) -> ComponentRates:
    sel.check_indices(pool.n)
    n_hits = pool.n_hits
    k = int(sel.selected.size)
    a = int(sel.abstained.size)
    tp = int(pool.labels[sel.selected].sum()) if k else 0
    return ComponentRates(
        hr=tp / n_hits if n_hits else 0.0,
        fdr=(k - tp) / max(k, 1),
        cov=(k + (pool.n - k - a)) / pool.n,
        tp=tp,
        n_selected=k,
        n_abstained=a,
        n=pool.n,
        n_hits=n_hits,
        degenerate=n_hits == 0,
    )


def bsds_value(hr, fdr, cov, lam, gamma):
    """Elementwise BSDS on raw numbers or arrays; no parameter validation."""
    return hr - lam * fdr - gamma * (1 - cov)


def bsds(rates: ComponentRates, params: BsdsParams) -> float:
    return float(bsds_value(rates.hr, rates.fdr, rates.cov, params.lam, params.gamma))


def dqs(per_budget_scores: Sequence[float]) -> float:
    """Mean BSDS over budgets (correctly rounded, so order-independent)."""
    values = [float(v) for v in per_budget_scores]
    if not values:
        raise ArgumentError("DQS needs at least one per-budget score")
    return math.fsum(values) / len(values)


def bayes_abstain_dominated(rates: ComponentRates, params: BsdsParams) -> bool:
    """True when a full-coverage selection scores at least as well as abstaining on everything."""
    return rates.hr >= params.lam * rates.fdr - params.gamma


def abstain_threshold(params: BsdsParams) -> float:
    """Calibrated probability below which abstaining beats selecting a candidate."""
    return params.gamma / (1.0 + params.lam)


class CoverageMode(str, enum.Enum):
    FULL_COVERAGE = "full_coverage"
    ABSTAIN_REMAINDER = "abstain_remainder"


def expected_random_bsds(
    n: int,
    prevalence: float,
    budget: int,
    params: BsdsParams,
    mode: CoverageMode = CoverageMode.FULL_COVERAGE,
) -> float:
    """Expected BSDS of a uniform random selection of ``budget`` candidates.

    ``FULL_COVERAGE`` treats unselected candidates as rejected (no abstention
    penalty). ``ABSTAIN_REMAINDER`` charges the unselected remainder as
    abstained, adding ``-gamma * (1 - B/N)``.
    """
    if not 0 < budget <= n:
        raise ArgumentError(f"budget {budget} outside (0, {n}]")
    frac = budget / n
    value = frac - params.lam * (1.0 - prevalence)
    if CoverageMode(mode) is CoverageMode.ABSTAIN_REMAINDER:
        value -= params.gamma * (1.0 - frac)
    return value


def oracle_selection(pool: LabeledPool, budget: int) -> Selection:
    """Up to ``budget`` hits in ascending index order, at full coverage.

    Slots left once the hits run out stay empty: padding with non-hits only
    adds false discoveries. A hit-free pool gets ``budget`` non-hits by
    descending index so the selection is never empty (every non-empty
    selection scores -lam there).
    """
    if budget > pool.n:
        raise ArgumentError(f"budget {budget} exceeds pool size {pool.n}")
    hits = pool.hit_indices
    chosen = hits[:budget] if hits.size else np.flatnonzero(pool.labels == 0)[::-1][:budget]
    return Selection.full_coverage(chosen, budget)


def _values(scores) -> np.ndarray:
    return np.asarray(getattr(scores, "values", scores), dtype=np.float64)


def ranking(scores) -> np.ndarray:
    """All indices ordered by (score descending, index ascending)."""
    return np.argsort(-_values(scores), kind="stable")


def top_b(scores, budget: int) -> np.ndarray:
    return ranking(scores)[:budget]


@dataclass(frozen=True)
class AuxiliaryMetrics:
    """Standard metrics at one budget; ``None`` marks an undefined value."""

    ef: Optional[float]
    auroc: Optional[float]
    mcc: Optional[float]


def auroc(labels, scores) -> Optional[float]:
    """Rank-statistic AUROC with midranks for ties; None for one-class inputs."""
    labels = np.asarray(labels)
    s = _values(scores)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(s, method="average")
    return float((ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auxiliary_metrics(pool: LabeledPool, scores, budget: int) -> AuxiliaryMetrics:
    s = _values(scores)
    if s.shape != (pool.n,):
        raise StructuralError(f"{s.size} scores for a pool of {pool.n}")
    if not 0 < budget <= pool.n:
        raise ArgumentError(f"budget {budget} outside (0, {pool.n}]")
    chosen = top_b(s, budget)
    tp = int(pool.labels[chosen].sum())
    n_hits = pool.n_hits
    ef = (tp / budget) / pool.prevalence if n_hits else None

    fp = budget - tp
    fn = n_hits - tp
    tn = pool.n - budget - fn
    denom = float(tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    mcc = (tp * tn - fp * fn) / math.sqrt(denom) if denom > 0 else None
    return AuxiliaryMetrics(ef=ef, auroc=auroc(pool.labels, s), mcc=mcc)
