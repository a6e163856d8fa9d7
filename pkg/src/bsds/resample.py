"""Bootstrap resampling, BCa intervals, Kendall tau and the (lambda, gamma) grid.

Seed 0 of a bootstrap plan is the full pool (the point estimate); seeds
``1..R-1`` are with-replacement resamples of N candidates. Every seed's
resample indices come from ``stream(master_seed, seed, "resample")`` so any
execution order reproduces the same replicates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import norm

from .errors import ArgumentError, StructuralError
from .metrics import BsdsParams, ComponentRates, LabeledPool, bsds_value, dqs
from .proposers import stream

DEFAULT_LAMBDA_GRID = (0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 2.0, 5.0, 10.0)
DEFAULT_GAMMA_GRID = (0.0, 0.1, 0.2, 0.3, 0.5, 0.7, 1.0)


@dataclass(frozen=True)
class BootstrapPlan:
    """``replicates`` counts every seed, including the full-data seed 0."""

    replicates: int = 1000
    master_seed: int = 0
    level: float = 0.95
    jackknife_cap: int = 2000
    workers: int = 1

    def __post_init__(self):
        if self.replicates < 1:
            raise ArgumentError("a bootstrap plan needs at least one seed")
        if not 0.0 < self.level < 1.0:
            raise ArgumentError("confidence level must lie in (0, 1)")
        if self.jackknife_cap < 0 or self.workers < 1:
            raise ArgumentError("jackknife cap must be >= 0 and workers >= 1")


def resample_indices(n: int, seed: int, master_seed: int = 0) -> np.ndarray:
    """N draws with replacement from ``range(n)`` for bootstrap seed ``seed``."""
    if n < 1:
        raise ArgumentError("cannot resample an empty pool")
    return stream(master_seed, seed, "resample").integers(0, n, size=n)


def resample_pool(pool: LabeledPool, seed: int, master_seed: int = 0) -> tuple:
    """Return ``(replicate pool, index map into the source pool)``."""
    index_map = resample_indices(pool.n, seed, master_seed)
    return pool.take(index_map), index_map


@dataclass(frozen=True)
class BcaInterval:
    lo: float
    hi: float
    z0: float
    acceleration: float
    degenerate: bool = False


def jackknife_acceleration(values: Sequence[float]) -> float:
    """Acceleration from leave-one-out estimates: sum(d^3) / (6 * sum(d^2)^1.5), d = mean - value."""
    v = np.asarray(values, dtype=np.float64)
    if v.size < 2:
        return 0.0
    d = v.mean() - v
    ss = float((d * d).sum())
    if ss == 0.0:
        return 0.0
    return float((d**3).sum() / (6.0 * ss**1.5))


def bca_interval(
    replicates: Sequence[float],
    point_estimate: float,
    jackknife_values: Sequence[float] = (),
    level: float = 0.95,
) -> BcaInterval:
    """Bias-corrected and accelerated percentile interval.

    ``z0`` comes from the share of replicates strictly below the point
    estimate (clipped to ``[1/(R+1), R/(R+1)]`` so it stays finite). With no
    jackknife values the acceleration is 0. Endpoints are linear-interpolation
    quantiles of the replicates at the adjusted levels.
    """
    reps = np.asarray(replicates, dtype=np.float64)
    if reps.size == 0:
        raise ArgumentError("no bootstrap replicates")
    if not 0.0 < level < 1.0:
        raise ArgumentError("confidence level must lie in (0, 1)")
    if reps.min() == reps.max():
        c = float(reps[0])
        return BcaInterval(c, c, 0.0, 0.0, degenerate=True)
    r = reps.size
    share = float(np.count_nonzero(reps < point_estimate)) / r
    share = min(max(share, 1.0 / (r + 1)), r / (r + 1.0))
    z0 = float(norm.ppf(share))
    a = jackknife_acceleration(jackknife_values)
    tail = (1.0 - level) / 2.0
    if z0 == 0.0 and a == 0.0:
        q = np.array([tail, 1.0 - tail])
    else:
        z = norm.ppf([tail, 1.0 - tail])
        q = norm.cdf(z0 + (z0 + z) / (1.0 - a * (z0 + z)))
    lo, hi = np.quantile(reps, q)
    return BcaInterval(float(lo), float(hi), z0, a)


def kendall_tau(ranking_a: Sequence[float], ranking_b: Sequence[float]) -> float:
    """Tie-corrected Kendall tau-b between two per-item rank (or score) vectors.

    NaN when either vector is constant.
    """
    a = np.asarray(ranking_a, dtype=np.float64)
    b = np.asarray(ranking_b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise StructuralError(f"rankings differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise ArgumentError("Kendall tau needs at least two items")
    sa = np.sign(a[:, None] - a[None, :]).astype(np.int64)
    sb = np.sign(b[:, None] - b[None, :]).astype(np.int64)
    upper = np.triu_indices(a.size, 1)
    sa, sb = sa[upper], sb[upper]
    # integer counts keep identical and reversed rankings at exactly +1 and -1
    n_a = int(np.count_nonzero(sa))
    n_b = int(np.count_nonzero(sb))
    if n_a == 0 or n_b == 0:
        return math.nan
    return int((sa * sb).sum()) / math.sqrt(n_a * n_b)


def rank_positions(values: Sequence[float]) -> np.ndarray:
    """Position (0 = best) of each item ordered by value descending, ties by item index."""
    v = np.asarray(values, dtype=np.float64)
    order = np.argsort(-v, kind="stable")
    pos = np.empty(v.size, dtype=np.int64)
    pos[order] = np.arange(v.size)
    return pos


@dataclass(frozen=True)
class SensitivityCell:
    lam: float
    gamma: float
    dqs: dict
    ranking: tuple
    tau: float


def sensitivity_grid(
    per_proposer_rates: dict,
    lambdas: Sequence[float] = DEFAULT_LAMBDA_GRID,
    gammas: Sequence[float] = DEFAULT_GAMMA_GRID,
    default: BsdsParams = BsdsParams(),
) -> list:
    """Recompute DQS for every (lambda, gamma) from stored per-budget rates.

    Returns one :class:`SensitivityCell` per pair (lambda-major order) with
    the proposer ranking and its Kendall tau against the ranking at ``default``.
    """
    if not lambdas or not gammas:
        raise ArgumentError("sensitivity grids must be non-empty")
    if len(per_proposer_rates) < 2:
        raise ArgumentError("a ranking needs at least two proposers")
    names = list(per_proposer_rates)

    def table(lam, gamma):
        return {
            name: dqs([bsds_value(r.hr, r.fdr, r.cov, lam, gamma) for r in per_proposer_rates[name]])
            for name in names
        }

    base_pos = rank_positions([table(default.lam, default.gamma)[n] for n in names])
    cells = []
    for lam in lambdas:
        for gamma in gammas:
            values = table(float(lam), float(gamma))
            pos = rank_positions([values[n] for n in names])
            ranking = tuple(names[i] for i in np.argsort(pos))
            cells.append(SensitivityCell(float(lam), float(gamma), values, ranking, kendall_tau(base_pos, pos)))
    return cells


@dataclass(frozen=True)
class BootstrapSummary:
    """Seed-0 point estimate, replicate distribution and BCa interval of one statistic."""

    point: float
    replicates: tuple
    mean: float
    lo: Optional[float]
    hi: Optional[float]
    z0: float = 0.0
    acceleration: float = 0.0
    degenerate: bool = False
    n_ok: int = 1
    level: float = 0.95


def summarize(point: float, replicates: Sequence[float], jackknife_values: Sequence[float] = (),
              level: float = 0.95) -> BootstrapSummary:
    """Summary over seed 0 plus the successful resample seeds; no interval without resamples."""
    reps = tuple(float(v) for v in replicates)
    mean = math.fsum((point,) + reps) / (1 + len(reps))
    if not reps:
        return BootstrapSummary(point, reps, mean, None, None, n_ok=1, level=level)
    ci = bca_interval(reps, point, jackknife_values, level)
    return BootstrapSummary(point, reps, mean, ci.lo, ci.hi, ci.z0, ci.acceleration, ci.degenerate,
                            n_ok=1 + len(reps), level=level)


def mean_rates(rates: Sequence[ComponentRates]) -> ComponentRates:
    """Average HR/FDR/Cov over seeds; BSDS is linear in them, so DQS of the mean equals the mean DQS."""
    if not rates:
        raise ArgumentError("no rates to average")
    k = len(rates)
    return ComponentRates(
        hr=math.fsum(r.hr for r in rates) / k,
        fdr=math.fsum(r.fdr for r in rates) / k,
        cov=math.fsum(r.cov for r in rates) / k,
    )
