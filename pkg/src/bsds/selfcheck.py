"""Embedded property checks run by ``bsds self-check``.

Each check is deterministic (fixed seeds) and returns a short detail string.
``corrupt_lambda_sign`` flips the sign of the false-discovery penalty inside
the boundedness check; it exists so the release gate can be shown to fail.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .metrics import (
    BsdsParams,
    LabeledPool,
    Selection,
    abstain_threshold,
    bsds,
    bsds_value,
    component_rates,
    oracle_selection,
)
from .resample import bca_interval, kendall_tau
from .surrogate import MlpModel, bce_loss, soft_bsds_loss


class CheckFailed(Exception):
    pass


def _require(condition, message: str) -> None:
    if not condition:
        raise CheckFailed(message)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _boundedness(corrupt_lambda_sign: bool) -> str:
    rng = np.random.default_rng(11)
    violations = 0
    cases = 20000
    for _ in range(cases):
        n = int(rng.integers(1, 40))
        labels = (rng.random(n) < rng.random()).astype(int)
        pool = LabeledPool.from_labels(labels)
        perm = rng.permutation(n)
        k = int(rng.integers(0, n + 1))
        a = int(rng.integers(0, n - k + 1))
        sel = Selection(perm[:k], perm[k:k + a], max(k, 1))
        lam, gamma = float(rng.uniform(0, 10)), float(rng.uniform(0, 1))
        r = component_rates(pool, sel)
        value = bsds_value(r.hr, r.fdr, r.cov, -lam if corrupt_lambda_sign else lam, gamma)
        if not -(lam + gamma) - 1e-12 <= value <= 1.0 + 1e-12:
            violations += 1
    _require(violations == 0, f"{violations} of {cases} cases out of bounds")
    return f"{cases} cases"


def _oracle_dominance() -> str:
    rng = np.random.default_rng(12)
    params = BsdsParams(1.0, 0.3)
    checked = 0
    for _ in range(40):
        n = int(rng.integers(1, 9))
        pool = LabeledPool.from_labels(rng.integers(0, 2, n))
        for b in range(1, n + 1):
            best = bsds(component_rates(pool, oracle_selection(pool, b)), params)
            for size in range(1, b + 1):
                for subset in itertools.combinations(range(n), size):
                    value = bsds(component_rates(pool, Selection.full_coverage(list(subset), b)), params)
                    _require(value <= best + 1e-12, f"subset {subset} beats the oracle at N={n}, B={b}")
                    checked += 1
    return f"{checked} selections"


def _abstention() -> str:
    pool = LabeledPool.from_labels([1, 0, 0, 1, 0])
    for gamma in (0.0, 0.3, 1.0):
        r = component_rates(pool, Selection([], list(range(5)), 1))
        _require(bsds(r, BsdsParams(2.0, gamma)) == -gamma, f"full abstention at gamma={gamma} is not -gamma")
    _require(abs(abstain_threshold(BsdsParams(1.0, 0.3)) - 0.15) < 1e-12, "abstain threshold is not 0.15")
    return "full abstention = -gamma; threshold 0.15"


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    scale = max(float(np.abs(numeric).max()), 1e-8)
    return float(np.abs(analytic - numeric).max()) / scale


def _gradients() -> str:
    rng = np.random.default_rng(13)
    worst = 0.0
    for trial in range(6):
        n, d = 12, 3
        x = rng.normal(size=(n, d))
        g = np.zeros(n)
        g[rng.choice(n, 4, replace=False)] = 1
        model = MlpModel.init((d, 5, 4, 1), rng)
        theta = model.flat()
        mu = 1e-3
        _, _, thresholds = soft_bsds_loss(model, x, g, (0.25, 0.5), 3.0, BsdsParams(), mu)

        def soft(t):
            return soft_bsds_loss(model.with_flat(t), x, g, (0.25, 0.5), 3.0, BsdsParams(), mu, thresholds)[0]

        def bce(t):
            return bce_loss(model.with_flat(t), x, g, mu)[0]

        for fn, analytic in (
            (soft, soft_bsds_loss(model, x, g, (0.25, 0.5), 3.0, BsdsParams(), mu, thresholds)[1]),
            (bce, bce_loss(model, x, g, mu)[1]),
        ):
            flat = np.concatenate([a.ravel() for a in analytic])
            h = 1e-6
            numeric = np.array([
                (fn(theta + h * e) - fn(theta - h * e)) / (2 * h)
                for e in np.eye(theta.size)
            ])
            worst = max(worst, _relative_error(flat, numeric))
    _require(worst <= 1e-4, f"relative gradient error {worst:.2e}")
    return f"max relative error {worst:.1e}"


def _bca_reduction() -> str:
    half = np.linspace(0.005, 1.0, 200)
    reps = np.concatenate([-half, half])
    ci = bca_interval(reps, 0.0, (), 0.95)
    tail = (1.0 - 0.95) / 2.0
    lo, hi = np.quantile(reps, [tail, 1.0 - tail])
    _require(ci.z0 == 0.0 and ci.acceleration == 0.0, "bias correction is not zero on a symmetric sample")
    _require(ci.lo == lo and ci.hi == hi, "BCa with z0 = a = 0 differs from the percentile interval")
    return "equals percentile interval"


def _kendall() -> str:
    rng = np.random.default_rng(14)
    for _ in range(50):
        x = rng.permutation(20).astype(float)
        _require(kendall_tau(x, x) == 1.0, "tau(x, x) != 1")
        _require(kendall_tau(x, -x) == -1.0, "tau(x, reversed x) != -1")
        p = rng.permutation(20)
        y = rng.permutation(20).astype(float)
        _require(math.isclose(kendall_tau(x, y), kendall_tau(x[p], y[p]), abs_tol=1e-12), "tau changes under a shared permutation")
    return "identity, reversal, permutation invariance"


def run_checks(corrupt_lambda_sign: bool = False) -> list:
    checks = (
        ("boundedness", lambda: _boundedness(corrupt_lambda_sign)),
        ("oracle-dominance", _oracle_dominance),
        ("abstention", _abstention),
        ("gradients", _gradients),
        ("bca-reduction", _bca_reduction),
        ("kendall-tau", _kendall),
    )
    results = []
    for name, fn in checks:
        try:
            results.append(CheckResult(name, True, fn()))
        except CheckFailed as exc:
            results.append(CheckResult(name, False, str(exc)))
    return results
