"""Gradient training of a small MLP on a differentiable BSDS surrogate.

The hard top-B cut is replaced by sigmoid gates ``w_i = sigmoid(alpha * (s_i - t_B))``
where ``t_B`` is the ``1 - B/N`` quantile of the current scores. The threshold is
held constant when differentiating (stop-gradient), so reverse-mode gradients
are exact for the loss with thresholds frozen at their current values.

Training is full-batch gradient descent with a fixed step size; each round of
the recursive schedule sharpens ``alpha`` and, when augmentation is on, appends
the previous round's score and per-budget gate columns to the features.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.special import expit

from .errors import ArgumentError, StructuralError, TrainingError
from .metrics import DEFAULT_BUDGET_FRACTIONS, BsdsParams

log = logging.getLogger(__name__)

WEIGHT_FLOOR = 1e-12


def budget_threshold(scores: np.ndarray, fraction: float) -> float:
    """Linear-interpolation ("type 7") quantile of ``scores`` at ``1 - fraction``."""
    return float(np.quantile(scores, 1.0 - fraction))


def soft_gates(scores, fraction: float, alpha: float, threshold: Optional[float] = None) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    t = budget_threshold(s, fraction) if threshold is None else threshold
    return expit(alpha * (s - t))


def soft_bsds(scores, labels, budget_fraction: float, alpha: float, params: BsdsParams,
              threshold: Optional[float] = None) -> float:
    """Sigmoid-gated BSDS of a score vector against binary labels."""
    g = np.asarray(labels, dtype=np.float64)
    n_hits = g.sum()
    if n_hits <= 0:
        raise ArgumentError("soft BSDS needs at least one positive label")
    if not 0.0 < budget_fraction <= 1.0:
        raise ArgumentError(f"budget fraction {budget_fraction} outside (0, 1]")
    w = soft_gates(scores, budget_fraction, alpha, threshold)
    total = w.sum()
    return float(
        (w @ g) / n_hits
        - params.lam * (w @ (1.0 - g)) / max(total, WEIGHT_FLOOR)
        - params.gamma * (1.0 - total / g.size)
    )


def _soft_bsds_and_score_grad(s, g, alpha, params, threshold):
    n_hits = g.sum()
    w = expit(alpha * (s - threshold))
    total = w.sum()
    denom = max(total, WEIGHT_FLOOR)
    misses = w @ (1.0 - g)
    value = (w @ g) / n_hits - params.lam * misses / denom - params.gamma * (1.0 - total / g.size)
    d_fdr = (1.0 - g) / denom
    if total > WEIGHT_FLOOR:
        d_fdr = d_fdr - misses / denom**2
    d_w = g / n_hits - params.lam * d_fdr + params.gamma / g.size
    return value, d_w * alpha * w * (1.0 - w)


@dataclass
class MlpModel:
    """Feed-forward net: ReLU hidden layers, one sigmoid output unit.

    ``weights[l]`` has shape ``(fan_in, fan_out)``.
    """

    weights: list
    biases: list

    @classmethod
    def init(cls, layer_sizes: Sequence[int], rng: np.random.Generator) -> "MlpModel":
        sizes = [int(k) for k in layer_sizes]
        if len(sizes) < 2 or sizes[-1] != 1 or min(sizes) < 1:
            raise StructuralError(f"bad layer sizes {sizes}")
        weights, biases = [], []
        for fan_in, fan_out in zip(sizes, sizes[1:]):
            bound = 1.0 / math.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases)

    @property
    def layer_sizes(self) -> tuple:
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def flat(self) -> np.ndarray:
        return np.concatenate([p.ravel() for p in self.parameters()])

    def with_flat(self, theta: np.ndarray) -> "MlpModel":
        theta = np.asarray(theta, dtype=np.float64)
        arrays, pos = [], 0
        for p in self.parameters():
            arrays.append(theta[pos : pos + p.size].reshape(p.shape).copy())
            pos += p.size
        if pos != theta.size:
            raise StructuralError(f"expected {pos} parameters, got {theta.size}")
        return MlpModel(arrays[0::2], arrays[1::2])

    def squared_norm(self) -> float:
        return float(sum((p * p).sum() for p in self.parameters()))

    def forward(self, x: np.ndarray):
        """Return (scores, pre-sigmoid logits, per-layer inputs and hidden pre-activations)."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.weights[0].shape[0]:
            raise StructuralError(f"features of shape {x.shape} do not fit input width {self.weights[0].shape[0]}")
        inputs, pre = [x], []
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ w + b
            pre.append(z)
            h = np.maximum(z, 0.0)
            inputs.append(h)
        logits = (h @ self.weights[-1] + self.biases[-1]).ravel()
        return expit(logits), logits, (inputs, pre)

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, d_logits: np.ndarray, cache) -> list:
        """Gradients of a loss w.r.t. [W0, b0, W1, b1, ...] given dL/dlogits."""
        inputs, pre = cache
        grads = [None] * (2 * len(self.weights))
        dz = np.asarray(d_logits, dtype=np.float64).reshape(-1, 1)
        for layer in range(len(self.weights) - 1, -1, -1):
            grads[2 * layer] = inputs[layer].T @ dz
            grads[2 * layer + 1] = dz.sum(axis=0)
            if layer:
                dz = (dz @ self.weights[layer].T) * (pre[layer - 1] > 0)
        return grads

    def widen_input(self, extra: int) -> "MlpModel":
        """Same function on the old inputs; ``extra`` new input columns start at zero weight."""
        first = np.vstack([self.weights[0], np.zeros((extra, self.weights[0].shape[1]))])
        return MlpModel([first] + [w.copy() for w in self.weights[1:]], [b.copy() for b in self.biases])

    def to_text(self) -> str:
        """Plain-text dump: a header line of layer sizes, then one parameter per line."""
        lines = ["# mlp " + " ".join(str(k) for k in self.layer_sizes)]
        lines += [repr(float(v)) for v in self.flat()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MlpModel":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or not lines[0].startswith("# mlp "):
            raise StructuralError("not an MLP dump")
        sizes = [int(k) for k in lines[0][6:].split()]
        skeleton = cls([np.zeros((a, b)) for a, b in zip(sizes, sizes[1:])], [np.zeros(b) for b in sizes[1:]])
        return skeleton.with_flat(np.array([float(v) for v in lines[1:]]))


@dataclass(frozen=True)
class SoftBsdsConfig:
    alphas: tuple = (5.0, 15.0, 35.0)
    fractions: tuple = DEFAULT_BUDGET_FRACTIONS
    params: BsdsParams = field(default_factory=BsdsParams)
    mu: float = 1e-4
    learning_rate: float = 0.05
    epochs: int = 300
    hidden: tuple = (128, 64)
    augment: bool = True
    loss: str = "soft_bsds"
    seed: int = 0

    def __post_init__(self):
        alphas = tuple(float(a) for a in self.alphas)
        if not alphas or any(a <= 0 for a in alphas) or any(b < a for a, b in zip(alphas, alphas[1:])):
            raise ArgumentError(f"alpha schedule must be positive and ascending: {alphas}")
        object.__setattr__(self, "alphas", alphas)
        object.__setattr__(self, "fractions", tuple(float(f) for f in self.fractions))
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.mu < 0:
            raise ArgumentError("weight decay must be non-negative")
        if self.loss not in ("soft_bsds", "bce"):
            raise ArgumentError(f"unknown loss {self.loss!r}")
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", BsdsParams(**self.params))

    @property
    def rounds(self) -> int:
        return len(self.alphas)


def soft_bsds_loss(model: MlpModel, x, labels, fractions, alpha, params, mu, thresholds=None):
    """Multi-budget surrogate loss and its parameter gradient.

    Returns ``(loss, grads, thresholds)``. When ``thresholds`` is None they are
    computed from the current scores; either way they are treated as constants.
    """
    g = np.asarray(labels, dtype=np.float64)
    if g.sum() <= 0:
        raise ArgumentError("soft BSDS needs at least one positive label")
    s, _, cache = model.forward(x)
    if thresholds is None:
        thresholds = [budget_threshold(s, f) for f in fractions]
    total, d_s = 0.0, np.zeros_like(s)
    for t in thresholds:
        value, grad = _soft_bsds_and_score_grad(s, g, alpha, params, t)
        total += value
        d_s += grad
    m = len(thresholds)
    loss = -total / m + mu * model.squared_norm()
    grads = model.backward(-d_s / m * s * (1.0 - s), cache)
    grads = [gr + 2.0 * mu * p for gr, p in zip(grads, model.parameters())]
    return loss, grads, list(thresholds)


def bce_loss(model: MlpModel, x, labels, mu):
    """Mean binary cross-entropy plus ``mu * ||theta||^2`` and its gradient."""
    g = np.asarray(labels, dtype=np.float64)
    s, logits, cache = model.forward(x)
    per_row = g * np.logaddexp(0.0, -logits) + (1.0 - g) * np.logaddexp(0.0, logits)
    loss = float(per_row.mean()) + mu * model.squared_norm()
    grads = model.backward((s - g) / g.size, cache)
    grads = [gr + 2.0 * mu * p for gr, p in zip(grads, model.parameters())]
    return loss, grads


def _check_finite(loss, grads, where: str) -> None:
    if not math.isfinite(loss) or not all(np.isfinite(gr).all() for gr in grads):
        raise TrainingError(f"non-finite loss or gradient at {where} (loss={loss})")


def train_one_round(model: MlpModel, x, labels, alpha: float, config: SoftBsdsConfig, where: str = "") -> MlpModel:
    """``config.epochs`` full-batch gradient steps from ``model``; returns a new model."""
    params = [p.copy() for p in model.parameters()]
    current = MlpModel(params[0::2], params[1::2])
    for epoch in range(config.epochs):
        if config.loss == "bce":
            loss, grads = bce_loss(current, x, labels, config.mu)
        else:
            loss, grads, _ = soft_bsds_loss(current, x, labels, config.fractions, alpha, config.params, config.mu)
        _check_finite(loss, grads, f"{where} epoch {epoch}")
        for p, gr in zip(current.parameters(), grads):
            p -= config.learning_rate * gr
    return current


def standardize(raw: np.ndarray, train_idx: np.ndarray) -> np.ndarray:
    """Center and scale columns with training-row statistics only (zero spread -> scale 1)."""
    raw = np.asarray(raw, dtype=np.float64)
    mean = raw[train_idx].mean(axis=0)
    std = raw[train_idx].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (raw - mean) / std


def _augmentation(scores: np.ndarray, train_idx: np.ndarray, fractions, alpha: float) -> np.ndarray:
    """Previous-round score plus one soft-gate column per budget.

    Gate thresholds come from training-row scores, so held-out rows never
    influence their own features.
    """
    cols = [scores]
    for f in fractions:
        cols.append(expit(alpha * (scores - budget_threshold(scores[train_idx], f))))
    return np.column_stack(cols)


@dataclass
class TrainResult:
    """Out-of-fold scores with the per-fold models and the training rows each used."""

    scores: np.ndarray
    models: list
    train_indices: list
    feature_widths: list


def _check_labels(g: np.ndarray, config: SoftBsdsConfig, fold: int) -> None:
    if config.loss == "bce":
        if g.min() == g.max():
            raise ArgumentError(f"fold {fold}: all training labels are equal, cannot fit cross-entropy")
    elif g.sum() == 0:
        raise ArgumentError(f"fold {fold}: no positive training labels for the soft-BSDS loss")


def train_recursive(
    features: Optional[np.ndarray],
    labels,
    folds,
    config: SoftBsdsConfig,
    fold_features: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> TrainResult:
    """Cross-validated recursive training.

    For every fold id in ``folds`` a model is fit on the other folds and scores
    the held-out fold. ``fold_features(train_idx)`` may add columns that depend
    on the training rows (e.g. similarity to training actives).
    """
    g = np.asarray(labels, dtype=np.float64)
    folds = np.asarray(folds)
    n = g.size
    if folds.shape != (n,):
        raise StructuralError("fold assignment must have one entry per candidate")
    base = None if features is None else np.asarray(features, dtype=np.float64)
    if base is not None and (base.shape[0] != n or not np.isfinite(base).all()):
        raise StructuralError("features must be a finite (n, d) matrix")

    scores = np.full(n, np.nan)
    models, train_sets, widths = [], [], []
    for k, fold in enumerate(np.unique(folds)):
        test_idx = np.flatnonzero(folds == fold)
        train_idx = np.flatnonzero(folds != fold)
        _check_labels(g[train_idx], config, int(fold))
        blocks = [] if base is None else [base]
        if fold_features is not None:
            blocks.append(np.asarray(fold_features(train_idx), dtype=np.float64).reshape(n, -1))
        x = standardize(np.hstack(blocks), train_idx)

        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(config.seed, spawn_key=(k,))))
        model = MlpModel.init((x.shape[1],) + config.hidden + (1,), rng)
        for r, alpha in enumerate(config.alphas):
            if r and config.augment:
                extra = _augmentation(model.predict(x), train_idx, config.fractions, alpha)
                x = np.hstack([x, standardize(extra, train_idx)])
                model = model.widen_input(extra.shape[1])
            model = train_one_round(model, x[train_idx], g[train_idx], alpha, config, f"fold {fold} round {r + 1}")
        scores[test_idx] = model.predict(x[test_idx])
        models.append(model)
        train_sets.append(train_idx)
        widths.append(x.shape[1])
    return TrainResult(scores, models, train_sets, widths)


def train_bce(features, labels, folds, config: SoftBsdsConfig, fold_features=None) -> TrainResult:
    """Same architecture and round schedule as ``train_recursive`` with a cross-entropy loss."""
    return train_recursive(features, labels, folds, replace(config, loss="bce"), fold_features)


def config_for_kind(kind, base: SoftBsdsConfig) -> SoftBsdsConfig:
    """Trainer configuration for one of the four trained proposer kinds."""
    from .proposers import ProposerKind

    kind = ProposerKind(kind)
    if kind is ProposerKind.BSDS_RECURSIVE:
        return base
    if kind is ProposerKind.BSDS_NOAUG:
        return replace(base, augment=False)
    if kind is ProposerKind.BSDS_1ROUND:
        return replace(base, alphas=base.alphas[:1])
    if kind is ProposerKind.GREEDY_MLP_NN:
        return replace(base, loss="bce")
    raise ArgumentError(f"{kind.value} is not a trained proposer")
