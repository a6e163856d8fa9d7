"""Pool and score files, synthetic campaigns, fold assignment and feature assembly.

File formats
------------
Both files are comma-separated with a mandatory header row. Lines starting
with ``#`` before the header are metadata (``# key: value``) and are ignored
by the parser except for the keys documented below.

Pool file columns: ``id`` and ``label`` (0/1) are required. ``group`` (any
string) and ``fingerprint`` (lowercase hex, most significant bit first) are
optional. Every other column is a named numeric column (descriptors, ``prior``,
``admet``...).

Score file columns: ``id,score``. Metadata keys ``provenance`` and
``calibrated`` (true/false) are read back into the :class:`ScoreTable`.

Floats are written with 17 significant digits so load/write round-trips are
exact.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import expit, logit
from scipy.stats import norm

from .data import PoolData, ScoreTable
from .errors import ArgumentError, InputError
from .metrics import LabeledPool, auroc
from .similarity import DEFAULT_WIDTH, FingerprintSet

RESERVED = ("id", "label", "group", "fingerprint")
DESCRIPTORS = ("mw", "logp", "hbd", "hba", "tpsa", "rings")


def _fmt(value: float) -> str:
    return format(float(value), ".17g")


def _read_table(path) -> tuple:
    """Return (metadata dict, header list, rows) from a '#'-commented CSV."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    meta, body = {}, []
    lines = text.splitlines()
    i = 0
    while i < len(lines) and (lines[i].startswith("#") or not lines[i].strip()):
        key, sep, value = lines[i].lstrip("#").partition(":")
        if sep:
            meta[key.strip()] = value.strip()
        i += 1
    body = lines[i:]
    if not body:
        raise InputError(f"{path}: missing header row")
    reader = csv.reader(body)
    header = [h.strip() for h in next(reader)]
    rows = [row for row in reader if row and any(cell.strip() for cell in row)]
    return meta, header, rows


def load_pool(path, fingerprint_width: Optional[int] = None) -> PoolData:
    """Parse and validate a pool file. Errors name the offending data row (1-based) and column."""
    meta, header, rows = _read_table(path)
    for required in ("id", "label"):
        if required not in header:
            raise InputError(f"{path}: header lacks a {required!r} column")
    if len(set(header)) != len(header):
        raise InputError(f"{path}: duplicate column names in header")
    col = {name: j for j, name in enumerate(header)}
    numeric = [h for h in header if h not in RESERVED]
    ids, labels, groups, hexes = [], [], [], []
    values = {name: [] for name in numeric}
    seen = set()
    for r, row in enumerate(rows, start=1):
        if len(row) != len(header):
            raise InputError(f"{path}: row {r} has {len(row)} fields, header has {len(header)}")
        cid = row[col["id"]].strip()
        if not cid:
            raise InputError(f"{path}: row {r} has an empty id")
        if cid in seen:
            raise InputError(f"{path}: row {r} duplicates id {cid!r}")
        seen.add(cid)
        ids.append(cid)
        label = row[col["label"]].strip()
        if label not in ("0", "1"):
            raise InputError(f"{path}: row {r} column 'label' has value {label!r}, expected 0 or 1")
        labels.append(int(label))
        if "group" in col:
            groups.append(row[col["group"]].strip())
        if "fingerprint" in col:
            hexes.append(row[col["fingerprint"]].strip().lower())
        for name in numeric:
            cell = row[col[name]].strip()
            try:
                v = float(cell)
            except ValueError:
                raise InputError(f"{path}: row {r} column {name!r} is not a number: {cell!r}") from None
            if not math.isfinite(v):
                raise InputError(f"{path}: row {r} column {name!r} is not finite")
            values[name].append(v)
    if not ids:
        raise InputError(f"{path}: no data rows")

    fingerprints = None
    if hexes:
        width = fingerprint_width or int(meta.get("fingerprint_width", 0)) or 4 * len(hexes[0])
        for r, h in enumerate(hexes, start=1):
            if len(h) != width // 4:
                raise InputError(f"{path}: row {r} fingerprint has {len(h)} hex chars, expected {width // 4}")
            if any(c not in "0123456789abcdef" for c in h):
                raise InputError(f"{path}: row {r} fingerprint is not hexadecimal")
        fingerprints = FingerprintSet.from_hex(hexes, width)
    return PoolData(
        pool=LabeledPool(tuple(ids), np.array(labels)),
        fingerprints=fingerprints,
        columns={k: np.array(v) for k, v in values.items()},
        groups=np.array(groups, dtype=object) if groups else None,
    )


def pool_text(data: PoolData, metadata: Optional[dict] = None) -> str:
    out = io.StringIO()
    meta = {"format": "bsds-pool v1", **(metadata or {})}
    if data.fingerprints is not None:
        meta["fingerprint_width"] = data.fingerprints.width
    for k, v in meta.items():
        out.write(f"# {k}: {v}\n")
    header = ["id", "label"]
    if data.groups is not None:
        header.append("group")
    if data.fingerprints is not None:
        header.append("fingerprint")
    names = list(data.columns)
    header += names
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    hexes = data.fingerprints.to_hex() if data.fingerprints is not None else None
    for i in range(data.n):
        row = [data.pool.ids[i], int(data.pool.labels[i])]
        if data.groups is not None:
            row.append(data.groups[i])
        if hexes is not None:
            row.append(hexes[i])
        row += [_fmt(data.columns[k][i]) for k in names]
        writer.writerow(row)
    return out.getvalue()


def write_pool(path, data: PoolData, metadata: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(pool_text(data, metadata))


def load_scores(path, pool: LabeledPool, strict: bool = True, default: float = 0.0) -> ScoreTable:
    """Read an ``id,score`` file and align it to ``pool`` by id.

    In strict mode a pool id missing from the file is an error; otherwise it
    is filled with ``default`` and listed in ``ScoreTable.filled``.
    """
    meta, header, rows = _read_table(path)
    if header[:2] != ["id", "score"]:
        raise InputError(f"{path}: header must start with 'id,score', got {header}")
    position: dict = {}
    for i, cid in enumerate(pool.ids):
        position.setdefault(cid, []).append(i)
    values = np.full(pool.n, np.nan)
    seen = set()
    for r, row in enumerate(rows, start=1):
        cid = row[0].strip()
        if cid not in position:
            raise InputError(f"{path}: row {r} has unknown id {cid!r}")
        if cid in seen:
            raise InputError(f"{path}: row {r} duplicates id {cid!r}")
        seen.add(cid)
        try:
            v = float(row[1])
        except (ValueError, IndexError):
            raise InputError(f"{path}: row {r} column 'score' is not a number") from None
        if not math.isfinite(v):
            raise InputError(f"{path}: row {r} score for {cid!r} is not finite")
        values[position[cid]] = v
    missing = [cid for cid in dict.fromkeys(pool.ids) if cid not in seen]
    if missing and strict:
        raise InputError(f"{path}: no score for id {missing[0]!r}" + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else ""))
    for cid in missing:
        values[position[cid]] = default
    return ScoreTable(
        values,
        provenance=meta.get("provenance", os.path.basename(str(path))),
        calibrated=meta.get("calibrated", "false").lower() == "true",
        filled=tuple(missing),
    )


def scores_text(table: ScoreTable, pool: LabeledPool) -> str:
    out = io.StringIO()
    out.write(f"# provenance: {table.provenance}\n# calibrated: {str(table.calibrated).lower()}\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["id", "score"])
    for cid, v in zip(pool.ids, table.values):
        writer.writerow([cid, _fmt(v)])
    return out.getvalue()


def write_scores(path, table: ScoreTable, pool: LabeledPool) -> None:
    table.check_aligned(pool.n)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(scores_text(table, pool))


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for a desk-scale synthetic campaign.

    Scores follow a binormal model with separation chosen so the expected
    AUROC equals ``target_auroc``; they are emitted as calibrated posterior
    probabilities. Hits carry a noisy copy of one of ``n_clusters`` planted bit
    motifs, and a small share of non-hits carry half a motif as decoys.
    """

    n: int = 2000
    prevalence: float = 0.05
    target_auroc: float = 0.85
    width: int = DEFAULT_WIDTH
    n_clusters: int = 8
    motif_bits: int = 48
    background_density: float = 0.03
    decoy_rate: float = 0.1
    tolerance: float = 0.02
    max_attempts: int = 200
    seed: int = 0

    def __post_init__(self):
        if self.n < 10:
            raise ArgumentError("synthetic pools need at least 10 candidates")
        if not 0.0 < self.prevalence < 1.0:
            raise ArgumentError("prevalence must lie in (0, 1)")
        if not 0.5 <= self.target_auroc < 1.0:
            raise ArgumentError("target AUROC must lie in [0.5, 1)")
        if self.width % 8 or self.motif_bits > self.width:
            raise ArgumentError("fingerprint width must be a multiple of 8 and exceed the motif size")


@dataclass(frozen=True, eq=False)
class SyntheticDataset:
    data: PoolData
    scores: ScoreTable
    realized_auroc: float
    attempts: int


def generate_synthetic(spec: SyntheticSpec) -> SyntheticDataset:
    rng = np.random.default_rng(spec.seed)
    n = spec.n
    n_hits = math.floor(n * spec.prevalence + 0.5)
    if not 1 <= n_hits < n:
        raise ArgumentError(f"prevalence {spec.prevalence} plants {n_hits} hits in {n} candidates")
    labels = np.zeros(n, dtype=np.int8)
    labels[rng.permutation(n)[:n_hits]] = 1
    g = labels.astype(np.float64)

    separation = math.sqrt(2.0) * norm.ppf(spec.target_auroc)
    slope = max(separation, 0.1)
    base_logit = logit(n_hits / n)
    for attempt in range(1, spec.max_attempts + 1):
        latent = rng.standard_normal(n) + separation * g
        scores = expit(base_logit + slope * latent - separation**2 / 2.0)
        realized = auroc(labels, scores)
        if abs(realized - spec.target_auroc) <= spec.tolerance:
            break
    else:
        raise ArgumentError(
            f"could not reach AUROC {spec.target_auroc} +/- {spec.tolerance} in {spec.max_attempts} draws"
        )

    bits = rng.random((n, spec.width)) < spec.background_density
    motifs = [rng.choice(spec.width, size=spec.motif_bits, replace=False) for _ in range(spec.n_clusters)]
    cluster = rng.integers(spec.n_clusters, size=n)
    for i in np.flatnonzero(labels):
        motif = motifs[cluster[i]]
        bits[i, motif[rng.random(motif.size) < 0.9]] = True
    decoys = np.flatnonzero((labels == 0) & (rng.random(n) < spec.decoy_rate))
    for i in decoys:
        motif = motifs[cluster[i]]
        bits[i, motif[: motif.size // 2]] = True

    n_groups = max(10, n // 20)
    groups = np.array(
        [f"h{cluster[i]}_{rng.integers(4)}" if labels[i] else f"g{rng.integers(n_groups)}" for i in range(n)],
        dtype=object,
    )

    columns = {
        "mw": np.clip(rng.normal(380 + 30 * g, 90), 100, None),
        "logp": rng.normal(2.5 + 0.3 * g, 1.5),
        "hbd": rng.poisson(2 + 0.5 * g).astype(np.float64),
        "hba": rng.poisson(5 + g).astype(np.float64),
        "tpsa": np.clip(rng.normal(80 + 10 * g, 30), 0, None),
        "rings": rng.poisson(2.5 + 0.5 * g).astype(np.float64),
    }
    lipinski = ((columns["mw"] <= 500).astype(int) + (columns["logp"] <= 5) + (columns["hbd"] <= 5)
                + (columns["hba"] <= 10))
    columns["prior"] = (1.0 + lipinski) / 6.0
    columns["admet"] = (lipinski + (columns["tpsa"] <= 140)) / 5.0

    width_digits = len(str(n - 1))
    data = PoolData(
        pool=LabeledPool(tuple(f"s{i:0{width_digits}d}" for i in range(n)), labels),
        fingerprints=FingerprintSet.from_bits(bits),
        columns=columns,
        groups=groups,
    )
    table = ScoreTable(scores, provenance=f"synthetic(seed={spec.seed}, auroc={spec.target_auroc})", calibrated=True)
    return SyntheticDataset(data, table, float(realized), attempt)


def grouped_folds(
    pool: LabeledPool,
    fold_count: int,
    mode: str = "random_stratified",
    seed: int = 0,
    groups: Optional[Sequence] = None,
) -> np.ndarray:
    """Assign every candidate a fold id in ``range(fold_count)``.

    ``random_stratified`` deals shuffled hits, then shuffled non-hits,
    round-robin so fold hit counts differ by at most one. ``by_group`` keeps
    each group whole, placing groups largest first (random order among equal
    sizes) into the currently smallest fold.
    """
    if fold_count < 2:
        raise ArgumentError("need at least two folds")
    if fold_count > pool.n:
        raise ArgumentError(f"{fold_count} folds for {pool.n} candidates")
    rng = np.random.default_rng(seed)
    folds = np.empty(pool.n, dtype=np.int64)
    if mode == "random_stratified":
        hits = rng.permutation(pool.hit_indices)
        misses = rng.permutation(np.flatnonzero(pool.labels == 0))
        order = np.concatenate([hits, misses])
        folds[order] = np.arange(order.size) % fold_count
        return folds
    if mode != "by_group":
        raise ArgumentError(f"unknown fold mode {mode!r}")
    if groups is None:
        raise ArgumentError("by_group folds need group labels")
    groups = np.asarray(groups, dtype=object)
    names, inverse, counts = np.unique(groups.astype(str), return_inverse=True, return_counts=True)
    if names.size < fold_count:
        raise ArgumentError(f"{names.size} groups cannot fill {fold_count} folds")
    shuffled = rng.permutation(names.size)
    placement = shuffled[np.argsort(-counts[shuffled], kind="stable")]
    sizes = np.zeros(fold_count, dtype=np.int64)
    group_fold = np.empty(names.size, dtype=np.int64)
    for gi in placement:
        target = int(np.argmin(sizes))
        group_fold[gi] = target
        sizes[target] += counts[gi]
    return group_fold[inverse]


def nearest_training_active(fingerprints: FingerprintSet, labels, train_idx) -> np.ndarray:
    """Similarity of every candidate to its closest training-fold active (itself excluded)."""
    labels = np.asarray(labels)
    train_idx = np.asarray(train_idx)
    actives = train_idx[labels[train_idx] == 1]
    if actives.size == 0:
        return np.zeros(len(fingerprints))
    sims = fingerprints.similarity(other=fingerprints, rows_b=actives)
    sims[actives, np.arange(actives.size)] = -np.inf
    out = sims.max(axis=1)
    return np.where(np.isfinite(out), out, 0.0)


def assemble_features(data: PoolData, scores: dict, names: Sequence[str], train_idx) -> np.ndarray:
    """Raw (unstandardized) feature matrix in ``names`` order for one fold.

    A name resolves to a score table first, then to a pool column;
    ``nearest_active`` is computed against the fold's training actives.
    """
    cols = []
    for name in names:
        if name == "nearest_active":
            if data.fingerprints is None:
                raise ArgumentError("feature 'nearest_active' needs fingerprints")
            cols.append(nearest_training_active(data.fingerprints, data.pool.labels, train_idx))
        elif name in scores:
            cols.append(scores[name].values)
        elif name in data.columns:
            cols.append(data.columns[name])
        else:
            raise ArgumentError(f"feature column {name!r} not found; trained proposers skipped")
    return np.column_stack(cols)


def train_campaign_scores(ctx, config) -> np.ndarray:
    """Out-of-fold scores of one trained proposer kind for a campaign replicate."""
    from dataclasses import replace

    from .surrogate import SoftBsdsConfig, config_for_kind, train_recursive

    settings = ctx.settings
    names = settings.feature_columns
    assemble_features(ctx.data, ctx.scores, [n for n in names if n != "nearest_active"], np.arange(ctx.data.n))
    trainer = dict(settings.trainer)
    trainer.setdefault("params", ctx.params)
    base = SoftBsdsConfig(**trainer)
    base = replace(base, alphas=base.alphas[: config.rounds],
                   seed=int(ctx.rng(f"trainer/{config.name}", 0, config.seed).integers(2**31)))
    folds = grouped_folds(
        ctx.pool, settings.fold_count, settings.fold_mode,
        seed=int(ctx.rng("folds").integers(2**31)), groups=ctx.data.groups,
    )
    cfg = config_for_kind(config.kind, base)
    result = train_recursive(
        None, ctx.pool.labels, folds, cfg,
        fold_features=lambda train_idx: assemble_features(ctx.data, ctx.scores, names, train_idx),
    )
    return result.scores
