"""Binary fingerprints and Tanimoto similarity.

Fingerprints are stored bit-packed (MSB first, the same order as their hex
text form). Single pairs use popcounts on the packed bytes; batch work unpacks
to float32 0/1 matrices and uses a matrix product, which is exact for widths
below 2**24 and therefore independent of BLAS threading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, StructuralError
from .metrics import LabeledPool

DEFAULT_WIDTH = 2048
_CHUNK = 4096


@dataclass(frozen=True, eq=False)
class Fingerprint:
    packed: np.ndarray
    width: int
    popcount: int

    @classmethod
    def from_bits(cls, bits) -> "Fingerprint":
        bits = np.asarray(bits, dtype=bool).reshape(-1)
        packed = np.packbits(bits)
        packed.setflags(write=False)
        return cls(packed, bits.size, int(bits.sum()))

    @classmethod
    def from_hex(cls, text: str, width: Optional[int] = None) -> "Fingerprint":
        return FingerprintSet.from_hex([text], width)[0]

    @property
    def bits(self) -> np.ndarray:
        return np.unpackbits(self.packed)[: self.width].astype(bool)

    def to_hex(self) -> str:
        return self.packed.tobytes().hex()[: self.width // 4]

    def __eq__(self, other):
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.width == other.width and np.array_equal(self.packed, other.packed)

    __hash__ = None


def tanimoto(a: Fingerprint, b: Fingerprint) -> float:
    """|a & b| / |a | b|; two empty fingerprints count as identical (1.0)."""
    if a.width != b.width:
        raise StructuralError(f"fingerprint widths differ: {a.width} vs {b.width}")
    inter = int(np.bitwise_count(a.packed & b.packed).sum())
    union = a.popcount + b.popcount - inter
    return 1.0 if union == 0 else inter / union


class FingerprintSet:
    """Row-aligned fingerprints for a whole pool (one shared width)."""

    def __init__(self, packed: np.ndarray, width: int):
        packed = np.ascontiguousarray(packed, dtype=np.uint8)
        if packed.ndim != 2 or packed.shape[1] != math.ceil(width / 8):
            raise StructuralError(f"packed matrix shape {packed.shape} does not fit width {width}")
        packed.setflags(write=False)
        self.packed = packed
        self.width = int(width)
        self.popcounts = np.bitwise_count(packed).sum(axis=1).astype(np.int64)

    @classmethod
    def from_bits(cls, bits) -> "FingerprintSet":
        bits = np.asarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise StructuralError("expected an (n, width) bit matrix")
        return cls(np.packbits(bits, axis=1), bits.shape[1])

    @classmethod
    def from_hex(cls, texts: Sequence[str], width: Optional[int] = None) -> "FingerprintSet":
        """Parse lowercase hex strings of ``width / 4`` characters each."""
        texts = [t.strip().lower() for t in texts]
        if width is None:
            width = 4 * len(texts[0]) if texts else DEFAULT_WIDTH
        n_chars = width // 4
        if width % 4:
            raise StructuralError(f"width {width} is not a multiple of 4")
        rows = []
        for i, text in enumerate(texts):
            if len(text) != n_chars:
                raise StructuralError(f"fingerprint row {i}: {len(text)} hex chars, expected {n_chars}")
            if len(text) % 2:
                text += "0"
            try:
                rows.append(np.frombuffer(bytes.fromhex(text), dtype=np.uint8))
            except ValueError as exc:
                raise StructuralError(f"fingerprint row {i}: invalid hex") from exc
        packed = np.vstack(rows) if rows else np.zeros((0, math.ceil(width / 8)), np.uint8)
        return cls(packed, width)

    def to_hex(self) -> list:
        return [self[i].to_hex() for i in range(len(self))]

    def __len__(self):
        return self.packed.shape[0]

    def __getitem__(self, i) -> Fingerprint:
        return Fingerprint(self.packed[i], self.width, int(self.popcounts[i]))

    def take(self, index_map) -> "FingerprintSet":
        return FingerprintSet(self.packed[np.asarray(index_map, dtype=np.int64)], self.width)

    def dense(self, rows=None) -> np.ndarray:
        packed = self.packed if rows is None else self.packed[rows]
        return np.unpackbits(packed, axis=1, count=self.width).astype(np.float32)

    def similarity(self, rows_a=None, other: Optional["FingerprintSet"] = None, rows_b=None) -> np.ndarray:
        """Tanimoto matrix between ``self[rows_a]`` and ``other[rows_b]``."""
        other = self if other is None else other
        if other.width != self.width:
            raise StructuralError(f"fingerprint widths differ: {self.width} vs {other.width}")
        a_idx = np.arange(len(self)) if rows_a is None else np.asarray(rows_a)
        b_idx = np.arange(len(other)) if rows_b is None else np.asarray(rows_b)
        b_dense = other.dense(b_idx)
        pb = other.popcounts[b_idx].astype(np.float64)
        out = np.empty((a_idx.size, b_idx.size), dtype=np.float64)
        for start in range(0, a_idx.size, _CHUNK):
            rows = a_idx[start : start + _CHUNK]
            inter = (self.dense(rows) @ b_dense.T).astype(np.float64)
            union = self.popcounts[rows].astype(np.float64)[:, None] + pb[None, :] - inter
            with np.errstate(invalid="ignore", divide="ignore"):
                out[start : start + rows.size] = np.where(union > 0, inter / union, 1.0)
        return out


@dataclass(frozen=True, eq=False)
class KnowledgeBase:
    """Known actives standing in for prior domain knowledge."""

    member_indices: np.ndarray
    fingerprints: FingerprintSet

    def __len__(self):
        return int(self.member_indices.size)


def knowledge_base(fingerprints: FingerprintSet, members) -> KnowledgeBase:
    members = np.asarray(members, dtype=np.int64)
    return KnowledgeBase(members, fingerprints.take(members))


def retrieval_score(candidate: Fingerprint, kb: KnowledgeBase) -> float:
    """Similarity to the nearest knowledge-base member."""
    if len(kb) == 0:
        raise ArgumentError("knowledge base is empty")
    return max(tanimoto(candidate, kb.fingerprints[j]) for j in range(len(kb)))


def retrieval_scores(fingerprints: FingerprintSet, kb: KnowledgeBase) -> np.ndarray:
    """Batch ``retrieval_score`` for every row of ``fingerprints``."""
    if len(kb) == 0:
        raise ArgumentError("knowledge base is empty")
    return fingerprints.similarity(other=kb.fingerprints).max(axis=1)


def diversity_score(candidate: Fingerprint, already_selected: Sequence[Fingerprint]) -> float:
    """Negative similarity to the closest already-selected candidate; 0 when nothing is selected."""
    if not already_selected:
        return 0.0
    return -max(tanimoto(candidate, s) for s in already_selected)


def sample_knowledge_base(
    pool: LabeledPool,
    fingerprints: FingerprintSet,
    fraction: float,
    rng: np.random.Generator,
    train_mask: Optional[np.ndarray] = None,
) -> KnowledgeBase:
    """Sample ``max(1, round(fraction * H_train))`` training actives without replacement.

    Members are returned in ascending index order.
    """
    if not 0.0 < fraction <= 1.0:
        raise ArgumentError(f"knowledge-base fraction must lie in (0, 1], got {fraction}")
    if len(fingerprints) != pool.n:
        raise StructuralError(f"{len(fingerprints)} fingerprints for a pool of {pool.n}")
    eligible = pool.labels == 1
    if train_mask is not None:
        eligible = eligible & np.asarray(train_mask, dtype=bool)
    candidates = np.flatnonzero(eligible)
    if candidates.size == 0:
        raise ArgumentError("no hits in the training portion to build a knowledge base from")
    size = min(candidates.size, max(1, math.floor(fraction * candidates.size + 0.5)))
    members = np.sort(rng.choice(candidates, size=size, replace=False))
    return knowledge_base(fingerprints, members)
