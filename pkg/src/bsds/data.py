"""Containers for a campaign's inputs: score tables and the featured pool."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import StructuralError
from .metrics import LabeledPool
from .similarity import FingerprintSet


@dataclass(frozen=True, eq=False)
class ScoreTable:
    """Real-valued scores aligned to a pool, higher meaning more likely a hit.

    ``filled`` lists ids whose score was missing from the source file and
    replaced by a default (lenient loading only).
    """

    values: np.ndarray
    provenance: str = "unspecified"
    calibrated: bool = False
    filled: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "filled", tuple(self.filled))
        values = np.array(self.values, dtype=np.float64).reshape(-1)
        if not np.isfinite(values).all():
            bad = int(np.flatnonzero(~np.isfinite(values))[0])
            raise StructuralError(f"score at position {bad} is not finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return int(self.values.size)

    def take(self, index_map) -> "ScoreTable":
        return ScoreTable(self.values[np.asarray(index_map, dtype=np.int64)], self.provenance, self.calibrated)

    def check_aligned(self, n: int) -> None:
        if self.values.size != n:
            raise StructuralError(f"score table has {self.values.size} entries for a pool of {n}")


@dataclass(frozen=True, eq=False)
class PoolData:
    """A labeled pool with its optional fingerprints, named numeric columns and group labels."""

    pool: LabeledPool
    fingerprints: Optional[FingerprintSet] = None
    columns: dict = field(default_factory=dict)
    groups: Optional[np.ndarray] = None

    def __post_init__(self):
        n = self.pool.n
        if self.fingerprints is not None and len(self.fingerprints) != n:
            raise StructuralError(f"{len(self.fingerprints)} fingerprints for a pool of {n}")
        cols = {}
        for name, col in self.columns.items():
            col = np.asarray(col, dtype=np.float64)
            if col.shape != (n,):
                raise StructuralError(f"column {name!r} has shape {col.shape}, expected ({n},)")
            col.setflags(write=False)
            cols[name] = col
        object.__setattr__(self, "columns", cols)
        if self.groups is not None:
            groups = np.asarray(self.groups, dtype=object)
            if groups.shape != (n,):
                raise StructuralError(f"group labels have shape {groups.shape}, expected ({n},)")
            object.__setattr__(self, "groups", groups)

    @property
    def n(self) -> int:
        return self.pool.n

    def take(self, index_map) -> "PoolData":
        idx = np.asarray(index_map, dtype=np.int64)
        return PoolData(
            pool=self.pool.take(idx),
            fingerprints=None if self.fingerprints is None else self.fingerprints.take(idx),
            columns={k: v[idx] for k, v in self.columns.items()},
            groups=None if self.groups is None else self.groups[idx],
        )
