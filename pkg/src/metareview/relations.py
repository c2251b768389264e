"""Document-level relation matrices over a conversation forest.

Entry ``[i, j] = 1`` grants tokens of document ``i`` attention to tokens of
document ``j``. A document attends to its parent under ``ANCESTOR1``.
Thread roots count as mutual siblings.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .conversation import Sample, thread_root_index


class RelationKind(enum.IntEnum):
    ANCESTOR1 = 1
    ANCESTOR_ALL = 2
    DESCENDANT1 = 3
    DESCENDANT_ALL = 4
    SIBLINGS = 5
    DOCUMENT_SELF = 6
    SAME_THREAD = 7

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "RelationKind":
        return cls[label.upper().replace("-", "_")]


ALL_KINDS = tuple(RelationKind)


@dataclass(frozen=True)
class RelationMatrix:
    kind: RelationKind
    bits: np.ndarray  # (n, n) bool

    @property
    def n(self) -> int:
        return self.bits.shape[0]

    def pairs(self) -> set[tuple[int, int]]:
        return {(int(i), int(j)) for i, j in zip(*np.nonzero(self.bits))}

    def __eq__(self, other):
        if not isinstance(other, RelationMatrix):
            return NotImplemented
        return self.kind == other.kind and np.array_equal(self.bits, other.bits)

    __hash__ = None

    def to_grid(self) -> str:
        return "\n".join(" ".join(str(int(b)) for b in row) for row in self.bits)


def _ancestors(sample: Sample, i: int) -> list[int]:
    out = []
    p = sample.parent_index[i]
    while p >= 0:
        out.append(p)
        p = sample.parent_index[p]
    return out


def build_relation(sample: Sample, kind: RelationKind) -> RelationMatrix:
    n = sample.n_docs
    bits = np.zeros((n, n), dtype=bool)
    parent = sample.parent_index
    if kind in (RelationKind.ANCESTOR1, RelationKind.DESCENDANT1):
        for i, p in enumerate(parent):
            if p >= 0:
                bits[i, p] = True
    elif kind in (RelationKind.ANCESTOR_ALL, RelationKind.DESCENDANT_ALL):
        for i in range(n):
            for a in _ancestors(sample, i):
                bits[i, a] = True
    elif kind == RelationKind.SIBLINGS:
        for i in range(n):
            for j in range(n):
                if i != j and parent[i] == parent[j]:
                    bits[i, j] = True
    elif kind == RelationKind.DOCUMENT_SELF:
        bits[np.arange(n), np.arange(n)] = True
    elif kind == RelationKind.SAME_THREAD:
        roots = np.array([thread_root_index(sample, i) for i in range(n)])
        bits = roots[:, None] == roots[None, :]
    else:  # pragma: no cover
        raise ValueError(kind)
    if kind in (RelationKind.DESCENDANT1, RelationKind.DESCENDANT_ALL):
        bits = bits.T.copy()
    return RelationMatrix(kind, bits)


def build_all_relations(sample: Sample) -> list[RelationMatrix]:
    return [build_relation(sample, k) for k in ALL_KINDS]


def stack_relations(matrices) -> np.ndarray:
    """(7, n, n) float array in R1..R7 order."""
    return np.stack([m.bits for m in matrices]).astype(np.float64)
