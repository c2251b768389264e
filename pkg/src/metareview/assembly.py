"""Tokenization, vocabulary and encoder-input assembly."""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .conversation import DocType, Sample
from .errors import BudgetTooSmall, EmptyCorpus
from .relations import RelationKind, RelationMatrix

PAD, BOS, EOS, UNK, DOC_SEP = "<pad>", "<bos>", "<eos>", "<unk>", "<doc-sep>"
RESERVED = (PAD, BOS, EOS, UNK, DOC_SEP)
PAD_ID, BOS_ID, EOS_ID, UNK_ID, DOC_SEP_ID = range(5)

_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase; words and individual punctuation marks become tokens."""
    return _TOKEN.findall(text.lower())


class Vocab:
    def __init__(self, tokens: Sequence[str]):
        tokens = list(tokens)
        if tuple(tokens[: len(RESERVED)]) != RESERVED:
            raise ValueError("vocabulary must start with the reserved tokens")
        if len(set(tokens)) != len(tokens):
            raise ValueError("duplicate vocabulary entries")
        self.itos = tokens
        self.stoi = {t: i for i, t in enumerate(tokens)}

    def __len__(self):
        return len(self.itos)

    def __contains__(self, token):
        return token in self.stoi

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    def encode(self, text: str) -> list[int]:
        return [self.stoi.get(t, UNK_ID) for t in tokenize(text)]

    def decode(self, ids: Iterable[int], strip_special: bool = True) -> str:
        out = []
        for i in ids:
            tok = self.itos[int(i)]
            if strip_special and tok in RESERVED:
                continue
            out.append(tok)
        return " ".join(out)

    def save(self, path) -> None:
        Path(path).write_text("".join(f"{i}\t{t}\n" for i, t in enumerate(self.itos)), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocab":
        rows = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            if line:
                i, tok = line.split("\t", 1)
                rows.append((int(i), tok))
        rows.sort()
        if [i for i, _ in rows] != list(range(len(rows))):
            raise ValueError(f"{path}: ids are not contiguous")
        return cls([t for _, t in rows])


def build_vocab(corpus: Sequence[Sample], max_size: int) -> Vocab:
    """Keep the most frequent tokens of documents and meta-reviews.

    Ties break lexicographically. ``max_size`` includes the 5 reserved slots.
    """
    if max_size <= len(RESERVED):
        raise ValueError("max_size must leave room beyond the reserved tokens")
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts: Counter = Counter()
    for s in corpus:
        for d in s.documents:
            counts.update(tokenize(d.text))
        counts.update(tokenize(s.meta_review))
    for r in RESERVED:
        counts.pop(r, None)
    if not counts:
        raise EmptyCorpus("corpus contains no tokens")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [t for t, _ in ranked[: max_size - len(RESERVED)]]
    return Vocab(list(RESERVED) + keep)


@dataclass(frozen=True)
class AssembledInput:
    token_ids: np.ndarray  # (n_tokens,) int
    doc_of_token: np.ndarray  # (n_tokens,) int, non-decreasing
    delimiter_indices: tuple[int, ...]
    official_review_positions: tuple[int, ...]
    budget: int

    @property
    def n_tokens(self) -> int:
        return len(self.token_ids)

    @property
    def n_docs(self) -> int:
        return len(self.delimiter_indices)

    def doc_spans(self) -> list[tuple[int, int]]:
        """Half-open token range of every document."""
        bounds = list(self.delimiter_indices) + [self.n_tokens]
        return [(bounds[k], bounds[k + 1]) for k in range(self.n_docs)]


def assemble_input(sample: Sample, vocab: Vocab, budget: int) -> AssembledInput:
    """Concatenate documents as ``<doc-sep> tokens...`` under a shared budget.

    Every document gets ``budget // n_docs`` slots, its delimiter included, and
    is cut to fit; shorter documents are kept whole. No document is dropped.
    """
    n = sample.n_docs
    if budget < 2 * n:
        raise BudgetTooSmall(f"budget {budget} cannot hold {n} documents (needs {2 * n})")
    cap = budget // n
    ids: list[int] = []
    owner: list[int] = []
    delims: list[int] = []
    reviews: list[int] = []
    for k, doc in enumerate(sample.documents):
        delims.append(len(ids))
        if doc.doc_type == DocType.OFFICIAL_REVIEW:
            reviews.append(len(ids))
        body = vocab.encode(doc.text)[: cap - 1]
        ids.append(DOC_SEP_ID)
        ids.extend(body)
        owner.extend([k] * (len(body) + 1))
    return AssembledInput(
        token_ids=np.asarray(ids, dtype=np.int64),
        doc_of_token=np.asarray(owner, dtype=np.int64),
        delimiter_indices=tuple(delims),
        official_review_positions=tuple(reviews),
        budget=budget,
    )


@dataclass(frozen=True)
class TokenMask:
    """Token-level view of a document relation; stored as the document matrix plus token owners."""

    kind: RelationKind
    doc_bits: np.ndarray
    doc_of_token: np.ndarray

    def __getitem__(self, st):
        s, t = st
        return bool(self.doc_bits[self.doc_of_token[s], self.doc_of_token[t]])

    def dense(self) -> np.ndarray:
        d = self.doc_of_token
        return self.doc_bits[np.ix_(d, d)]


def extend_relations(matrices: Sequence[RelationMatrix], doc_of_token) -> list[TokenMask]:
    doc_of_token = np.asarray(doc_of_token, dtype=np.int64)
    for m in matrices:
        if doc_of_token.size and doc_of_token.max() >= m.n:
            raise IndexError(f"token owner {doc_of_token.max()} outside {m.n} documents")
    return [TokenMask(m.kind, m.bits, doc_of_token) for m in matrices]


def build_decoder_target(meta_review: str, vocab: Vocab, max_out: int) -> np.ndarray:
    """``<bos> tokens <eos>``; when cut to ``max_out`` the last id stays ``<eos>``."""
    if max_out < 2:
        raise ValueError("max_out must fit <bos> and <eos>")
    body = vocab.encode(meta_review)[: max_out - 2]
    return np.asarray([BOS_ID] + body + [EOS_ID], dtype=np.int64)
