"""Conversation forests: typed documents, samples, JSON-lines I/O and tree statistics."""

from __future__ import annotations

import enum
import json
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import (
    CycleDetected,
    DanglingParent,
    MalformedRecord,
    MetadataOnNonReview,
    UnknownDocument,
)


class DocType(enum.IntEnum):
    OFFICIAL_REVIEW = 0
    PUBLIC_REVIEW = 1
    AUTHOR_COMMENT = 2
    OFFICIAL_RESPONSE = 3
    PUBLIC_RESPONSE = 4
    AUTHOR_RESPONSE = 5
    PAPER_ABSTRACT = 6

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "DocType":
        try:
            return cls[label.upper()]
        except KeyError:
            raise MalformedRecord(f"unknown doc_type {label!r}") from None


ACCEPT = "accept"
REJECT = "reject"


@dataclass(frozen=True)
class Document:
    doc_id: str
    parent_id: Optional[str]
    doc_type: DocType
    text: str
    rating: Optional[int] = None
    confidence: Optional[int] = None

    def __post_init__(self):
        if not isinstance(self.text, str) or not self.text.strip():
            raise MalformedRecord(f"document {self.doc_id!r} has empty text")
        is_review = self.doc_type == DocType.OFFICIAL_REVIEW
        has_meta = self.rating is not None or self.confidence is not None
        if has_meta and not is_review:
            raise MetadataOnNonReview(
                f"document {self.doc_id!r} of type {self.doc_type.label} carries rating/confidence"
            )
        if is_review:
            if self.rating is None or self.confidence is None:
                raise MalformedRecord(f"official review {self.doc_id!r} lacks rating or confidence")
            if not 1 <= self.rating <= 10:
                raise MalformedRecord(f"rating {self.rating} outside 1..10")
            if not 1 <= self.confidence <= 5:
                raise MalformedRecord(f"confidence {self.confidence} outside 1..5")

    @property
    def is_root(self) -> bool:
        return self.parent_id is None


@dataclass(frozen=True)
class Sample:
    """One paper: its source-document forest plus the reference meta-review.

    Document order is significant: a document's position in ``documents`` is its
    row/column index in every relation matrix.
    """

    paper_id: str
    documents: tuple[Document, ...]
    meta_review: str
    acceptance: str
    venue: str = ""

    def __post_init__(self):
        object.__setattr__(self, "documents", tuple(self.documents))
        if self.acceptance not in (ACCEPT, REJECT):
            raise MalformedRecord(f"acceptance must be 'accept' or 'reject', got {self.acceptance!r}")
        if not self.documents:
            raise MalformedRecord(f"sample {self.paper_id!r} has no documents")
        ids = [d.doc_id for d in self.documents]
        dup = [k for k, v in Counter(ids).items() if v > 1]
        if dup:
            raise MalformedRecord(f"duplicate doc_id(s) {dup}")
        known = set(ids)
        for d in self.documents:
            if d.parent_id is not None and d.parent_id not in known:
                raise DanglingParent(f"{d.doc_id!r} points at missing parent {d.parent_id!r}")
        parents = {d.doc_id: d.parent_id for d in self.documents}
        for d in self.documents:
            seen = {d.doc_id}
            cur = d.parent_id
            while cur is not None:
                if cur in seen:
                    raise CycleDetected(f"parent chain from {d.doc_id!r} revisits {cur!r}")
                seen.add(cur)
                cur = parents[cur]
        abstracts = [d for d in self.documents if d.doc_type == DocType.PAPER_ABSTRACT]
        if len(abstracts) > 1:
            raise MalformedRecord("more than one paper_abstract document")
        if abstracts and not abstracts[0].is_root:
            raise MalformedRecord("paper_abstract must be a thread root")

    @property
    def accepted(self) -> bool:
        return self.acceptance == ACCEPT

    @property
    def n_docs(self) -> int:
        return len(self.documents)

    @cached_property
    def index(self) -> dict[str, int]:
        return {d.doc_id: i for i, d in enumerate(self.documents)}

    @cached_property
    def parent_index(self) -> tuple[int, ...]:
        """Parent position per document, -1 for roots."""
        return tuple(-1 if d.parent_id is None else self.index[d.parent_id] for d in self.documents)

    @cached_property
    def children(self) -> tuple[tuple[int, ...], ...]:
        kids: list[list[int]] = [[] for _ in self.documents]
        for i, p in enumerate(self.parent_index):
            if p >= 0:
                kids[p].append(i)
        return tuple(tuple(k) for k in kids)

    @property
    def roots(self) -> list[int]:
        return [i for i, p in enumerate(self.parent_index) if p < 0]

    def official_reviews(self) -> list[Document]:
        return [d for d in self.documents if d.doc_type == DocType.OFFICIAL_REVIEW]


@dataclass(frozen=True)
class TreeStats:
    height: int
    width: int
    n_docs: int
    threads_by_type: dict = field(default_factory=dict)


def _require(record: dict, key: str, kind=None):
    if key not in record:
        raise MalformedRecord(f"missing field {key!r}")
    value = record[key]
    if kind is not None and not isinstance(value, kind):
        raise MalformedRecord(f"field {key!r} has type {type(value).__name__}")
    return value


def _optional_int(raw: dict, key: str) -> Optional[int]:
    value = raw.get(key)
    if value is None:
        return None
    if isinstance(value, bool) or not isinstance(value, int):
        raise MalformedRecord(f"field {key!r} must be an integer")
    return value


def parse_document(raw: dict) -> Document:
    if not isinstance(raw, dict):
        raise MalformedRecord("document entry is not an object")
    doc_id = _require(raw, "doc_id", str)
    parent_id = raw.get("parent_id")
    if parent_id is not None and not isinstance(parent_id, str):
        raise MalformedRecord(f"parent_id of {doc_id!r} must be a string or null")
    return Document(
        doc_id=doc_id,
        parent_id=parent_id,
        doc_type=DocType.from_label(_require(raw, "doc_type", str)),
        text=_require(raw, "text", str),
        rating=_optional_int(raw, "rating"),
        confidence=_optional_int(raw, "confidence"),
    )


def parse_sample(record: dict) -> Sample:
    """Build a validated :class:`Sample` from one JSON-lines record.

    Unknown keys are ignored. Raises MalformedRecord, DanglingParent,
    CycleDetected or MetadataOnNonReview.
    """
    if not isinstance(record, dict):
        raise MalformedRecord("record is not an object")
    docs = _require(record, "documents", list)
    return Sample(
        paper_id=_require(record, "paper_id", str),
        documents=tuple(parse_document(d) for d in docs),
        meta_review=_require(record, "meta_review", str),
        acceptance=_require(record, "acceptance", str),
        venue=record.get("venue", "") or "",
    )


def serialize_sample(sample: Sample) -> dict:
    docs = []
    for d in sample.documents:
        entry = {
            "doc_id": d.doc_id,
            "parent_id": d.parent_id,
            "doc_type": d.doc_type.label,
            "text": d.text,
        }
        if d.rating is not None:
            entry["rating"] = d.rating
            entry["confidence"] = d.confidence
        docs.append(entry)
    return {
        "paper_id": sample.paper_id,
        "venue": sample.venue,
        "acceptance": sample.acceptance,
        "meta_review": sample.meta_review,
        "documents": docs,
    }


def iter_jsonl(path) -> Iterator[Sample]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
            yield parse_sample(record)


def load_jsonl(path) -> list[Sample]:
    return list(iter_jsonl(path))


def save_jsonl(samples: Iterable[Sample], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(serialize_sample(s), ensure_ascii=False) + "\n")


def depths(sample: Sample) -> list[int]:
    """Depth of every document; roots are depth 1."""
    out = [0] * sample.n_docs
    for i in range(sample.n_docs):
        d, cur = 1, sample.parent_index[i]
        while cur >= 0:
            d += 1
            cur = sample.parent_index[cur]
        out[i] = d
    return out


def thread_root(sample: Sample, doc_id: str) -> str:
    if doc_id not in sample.index:
        raise UnknownDocument(doc_id)
    i = sample.index[doc_id]
    while sample.parent_index[i] >= 0:
        i = sample.parent_index[i]
    return sample.documents[i].doc_id


def thread_root_index(sample: Sample, i: int) -> int:
    while sample.parent_index[i] >= 0:
        i = sample.parent_index[i]
    return i


def tree_stats(sample: Sample) -> TreeStats:
    depth = depths(sample)
    per_level = Counter(depth)
    threads = Counter(sample.documents[r].doc_type.label for r in sample.roots)
    return TreeStats(
        height=max(depth),
        width=max(per_level.values()),
        n_docs=sample.n_docs,
        threads_by_type=dict(threads),
    )
