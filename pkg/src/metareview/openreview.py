"""Convert OpenReview-style note dumps (local JSON) into samples.

A dump is either a list of notes or an object with a ``notes`` list. Each note
looks like the OpenReview v1 API payload::

    {"id": "r1", "forum": "p1", "replyto": "p1",
     "invitation": "ICLR.cc/2018/Conference/-/Paper7/Official_Review",
     "signatures": ["ICLR.cc/2018/Conference/Paper7/AnonReviewer2"],
     "content": {"review": "...", "rating": "7: Good paper", "confidence": "4: ..."}}

The forum note (``id == forum``) carries the abstract. Exactly one decision-like
note (``Decision`` or ``Meta_Review`` invitation) must exist per forum.
"""

from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field

from .conversation import ACCEPT, REJECT, Document, DocType, Sample
from .errors import AmbiguousDecision, MetaReviewError, NoDecisionNote

log = logging.getLogger(__name__)

_TEXT_KEYS = ("review", "main_review", "summary", "summary_of_the_paper", "strengths",
              "weaknesses", "strengths_and_weaknesses", "questions", "comment")
_DECISION_KINDS = ("Decision", "Meta_Review")
_LEADING_INT = re.compile(r"^\s*(\d+)")


@dataclass
class ConversionResult:
    samples: list[Sample] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    skipped_notes: Counter = field(default_factory=Counter)


def _kind(note: dict) -> str:
    inv = note.get("invitation") or ""
    if not inv and note.get("invitations"):
        inv = note["invitations"][0]
    return inv.rsplit("/", 1)[-1]


def _venue(note: dict) -> str:
    inv = note.get("invitation") or ""
    return inv.split("/-/", 1)[0]


def _content(note: dict) -> dict:
    content = note.get("content") or {}
    # v2 API wraps every field as {"value": ...}
    return {k: (v.get("value") if isinstance(v, dict) and "value" in v else v) for k, v in content.items()}


def _is_author(note: dict) -> bool:
    return any("Authors" in s for s in note.get("signatures", []))


def _text(content: dict) -> str:
    parts = [str(content[k]).strip() for k in _TEXT_KEYS if content.get(k)]
    return "\n".join(p for p in parts if p)


def _score(value) -> int | None:
    if value is None:
        return None
    if isinstance(value, int):
        return value
    m = _LEADING_INT.match(str(value))
    return int(m.group(1)) if m else None


def _acceptance(content: dict) -> str:
    label = str(content.get("decision") or content.get("recommendation") or "").lower()
    if "accept" in label:
        return ACCEPT
    if "reject" in label:
        return REJECT
    raise AmbiguousDecision(f"cannot read an accept/reject outcome from {label!r}")


def _doc_type(note: dict, top_level: bool) -> DocType | None:
    kind = _kind(note)
    if kind == "Official_Review":
        return DocType.OFFICIAL_REVIEW
    if kind in ("Public_Comment", "Public_Review"):
        return DocType.PUBLIC_REVIEW if top_level else DocType.PUBLIC_RESPONSE
    if kind in ("Official_Comment", "Comment", "Rebuttal"):
        if _is_author(note):
            return DocType.AUTHOR_COMMENT if top_level else DocType.AUTHOR_RESPONSE
        return DocType.OFFICIAL_RESPONSE
    return None


def convert_forum(notes: list[dict], skipped: Counter | None = None) -> Sample:
    """Turn all notes of one forum into a Sample.

    Raises NoDecisionNote / AmbiguousDecision when the meta-review cannot be
    identified unambiguously.
    """
    skipped = skipped if skipped is not None else Counter()
    forum_id = notes[0]["forum"]
    forum = next((n for n in notes if n["id"] == forum_id), None)
    decisions = [n for n in notes if _kind(n) in _DECISION_KINDS]
    if not decisions:
        raise NoDecisionNote(f"forum {forum_id} has no decision note")
    if len(decisions) > 1:
        raise AmbiguousDecision(f"forum {forum_id} has {len(decisions)} decision-like notes")
    decision = _content(decisions[0])
    meta_review = str(decision.get("metareview") or decision.get("comment") or "").strip()
    if not meta_review:
        raise NoDecisionNote(f"forum {forum_id} decision note has no meta-review text")
    acceptance = _acceptance(decision)

    by_id = {n["id"]: n for n in notes}
    mapped: dict[str, Document] = {}
    order: list[str] = []
    if forum is not None:
        abstract = str(_content(forum).get("abstract") or "").strip()
        if abstract:
            mapped[forum_id] = Document(forum_id, None, DocType.PAPER_ABSTRACT, abstract)
            order.append(forum_id)

    def top_level(note):
        return note.get("replyto") in (None, forum_id)

    def build(note) -> Document | None:
        dtype = _doc_type(note, top_level(note))
        if dtype is None:
            skipped[_kind(note) or "unknown"] += 1
            return None
        content = _content(note)
        text = _text(content)
        if not text:
            skipped["empty"] += 1
            return None
        rating = confidence = None
        if dtype == DocType.OFFICIAL_REVIEW:
            rating, confidence = _score(content.get("rating")), _score(content.get("confidence"))
            if rating is None or confidence is None:
                skipped["review_without_scores"] += 1
                return None
        parent = None if top_level(note) else note["replyto"]
        return Document(note["id"], parent, dtype, text, rating, confidence)

    # a reply is kept only if its whole ancestor chain is kept
    verdict: dict[str, Document | None] = {}

    def resolve(nid: str, visiting: frozenset = frozenset()) -> Document | None:
        if nid in verdict:
            return verdict[nid]
        note = by_id.get(nid)
        if note is None or nid in visiting or note is decisions[0]:
            return None
        doc = build(note)
        if doc is not None and doc.parent_id is not None:
            if resolve(doc.parent_id, visiting | {nid}) is None:
                skipped["orphan"] += 1
                doc = None
        verdict[nid] = doc
        return doc

    for note in notes:
        if note["id"] != forum_id and note is not decisions[0]:
            doc = resolve(note["id"])
            if doc is not None and note["id"] not in mapped:
                mapped[note["id"]] = doc
                order.append(note["id"])
    doc_order = {nid: i for i, nid in enumerate(n["id"] for n in notes)}
    docs = sorted((mapped[k] for k in order), key=lambda d: doc_order[d.doc_id])
    return Sample(
        paper_id=forum_id,
        documents=tuple(docs),
        meta_review=meta_review,
        acceptance=acceptance,
        venue=_venue(forum or notes[0]),
    )


def convert_openreview_dump(raw) -> ConversionResult:
    """Group notes by forum and convert each forum; failures are reported, not raised."""
    notes = raw["notes"] if isinstance(raw, dict) else raw
    forums: dict[str, list[dict]] = defaultdict(list)
    for note in notes:
        forums[note["forum"]].append(note)
    result = ConversionResult()
    for forum_id, group in forums.items():
        try:
            result.samples.append(convert_forum(group, result.skipped_notes))
        except MetaReviewError as exc:
            msg = f"dropped forum {forum_id}: {type(exc).__name__}: {exc}"
            log.warning(msg)
            result.warnings.append(msg)
    if result.skipped_notes:
        log.warning("skipped notes by kind: %s", dict(result.skipped_notes))
    return result
