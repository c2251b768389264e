"""Deterministic synthetic peer-review corpora for tests, the overfit probe and the smoke run."""

from __future__ import annotations

import numpy as np

from .conversation import ACCEPT, REJECT, Document, DocType, Sample

TOPICS = ["graph", "vision", "speech", "robotics", "privacy", "physics", "music", "genomics",
          "chemistry", "traffic", "finance", "weather", "dialogue", "retrieval", "translation",
          "parsing", "planning", "control", "forecasting", "compression"]
METHODS = ["transformer", "kernel", "sampler", "autoencoder", "bandit", "tree", "flow", "ensemble",
           "solver", "embedding", "pruning", "distillation"]
POSITIVE = ["novel", "clear", "convincing", "thorough", "solid"]
NEGATIVE = ["unclear", "incremental", "weak", "limited", "flawed"]
ACCEPT_CUES = ["recommend acceptance", "clear accept", "should be accepted"]
REJECT_CUES = ["recommend rejection", "clear reject", "cannot be accepted"]


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def make_sample(rng: np.random.Generator, idx: int, n_reviews: int | None = None,
                replies: bool = True, venue: str = "Synth.cc/2024/Conference",
                ratings: list[int] | None = None) -> Sample:
    topic, method = TOPICS[idx % len(TOPICS)], METHODS[(idx * 7 + idx // len(TOPICS)) % len(METHODS)]
    n_reviews = n_reviews if n_reviews is not None else int(rng.integers(2, 5))
    if ratings is None:
        ratings = [int(rng.integers(1, 11)) for _ in range(n_reviews)]
    docs = [Document(f"p{idx}", None, DocType.PAPER_ABSTRACT,
                     f"we propose a {method} for {topic} and study it on {_pick(rng, TOPICS)} data .")]
    for k, rating in enumerate(ratings):
        word = _pick(rng, POSITIVE if rating >= 6 else NEGATIVE)
        rid = f"p{idx}r{k}"
        docs.append(Document(rid, None, DocType.OFFICIAL_REVIEW,
                             f"the {method} for {topic} is {word} . i rate it {rating} .",
                             rating=rating, confidence=int(rng.integers(1, 6))))
        if replies and rng.random() < 0.6:
            aid = f"{rid}a"
            docs.append(Document(aid, rid, DocType.AUTHOR_RESPONSE,
                                 f"we thank the reviewer and clarify the {method} ."))
            if rng.random() < 0.5:
                docs.append(Document(f"{aid}o", aid, DocType.OFFICIAL_RESPONSE,
                                     f"thanks , my concern about {topic} is addressed ."))
    if replies and rng.random() < 0.3:
        pid = f"p{idx}pub"
        docs.append(Document(pid, None, DocType.PUBLIC_REVIEW, f"interesting work on {topic} ."))
        if rng.random() < 0.5:
            docs.append(Document(f"{pid}x", pid, DocType.PUBLIC_RESPONSE, f"i agree about the {method} ."))
    if replies and rng.random() < 0.2:
        docs.append(Document(f"p{idx}ac", None, DocType.AUTHOR_COMMENT, "we updated the draft ."))
    accepted = float(np.mean(ratings)) >= 5.5
    cue = _pick(rng, ACCEPT_CUES if accepted else REJECT_CUES)
    verdict = _pick(rng, POSITIVE if accepted else NEGATIVE)
    meta = f"the {method} for {topic} is {verdict} . we {cue} ."
    return Sample(f"p{idx}", tuple(docs), meta, ACCEPT if accepted else REJECT, venue)


def make_corpus(n: int, seed: int = 0, **kwargs) -> list[Sample]:
    rng = np.random.default_rng(seed)
    return [make_sample(rng, i, **kwargs) for i in range(n)]


def probe_samples(n: int = 10, seed: int = 0) -> list[Sample]:
    """Short, mutually distinct samples for the memorisation probe (<= 64 input, <= 16 output tokens)."""
    rng = np.random.default_rng(seed)
    return [make_sample(rng, i, n_reviews=2, replies=False) for i in range(n)]


def separable_acc_corpus(n: int = 200, seed: int = 0) -> list[Sample]:
    """Meta-reviews whose accept/reject label is signalled by cue words."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        accepted = i % 2 == 0
        ratings = [int(rng.integers(6, 11)) for _ in range(3)] if accepted else [int(rng.integers(1, 5)) for _ in range(3)]
        out.append(make_sample(rng, i, ratings=ratings, replies=False))
    return out


def smoke_corpus(seed: int = 7) -> list[Sample]:
    """20 samples mixing conflicting (rating gap >= 4) and consistent review sets."""
    rng = np.random.default_rng(seed)
    out = []
    for i in range(20):
        if i % 3 == 0:
            ratings = [3, 8] + [int(rng.integers(3, 9)) for _ in range(int(rng.integers(0, 2)))]
        else:
            base = int(rng.integers(2, 8))
            ratings = [base + int(rng.integers(0, 3)) for _ in range(int(rng.integers(2, 4)))]
        out.append(make_sample(rng, i, ratings=ratings))
    return out


_INVITATION = {
    DocType.OFFICIAL_REVIEW: "Official_Review",
    DocType.PUBLIC_REVIEW: "Public_Comment",
    DocType.PUBLIC_RESPONSE: "Public_Comment",
    DocType.AUTHOR_COMMENT: "Official_Comment",
    DocType.AUTHOR_RESPONSE: "Official_Comment",
    DocType.OFFICIAL_RESPONSE: "Official_Comment",
}


def to_openreview_notes(samples, venue: str = "Synth.cc/2024/Conference") -> dict:
    """Render samples as an OpenReview-style dump (inverse of the converter)."""
    notes = []
    for n, s in enumerate(samples):
        forum = s.paper_id
        prefix = f"{s.venue or venue}/-/Paper{n}/"
        abstract = next((d for d in s.documents if d.doc_type == DocType.PAPER_ABSTRACT), None)
        notes.append({
            "id": forum, "forum": forum, "replyto": None,
            "invitation": f"{s.venue or venue}/-/Blind_Submission",
            "signatures": [f"{s.venue or venue}/Paper{n}/Authors"],
            "content": {"title": f"paper {forum}", "abstract": abstract.text if abstract else ""},
        })
        for d in s.documents:
            if d.doc_type == DocType.PAPER_ABSTRACT:
                continue
            author = d.doc_type in (DocType.AUTHOR_COMMENT, DocType.AUTHOR_RESPONSE)
            public = d.doc_type in (DocType.PUBLIC_REVIEW, DocType.PUBLIC_RESPONSE)
            sig = "Authors" if author else ("~Public_User1" if public else "AnonReviewer1")
            content = {"review" if d.doc_type == DocType.OFFICIAL_REVIEW else "comment": d.text}
            if d.doc_type == DocType.OFFICIAL_REVIEW:
                content["rating"] = f"{d.rating}: rating"
                content["confidence"] = f"{d.confidence}: confidence"
            notes.append({
                "id": d.doc_id, "forum": forum, "replyto": d.parent_id or forum,
                "invitation": prefix + _INVITATION[d.doc_type],
                "signatures": [f"{s.venue or venue}/Paper{n}/{sig}"],
                "content": content,
            })
        notes.append({
            "id": f"{forum}-decision", "forum": forum, "replyto": forum,
            "invitation": prefix + "Decision",
            "signatures": [f"{s.venue or venue}/Program_Chairs"],
            "content": {"decision": "Accept (Poster)" if s.accepted else "Reject", "comment": s.meta_review},
        })
    return {"notes": notes}
