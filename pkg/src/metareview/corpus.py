"""Corpus-level procedures: conflict labels, statistics, n-gram novelty, splits."""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass
from itertools import combinations
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .assembly import tokenize
from .conversation import Sample, tree_stats
from .errors import EmptyCorpus, EmptySummaryAfterPreprocessing

CONFLICT_THRESHOLD = 4

# NLTK English stop-word list (179 entries), frozen here so results do not
# drift with the installed NLTK version.
STOPWORDS_VERSION = "nltk-english-179"
STOPWORDS = frozenset("""
i me my myself we our ours ourselves you you're you've you'll you'd your yours yourself
yourselves he him his himself she she's her hers herself it it's its itself they them their
theirs themselves what which who whom this that that'll these those am is are was were be
been being have has had having do does did doing a an the and but if or because as until
while of at by for with about against between into through during before after above below
to from up down in out on off over under again further then once here there when where why
how all any both each few more most other some such no nor not only own same so than too
very s t can will just don don't should should've now d ll m o re ve y ain aren aren't
couldn couldn't didn didn't doesn doesn't hadn hadn't hasn hasn't haven haven't isn isn't
ma mightn mightn't mustn mustn't needn needn't shan shan't shouldn shouldn't wasn wasn't
weren weren't won won't wouldn wouldn't
""".split())

_SENT_END = re.compile(r"(?<=[.!?])(?:\s+|$)|\n+")
_WORD = re.compile(r"[a-z0-9]+(?:'[a-z]+)?")


def split_sentences(text: str) -> list[str]:
    """Split after ``.``, ``!`` or ``?`` followed by whitespace or end of text, and at newlines."""
    return [s.strip() for s in _SENT_END.split(text) if s and s.strip()]


@dataclass(frozen=True)
class ConflictLabel:
    is_cf: bool
    max_pair_diff: int
    n_official_reviews: int


def detect_conflict(sample: Sample) -> ConflictLabel:
    return conflict_from_ratings([d.rating for d in sample.official_reviews()])


def conflict_from_ratings(ratings: Sequence[int]) -> ConflictLabel:
    """A sample is conflicting when two official reviews differ in rating by at least 4."""
    ratings = list(ratings)
    diff = max(ratings) - min(ratings) if len(ratings) >= 2 else 0
    return ConflictLabel(len(ratings) >= 2 and diff >= CONFLICT_THRESHOLD, diff, len(ratings))


@dataclass(frozen=True)
class CorpusStats:
    n_samples: int
    docs_per_sample: float
    sentences_per_doc: float
    tokens_per_doc: float
    sentences_per_summary: float
    tokens_per_summary: float
    tree_height: float
    tree_width: float
    rating_variance: float
    cf_fraction: float

    def to_dict(self) -> dict:
        return asdict(self)


def corpus_stats(corpus: Sequence[Sample]) -> CorpusStats:
    """Corpus means. Per-document means pool all documents of the corpus.

    Rating variance is the population variance of official-review ratings per
    sample, averaged over samples that have at least one official review.
    """
    if not corpus:
        raise EmptyCorpus("corpus_stats needs at least one sample")
    docs = [d for s in corpus for d in s.documents]
    trees = [tree_stats(s) for s in corpus]
    variances = [float(np.var([d.rating for d in s.official_reviews()]))
                 for s in corpus if s.official_reviews()]
    return CorpusStats(
        n_samples=len(corpus),
        docs_per_sample=float(np.mean([s.n_docs for s in corpus])),
        sentences_per_doc=float(np.mean([len(split_sentences(d.text)) for d in docs])),
        tokens_per_doc=float(np.mean([len(tokenize(d.text)) for d in docs])),
        sentences_per_summary=float(np.mean([len(split_sentences(s.meta_review)) for s in corpus])),
        tokens_per_summary=float(np.mean([len(tokenize(s.meta_review)) for s in corpus])),
        tree_height=float(np.mean([t.height for t in trees])),
        tree_width=float(np.mean([t.width for t in trees])),
        rating_variance=float(np.mean(variances)) if variances else 0.0,
        cf_fraction=float(np.mean([detect_conflict(s).is_cf for s in corpus])),
    )


def preprocess(text: str, normalizer: Optional[Callable[[str], str]] = None) -> list[str]:
    """Lowercase, keep word tokens, drop stop words, then apply ``normalizer`` (e.g. a lemmatiser)."""
    words = [w for w in _WORD.findall(text.lower()) if w not in STOPWORDS]
    if normalizer is not None:
        words = [normalizer(w) for w in words]
    return words


def ngrams(tokens: Sequence[str], n: int) -> set[tuple[str, ...]]:
    return {tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1)}


def novel_ngram_pct(summary: str, source_docs: Iterable[str], n: int,
                    normalizer: Optional[Callable[[str], str]] = None) -> float:
    """Percentage of distinct summary n-grams that occur in no source document.

    Raises EmptySummaryAfterPreprocessing when the summary has no n-gram left.
    """
    if n not in (1, 2, 3):
        raise ValueError("n must be 1, 2 or 3")
    summary_grams = ngrams(preprocess(summary, normalizer), n)
    if not summary_grams:
        raise EmptySummaryAfterPreprocessing(f"summary has no {n}-grams after preprocessing")
    source = set()
    for doc in source_docs:
        source |= ngrams(preprocess(doc, normalizer), n)
    return 100.0 * len(summary_grams - source) / len(summary_grams)


def corpus_novelty(corpus: Sequence[Sample], normalizer=None) -> dict[int, float]:
    """Mean novel n-gram percentage per n; samples with an undefined value are skipped."""
    out = {}
    for n in (1, 2, 3):
        vals = []
        for s in corpus:
            try:
                vals.append(novel_ngram_pct(s.meta_review, [d.text for d in s.documents], n, normalizer))
            except EmptySummaryAfterPreprocessing:
                continue
        out[n] = float(np.mean(vals)) if vals else float("nan")
    return out


def split_dataset(corpus: Sequence, ratios=(0.8, 0.1, 0.1), seed: int = 0):
    """Seeded shuffle into train/validation/test; floor sizes for val/test, remainder to train."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError("ratios must be three non-negative numbers summing to 1")
    n = len(corpus)
    order = np.random.default_rng(seed).permutation(n)
    n_val = int(np.floor(ratios[1] * n + 1e-9))
    n_test = int(np.floor(ratios[2] * n + 1e-9))
    n_train = n - n_val - n_test
    items = [corpus[i] for i in order]
    return items[:n_train], items[n_train:n_train + n_val], items[n_train + n_val:]
