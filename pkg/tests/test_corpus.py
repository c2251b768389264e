import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from metareview.conversation import Document, DocType, Sample
from metareview.corpus import (
    STOPWORDS, conflict_from_ratings, corpus_stats, detect_conflict, novel_ngram_pct, preprocess,
    split_dataset, split_sentences,
)
from metareview.errors import EmptyCorpus, EmptySummaryAfterPreprocessing


def sample_with(ratings, texts=(), meta="ok .", pid="p"):
    docs = [Document(f"r{i}", None, DocType.OFFICIAL_REVIEW, f"review {i} .", rating=r, confidence=3)
            for i, r in enumerate(ratings)]
    docs += [Document(f"t{i}", None, DocType.PUBLIC_REVIEW, t) for i, t in enumerate(texts)]
    return Sample(pid, tuple(docs), meta, "accept")


@pytest.mark.parametrize("ratings,is_cf,diff", [([8, 3], True, 5), ([5, 5, 6], False, 1), ([1, 10, 5], True, 9),
                                                ([4, 7], False, 3), ([4, 8], True, 4), ([9], False, 0), ([], False, 0)])
def test_conflict_cases(ratings, is_cf, diff):
    lab = detect_conflict(sample_with(ratings, texts=["x"]))
    assert (lab.is_cf, lab.max_pair_diff, lab.n_official_reviews) == (is_cf, diff, len(ratings))


def test_conflict_matches_pairwise_oracle():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        ratings = rng.integers(1, 11, size=int(rng.integers(0, 7))).tolist()
        oracle = any(abs(a - b) >= 4 for a, b in itertools.combinations(ratings, 2))
        assert conflict_from_ratings(ratings).is_cf == oracle


def test_stopwords_list():
    assert len(STOPWORDS) == 179
    assert {"the", "and", "wouldn't", "ourselves"} <= STOPWORDS


def test_stats_tokens_per_doc():
    s = Sample("p", (Document("a", None, DocType.PUBLIC_REVIEW, "one two three"),
                     Document("b", None, DocType.PUBLIC_REVIEW, "one two three four five")), "m .", "accept")
    assert corpus_stats([s]).tokens_per_doc == 4.0


def test_stats_rating_variance():
    assert corpus_stats([sample_with([4, 8])]).rating_variance == 4.0


def test_stats_two_sample_hand_corpus():
    s1 = Sample("p1", (Document("a", None, DocType.PAPER_ABSTRACT, "we propose x. it works."),
                       Document("r", None, DocType.OFFICIAL_REVIEW, "good.", rating=8, confidence=4),
                       Document("c", "r", DocType.AUTHOR_RESPONSE, "thanks a lot!")), "accept it. fine.", "accept")
    s2 = Sample("p2", (Document("r1", None, DocType.OFFICIAL_REVIEW, "bad idea", rating=2, confidence=2),
                       Document("r2", None, DocType.OFFICIAL_REVIEW, "great idea", rating=7, confidence=5)),
                "reject.", "reject")
    st_ = corpus_stats([s1, s2]).to_dict()
    # docs: [we propose x . it works .]=7 tok/2 sent, [good .]=2/1, [thanks a lot !]=4/1, [bad idea]=2/1, [great idea]=2/1
    assert st_["n_samples"] == 2
    assert st_["docs_per_sample"] == 2.5
    assert st_["tokens_per_doc"] == pytest.approx(17 / 5)
    assert st_["sentences_per_doc"] == pytest.approx(6 / 5)
    assert st_["tokens_per_summary"] == pytest.approx((5 + 2) / 2)
    assert st_["sentences_per_summary"] == pytest.approx(1.5)
    assert st_["tree_height"] == 1.5 and st_["tree_width"] == 2.0
    assert st_["rating_variance"] == pytest.approx((0.0 + 6.25) / 2)
    assert st_["cf_fraction"] == 0.5


def test_stats_empty():
    with pytest.raises(EmptyCorpus):
        corpus_stats([])


def test_sentence_splitter():
    assert split_sentences("A b. C d! E?\nF") == ["A b.", "C d!", "E?", "F"]
    assert split_sentences("e.g. this") == ["e.g.", "this"]


def test_novelty_cases():
    assert novel_ngram_pct("the model is novel", ["the model is novel"], 1) == 0.0
    for n in (1, 2, 3):
        assert novel_ngram_pct("alpha beta gamma delta", ["the same as before"], n) == 100.0
    assert novel_ngram_pct("novel idea good", ["good idea"], 1) == pytest.approx(100 / 3)


def test_novelty_empty_after_preprocessing():
    with pytest.raises(EmptySummaryAfterPreprocessing):
        novel_ngram_pct("the and of", ["x"], 1)
    with pytest.raises(EmptySummaryAfterPreprocessing):
        novel_ngram_pct("single", ["x"], 2)


def test_normalizer_hook():
    assert preprocess("Models modeling", normalizer=lambda w: w[:5]) == ["model", "model"]


words = st.lists(st.sampled_from(["graph", "model", "novel", "weak", "clear", "data", "proof"]), min_size=1, max_size=8)


@settings(max_examples=200, deadline=None)
@given(words, words, words, st.integers(1, 3))
def test_novelty_monotone_in_sources(summary, source, extra, n):
    s = " ".join(summary)
    try:
        before = novel_ngram_pct(s, [" ".join(source)], n)
    except EmptySummaryAfterPreprocessing:
        return
    assert novel_ngram_pct(s, [" ".join(source), " ".join(extra)], n) <= before
    assert novel_ngram_pct(s, [" ".join(source + extra)], n) <= before


def test_split_sizes():
    assert [len(p) for p in split_dataset(list(range(10)), (0.8, 0.1, 0.1), seed=1)] == [8, 1, 1]
    assert [len(p) for p in split_dataset(list(range(15)), (0.8, 0.1, 0.1), seed=1)] == [13, 1, 1]
    a = split_dataset(list(range(30)), seed=5)
    assert a == split_dataset(list(range(30)), seed=5)
    assert sorted(a[0] + a[1] + a[2]) == list(range(30))
    with pytest.raises(ValueError):
        split_dataset([1, 2], (0.5, 0.5, 0.5))


def test_cf_fraction_is_mean_indicator():
    rng = np.random.default_rng(3)
    corpus = [sample_with(rng.integers(1, 11, size=int(rng.integers(1, 5))).tolist(), pid=f"p{i}")
              for i in range(40)]
    assert corpus_stats(corpus).cf_fraction == pytest.approx(np.mean([detect_conflict(s).is_cf for s in corpus]))
