import numpy as np
import pytest

from metareview.conversation import ACCEPT, REJECT, Document, DocType, Sample

REPLY_TYPES = (DocType.AUTHOR_RESPONSE, DocType.OFFICIAL_RESPONSE, DocType.PUBLIC_RESPONSE)
ROOT_TYPES = (DocType.OFFICIAL_REVIEW, DocType.PUBLIC_REVIEW, DocType.AUTHOR_COMMENT)


def make_t0() -> Sample:
    """abstract(0), review(1) <- response(2) <- response(3), review(4)."""
    docs = (
        Document("d0", None, DocType.PAPER_ABSTRACT, "we study graphs ."),
        Document("d1", None, DocType.OFFICIAL_REVIEW, "the method is weak .", rating=4, confidence=3),
        Document("d2", "d1", DocType.AUTHOR_RESPONSE, "we disagree strongly ."),
        Document("d3", "d2", DocType.OFFICIAL_RESPONSE, "fair point ."),
        Document("d4", None, DocType.OFFICIAL_REVIEW, "a solid paper .", rating=8, confidence=4),
    )
    return Sample("t0", docs, "mixed reviews . we reject .", REJECT)


def random_forest(rng: np.random.Generator, n_docs: int, word_pool=("a", "b", "c", "d", "e"),
                  max_words: int = 5, acceptance: str | None = None, shuffle: bool = True) -> Sample:
    """Random forest: each document points at an earlier-created one or is a root.

    With ``shuffle`` the storage order is permuted so children may precede parents.
    """
    docs = []
    for i in range(n_docs):
        parent = None
        if i > 0 and rng.random() < 0.6:
            parent = f"x{int(rng.integers(i))}"
        n_words = int(rng.integers(1, max_words + 1))
        text = " ".join(word_pool[int(k)] for k in rng.integers(len(word_pool), size=n_words))
        if parent is None:
            kind = ROOT_TYPES[int(rng.integers(len(ROOT_TYPES)))]
        else:
            kind = REPLY_TYPES[int(rng.integers(len(REPLY_TYPES)))]
        meta = {}
        if kind == DocType.OFFICIAL_REVIEW:
            meta = {"rating": int(rng.integers(1, 11)), "confidence": int(rng.integers(1, 6))}
        docs.append(Document(f"x{i}", parent, kind, text, **meta))
    if shuffle:
        docs = [docs[k] for k in rng.permutation(n_docs)]
    acc = acceptance or (ACCEPT if rng.random() < 0.5 else REJECT)
    return Sample(f"s{int(rng.integers(1 << 30))}", tuple(docs), "a b c .", acc)


@pytest.fixture
def t0() -> Sample:
    return make_t0()


def random_attention_instance(rng: np.random.Generator, max_docs: int = 6, max_tokens: int = 48,
                              n_heads: int = 2, d_k: int = 4):
    """Random forest, token layout, per-head Q/K/V and beta for attention equivalence checks."""
    from metareview.relations import build_all_relations, stack_relations

    n_docs = int(rng.integers(1, max_docs + 1))
    sample = random_forest(rng, n_docs)
    lengths = rng.integers(1, max(2, max_tokens // n_docs) + 1, size=n_docs)
    while lengths.sum() > max_tokens:
        lengths[int(np.argmax(lengths))] -= 1
    owner = np.repeat(np.arange(n_docs), lengths)
    n = len(owner)
    rel = stack_relations(build_all_relations(sample))
    Q, K, V = (rng.normal(size=(n_heads, n, d_k)) for _ in range(3))
    beta = rng.uniform(-0.5, 1.5, size=(n_heads, 7))
    return sample, owner, rel, Q, K, V, beta


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
