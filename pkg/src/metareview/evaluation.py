"""Reference overlap (summary-level LCS F1) and acceptance-consistency (ACC) evaluation."""

from __future__ import annotations

import csv
import json
import re
from collections import Counter
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .conversation import ACCEPT, REJECT, Sample
from .corpus import detect_conflict, split_sentences
from .errors import EmptyCorpus, EmptyText, LengthMismatch, SingleClassCorpus

_ALNUM = re.compile(r"[a-z0-9]+")

# columns kept for scores computed by external tools and merged later
EXTERNAL_COLUMNS = ("bertscore_f1", "unieval_consistency", "unieval_relevance")


def _tokens(text: str) -> list[str]:
    return _ALNUM.findall(text.lower())


@dataclass(frozen=True)
class OverlapScore:
    precision: float
    recall: float
    f1: float


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def lcs_table(a: Sequence[str], b: Sequence[str]) -> np.ndarray:
    t = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            t[i, j] = t[i - 1, j - 1] + 1 if a[i - 1] == b[j - 1] else max(t[i - 1, j], t[i, j - 1])
    return t


def lcs_indices(a: Sequence[str], b: Sequence[str]) -> set[int]:
    """Positions in ``a`` of one longest common subsequence with ``b``."""
    t = lcs_table(a, b)
    i, j, out = len(a), len(b), set()
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1]:
            out.add(i - 1)
            i -= 1
            j -= 1
        elif t[i - 1, j] >= t[i, j - 1]:
            i -= 1
        else:
            j -= 1
    return out


def _sentences(text: str) -> list[list[str]]:
    sents = [_tokens(s) for s in split_sentences(text)]
    return [s for s in sents if s]


def summary_lcs_hits(reference: str, hypothesis: str) -> tuple[int, int, int]:
    """(hits, |ref tokens|, |hyp tokens|) for the union-LCS over sentence pairs.

    For each reference sentence the LCS positions against every hypothesis
    sentence are unioned; a token is credited only while unused copies remain
    in both texts.
    """
    ref, hyp = _sentences(reference), _sentences(hypothesis)
    ref_counts = Counter(t for s in ref for t in s)
    hyp_counts = Counter(t for s in hyp for t in s)
    hits = 0
    for r in ref:
        union: set[int] = set()
        for h in hyp:
            union |= lcs_indices(r, h)
        for idx in sorted(union):
            tok = r[idx]
            if ref_counts[tok] > 0 and hyp_counts[tok] > 0:
                hits += 1
                ref_counts[tok] -= 1
                hyp_counts[tok] -= 1
    return hits, sum(len(s) for s in ref), sum(len(s) for s in hyp)


def lcs_f1_sum(reference: str, hypothesis: str) -> OverlapScore:
    """Summary-level LCS precision/recall/F1 as percentages."""
    if not _tokens(reference) or not _tokens(hypothesis):
        raise EmptyText("both reference and hypothesis need at least one alphanumeric token")
    hits, n_ref, n_hyp = summary_lcs_hits(reference, hypothesis)
    p, r = hits / n_hyp, hits / n_ref
    return OverlapScore(100.0 * p, 100.0 * r, 100.0 * _f1(p, r))


# -- acceptance classifier -----------------------------------------------------------


def ngram_features(text: str) -> set[str]:
    toks = _tokens(text)
    return set(toks) | {f"{a} {b}" for a, b in zip(toks, toks[1:])}


@dataclass
class AccClassifier:
    """Logistic regression over binary unigram+bigram presence features."""

    features: list[str]
    weights: np.ndarray
    bias: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self._index = {f: i for i, f in enumerate(self.features)}

    def featurize(self, texts: Sequence[str]) -> np.ndarray:
        X = np.zeros((len(texts), len(self.features)))
        for row, text in enumerate(texts):
            cols = [self._index[f] for f in ngram_features(text) if f in self._index]
            X[row, cols] = 1.0
        return X

    def predict_proba(self, texts: Sequence[str]) -> np.ndarray:
        z = self.featurize(texts) @ self.weights + self.bias
        return 0.5 * (1.0 + np.tanh(0.5 * z))

    def predict(self, texts: Sequence[str]) -> list[str]:
        return [ACCEPT if p >= 0.5 else REJECT for p in self.predict_proba(texts)]

    def to_dict(self) -> dict:
        return {"features": self.features, "weights": self.weights.tolist(), "bias": self.bias,
                "metadata": self.metadata}

    @classmethod
    def from_dict(cls, raw: dict) -> "AccClassifier":
        return cls(raw["features"], np.asarray(raw["weights"]), float(raw["bias"]), raw.get("metadata", {}))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict()), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "AccClassifier":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def train_acc_classifier(texts: Sequence[str], labels: Sequence[str], seed: int = 0,
                         max_features: int = 20000, l2: float = 1e-3, lr: float = 0.5,
                         max_iter: int = 500, tol: float = 1e-6) -> AccClassifier:
    """Fit the classifier on gold meta-reviews by full-batch gradient descent on the logistic loss."""
    if len(texts) != len(labels):
        raise LengthMismatch(f"{len(texts)} texts vs {len(labels)} labels")
    if len(set(labels)) < 2:
        raise SingleClassCorpus("training labels contain a single class")
    counts = Counter(f for t in texts for f in ngram_features(t))
    features = [f for f, _ in sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:max_features]]
    clf = AccClassifier(features, np.zeros(len(features)), 0.0)
    X = clf.featurize(texts)
    y = np.array([1.0 if lab == ACCEPT else 0.0 for lab in labels])
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, 0.01, size=X.shape[1])
    b = 0.0
    n = len(y)
    it = 0
    for it in range(1, max_iter + 1):
        p = 0.5 * (1.0 + np.tanh(0.5 * (X @ w + b)))
        err = p - y
        gw = X.T @ err / n + l2 * w
        gb = float(err.mean())
        w -= lr * gw
        b -= lr * gb
        if np.sqrt(gw @ gw + gb * gb) < tol:
            break
    clf.weights, clf.bias = w, b
    train_acc = float(np.mean((clf.predict_proba(texts) >= 0.5) == (y == 1.0)))
    clf.metadata = {"seed": seed, "iterations": it, "n_train": n, "l2": l2, "lr": lr,
                    "train_accuracy": train_acc}
    return clf


def acc_metric(classifier: AccClassifier, generated: Sequence[str], gold: Sequence[str]) -> float:
    """Fraction of generated meta-reviews whose predicted outcome equals the true one."""
    if len(generated) != len(gold):
        raise LengthMismatch(f"{len(generated)} generations vs {len(gold)} labels")
    if not generated:
        return float("nan")
    pred = classifier.predict(generated)
    return float(np.mean([p == g for p, g in zip(pred, gold)]))


# -- reports --------------------------------------------------------------------------


@dataclass
class EvalReport:
    partition: str
    per_sample: list[dict]
    precision: float
    recall: float
    f1: float
    acc: float

    @property
    def n(self) -> int:
        return len(self.per_sample)

    def aggregate_row(self) -> dict:
        row = {"partition": self.partition, "n": self.n, "precision": self.precision,
               "recall": self.recall, "f1": self.f1, "acc": self.acc}
        row.update(dict.fromkeys(EXTERNAL_COLUMNS, ""))
        return row


def _report(partition: str, rows: list[dict]) -> EvalReport:
    acc = float(np.mean([r["predicted"] == r["gold"] for r in rows])) if rows else float("nan")
    mean = lambda k: float(np.mean([r[k] for r in rows])) if rows else float("nan")  # noqa: E731
    return EvalReport(partition, rows, mean("precision"), mean("recall"), mean("f1"), acc)


def evaluate_generations(samples: Sequence[Sample], generations: Sequence[str], classifier: AccClassifier,
                         partition_by_conflict: bool = False) -> dict[str, EvalReport]:
    """Score generations against their samples; returns ``{"all": ...}`` plus CF / Non-CF when asked."""
    if not samples:
        raise EmptyCorpus("no samples to evaluate")
    if len(samples) != len(generations):
        raise LengthMismatch(f"{len(samples)} samples vs {len(generations)} generations")
    predicted = classifier.predict(list(generations))
    rows = []
    for s, gen, pred in zip(samples, generations, predicted):
        if _tokens(gen):
            score = lcs_f1_sum(s.meta_review, gen)
        else:
            score = OverlapScore(0.0, 0.0, 0.0)
        cf = detect_conflict(s)
        rows.append({"paper_id": s.paper_id, "partition": "CF" if cf.is_cf else "Non-CF",
                     "precision": score.precision, "recall": score.recall, "f1": score.f1,
                     "predicted": pred, "gold": s.acceptance, "generation": gen})
    reports = {"all": _report("all", rows)}
    if partition_by_conflict:
        for part in ("CF", "Non-CF"):
            reports[part] = _report(part, [r for r in rows if r["partition"] == part])
    return reports


def generate_texts(checkpoint, samples: Sequence[Sample], beam_size: int | None = None,
                   length_penalty: float | None = None) -> list[str]:
    from .beam import beam_generate
    from .training import prepare

    cfg = checkpoint.train_config
    beam_size = beam_size or (cfg.beam_size if cfg else 5)
    length_penalty = length_penalty if length_penalty is not None else (cfg.length_penalty if cfg else 1.0)
    mc = checkpoint.model.config
    out = []
    for s in samples:
        ex = prepare(s, checkpoint.vocab, mc.max_in, mc.max_out)
        ids = beam_generate(ex.inp, ex.relations, checkpoint.model, beam_size, length_penalty, mc.max_out)
        out.append(checkpoint.vocab.decode(ids))
    return out


def evaluate_run(checkpoint, samples: Sequence[Sample], classifier: AccClassifier,
                 partition_by_conflict: bool = False,
                 generate_fn: Optional[Callable[[Sequence[Sample]], list[str]]] = None) -> dict[str, EvalReport]:
    """Generate for every test sample (checkpoint path/object, or ``generate_fn``) and score."""
    if not samples:
        raise EmptyCorpus("test data is empty")
    if generate_fn is None:
        from .checkpoint import load_checkpoint

        ckpt = load_checkpoint(checkpoint) if isinstance(checkpoint, (str, Path)) else checkpoint
        generations = generate_texts(ckpt, samples)
    else:
        generations = generate_fn(samples)
    return evaluate_generations(samples, generations, classifier, partition_by_conflict)


def write_report(reports: dict[str, EvalReport], path, fmt: str = "csv") -> list[Path]:
    """Write aggregates to ``path`` and per-sample rows next to it; returns written paths."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    samples_path = path.with_name(path.stem + "_samples" + path.suffix)
    if fmt == "json":
        payload = {k: {**r.aggregate_row(), "per_sample": r.per_sample} for k, r in reports.items()}
        path.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        return [path]
    if fmt != "csv":
        raise ValueError(f"unknown report format {fmt!r}")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        rows = [r.aggregate_row() for r in reports.values()]
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    with open(samples_path, "w", newline="", encoding="utf-8") as fh:
        fields = ["paper_id", "partition", "precision", "recall", "f1", "predicted", "gold", "generation"]
        writer = csv.DictWriter(fh, fieldnames=fields + list(EXTERNAL_COLUMNS))
        writer.writeheader()
        for r in reports["all"].per_sample:
            writer.writerow({**r, **dict.fromkeys(EXTERNAL_COLUMNS, "")})
    return [path, samples_path]


def report_dict(report: EvalReport) -> dict:
    return asdict(report)
