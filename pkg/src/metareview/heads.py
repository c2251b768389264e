"""Auxiliary prediction heads and the weighted multi-task objective.

Encoder heads read the final-layer embeddings at ``<doc-sep>`` positions:
confidence and rating regressors (one per official review, sigmoid output) and
a 7-way document-type classifier. The decoder head mean-pools the final decoder
states and predicts accept/reject. Every head is a one-hidden-layer ReLU MLP of
width ``d_model``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

import numpy as np

from . import autograd as ag
from .assembly import PAD_ID
from .autograd import Tensor
from .conversation import DocType, Sample
from .errors import (
    EmptyDecoderOutput,
    LengthMismatch,
    NonFiniteLoss,
    OutOfRange,
    PositionOutOfBounds,
    ShapeMismatch,
)

PROB_FLOOR = 1e-9
REJECT_CLASS, ACCEPT_CLASS = 0, 1


@dataclass(frozen=True)
class LossWeights:
    alpha_g: float = 2.0
    alpha_c: float = 2.0
    alpha_r: float = 1.0
    alpha_o: float = 1.0
    alpha_a: float = 2.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be finite and non-negative, got {v}")

    @classmethod
    def generation_only(cls) -> "LossWeights":
        return cls(alpha_g=2.0, alpha_c=0.0, alpha_r=0.0, alpha_o=0.0, alpha_a=0.0)

    def as_tuple(self) -> tuple[float, ...]:
        return (self.alpha_g, self.alpha_c, self.alpha_r, self.alpha_o, self.alpha_a)


@dataclass(frozen=True)
class AuxTargets:
    confidence: np.ndarray  # (n_reviews,) in [0, 1]
    rating: np.ndarray  # (n_reviews,) in [0, 1]
    doc_types: np.ndarray  # (n_docs, 7) one-hot
    acceptance: np.ndarray  # (2,) one-hot


def normalize_metadata(rating: int, confidence: int) -> tuple[float, float]:
    if not 1 <= rating <= 10:
        raise OutOfRange(f"rating {rating} outside 1..10")
    if not 1 <= confidence <= 5:
        raise OutOfRange(f"confidence {confidence} outside 1..5")
    return (rating - 1) / 9.0, (confidence - 1) / 4.0


def aux_targets(sample: Sample) -> AuxTargets:
    reviews = sample.official_reviews()
    norm = [normalize_metadata(d.rating, d.confidence) for d in reviews]
    types = np.zeros((sample.n_docs, len(DocType)))
    types[np.arange(sample.n_docs), [int(d.doc_type) for d in sample.documents]] = 1.0
    acc = np.zeros(2)
    acc[ACCEPT_CLASS if sample.accepted else REJECT_CLASS] = 1.0
    return AuxTargets(
        confidence=np.array([c for _, c in norm], dtype=np.float64),
        rating=np.array([r for r, _ in norm], dtype=np.float64),
        doc_types=types,
        acceptance=acc,
    )


class MLPHead:
    """relu(x W1 + b1) W2 + b2 over parameter tensors named ``<prefix>w1`` etc."""

    def __init__(self, params: Mapping[str, Tensor], prefix: str):
        self.w1, self.b1 = params[prefix + "w1"], params[prefix + "b1"]
        self.w2, self.b2 = params[prefix + "w2"], params[prefix + "b2"]

    def __call__(self, x: Tensor) -> Tensor:
        return ag.relu(x @ self.w1 + self.b1) @ self.w2 + self.b2


def _rows(H: Tensor, positions: Sequence[int]) -> Tensor:
    positions = np.asarray(positions, dtype=np.int64)
    if positions.size and (positions.min() < 0 or positions.max() >= H.shape[0]):
        raise PositionOutOfBounds(f"positions {positions.tolist()} outside {H.shape[0]} rows")
    return H[positions]


def predict_confidence_rating(H_e: Tensor, positions: Sequence[int], conf_head: MLPHead,
                              rating_head: MLPHead) -> tuple[Tensor, Tensor]:
    """Sigmoid regressors on the delimiter embedding of each official review."""
    x = _rows(H_e, positions)
    n = len(positions)
    return ag.sigmoid(conf_head(x)).reshape(n), ag.sigmoid(rating_head(x)).reshape(n)


def _mse(pred, target) -> Tensor:
    pred = ag.as_tensor(pred)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise LengthMismatch(f"{pred.shape} predictions vs {target.shape} targets")
    if target.size == 0:
        return ag.as_tensor(0.0)
    diff = pred - target
    return (diff * diff).mean()


def confidence_rating_loss(c_hat, c, r_hat, r) -> tuple[Tensor, Tensor]:
    """Mean squared errors; zero official reviews contribute 0."""
    return _mse(c_hat, c), _mse(r_hat, r)


def predict_doc_types(H_e: Tensor, delimiter_indices: Sequence[int], head: MLPHead) -> Tensor:
    return ag.softmax(head(_rows(H_e, delimiter_indices)), axis=-1)


def _cross_entropy_probs(probs: Tensor, onehot: np.ndarray) -> Tensor:
    """Mean over rows of -sum(onehot * log p), probabilities clamped at 1e-9."""
    probs = ag.as_tensor(probs)
    onehot = np.asarray(onehot, dtype=np.float64)
    if probs.shape != onehot.shape:
        raise ShapeMismatch(f"{probs.shape} predictions vs {onehot.shape} targets")
    logp = ag.log(ag.clip_min(probs, PROB_FLOOR))
    per_row = -(logp * onehot).sum(axis=-1)
    return per_row.mean()


def doc_type_loss(O_hat, O) -> Tensor:
    return _cross_entropy_probs(O_hat, O)


def predict_acceptance(H_d: Tensor, head: MLPHead) -> Tensor:
    """Distribution ``[p(reject), p(accept)]`` from mean-pooled decoder states."""
    if H_d.shape[0] == 0:
        raise EmptyDecoderOutput("decoder produced no positions")
    pooled = H_d.mean(axis=0, keepdims=True)
    return ag.softmax(head(pooled), axis=-1).reshape(2)


def acceptance_loss(a_hat, a) -> Tensor:
    return _cross_entropy_probs(ag.as_tensor(a_hat).reshape(1, -1), np.asarray(a).reshape(1, -1))


def generation_loss(logits, target, smoothing: float = 0.1, pad_id: int = PAD_ID) -> Tensor:
    """Label-smoothed cross-entropy averaged over non-pad target positions.

    The smoothed target puts ``1 - smoothing`` on the gold token and spreads
    ``smoothing`` uniformly over the whole vocabulary.
    """
    logits = ag.as_tensor(logits)
    target = np.asarray(target, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] != target.shape[0]:
        raise ShapeMismatch(f"logits {logits.shape} vs target {target.shape}")
    keep = target != pad_id
    if not keep.any():
        raise ShapeMismatch("target has no non-pad positions")
    V = logits.shape[1]
    q = np.full(logits.shape, smoothing / V)
    q[np.arange(len(target)), target] += 1.0 - smoothing
    q[~keep] = 0.0
    logp = ag.log_softmax(logits, axis=-1)
    return -(logp * q).sum() * (1.0 / keep.sum())


LOSS_NAMES = ("L_g", "L_c", "L_r", "L_o", "L_a")


def combined_loss(L_g, L_c, L_r, L_o, L_a, weights: LossWeights = LossWeights()) -> Tensor:
    """Exact weighted sum of the five objectives."""
    parts = [ag.as_tensor(x) for x in (L_g, L_c, L_r, L_o, L_a)]
    values = {name: float(p.data) for name, p in zip(LOSS_NAMES, parts)}
    bad = {k: v for k, v in values.items() if not math.isfinite(v)}
    if bad:
        raise NonFiniteLoss(f"non-finite loss components {bad}", diagnostics=values)
    total = parts[0] * weights.alpha_g
    for alpha, part in zip(weights.as_tuple()[1:], parts[1:]):
        total = total + part * alpha
    return total
