"""Desk-scale training: sample preparation, loss assembly, Adam, schedule, probe."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .assembly import AssembledInput, Vocab, assemble_input, build_decoder_target, build_vocab
from .autograd import Tensor, as_tensor
from .beam import beam_generate
from .conversation import Sample
from .errors import DidNotConverge, NonFiniteLoss
from .heads import (
    LOSS_NAMES,
    AuxTargets,
    LossWeights,
    MLPHead,
    acceptance_loss,
    aux_targets,
    combined_loss,
    confidence_rating_loss,
    doc_type_loss,
    generation_loss,
    predict_acceptance,
    predict_confidence_rating,
    predict_doc_types,
)
from .model import Model, ModelConfig
from .relations import build_all_relations, stack_relations

log = logging.getLogger(__name__)

_MODEL_KEYS = ("d_model", "n_heads", "n_enc_layers", "n_dec_layers", "ffn_dim", "dropout_rate")


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    learning_rate: float = 5e-5
    warmup_steps: int = 200
    schedule: str = "linear-decay"
    batch_size: int = 1
    grad_accumulation_steps: int = 1
    max_steps: int = 1000
    label_smoothing: float = 0.1
    weights: LossWeights = LossWeights()
    d_model: int = 32
    n_heads: int = 2
    n_enc_layers: int = 1
    n_dec_layers: int = 1
    ffn_dim: int = 64
    dropout_rate: float = 0.1
    max_in: int = 256
    max_out: int = 64
    vocab_size: int = 4000
    beam_size: int = 5
    length_penalty: float = 1.0
    adam_b1: float = 0.9
    adam_b2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1 or self.grad_accumulation_steps < 1:
            raise ValueError("batch_size and grad_accumulation_steps must be >= 1")
        if self.batch_size % self.grad_accumulation_steps:
            raise ValueError("batch_size must be a multiple of grad_accumulation_steps")
        if self.schedule not in ("constant", "linear-decay"):
            raise ValueError(f"unknown schedule {self.schedule!r}")

    @property
    def micro_batch_size(self) -> int:
        return self.batch_size // self.grad_accumulation_steps

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(vocab_size=vocab_size, max_in=self.max_in, max_out=self.max_out,
                           **{k: getattr(self, k) for k in _MODEL_KEYS})

    def to_dict(self) -> dict:
        out = dataclasses.asdict(self)
        w = out.pop("weights")
        out.update(w)
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> "TrainConfig":
        raw = dict(raw)
        names = {f.name for f in dataclasses.fields(LossWeights)}
        weights = {k: float(raw.pop(k)) for k in list(raw) if k in names}
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(raw) - known
        if unknown:
            log.warning("ignoring unknown config keys %s", sorted(unknown))
        kwargs = {k: v for k, v in raw.items() if k in known and k != "weights"}
        return cls(weights=LossWeights(**weights), **kwargs)

    @classmethod
    def from_file(cls, path) -> "TrainConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Example:
    """A sample turned into model-ready arrays."""

    paper_id: str
    inp: AssembledInput
    relations: np.ndarray  # (7, n_docs, n_docs)
    target: np.ndarray  # <bos> ... <eos>
    aux: AuxTargets


def prepare(sample: Sample, vocab: Vocab, max_in: int, max_out: int) -> Example:
    return Example(
        paper_id=sample.paper_id,
        inp=assemble_input(sample, vocab, max_in),
        relations=stack_relations(build_all_relations(sample)),
        target=build_decoder_target(sample.meta_review, vocab, max_out),
        aux=aux_targets(sample),
    )


def forward_losses(model: Model, ex: Example, smoothing: float, training: bool = False,
                   rng: Optional[np.random.Generator] = None, path: str = "block") -> dict[str, Tensor]:
    """All five objectives for one example. A model built without auxiliary heads reports 0 for them."""
    enc = model.encode(ex.inp, ex.relations, training=training, rng=rng, path=path)
    dec = model.decode(ex.target[:-1], enc, training=training, rng=rng)
    losses = {"L_g": generation_loss(dec.logits, ex.target[1:], smoothing)}
    if model.aux_heads:
        p = model.params
        c_hat, r_hat = predict_confidence_rating(enc.H_e, ex.inp.official_review_positions,
                                                 MLPHead(p, "head.confidence."), MLPHead(p, "head.rating."))
        losses["L_c"], losses["L_r"] = confidence_rating_loss(c_hat, ex.aux.confidence, r_hat, ex.aux.rating)
        O_hat = predict_doc_types(enc.H_e, ex.inp.delimiter_indices, MLPHead(p, "head.doc_type."))
        losses["L_o"] = doc_type_loss(O_hat, ex.aux.doc_types)
        a_hat = predict_acceptance(dec.H_d, MLPHead(p, "head.acceptance."))
        losses["L_a"] = acceptance_loss(a_hat, ex.aux.acceptance)
    else:
        for name in LOSS_NAMES[1:]:
            losses[name] = as_tensor(0.0)
    return losses


class Adam:
    """Adam with bias-corrected moments."""

    def __init__(self, names: Iterable[str], b1: float = 0.9, b2: float = 0.999, eps: float = 1e-8):
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.names = list(names)

    def step(self, params: dict[str, Tensor], lr: float) -> None:
        self.t += 1
        c1 = 1.0 - self.b1 ** self.t
        c2 = 1.0 - self.b2 ** self.t
        for name in self.names:
            p = params[name]
            g = p.grad if p.grad is not None else np.zeros_like(p.data)
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(p.data)
                self.v[name] = np.zeros_like(p.data)
            v = self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * (g * g)
            p.data -= lr * (m / c1) / (np.sqrt(v / c2) + self.eps)

    def state(self) -> dict:
        return {"t": self.t, "m": self.m, "v": self.v}


def learning_rate_at(step: int, config: TrainConfig) -> float:
    """Rate for the ``step``-th update (1-based): linear warmup, then constant or linear decay to 0."""
    base = config.learning_rate
    warm = config.warmup_steps
    if warm > 0 and step <= warm:
        return base * step / warm
    if config.schedule == "constant":
        return base
    span = max(1, config.max_steps - warm)
    return base * max(0.0, (config.max_steps - step) / span)


@dataclass
class LossBreakdown:
    L_g: float
    L_c: float
    L_r: float
    L_o: float
    L_a: float
    total: float
    lr: float = 0.0

    def as_row(self, step: int) -> list:
        return [step, self.L_g, self.L_c, self.L_r, self.L_o, self.L_a, self.total]


class Trainer:
    """Owns the model, optimizer state, dropout stream and step counter."""

    def __init__(self, model: Model, config: TrainConfig):
        self.model = model
        self.config = config
        self.optimizer = Adam(model.params, config.adam_b1, config.adam_b2, config.adam_eps)
        self.rng = np.random.default_rng([config.seed, 1])
        self.step_count = 0

    def train_step(self, batch: Sequence[Example]) -> LossBreakdown:
        return train_step(batch, self.model, self.optimizer, self.config, self.rng, self)


def train_step(batch: Sequence[Example], model: Model, optimizer: Adam, config: TrainConfig,
               rng: Optional[np.random.Generator] = None, trainer: Trainer | None = None) -> LossBreakdown:
    """One optimizer update over ``batch``.

    The batch is cut into ``grad_accumulation_steps`` micro-batches in order.
    Loss convention: mean over samples inside a micro-batch, then mean over
    micro-batches. Raises NonFiniteLoss before any parameter changes.
    """
    if not batch:
        raise ValueError("empty batch")
    k = config.grad_accumulation_steps
    size = math.ceil(len(batch) / k)
    micro = [batch[i:i + size] for i in range(0, len(batch), size)]
    model.zero_grad()
    sums = dict.fromkeys(LOSS_NAMES + ("total",), 0.0)
    for mb in micro:
        totals = []
        for ex in mb:
            losses = forward_losses(model, ex, config.label_smoothing, training=True, rng=rng)
            try:
                total = combined_loss(*(losses[n] for n in LOSS_NAMES), weights=config.weights)
            except NonFiniteLoss as exc:
                exc.diagnostics.update(paper_id=ex.paper_id, step=optimizer.t + 1)
                model.zero_grad()
                raise
            totals.append(total)
            for n in LOSS_NAMES:
                sums[n] += float(losses[n].data) / (len(mb) * len(micro))
            sums["total"] += float(total.data) / (len(mb) * len(micro))
        mb_loss = totals[0]
        for t in totals[1:]:
            mb_loss = mb_loss + t
        mb_loss = mb_loss * (1.0 / (len(mb) * len(micro)))
        if mb_loss.requires_grad:
            mb_loss.backward()
    lr = learning_rate_at(optimizer.t + 1, config)
    optimizer.step(model.params, lr)
    if trainer is not None:
        trainer.step_count += 1
    return LossBreakdown(**sums, lr=lr)


def evaluate_losses(model: Model, examples: Sequence[Example], smoothing: float) -> LossBreakdown:
    from .autograd import no_grad

    sums = dict.fromkeys(LOSS_NAMES, 0.0)
    with no_grad():
        for ex in examples:
            for n, v in forward_losses(model, ex, smoothing).items():
                sums[n] += float(v.data) / len(examples)
    return LossBreakdown(**sums, total=0.0)


def build_model(config: TrainConfig, vocab_size: int, aux_heads: bool = True) -> Model:
    return Model(config.model_config(vocab_size), seed=config.seed, aux_heads=aux_heads)


@dataclass
class ProbeReport:
    converged: bool
    initial_L_g: float
    final_L_g: float
    steps: int
    exact_matches: int
    n_samples: int
    history: list = field(default_factory=list)
    generations: list = field(default_factory=list)

    @property
    def match_rate(self) -> float:
        return self.exact_matches / self.n_samples


PROBE_CONFIG = TrainConfig(
    seed=0, learning_rate=3e-3, warmup_steps=20, schedule="constant", batch_size=10,
    max_steps=600, label_smoothing=0.0, d_model=32, n_heads=2, n_enc_layers=1,
    n_dec_layers=1, ffn_dim=64, dropout_rate=0.0, max_in=64, max_out=16, vocab_size=512,
    beam_size=1,
)


def overfit_probe(samples: Sequence[Sample], config: TrainConfig = PROBE_CONFIG,
                  vocab: Vocab | None = None, target_ratio: float = 0.1,
                  stop_ratio: float = 0.01, strict: bool = True) -> ProbeReport:
    """Memorisation sanity check.

    Trains on ``samples`` (full batch) until the generation loss falls below
    ``stop_ratio`` times its initial value or ``max_steps`` is reached, then
    decodes each sample and counts exact reproductions of the reference.
    ``converged`` means the final loss is below ``target_ratio`` times the
    initial one. With ``strict`` a non-converged run raises DidNotConverge
    (the report is attached as ``exc.report``).
    """
    vocab = vocab or build_vocab(samples, config.vocab_size)
    examples = [prepare(s, vocab, config.max_in, config.max_out) for s in samples]
    model = build_model(config, len(vocab))
    trainer = Trainer(model, config)
    initial = evaluate_losses(model, examples, config.label_smoothing).L_g
    history = []
    step = 0
    batch = config.batch_size
    while step < config.max_steps:
        for start in range(0, len(examples), batch):
            rec = trainer.train_step(examples[start:start + batch])
            step += 1
            history.append(rec)
            if step >= config.max_steps:
                break
        if evaluate_losses(model, examples, config.label_smoothing).L_g < stop_ratio * initial:
            break
    final = evaluate_losses(model, examples, config.label_smoothing).L_g
    converged = final < target_ratio * initial
    if not converged:
        log.warning("overfit probe did not converge: L_g %.4f -> %.4f after %d steps", initial, final, step)
    generations = []
    matches = 0
    for ex in examples:
        out = beam_generate(ex.inp, ex.relations, model, config.beam_size, config.length_penalty, config.max_out)
        generations.append(out)
        matches += int(list(out) == list(ex.target))
    report = ProbeReport(converged, initial, final, step, matches, len(examples), history, generations)
    if strict and not converged:
        exc = DidNotConverge(f"L_g {initial:.4f} -> {final:.4f} after {step} steps (target ratio {target_ratio})")
        exc.report = report
        raise exc
    return report
