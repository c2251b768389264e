import dataclasses
import hashlib

import numpy as np
import pytest

from metareview.assembly import build_vocab
from metareview.errors import DidNotConverge, NonFiniteLoss
from metareview.heads import LossWeights
from metareview.synthetic import probe_samples, smoke_corpus
from metareview.training import (
    PROBE_CONFIG, Adam, TrainConfig, Trainer, build_model, learning_rate_at, overfit_probe, prepare,
)
from metareview.autograd import Tensor

BASE = TrainConfig(seed=3, learning_rate=1e-2, warmup_steps=2, batch_size=2, max_steps=10, d_model=8,
                   n_heads=2, ffn_dim=16, dropout_rate=0.1, max_in=64, max_out=16, vocab_size=200)


@pytest.fixture(scope="module")
def data():
    corpus = smoke_corpus()[:4]
    vocab = build_vocab(corpus, BASE.vocab_size)
    return vocab, [prepare(s, vocab, BASE.max_in, BASE.max_out) for s in corpus]


def digest(model):
    h = hashlib.sha256()
    for k in sorted(model.params):
        h.update(k.encode())
        h.update(model.params[k].data.tobytes())
    return h.hexdigest()


def run(config, vocab, examples, steps=3, aux_heads=True):
    model = build_model(config, len(vocab), aux_heads=aux_heads)
    trainer = Trainer(model, config)
    hashes, losses = [], []
    for step in range(steps):
        rec = trainer.train_step(examples[(2 * step) % 4:(2 * step) % 4 + 2])
        hashes.append(digest(model))
        losses.append(rec.total)
    return model, hashes, losses


def test_zero_learning_rate_keeps_params_bitwise(data):
    vocab, examples = data
    config = dataclasses.replace(BASE, learning_rate=0.0)
    before = build_model(config, len(vocab)).state_dict()
    model, _, _ = run(config, vocab, examples)
    for k, v in before.items():
        assert np.array_equal(model.params[k].data, v)


def test_same_seed_same_trajectory(data):
    vocab, examples = data
    _, h1, l1 = run(BASE, vocab, examples)
    _, h2, l2 = run(BASE, vocab, examples)
    assert h1 == h2 and l1 == l2
    _, h3, _ = run(dataclasses.replace(BASE, seed=4), vocab, examples)
    assert h3[0] != h1[0]


def test_accumulation_matches_full_batch(data):
    vocab, examples = data
    full = dataclasses.replace(BASE, batch_size=4, grad_accumulation_steps=1)
    accum = dataclasses.replace(BASE, batch_size=4, grad_accumulation_steps=2)
    models = []
    for cfg in (full, accum):
        model = build_model(cfg, len(vocab))
        trainer = Trainer(model, cfg)
        for _ in range(2):
            trainer.train_step(examples)
        models.append(model)
    for k in models[0].params:
        assert np.max(np.abs(models[0].params[k].data - models[1].params[k].data)) <= 1e-6


def test_adam_single_step_on_quadratic():
    w = Tensor(np.array([0.0]), requires_grad=True)
    loss = (w - 3.0) * (w - 3.0)
    loss.sum().backward()
    g = float(w.grad[0])
    opt = Adam(["w"], 0.9, 0.999, 1e-8)
    opt.step({"w": w}, lr=0.1)
    m_hat = (0.1 * g) / (1 - 0.9)
    v_hat = (0.001 * g * g) / (1 - 0.999)
    assert float(w.data[0]) == pytest.approx(0.0 - 0.1 * m_hat / (np.sqrt(v_hat) + 1e-8), abs=1e-15)
    assert 0.0 < float(w.data[0]) < 3.0


def test_schedule():
    cfg = TrainConfig(learning_rate=1.0, warmup_steps=4, max_steps=12)
    rates = [learning_rate_at(s, cfg) for s in range(1, 13)]
    assert rates[:4] == pytest.approx([0.25, 0.5, 0.75, 1.0])
    assert rates[-1] == 0.0
    assert all(a >= b for a, b in zip(rates[3:], rates[4:]))
    const = dataclasses.replace(cfg, schedule="constant")
    assert learning_rate_at(100, const) == 1.0


def test_generation_only_ablation_bitwise(data):
    vocab, examples = data
    zeroed = dataclasses.replace(BASE, weights=LossWeights(2.0, 0.0, 0.0, 0.0, 0.0))
    full, _, _ = run(zeroed, vocab, examples, steps=4, aux_heads=True)
    gen, _, _ = run(zeroed, vocab, examples, steps=4, aux_heads=False)
    for k, t in gen.params.items():
        assert np.array_equal(full.params[k].data, t.data), k


def test_non_finite_loss_leaves_params(data):
    vocab, examples = data
    model = build_model(BASE, len(vocab))
    model.params["head.rating.b2"].data[:] = np.nan
    before = model.state_dict()
    trainer = Trainer(model, BASE)
    with pytest.raises(NonFiniteLoss) as err:
        trainer.train_step(examples[:2])
    assert err.value.diagnostics["paper_id"] == examples[0].paper_id
    for k, v in before.items():
        assert np.array_equal(model.params[k].data, v, equal_nan=True)


def test_config_round_trip(tmp_path):
    cfg = dataclasses.replace(BASE, weights=LossWeights(1.0, 0.5, 0.0, 0.0, 3.0))
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg
    assert TrainConfig.from_dict(cfg.to_dict()).digest() == cfg.digest()
    with pytest.raises(ValueError):
        TrainConfig(batch_size=3, grad_accumulation_steps=2)


def test_probe_single_sample():
    report = overfit_probe(probe_samples(1))
    assert report.converged and report.exact_matches == 1


def test_probe_zero_lr_does_not_converge():
    cfg = dataclasses.replace(PROBE_CONFIG, learning_rate=0.0, max_steps=5)
    with pytest.raises(DidNotConverge) as err:
        overfit_probe(probe_samples(2), cfg)
    assert err.value.report.final_L_g == pytest.approx(err.value.report.initial_L_g)


def test_probe_loss_moving_average_mostly_decreasing():
    cfg = dataclasses.replace(PROBE_CONFIG, max_steps=150)
    report = overfit_probe(probe_samples(10), cfg, stop_ratio=0.0)
    lg = np.array([r.L_g for r in report.history])
    ma = np.convolve(lg, np.ones(20) / 20, mode="valid")
    after = ma[cfg.warmup_steps:]
    rises = after[1:] / after[:-1] - 1.0
    assert rises.max() <= 0.05
    assert after[-1] < after[0]
