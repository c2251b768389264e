import math

import numpy as np
import pytest

from conftest import make_t0
from metareview import autograd as ag
from metareview.autograd import Tensor
from metareview.errors import LengthMismatch, NonFiniteLoss, OutOfRange, PositionOutOfBounds
from metareview.heads import (
    ACCEPT_CLASS, LossWeights, MLPHead, acceptance_loss, aux_targets, combined_loss,
    confidence_rating_loss, doc_type_loss, generation_loss, normalize_metadata, predict_acceptance,
    predict_confidence_rating, predict_doc_types,
)


def head(d_in, d_out, rng=None, zero=False):
    rng = rng or np.random.default_rng(0)
    shapes = {"w1": (d_in, d_in), "b1": (d_in,), "w2": (d_in, d_out), "b2": (d_out,)}
    params = {f"h.{k}": Tensor(np.zeros(s) if zero else rng.normal(size=s)) for k, s in shapes.items()}
    return MLPHead(params, "h."), {k: v.data for k, v in params.items()}


def test_normalize_metadata():
    assert normalize_metadata(1, 3) == (0.0, 0.5)
    assert normalize_metadata(10, 1) == (1.0, 0.0)
    assert normalize_metadata(6, 5)[0] == pytest.approx(5 / 9)
    with pytest.raises(OutOfRange):
        normalize_metadata(0, 3)
    with pytest.raises(OutOfRange):
        normalize_metadata(5, 6)


def test_aux_targets_t0(t0):
    aux = aux_targets(t0)
    assert aux.rating.tolist() == pytest.approx([3 / 9, 7 / 9])
    assert aux.confidence.tolist() == [0.5, 0.75]
    assert aux.doc_types.argmax(1).tolist() == [int(d.doc_type) for d in t0.documents]
    assert aux.acceptance.argmax() != ACCEPT_CLASS


def test_zero_regressors_give_half():
    H = Tensor(np.random.default_rng(1).normal(size=(6, 4)))
    c, _ = head(4, 1, zero=True)
    r, _ = head(4, 1, zero=True)
    c_hat, r_hat = predict_confidence_rating(H, [0, 3], c, r)
    assert c_hat.data.tolist() == [0.5, 0.5] and r_hat.data.tolist() == [0.5, 0.5]


def test_no_reviews_zero_loss():
    H = Tensor(np.ones((3, 4)))
    c, _ = head(4, 1)
    c_hat, r_hat = predict_confidence_rating(H, [], c, c)
    assert c_hat.shape == (0,)
    Lc, Lr = confidence_rating_loss(c_hat, [], r_hat, [])
    assert float(Lc.data) == 0.0 and float(Lr.data) == 0.0


def test_regressor_hand_arithmetic():
    rng = np.random.default_rng(2)
    h = rng.normal(size=4)
    mlp, p = head(4, 1, rng)
    (c_hat, _) = predict_confidence_rating(Tensor(h[None]), [0], mlp, mlp)
    hidden = np.maximum(0.0, h @ p["h.w1"] + p["h.b1"])
    expected = 1 / (1 + math.exp(-(hidden @ p["h.w2"] + p["h.b2"])[0]))
    assert float(c_hat.data[0]) == pytest.approx(expected, abs=1e-12)


def test_position_bounds():
    mlp, _ = head(4, 1)
    with pytest.raises(PositionOutOfBounds):
        predict_confidence_rating(Tensor(np.ones((2, 4))), [2], mlp, mlp)


@pytest.mark.parametrize("c_hat,c,expected", [([0.3, 0.6], [0.3, 0.6], 0.0), ([0.5], [1.0], 0.25),
                                              ([0.2, 0.8], [0.0, 1.0], 0.04)])
def test_mse_cases(c_hat, c, expected):
    Lc, _ = confidence_rating_loss(Tensor(np.array(c_hat)), c, Tensor(np.array(c_hat)), c)
    assert float(Lc.data) == pytest.approx(expected)


def test_mse_length_mismatch():
    with pytest.raises(LengthMismatch):
        confidence_rating_loss(Tensor(np.ones(2)), [1.0], Tensor(np.ones(2)), [1.0, 1.0])


def test_doc_type_head():
    H = Tensor(np.random.default_rng(3).normal(size=(5, 4)))
    zero, _ = head(4, 7, zero=True)
    assert np.allclose(predict_doc_types(H, [0, 2], zero).data, 1 / 7)
    rnd, p = head(4, 7, np.random.default_rng(4))
    probs = predict_doc_types(H, [0, 2, 4], rnd).data
    assert np.allclose(probs.sum(1), 1.0)
    logits = np.maximum(0, H.data[[0, 2, 4]] @ p["h.w1"] + p["h.b1"]) @ p["h.w2"] + p["h.b2"]
    e = np.exp(logits - logits.max(1, keepdims=True))
    assert np.allclose(probs, e / e.sum(1, keepdims=True))


def test_doc_type_loss_cases():
    O = np.eye(7)[[1, 4]]
    assert float(doc_type_loss(Tensor(np.full((2, 7), 1 / 7)), O).data) == pytest.approx(math.log(7))
    assert float(doc_type_loss(Tensor(O.copy()), O).data) <= 1e-6
    half = np.full((2, 7), 0.5 / 6)
    half[0, 1] = half[1, 4] = 0.5
    assert float(doc_type_loss(Tensor(half), O).data) == pytest.approx(math.log(2))
    # a zero probability on the gold class is clamped, not infinite
    bad = np.eye(7)[[0, 0]]
    assert float(doc_type_loss(Tensor(bad), O).data) == pytest.approx(-math.log(1e-9))


def test_acceptance_head():
    zero, _ = head(4, 2, zero=True)
    H = Tensor(np.random.default_rng(5).normal(size=(3, 4)))
    a_hat = predict_acceptance(H, zero)
    assert a_hat.data.tolist() == [0.5, 0.5]
    assert float(acceptance_loss(a_hat, [0.0, 1.0]).data) == pytest.approx(math.log(2))
    rnd, p = head(4, 2, np.random.default_rng(6))
    row = np.random.default_rng(7).normal(size=4)
    same = predict_acceptance(Tensor(np.tile(row, (3, 1))), rnd).data
    assert np.allclose(same, predict_acceptance(Tensor(row[None]), rnd).data)
    pooled = H.data.mean(0)
    z = np.maximum(0, pooled @ p["h.w1"] + p["h.b1"]) @ p["h.w2"] + p["h.b2"]
    assert np.allclose(predict_acceptance(H, rnd).data, np.exp(z) / np.exp(z).sum())


def test_generation_loss_cases():
    target = np.array([0 + 1, 2, 1])
    onehot = np.eye(3)[target] * 50.0
    assert float(generation_loss(Tensor(onehot), target, smoothing=0.0, pad_id=-1).data) < 1e-9
    uniform = Tensor(np.zeros((3, 5)))
    for eps in (0.0, 0.1, 0.3):
        assert float(generation_loss(uniform, np.array([1, 2, 3]), eps).data) == pytest.approx(math.log(5))


def test_generation_loss_smoothed_by_hand():
    logits = np.array([[1.0, 2.0, 0.5]])
    logp = logits[0] - math.log(np.exp(logits[0]).sum())
    q = np.array([0.1 / 3, 0.9 + 0.1 / 3, 0.1 / 3])
    expected = -(q * logp).sum()
    got = float(generation_loss(Tensor(logits), np.array([1]), 0.1, pad_id=-1).data)
    assert got == pytest.approx(expected, abs=1e-12)


def test_generation_loss_ignores_pad():
    logits = np.random.default_rng(8).normal(size=(3, 6))
    full = generation_loss(Tensor(logits[:2]), np.array([3, 4]), 0.1)
    padded = generation_loss(Tensor(logits), np.array([3, 4, 0]), 0.1)
    assert float(full.data) == pytest.approx(float(padded.data))


def test_combined_loss():
    ones = [Tensor(np.array(1.0))] * 5
    assert float(combined_loss(*ones, weights=LossWeights(1, 0, 0, 0, 0)).data) == 1.0
    assert float(combined_loss(*ones).data) == 8.0
    assert float(combined_loss(*[Tensor(np.array(0.0))] * 5).data) == 0.0
    parts = [Tensor(np.array(v)) for v in (1.5, 0.2, 0.3, 0.4, 0.5)]
    assert float(combined_loss(*parts, weights=LossWeights(1, 0, 0, 0, 0)).data) == 1.5


def test_combined_loss_non_finite():
    parts = [Tensor(np.array(v)) for v in (1.0, float("nan"), 0.0, 0.0, 0.0)]
    with pytest.raises(NonFiniteLoss) as err:
        combined_loss(*parts)
    assert "L_c" in str(err.value) and math.isnan(err.value.diagnostics["L_c"])


def test_loss_weights_validation():
    with pytest.raises(ValueError):
        LossWeights(alpha_g=-1.0)


def test_head_losses_permutation_covariant():
    # permuting delimiter rows and targets together leaves L_c, L_r, L_o unchanged
    rng = np.random.default_rng(9)
    H = Tensor(rng.normal(size=(10, 4)))
    delims = [0, 2, 5, 7, 9]
    reviews = [2, 7]
    c_t, r_t = np.array([0.25, 1.0]), np.array([0.5, 0.1])
    O = np.eye(7)[[6, 0, 5, 3, 0]]
    conf, _ = head(4, 1, rng)
    rating, _ = head(4, 1, rng)
    dt, _ = head(4, 7, rng)

    def losses(perm_d, perm_r):
        c_hat, r_hat = predict_confidence_rating(H, [reviews[i] for i in perm_r], conf, rating)
        Lc, Lr = confidence_rating_loss(c_hat, c_t[perm_r], r_hat, r_t[perm_r])
        Lo = doc_type_loss(predict_doc_types(H, [delims[i] for i in perm_d], dt), O[perm_d])
        return np.array([float(Lc.data), float(Lr.data), float(Lo.data)])

    base = losses(list(range(5)), [0, 1])
    for _ in range(10):
        assert np.allclose(losses(list(rng.permutation(5)), list(rng.permutation(2))), base, atol=1e-9)


def test_head_outputs_in_codomain():
    rng = np.random.default_rng(10)
    for _ in range(20):
        H = Tensor(rng.normal(size=(6, 4)) * 5)
        c, _ = head(4, 1, rng)
        dt, _ = head(4, 7, rng)
        ac, _ = head(4, 2, rng)
        c_hat, _ = predict_confidence_rating(H, [1, 4], c, c)
        assert np.all((c_hat.data > 0) & (c_hat.data < 1))
        assert np.allclose(predict_doc_types(H, [0, 3], dt).data.sum(1), 1.0)
        assert predict_acceptance(H, ac).data.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("V", [64, 512, 4000])
def test_smoothed_loss_floor_exceeds_tenth_of_initial(V):
    # with smoothing 0.1 the best achievable loss is the entropy of the smoothed target,
    # which is above 0.1 * ln V (the loss of a uniform prediction)
    eps = 0.1
    q = np.full(V, eps / V)
    q[0] += 1 - eps
    floor = float(-(q * np.log(q)).sum())
    at_optimum = float(generation_loss(Tensor(np.log(q)[None]), np.array([0]), eps, pad_id=-1).data)
    assert at_optimum == pytest.approx(floor)
    assert floor > 0.1 * math.log(V)
