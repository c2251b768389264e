"""Micro encoder-decoder transformer with relationship-aware sparse encoder attention.

Encoder layers: multi-head RSAttn -> add & norm -> feed-forward -> add & norm.
Decoder layers: causal self-attention, full cross-attention, feed-forward, each
followed by add & norm. Positions are learned absolute embeddings; the token
embedding table is shared by encoder and decoder.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .assembly import AssembledInput
from .attention import attention, block_sparse_attention, dense_rsattn
from .autograd import Tensor
from .errors import ShapeMismatch
from .relations import RelationMatrix

N_RELATIONS = 7
N_DOC_TYPES = 7
HEAD_NAMES = ("confidence", "rating", "doc_type", "acceptance")
_HEAD_OUT = {"confidence": 1, "rating": 1, "doc_type": N_DOC_TYPES, "acceptance": 2}


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 32
    n_heads: int = 2
    n_enc_layers: int = 1
    n_dec_layers: int = 1
    ffn_dim: int = 64
    max_in: int = 256
    max_out: int = 64
    dropout_rate: float = 0.1

    def __post_init__(self):
        for f in ("vocab_size", "d_model", "n_heads", "n_enc_layers", "n_dec_layers", "ffn_dim", "max_in", "max_out"):
            if getattr(self, f) < 1:
                raise ValueError(f"{f} must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must equal n_heads * d_k")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must lie in [0, 1)")

    @property
    def d_k(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _glorot(rng, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int = 0, aux_heads: bool = True) -> dict[str, np.ndarray]:
    """Fresh parameters. Core parameters are drawn before head parameters, so a
    build without auxiliary heads shares every core value with one that has them."""
    rng = np.random.default_rng(seed)
    d, f, V = config.d_model, config.ffn_dim, config.vocab_size
    p: dict[str, np.ndarray] = {}
    p["tok_emb"] = rng.normal(0.0, d ** -0.5, size=(V, d))
    p["enc_pos"] = rng.normal(0.0, d ** -0.5, size=(config.max_in, d))
    p["dec_pos"] = rng.normal(0.0, d ** -0.5, size=(config.max_out, d))

    def attn(prefix):
        for name in ("q", "k", "v", "o"):
            p[f"{prefix}w{name}"] = _glorot(rng, d, d)
            p[f"{prefix}b{name}"] = np.zeros(d)

    def ffn(prefix):
        p[f"{prefix}ff_w1"] = _glorot(rng, d, f)
        p[f"{prefix}ff_b1"] = np.zeros(f)
        p[f"{prefix}ff_w2"] = _glorot(rng, f, d)
        p[f"{prefix}ff_b2"] = np.zeros(d)

    def norm(prefix, k):
        p[f"{prefix}ln{k}_g"] = np.ones(d)
        p[f"{prefix}ln{k}_b"] = np.zeros(d)

    for layer in range(config.n_enc_layers):
        pre = f"enc.{layer}."
        attn(pre)
        p[pre + "beta"] = rng.uniform(0.1, 0.3, size=(config.n_heads, N_RELATIONS))
        norm(pre, 1)
        ffn(pre)
        norm(pre, 2)
    for layer in range(config.n_dec_layers):
        pre = f"dec.{layer}."
        attn(pre + "self_")
        norm(pre, 1)
        attn(pre + "cross_")
        norm(pre, 2)
        ffn(pre)
        norm(pre, 3)
    p["out_w"] = _glorot(rng, d, V)
    p["out_b"] = np.zeros(V)
    if aux_heads:
        for head in HEAD_NAMES:
            pre = f"head.{head}."
            p[pre + "w1"] = _glorot(rng, d, d)
            p[pre + "b1"] = np.zeros(d)
            p[pre + "w2"] = _glorot(rng, d, _HEAD_OUT[head])
            p[pre + "b2"] = np.zeros(_HEAD_OUT[head])
    return p


def param_group(name: str) -> str:
    """Coarse parameter group used by gradient checks and reports."""
    if name.startswith("head."):
        return "heads"
    if name in ("tok_emb", "enc_pos", "dec_pos"):
        return "embeddings"
    if name in ("out_w", "out_b"):
        return "output"
    leaf = name.rsplit(".", 1)[-1]
    if leaf == "beta":
        return "beta"
    if leaf.startswith("ln"):
        return "layer_norm"
    if leaf.startswith("ff_"):
        return "feed_forward"
    proj = leaf[-1]  # wq, self_bk, cross_wo, ...
    return {"q": "attn_query", "k": "attn_key", "v": "attn_value", "o": "attn_out"}[proj]


@dataclass
class EncoderOutput:
    H_e: Tensor


@dataclass
class DecoderOutput:
    H_d: Tensor
    logits: Tensor


class Model:
    def __init__(self, config: ModelConfig, params: dict[str, np.ndarray] | None = None,
                 seed: int = 0, aux_heads: bool = True, dtype=np.float64):
        self.config = config
        raw = params if params is not None else init_params(config, seed, aux_heads)
        self.params: dict[str, Tensor] = {
            k: Tensor(np.array(v, dtype=dtype), requires_grad=True, name=k) for k, v in raw.items()
        }
        self.aux_heads = any(k.startswith("head.") for k in self.params)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def astype(self, dtype) -> "Model":
        """Copy with every parameter cast, e.g. to ``np.longdouble`` for finite-difference oracles."""
        return Model(self.config, self.state_dict(), dtype=dtype)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: t.data.copy() for k, t in self.params.items()}

    def zero_grad(self):
        for t in self.params.values():
            t.grad = None

    # -- helpers --------------------------------------------------------------
    def _split(self, x: Tensor) -> Tensor:
        n = x.shape[0]
        return x.reshape(n, self.config.n_heads, self.config.d_k).transpose(1, 0, 2)

    def _merge(self, x: Tensor) -> Tensor:
        n = x.shape[1]
        return x.transpose(1, 0, 2).reshape(n, self.config.d_model)

    def _proj(self, x: Tensor, prefix: str, name: str) -> Tensor:
        return x @ self.params[f"{prefix}w{name}"] + self.params[f"{prefix}b{name}"]

    def _norm(self, x: Tensor, prefix: str, k: int) -> Tensor:
        return ag.layer_norm(x, self.params[f"{prefix}ln{k}_g"], self.params[f"{prefix}ln{k}_b"])

    def _ffn(self, x: Tensor, prefix: str) -> Tensor:
        p = self.params
        hidden = ag.relu(x @ p[prefix + "ff_w1"] + p[prefix + "ff_b1"])
        return hidden @ p[prefix + "ff_w2"] + p[prefix + "ff_b2"]

    # -- encoder --------------------------------------------------------------
    def encode(self, inp: AssembledInput, relations, training: bool = False,
               rng: Optional[np.random.Generator] = None, path: str = "block") -> EncoderOutput:
        """Run the encoder over an assembled input.

        ``relations`` is the ``(7, n_docs, n_docs)`` stack (or a list of
        RelationMatrix). ``path="dense"`` materialises token masks instead of
        going block by block; both give the same output.
        """
        cfg = self.config
        rel = _relation_stack(relations)
        n = inp.n_tokens
        if n > cfg.max_in:
            raise ShapeMismatch(f"input of {n} tokens exceeds max_in={cfg.max_in}")
        if rel.shape[1] != inp.n_docs:
            raise ShapeMismatch(f"{rel.shape[1]} relation rows for {inp.n_docs} documents")
        rate = cfg.dropout_rate
        x = ag.take_rows(self.params["tok_emb"], inp.token_ids) + self.params["enc_pos"][np.arange(n)]
        x = ag.dropout(x, rate, rng, training)
        token_masks = None
        if path == "dense":
            d = inp.doc_of_token
            token_masks = rel.astype(bool)[:, d][:, :, d]
        elif path != "block":
            raise ValueError(f"unknown attention path {path!r}")
        for layer in range(cfg.n_enc_layers):
            pre = f"enc.{layer}."
            q, k, v = (self._split(self._proj(x, pre, c)) for c in "qkv")
            beta = self.params[pre + "beta"]
            if path == "block":
                a = block_sparse_attention(q, k, v, inp.doc_of_token, rel, beta, cfg.d_k)
            else:
                a = dense_rsattn(q, k, v, token_masks, beta, cfg.d_k)
            a = self._merge(a) @ self.params[pre + "wo"] + self.params[pre + "bo"]
            x = self._norm(x + ag.dropout(a, rate, rng, training), pre, 1)
            x = self._norm(x + ag.dropout(self._ffn(x, pre), rate, rng, training), pre, 2)
        return EncoderOutput(x)

    # -- decoder --------------------------------------------------------------
    def decode(self, prefix, enc: EncoderOutput, training: bool = False,
               rng: Optional[np.random.Generator] = None) -> DecoderOutput:
        cfg = self.config
        prefix = np.asarray(prefix, dtype=np.int64)
        m = prefix.shape[0]
        if m < 1 or m > cfg.max_out:
            raise ShapeMismatch(f"decoder prefix length {m} outside 1..{cfg.max_out}")
        rate = cfg.dropout_rate
        memory = enc.H_e
        causal = np.tril(np.ones((m, m), dtype=bool))[None]
        y = ag.take_rows(self.params["tok_emb"], prefix) + self.params["dec_pos"][np.arange(m)]
        y = ag.dropout(y, rate, rng, training)
        for layer in range(cfg.n_dec_layers):
            pre = f"dec.{layer}."
            s, c = pre + "self_", pre + "cross_"
            q, k, v = (self._split(self._proj(y, s, n)) for n in "qkv")
            a = self._merge(attention(q, k, v, causal)) @ self.params[s + "wo"] + self.params[s + "bo"]
            y = self._norm(y + ag.dropout(a, rate, rng, training), pre, 1)
            q = self._split(self._proj(y, c, "q"))
            k, v = (self._split(self._proj(memory, c, n)) for n in "kv")
            a = self._merge(attention(q, k, v)) @ self.params[c + "wo"] + self.params[c + "bo"]
            y = self._norm(y + ag.dropout(a, rate, rng, training), pre, 2)
            y = self._norm(y + ag.dropout(self._ffn(y, pre), rate, rng, training), pre, 3)
        logits = y @ self.params["out_w"] + self.params["out_b"]
        return DecoderOutput(y, logits)


def _relation_stack(relations) -> np.ndarray:
    if isinstance(relations, np.ndarray):
        return relations.astype(np.float64)
    mats = list(relations)
    if mats and isinstance(mats[0], RelationMatrix):
        return np.stack([m.bits for m in mats]).astype(np.float64)
    return np.asarray(mats, dtype=np.float64)


def encoder_forward(inp: AssembledInput, token_masks, model: Model, path: str = "block") -> EncoderOutput:
    """Eval-mode encoder. ``token_masks`` may be TokenMasks, RelationMatrices or a relation stack."""
    if token_masks and hasattr(token_masks[0], "doc_bits"):
        rel = np.stack([m.doc_bits for m in token_masks]).astype(np.float64)
    else:
        rel = _relation_stack(token_masks)
    return model.encode(inp, rel, training=False, path=path)


def decoder_forward(target_prefix, enc: EncoderOutput, model: Model) -> DecoderOutput:
    return model.decode(target_prefix, enc, training=False)

