"""Relationship-aware sparse attention.

Three routes compute the same head output

    softmax((Q K^T * sum_j beta_j R+_j) / sqrt(d_k)) V

where R+_j is relation ``j`` lifted to token pairs and pairs outside every
relation are excluded from the softmax (logit -inf):

* :func:`rsattn_head` -- plain numpy, one head, fully materialised token masks.
  Used as the reference.
* :func:`dense_rsattn` -- the same computation built from generic autograd ops.
* :func:`block_sparse_attention` -- fused op that only visits (query doc, key
  doc) blocks related by at least one relation, with an analytic backward.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autograd as ag
from .autograd import Tensor
from .errors import EmptyAttentionRow, ShapeMismatch


@dataclass
class WorkspaceCounter:
    """Counts attention-logit elements allocated by the block-sparse route."""

    last_call: int = 0
    peak_block: int = 0
    calls: int = 0

    def reset(self):
        self.last_call = self.peak_block = self.calls = 0


WORKSPACE = WorkspaceCounter()


def _as_token_mask_stack(token_masks) -> np.ndarray:
    mats = [m.dense() if hasattr(m, "dense") else np.asarray(m) for m in token_masks]
    return np.stack(mats).astype(bool)


def structural_mask(token_masks) -> np.ndarray:
    """Allowed token pairs: OR over all relations. Independent of beta."""
    return _as_token_mask_stack(token_masks).any(axis=0)


def rsattn_logits(Q, K, token_masks, beta, d_k) -> np.ndarray:
    masks = _as_token_mask_stack(token_masks)
    beta = np.asarray(beta, dtype=np.float64)
    if masks.shape[0] != beta.shape[0]:
        raise ShapeMismatch(f"{masks.shape[0]} masks but {beta.shape[0]} weights")
    weight = np.tensordot(beta, masks.astype(np.float64), axes=1)
    logits = (np.asarray(Q) @ np.asarray(K).T) * weight / np.sqrt(d_k)
    return np.where(masks.any(axis=0), logits, -np.inf)


def rsattn_head(Q, K, V, token_masks, beta, d_k) -> np.ndarray:
    """Reference single-head output with dense token masks."""
    Q, K, V = (np.asarray(x, dtype=np.float64) for x in (Q, K, V))
    if Q.shape != K.shape or Q.shape[0] != V.shape[0]:
        raise ShapeMismatch(f"Q{Q.shape} K{K.shape} V{V.shape}")
    logits = rsattn_logits(Q, K, token_masks, beta, d_k)
    if logits.shape != (Q.shape[0], K.shape[0]):
        raise ShapeMismatch(f"mask shape {logits.shape} vs {Q.shape[0]} tokens")
    if np.isneginf(logits).all(axis=1).any():
        raise EmptyAttentionRow("a query token has no allowed key")
    z = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(z)
    w /= w.sum(axis=1, keepdims=True)
    return w @ V


def dense_rsattn(Q: Tensor, K: Tensor, V: Tensor, token_masks: np.ndarray, beta: Tensor, d_k: int) -> Tensor:
    """All heads at once with a materialised ``(7, n, n)`` token-mask stack.

    Q, K, V: ``(h, n, d_k)``; beta: ``(h, 7)``.
    """
    masks = np.asarray(token_masks, dtype=np.float64)
    h = Q.shape[0]
    allowed = masks.any(axis=0)
    if not allowed.any(axis=1).all():
        raise EmptyAttentionRow("a query token has no allowed key")
    weight = (beta.reshape(h, masks.shape[0], 1, 1) * masks[None]).sum(axis=1)
    scores = (Q @ K.transpose(0, 2, 1)) * weight * (1.0 / np.sqrt(d_k))
    probs = ag.softmax(ag.masked_fill(scores, ~allowed[None], -np.inf), axis=-1)
    return probs @ V


def _doc_tokens(doc_of_token: np.ndarray, n_docs: int) -> list[np.ndarray]:
    return [np.flatnonzero(doc_of_token == p) for p in range(n_docs)]


def allowed_blocks(relations: np.ndarray) -> np.ndarray:
    """(n_docs, n_docs) bool: document pairs related under at least one relation."""
    return np.asarray(relations).astype(bool).any(axis=0)


def block_sparse_attention(Q, K, V, doc_of_token, relations, beta, d_k: int | None = None,
                           counter: WorkspaceCounter | None = WORKSPACE) -> Tensor:
    """Block-sparse RSAttn over document blocks.

    Q, K, V: ``(h, n, d_k)`` (or ``(n, d_k)`` for a single head) Tensors or arrays.
    relations: ``(7, n_docs, n_docs)`` document-level matrices.
    beta: ``(h, 7)`` (or ``(7,)``).

    Never builds an ``n x n`` mask; only logits for related document pairs are
    allocated, so the workspace scales with the number of allowed blocks.
    """
    Q, K, V, beta = (ag.as_tensor(x) for x in (Q, K, V, beta))
    single = Q.ndim == 2
    if single:
        Q, K, V = (x.reshape(1, *x.shape) for x in (Q, K, V))
        beta = beta.reshape(1, -1)
    h, n, dk = Q.shape
    if K.shape != (h, n, dk) or V.shape[:2] != (h, n):
        raise ShapeMismatch(f"Q{Q.shape} K{K.shape} V{V.shape}")
    d_k = dk if d_k is None else d_k
    rel = np.asarray(relations, dtype=np.float64)
    if rel.ndim != 3 or rel.shape[0] != beta.shape[1] or rel.shape[1] != rel.shape[2]:
        raise ShapeMismatch(f"relations {rel.shape} vs beta {beta.shape}")
    owner = np.asarray(doc_of_token, dtype=np.int64)
    if owner.shape != (n,):
        raise ShapeMismatch(f"doc_of_token has {owner.shape} entries for {n} tokens")
    n_docs = rel.shape[1]
    blocks = allowed_blocks(rel)
    spans = _doc_tokens(owner, n_docs)
    scale = 1.0 / np.sqrt(d_k)
    q, k, v, b = Q.data, K.data, V.data, beta.data

    out = np.zeros((h, n, V.shape[2]), dtype=np.result_type(q, v))
    cache = []
    workspace = 0
    for p in range(n_docs):
        rows = spans[p]
        if rows.size == 0:
            continue
        key_docs = np.array([d for d in np.flatnonzero(blocks[p]) if spans[d].size], dtype=np.int64)
        if key_docs.size == 0:
            raise EmptyAttentionRow(f"document {p} has no related non-empty document")
        cols = np.concatenate([spans[d] for d in key_docs])
        counts = np.array([spans[d].size for d in key_docs])
        rel_pq = rel[:, p, key_docs]  # (7, n_allowed)
        coef = np.repeat(b @ rel_pq, counts, axis=1)  # (h, ls)
        s = q[:, rows] @ np.swapaxes(k[:, cols], 1, 2)  # (h, lp, ls)
        z = s * coef[:, None, :] * scale
        z -= z.max(axis=2, keepdims=True)
        a = np.exp(z)
        a /= a.sum(axis=2, keepdims=True)
        out[:, rows] = a @ v[:, cols]
        workspace += s.size
        if counter is not None:
            counter.peak_block = max(counter.peak_block, s.size)
        cache.append((rows, cols, counts, rel_pq, coef, s, a))
    if counter is not None:
        counter.last_call = workspace
        counter.calls += 1

    def backward(g):
        gq, gk, gv = np.zeros_like(q), np.zeros_like(k), np.zeros_like(v)
        gb = np.zeros_like(b)
        for rows, cols, counts, rel_pq, coef, s, a in cache:
            go = g[:, rows]
            gv[:, cols] += np.swapaxes(a, 1, 2) @ go
            ga = go @ np.swapaxes(v[:, cols], 1, 2)
            gz = a * (ga - (ga * a).sum(axis=2, keepdims=True)) * scale
            gs = gz * coef[:, None, :]
            gq[:, rows] += gs @ k[:, cols]
            gk[:, cols] += np.swapaxes(gs, 1, 2) @ q[:, rows]
            gcoef = (gz * s).sum(axis=1)  # (h, ls)
            bounds = np.concatenate([[0], np.cumsum(counts)[:-1]])
            gblock = np.add.reduceat(gcoef, bounds, axis=1)  # (h, n_allowed)
            gb += gblock @ rel_pq.T
        return gq, gk, gv, gb

    result = Tensor.make(out, (Q, K, V, beta), backward)
    return result.reshape(n, -1) if single else result


def attention(Q: Tensor, K: Tensor, V: Tensor, allowed: np.ndarray | None = None) -> Tensor:
    """Scaled dot-product attention over ``(h, n, d)`` tensors with an optional boolean mask."""
    scores = (Q @ K.transpose(0, 2, 1)) * (1.0 / np.sqrt(Q.shape[-1]))
    if allowed is not None:
        scores = ag.masked_fill(scores, ~np.asarray(allowed, dtype=bool), -np.inf)
    return ag.softmax(scores, axis=-1) @ V
