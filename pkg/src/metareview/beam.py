"""Beam-search decoding with length-normalised scores."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from . import autograd as ag
from .assembly import BOS_ID, EOS_ID, AssembledInput


def hypothesis_score(logprob_sum: float, length: int, length_penalty: float) -> float:
    """``sum log p / length ** penalty``; length counts generated tokens including ``<eos>``."""
    return logprob_sum / (max(length, 1) ** length_penalty)


def beam_search(step_logprobs: Callable[[Sequence[int]], np.ndarray], beam_size: int,
                length_penalty: float, max_out: int, bos: int = BOS_ID, eos: int = EOS_ID) -> list[int]:
    """Generic beam search.

    ``step_logprobs(prefix)`` returns next-token log-probabilities for a prefix
    that starts with ``bos``. Sequences are capped at ``max_out`` ids including
    ``bos``; beams still open at the cap are scored as they stand. Search stops
    once ``beam_size`` hypotheses have finished. Candidates are ranked by
    cumulative log-probability, ties broken by the smaller token id.
    """
    if beam_size < 1:
        raise ValueError("beam_size must be >= 1")
    if max_out < 2:
        return [bos]
    live: list[tuple[float, list[int]]] = [(0.0, [bos])]
    finished: list[tuple[float, float, list[int]]] = []
    while live and len(finished) < beam_size:
        candidates = []
        for beam_idx, (lp, seq) in enumerate(live):
            logp = np.asarray(step_logprobs(seq), dtype=np.float64)
            for tok in range(logp.shape[0]):
                candidates.append((lp + float(logp[tok]), beam_idx, tok))
        # higher score first; then earlier beam, then smaller token id
        candidates.sort(key=lambda c: (-c[0], c[1], c[2]))
        new_live = []
        for rank, (lp, beam_idx, tok) in enumerate(candidates):
            seq = live[beam_idx][1] + [tok]
            if tok == eos:
                if rank < beam_size:
                    finished.append((hypothesis_score(lp, len(seq) - 1, length_penalty), lp, seq))
            else:
                new_live.append((lp, seq))
            if len(new_live) == beam_size:
                break
        live = new_live
        if live and len(live[0][1]) >= max_out:
            for lp, seq in live:
                finished.append((hypothesis_score(lp, len(seq) - 1, length_penalty), lp, seq))
            live = []
    best = max(finished, key=lambda f: (f[0], [-t for t in f[2]]))
    return best[2]


def beam_generate(inp: AssembledInput, relations, model, beam_size: int = 5,
                  length_penalty: float = 1.0, max_out: int | None = None) -> list[int]:
    """Decode a token sequence (``<bos>`` ... ``<eos>``) for one encoder input."""
    max_out = model.config.max_out if max_out is None else min(max_out, model.config.max_out)
    with ag.no_grad():
        enc = model.encode(inp, relations, training=False)
        cache: dict[tuple, np.ndarray] = {}

        def step(prefix):
            key = tuple(prefix)
            if key not in cache:
                logits = model.decode(prefix, enc, training=False).logits.data[-1]
                z = logits - logits.max()
                cache[key] = z - np.log(np.exp(z).sum())
            return cache[key]

        return beam_search(step, beam_size, length_penalty, max_out)


def greedy_decode(step_logprobs, max_out: int, bos: int = BOS_ID, eos: int = EOS_ID) -> list[int]:
    seq = [bos]
    while len(seq) < max_out:
        tok = int(np.argmax(step_logprobs(seq)))
        seq.append(tok)
        if tok == eos:
            break
    return seq
