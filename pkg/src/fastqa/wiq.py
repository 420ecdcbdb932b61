"""Word-in-question features: binary indicator and softmax-weighted match."""

from __future__ import annotations

from collections import Counter

import numpy as np

from .autodiff import Tensor, ops
from .text import STOPWORDS

NON_MATCH = -1e30


def _question_keys(question_tokens, policy: str) -> set:
    if policy == "surface":
        return set(question_tokens)
    if policy == "normalized":
        return {t.lower() for t in question_tokens
                if t.isalnum() and t.lower() not in STOPWORDS}
    raise ValueError(f"unknown wiq policy {policy!r}")


def compute_wiq_binary(context_tokens, question_tokens, policy: str = "surface") -> np.ndarray:
    """1.0 where the context token occurs in the question, else 0.0."""
    keys = _question_keys(question_tokens, policy)
    if policy == "normalized":
        return np.array([float(t.lower() in keys) for t in context_tokens])
    return np.array([float(t in keys) for t in context_tokens])


def similarity(context_emb: Tensor, question_emb: Tensor, v_wiq: Tensor) -> Tensor:
    """sim[i, j] = v_wiq . (x_j * q_i); shapes (..., L_Q, L_X)."""
    if context_emb.shape[-1] != question_emb.shape[-1] or v_wiq.shape != (context_emb.shape[-1],):
        raise ops.ShapeError("wiq_similarity", context_emb.shape, question_emb.shape, v_wiq.shape)
    return ops.matmul(question_emb * v_wiq, ops.swapaxes(context_emb, -1, -2))


def weighted_from_similarity(sim: Tensor, score_mask=None, question_mask=None) -> Tensor:
    """Softmax each question row over the context axis and sum the rows.

    ``score_mask`` broadcasts against ``sim``; masked scores get exactly zero
    weight, and a row with nothing unmasked contributes nothing.
    """
    probs = ops.softmax(sim, axis=-1, mask=score_mask)
    if question_mask is None:
        return ops.sum(probs, axis=-2)
    return ops.sum(probs, axis=-2, mask=np.expand_dims(question_mask, -1))


def compute_wiq_weighted(context_emb: Tensor, question_emb: Tensor, v_wiq: Tensor,
                         context_mask=None, question_mask=None) -> Tensor:
    """Differentiable weighted feature; accepts (L, n) or batched (B, L, n)."""
    score_mask = None if context_mask is None else np.expand_dims(context_mask, -2)
    return weighted_from_similarity(similarity(context_emb, question_emb, v_wiq),
                                    score_mask, question_mask)


def discrete_similarity(context_tokens, question_tokens, sentinel: float = NON_MATCH) -> np.ndarray:
    """0 where q_i == x_j, ``sentinel`` elsewhere."""
    q = np.asarray(question_tokens, dtype=object)[:, None]
    x = np.asarray(context_tokens, dtype=object)[None, :]
    return np.where(q == x, 0.0, sentinel)


def discrete_wiq_weighted(context_tokens, question_tokens, sentinel: float = NON_MATCH) -> np.ndarray:
    """Run the weighted-feature softmax pipeline on the discrete similarity.

    The sentinel is applied as the softmax's additive mask, so a question
    word that never occurs in the context adds nothing (the 0/0 term of the
    closed form) rather than a uniform row.
    """
    sim = discrete_similarity(context_tokens, question_tokens, sentinel)
    if sim.shape[0] == 0:
        return np.zeros(len(context_tokens))
    out = weighted_from_similarity(Tensor(sim, dtype=np.float64), score_mask=sim > sentinel)
    return out.data


def tf_wiq_oracle(context_tokens, question_tokens) -> np.ndarray:
    """Closed form under the discrete similarity: tf(x_j|Q) / tf(x_j|C)."""
    tf_q = Counter(question_tokens)
    tf_c = Counter(context_tokens)
    return np.array([tf_q[x] / tf_c[x] if tf_q[x] else 0.0 for x in context_tokens])
