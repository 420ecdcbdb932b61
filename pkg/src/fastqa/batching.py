"""Padding a list of tokenized examples into dense numpy arrays."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .text import UNK_ID, TokenizedExample, Vocabulary
from .wiq import compute_wiq_binary

MIN_CHARS = 5


@dataclass
class Batch:
    examples: list
    q_ids: np.ndarray        # (B, LQ) word ids
    q_mask: np.ndarray       # (B, LQ) bool
    x_ids: np.ndarray        # (B, LX)
    x_mask: np.ndarray       # (B, LX)
    q_word_idx: np.ndarray   # (B, LQ) rows of ``char_ids``
    x_word_idx: np.ndarray   # (B, LX)
    char_ids: np.ndarray     # (U, C) characters of each distinct token; row 0 = padding token
    char_mask: np.ndarray    # (U, C)
    wiq_b: np.ndarray        # (B, LX)
    gold_starts: np.ndarray  # (B, G)
    gold_ends: np.ndarray    # (B, G)
    gold_mask: np.ndarray    # (B, G)

    @property
    def size(self) -> int:
        return len(self.examples)

    @property
    def x_lengths(self) -> np.ndarray:
        return self.x_mask.sum(axis=1)

    @property
    def q_lengths(self) -> np.ndarray:
        return self.q_mask.sum(axis=1)


def make_batch(examples: list[TokenizedExample], vocab: Vocabulary, wiq_policy: str = "surface",
               char_max_len: int = 25, dtype=np.float32) -> Batch:
    B = len(examples)
    LQ = max(max(len(ex.question_tokens) for ex in examples), 1)
    LX = max(len(ex.context_tokens) for ex in examples)
    G = max(max(len(ex.gold_spans) for ex in examples), 1)

    q_ids = np.zeros((B, LQ), dtype=np.int64)
    x_ids = np.zeros((B, LX), dtype=np.int64)
    q_mask = np.zeros((B, LQ), dtype=bool)
    x_mask = np.zeros((B, LX), dtype=bool)
    q_widx = np.zeros((B, LQ), dtype=np.int64)
    x_widx = np.zeros((B, LX), dtype=np.int64)
    wiq_b = np.zeros((B, LX), dtype=dtype)
    gs = np.zeros((B, G), dtype=np.int64)
    ge = np.zeros((B, G), dtype=np.int64)
    gm = np.zeros((B, G), dtype=bool)

    words = {"": 0}

    def widx(tok):
        if tok not in words:
            words[tok] = len(words)
        return words[tok]

    for b, ex in enumerate(examples):
        nq, nx = len(ex.question_tokens), len(ex.context_tokens)
        q_ids[b, :nq] = vocab.encode(ex.question_tokens)
        x_ids[b, :nx] = vocab.encode(ex.context_tokens)
        q_mask[b, :nq] = True
        x_mask[b, :nx] = True
        q_widx[b, :nq] = [widx(t) for t in ex.question_tokens]
        x_widx[b, :nx] = [widx(t) for t in ex.context_tokens]
        wiq_b[b, :nx] = compute_wiq_binary(ex.context_tokens, ex.question_tokens, wiq_policy)
        for g, (s, e) in enumerate(ex.gold_spans):
            gs[b, g], ge[b, g], gm[b, g] = s, e, True

    C = max(MIN_CHARS, min(char_max_len, max(len(w) for w in words)))
    char_ids = np.zeros((len(words), C), dtype=np.int64)
    char_mask = np.zeros((len(words), C), dtype=bool)
    for w, i in words.items():
        ids = vocab.char_ids(w, char_max_len)
        char_ids[i, :len(ids)] = ids
        char_mask[i, :max(len(ids), 1)] = True
    return Batch(examples, q_ids, q_mask, x_ids, x_mask, q_widx, x_widx, char_ids, char_mask,
                 wiq_b, gs, ge, gm)


def clip_ids(ids: np.ndarray, vocab_size: int) -> np.ndarray:
    """Out-of-range ids become the unknown id."""
    return np.where((ids < 0) | (ids >= vocab_size), UNK_ID, ids)
