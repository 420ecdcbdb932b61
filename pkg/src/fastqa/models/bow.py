"""Neural bag-of-words baseline: type matching plus windowed context matching."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops
from ..batching import Batch
from ..text import STOPWORDS
from ..wiq import compute_wiq_weighted
from .common import AnswerPrediction, ParamFactory, fc, rows_at, window_means
from .embedder import Embedder

MAX_SPAN = 10
SPAN_WINDOW = 5
CONTEXT_WINDOWS = (5, 10, 20)
WH_WORDS = ("who", "whom", "whose", "when", "where", "why", "how")


@dataclass(frozen=True)
class LatSpan:
    start: int
    end: int
    kind: str  # "noun_phrase_after_what_which" | "question_word" | "fallback"


def extract_lat(question_tokens) -> LatSpan:
    """Expected answer type span of a question.

    After "what"/"which": skip function words, then take up to three
    consecutive content tokens.  Otherwise "how many"/"how much" or the first
    wh-word.  Falls back to the first token.
    """
    low = [t.lower() for t in question_tokens]
    n = len(low)
    if n == 0:
        raise ValueError("empty question")
    for i, t in enumerate(low):
        if t in ("what", "which"):
            j = i + 1
            while j < n and low[j] in STOPWORDS:
                j += 1
            k = j
            while k < n and k - j < 3 and low[k].isalnum() and low[k] not in STOPWORDS:
                k += 1
            if k > j:
                return LatSpan(j, k - 1, "noun_phrase_after_what_which")
            return LatSpan(i, i, "question_word")
    for i, t in enumerate(low):
        if t == "how" and i + 1 < n and low[i + 1] in ("many", "much"):
            return LatSpan(i, i + 1, "question_word")
        if t in WH_WORDS:
            return LatSpan(i, i, "question_word")
    return LatSpan(0, 0, "fallback")


def enumerate_spans(length: int, max_len: int = MAX_SPAN) -> tuple[np.ndarray, np.ndarray]:
    """All (s, e) with e - s + 1 <= max_len, ordered by s then e."""
    starts, ends = [], []
    for s in range(length):
        for e in range(s, min(length, s + max_len)):
            starts.append(s)
            ends.append(e)
    return np.array(starts, dtype=np.int64), np.array(ends, dtype=np.int64)


def span_count(length: int, max_len: int = MAX_SPAN) -> int:
    return sum(length - l + 1 for l in range(1, min(max_len, length) + 1))


@dataclass
class BowOutput:
    scores: Tensor       # (B, S) total span scores
    g_type: Tensor
    g_ctxt: Tensor
    span_mask: np.ndarray
    starts: np.ndarray   # (S,)
    ends: np.ndarray


class BowModel:
    kind = "bow"
    wiq_policy = "normalized"
    tokenizer_mode = "bow"

    def __init__(self, embeddings: np.ndarray, n_chars: int, n: int = 150, use_char: bool = False,
                 char_dim: int = 50, char_out: int = 100, hidden: int | None = None,
                 rng: np.random.Generator | None = None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict = {}
        pf = ParamFactory(self.params, rng, dtype)
        self.dtype = dtype
        self.n = n
        self.embedder = Embedder(embeddings, n_chars, pf, use_char, char_dim, char_out)
        d = self.embedder.dim
        hidden = hidden or n
        self.lat_W, self.lat_b = pf.linear("lat", 3 * d, n)
        self.span_W, self.span_b = pf.linear("span", 5 * d, n)
        self.type_W1, self.type_b1 = pf.linear("type.hidden", 3 * n, hidden)
        self.type_w2 = pf.uniform("type.out.w", (hidden,), hidden)
        self.type_b2 = pf.zeros("type.out.b", (1,))
        self.window_weights = pf.zeros("ctxt.window_weights", (12,))
        self.v_wiq = pf.const("wiq.v", np.ones(d))

    @property
    def input_dim(self) -> int:
        return self.embedder.dim

    def encode_lat(self, q: Tensor, lat_start: np.ndarray, lat_end: np.ndarray) -> Tensor:
        """q: (B, LQ, d) -> z (B, n) = tanh(FC([first; last; mean]))."""
        first = rows_at(q, lat_start[:, None])
        last = rows_at(q, lat_end[:, None])
        avg = window_means(q, lat_start[:, None], lat_end[:, None] + 1)
        feats = ops.concat([first, last, avg], axis=-1)
        B = q.shape[0]
        return ops.tanh(fc(ops.reshape(feats, (B, -1)), self.lat_W, self.lat_b))

    def encode_spans(self, x: Tensor, starts: np.ndarray, ends: np.ndarray, lengths: np.ndarray) -> Tensor:
        """x: (B, L, d); starts/ends (B, S) -> (B, S, n).

        The FC over the five concatenated parts is evaluated as a sum of five
        block products, each block applied to tokens before averaging.
        """
        d = x.shape[-1]
        blocks = [self.span_W[k * d:(k + 1) * d] for k in range(5)]
        xw = ops.matmul(x, ops.concat(blocks, axis=1))
        n = self.n
        part = [xw[:, :, k * n:(k + 1) * n] for k in range(5)]
        L = lengths[:, None]
        total = (rows_at(part[0], starts)
                 + rows_at(part[1], ends)
                 + window_means(part[2], starts, ends + 1)
                 + window_means(part[3], np.maximum(starts - SPAN_WINDOW, 0), starts)
                 + window_means(part[4], np.minimum(ends + 1, L), np.minimum(ends + 1 + SPAN_WINDOW, L)))
        return ops.tanh(total + self.span_b)

    def type_score(self, z: Tensor, xs: Tensor) -> Tensor:
        """z: (B, n), xs: (B, S, n) -> (B, S)."""
        zb = ops.broadcast_to(ops.reshape(z, (z.shape[0], 1, z.shape[1])), xs.shape)
        h = ops.relu(fc(ops.concat([zb, xs, zb * xs], axis=-1), self.type_W1, self.type_b1))
        return ops.matmul(h, self.type_w2) + self.type_b2

    def context_features(self, wiq_b: np.ndarray, wiq_w: Tensor, starts, ends, lengths) -> Tensor:
        """12 window means per span, ordered (window, side, feature)."""
        feats = ops.concat([Tensor(wiq_b[:, :, None].astype(self.dtype)),
                            ops.reshape(wiq_w, wiq_w.shape + (1,))], axis=-1)
        L = lengths[:, None]
        parts = []
        for w in CONTEXT_WINDOWS:
            parts.append(window_means(feats, np.maximum(starts - w, 0), starts))
            parts.append(window_means(feats, np.minimum(ends + 1, L), np.minimum(ends + 1 + w, L)))
        return ops.concat(parts, axis=-1)

    def context_score(self, ctx_feats: Tensor) -> Tensor:
        return ops.matmul(ctx_feats, self.window_weights)

    def forward(self, batch: Batch, dropout_mask=None) -> BowOutput:
        q, x = self.embedder.embed_batch(batch)
        if dropout_mask is not None:
            q, x = ops.dropout(q, dropout_mask), ops.dropout(x, dropout_mask)
        B, LX = batch.x_ids.shape
        lengths = batch.x_lengths
        s1, e1 = enumerate_spans(LX)
        starts = np.broadcast_to(s1, (B, len(s1)))
        ends = np.broadcast_to(e1, (B, len(e1)))
        span_mask = ends < lengths[:, None]

        lats = [extract_lat(ex.question_tokens) for ex in batch.examples]
        z = self.encode_lat(q, np.array([l.start for l in lats]), np.array([l.end for l in lats]))
        xs = self.encode_spans(x, starts, ends, lengths)
        g_type = self.type_score(z, xs)

        wiq_w = compute_wiq_weighted(x, q, self.v_wiq, batch.x_mask, batch.q_mask)
        g_ctxt = self.context_score(self.context_features(batch.wiq_b, wiq_w, starts, ends, lengths))
        return BowOutput(g_type + g_ctxt, g_type, g_ctxt, span_mask, s1, e1)

    def gold_span_mask(self, batch: Batch, out: BowOutput) -> np.ndarray:
        index = {(int(s), int(e)): k for k, (s, e) in enumerate(zip(out.starts, out.ends))}
        mask = np.zeros(out.span_mask.shape, dtype=bool)
        for b, ex in enumerate(batch.examples):
            for s, e in ex.gold_spans:
                k = index.get((s, e))
                if k is not None:
                    mask[b, k] = True
        return mask

    def loss(self, batch: Batch, dropout_mask=None) -> Tensor:
        """Mean over examples of -log sum_{gold} p(span).  Examples must have
        at least one gold span no longer than MAX_SPAN tokens."""
        out = self.forward(batch, dropout_mask)
        gold = self.gold_span_mask(batch, out)
        if not gold.any(axis=1).all():
            raise ValueError("every example needs a gold span of at most 10 tokens")
        nll = ops.logsumexp(out.scores, mask=out.span_mask) - ops.logsumexp(out.scores, mask=gold)
        return ops.mean(nll)

    def span_probabilities(self, batch: Batch) -> tuple[np.ndarray, BowOutput]:
        out = self.forward(batch)
        return ops.softmax(out.scores, axis=-1, mask=out.span_mask).data, out

    def predict(self, batch: Batch, beam_k: int | None = None) -> list[AnswerPrediction]:
        probs, out = self.span_probabilities(batch)
        preds = []
        for b, ex in enumerate(batch.examples):
            k = int(np.argmax(probs[b]))
            s, e = int(out.starts[k]), int(out.ends[k])
            preds.append(AnswerPrediction(s, e, float(probs[b, k]), ex.span_text(s, e)))
        return preds


def eligible_for_bow(example) -> bool:
    return any(e - s + 1 <= MAX_SPAN for s, e in example.gold_spans)
