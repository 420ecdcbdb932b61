"""FastQA: highway-projected embeddings, wiq-aware BiLSTM, start/end networks."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, no_grad, ops
from ..batching import Batch
from ..wiq import compute_wiq_weighted
from .common import AnswerPrediction, ParamFactory, fc, rows_at
from .embedder import Embedder


def beam_search_decode(p_s: np.ndarray, end_fn, k: int) -> tuple[AnswerPrediction, list]:
    """Best span among the ends predicted for the k most probable starts.

    ``end_fn(s)`` returns p_e(. | s) over all positions.  Ties prefer the
    smaller start, then the smaller end.  k is clamped to len(p_s).
    """
    if k < 1:
        raise ValueError("beam size must be >= 1")
    L = len(p_s)
    k = min(k, L)
    order = np.lexsort((np.arange(L), -p_s))[:k]
    cands = []
    for s in order:
        pe = np.asarray(end_fn(int(s)))
        e = int(np.argmax(pe))
        cands.append(AnswerPrediction(int(s), e, float(p_s[s] * pe[e])))
    best = min(cands, key=lambda c: (-c.probability, c.s, c.e))
    return best, cands


def end_mask(starts: np.ndarray, x_mask: np.ndarray, max_span: int | None = None) -> np.ndarray:
    """(B, K) starts -> (B, K, LX) legal end positions (j >= s, j real)."""
    j = np.arange(x_mask.shape[1])[None, None, :]
    s = starts[:, :, None]
    m = (j >= s) & x_mask[:, None, :]
    if max_span is not None:
        m &= j - s < max_span
    return m


class FastQAModel:
    kind = "fastqa"
    wiq_policy = "surface"
    tokenizer_mode = "fastqa"

    def __init__(self, embeddings: np.ndarray, n_chars: int, n: int = 300, use_char: bool = True,
                 char_dim: int = 50, char_out: int = 100, wiq_binary: bool = True,
                 wiq_weighted: bool = True, max_span: int | None = None, gold_reduction: str = "min",
                 rng: np.random.Generator | None = None, dtype=np.float32):
        if gold_reduction not in ("min", "marginal"):
            raise ValueError(f"unknown gold reduction {gold_reduction!r}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict = {}
        pf = ParamFactory(self.params, rng, dtype)
        self.dtype = dtype
        self.n = n
        self.wiq_binary = wiq_binary
        self.wiq_weighted = wiq_weighted
        self.max_span = max_span
        self.gold_reduction = gold_reduction

        self.embedder = Embedder(embeddings, n_chars, pf, use_char, char_dim, char_out)
        d = self.embedder.dim
        self.P = pf.uniform("proj.P", (d, n), d)
        self.gate_W, self.gate_b = pf.linear("highway.gate", n, n)
        self.trans_W, self.trans_b = pf.linear("highway.transform", n, n)
        self.v_wiq = pf.const("wiq.v", np.ones(n))
        self.lstm = {}
        for direction in ("fw", "bw"):
            w = pf.uniform(f"lstm.{direction}.W", (n + 2 + n, 4 * n), n + 2 + n)
            b = np.zeros(4 * n)
            b[n:2 * n] = 1.0
            self.lstm[direction] = (w, pf.const(f"lstm.{direction}.b", b))
        eye = np.concatenate([np.eye(n), np.eye(n)], axis=0)
        self.B_ctx = pf.const("encoder.B_ctx", eye)
        self.B_q = pf.const("encoder.B_q", eye.copy())
        self.v_q = pf.uniform("answer.v_q", (n,), n)
        self.start_W, self.start_b = pf.linear("answer.start", 3 * n, n)
        self.v_s = pf.uniform("answer.v_s", (n,), n)
        self.end_W, self.end_b = pf.linear("answer.end", 5 * n, n)
        self.v_e = pf.uniform("answer.v_e", (n,), n)
        self._factory = pf

    @property
    def input_dim(self) -> int:
        return self.embedder.dim

    # --- encoder ---------------------------------------------------------

    def project(self, x: Tensor) -> Tensor:
        return ops.matmul(x, self.P)

    def highway(self, xp: Tensor) -> Tensor:
        g = ops.sigmoid(fc(xp, self.gate_W, self.gate_b))
        t = ops.tanh(fc(xp, self.trans_W, self.trans_b))
        return g * xp + (1.0 - g) * t

    def project_highway(self, x: Tensor) -> Tensor:
        return self.highway(self.project(x))

    def bilstm(self, inputs: Tensor, mask: np.ndarray) -> Tensor:
        fw = ops.lstm(inputs, *self.lstm["fw"], mask=mask)
        bw = ops.lstm(inputs, *self.lstm["bw"], mask=mask, reverse=True)
        return ops.concat([fw, bw], axis=-1)

    def encode_sequence(self, xt: Tensor, wiq_b, wiq_w, mask: np.ndarray, which: str) -> Tensor:
        """[x~; wiq_b; wiq_w] -> BiLSTM -> tanh(B H'), B chosen by ``which``."""
        if xt.shape[1] == 0:
            raise ValueError("cannot encode an empty sequence")
        B, L, _ = xt.shape
        fb = wiq_b if isinstance(wiq_b, Tensor) else Tensor(np.asarray(wiq_b, dtype=xt.dtype))
        fw = wiq_w if isinstance(wiq_w, Tensor) else Tensor(np.asarray(wiq_w, dtype=xt.dtype))
        feats = ops.concat([xt, ops.reshape(fb, (B, L, 1)), ops.reshape(fw, (B, L, 1))], axis=-1)
        proj = self.B_ctx if which == "context" else self.B_q
        return ops.tanh(ops.matmul(self.bilstm(feats, mask), proj))

    def encode(self, batch: Batch, dropout_mask=None) -> tuple[Tensor, Tensor]:
        q, x = self.embedder.embed_batch(batch)
        if dropout_mask is not None:
            q, x = ops.dropout(q, dropout_mask), ops.dropout(x, dropout_mask)
        qp, xp = self.project(q), self.project(x)
        B, LX = batch.x_ids.shape
        LQ = batch.q_ids.shape[1]
        if self.wiq_weighted:
            wiq_w = compute_wiq_weighted(xp, qp, self.v_wiq, batch.x_mask, batch.q_mask)
        else:
            wiq_w = np.zeros((B, LX))
        wiq_b = batch.wiq_b if self.wiq_binary else np.zeros((B, LX))
        q_feat = np.ones((B, LQ)) if (self.wiq_binary or self.wiq_weighted) else np.zeros((B, LQ))
        H = self.encode_sequence(self.highway(xp), wiq_b, wiq_w, batch.x_mask, "context")
        Z = self.encode_sequence(self.highway(qp), q_feat, q_feat, batch.q_mask, "question")
        H = self.interact(H, Z, batch)
        return H, Z

    def interact(self, H: Tensor, Z: Tensor, batch: Batch) -> Tensor:
        return H

    # --- answer layer ----------------------------------------------------

    def question_summary(self, Z: Tensor, q_mask: np.ndarray) -> tuple[Tensor, Tensor]:
        """alpha = softmax(v_q Z) over real question positions; z~ = sum alpha_i z_i."""
        alpha = ops.softmax(ops.matmul(Z, self.v_q), axis=-1, mask=q_mask)
        B, LQ = q_mask.shape
        z = ops.reshape(ops.matmul(ops.reshape(alpha, (B, 1, LQ)), Z), (B, self.n))
        return z, alpha

    def start_logits(self, H: Tensor, z: Tensor) -> Tensor:
        n = self.n
        W = self.start_W
        B = z.shape[0]
        zb = ops.reshape(z, (B, 1, n))
        pre = (ops.matmul(H, W[:n]) + ops.matmul(zb, W[n:2 * n])
               + ops.matmul(H * zb, W[2 * n:]) + self.start_b)
        return ops.matmul(ops.relu(pre), self.v_s)

    def end_logits(self, H: Tensor, z: Tensor, starts: np.ndarray) -> Tensor:
        """starts: (B, K) -> logits (B, K, LX).  FC over the five-part
        concatenation, evaluated as a sum of per-block products."""
        n = self.n
        W = self.end_W
        B, LX, _ = H.shape
        K = starts.shape[1]
        hs = rows_at(H, starts)                          # (B, K, n)
        zb = ops.reshape(z, (B, 1, n))
        per_pos = ops.matmul(H, W[:n]) + ops.matmul(H * zb, W[3 * n:4 * n])       # (B, LX, n)
        per_start = ops.matmul(hs, W[n:2 * n]) + ops.matmul(zb, W[2 * n:3 * n]) + self.end_b  # (B, K, n)
        H4 = ops.reshape(H, (B, 1, LX, n))
        cross = ops.matmul(H4 * ops.reshape(hs, (B, K, 1, n)), W[4 * n:])       # (B, K, LX, n)
        pre = cross + ops.reshape(per_pos, (B, 1, LX, n)) + ops.reshape(per_start, (B, K, 1, n))
        return ops.matmul(ops.relu(pre), self.v_e)

    def start_distribution(self, H, z, x_mask) -> Tensor:
        return ops.softmax(self.start_logits(H, z), axis=-1, mask=x_mask)

    def end_distribution(self, H, z, starts, x_mask) -> Tensor:
        starts = np.asarray(starts)
        if np.any(starts < 0) or np.any(starts >= x_mask.sum(axis=1)[:, None]):
            raise ValueError("start index outside the context")
        return ops.softmax(self.end_logits(H, z, starts), axis=-1,
                           mask=end_mask(starts, x_mask, self.max_span))

    # --- training / inference --------------------------------------------

    def loss(self, batch: Batch, dropout_mask=None) -> Tensor:
        """-log p_s(s) - log p_e(e|s), end conditioned on the gold start."""
        if not batch.gold_mask.any(axis=1).all():
            raise ValueError("every training example needs a gold span")
        H, Z = self.encode(batch, dropout_mask)
        z, _ = self.question_summary(Z, batch.q_mask)
        log_ps = ops.log_softmax(self.start_logits(H, z), axis=-1, mask=batch.x_mask)
        starts, ends = batch.gold_starts, batch.gold_ends
        log_pe = ops.log_softmax(self.end_logits(H, z, starts), axis=-1,
                                 mask=end_mask(starts, batch.x_mask, self.max_span))
        lp_s = ops.gather(log_ps, starts, axis=1)
        lp_e = ops.reshape(ops.gather(log_pe, ends[:, :, None], axis=2), starts.shape)
        nll = -(lp_s + lp_e)                              # (B, G)
        if self.gold_reduction == "marginal":
            per_ex = -ops.logsumexp(-nll, axis=-1, mask=batch.gold_mask)
        else:
            pick = np.argmin(np.where(batch.gold_mask, nll.data, np.inf), axis=1)
            per_ex = ops.reshape(ops.gather(nll, pick[:, None], axis=1), (batch.size,))
        return ops.mean(per_ex)

    def predict(self, batch: Batch, beam_k: int = 5) -> list[AnswerPrediction]:
        with no_grad():
            H, Z = self.encode(batch)
            z, _ = self.question_summary(Z, batch.q_mask)
            p_s = self.start_distribution(H, z, batch.x_mask).data
            lengths = batch.x_lengths
            K = int(min(beam_k, batch.x_mask.shape[1]))
            starts = np.zeros((batch.size, K), dtype=np.int64)
            for b in range(batch.size):
                L = int(lengths[b])
                top = np.lexsort((np.arange(L), -p_s[b, :L]))[:K]
                starts[b, :len(top)] = top
                starts[b, len(top):] = top[0]
            p_e = self.end_distribution(H, z, starts, batch.x_mask).data
        preds = []
        for b, ex in enumerate(batch.examples):
            L = int(lengths[b])
            rows = {int(s): p_e[b, i, :L] for i, s in enumerate(starts[b])}
            best, _ = beam_search_decode(p_s[b, :L], rows.__getitem__, beam_k)
            best.answer_text = ex.span_text(best.s, best.e)
            preds.append(best)
        return preds

    def span_probabilities(self, batch: Batch) -> np.ndarray:
        """Full p(s, e) = p_s(s) p_e(e|s), shape (B, LX, LX)."""
        with no_grad():
            H, Z = self.encode(batch)
            z, _ = self.question_summary(Z, batch.q_mask)
            p_s = self.start_distribution(H, z, batch.x_mask).data
            LX = batch.x_mask.shape[1]
            starts = np.minimum(np.arange(LX)[None, :], batch.x_lengths[:, None] - 1)
            p_e = self.end_distribution(H, z, starts, batch.x_mask).data
        valid = np.arange(LX)[None, :] < batch.x_lengths[:, None]
        return p_s[:, :, None] * p_e * valid[:, :, None]
