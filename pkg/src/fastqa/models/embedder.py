"""Fixed lookup embeddings concatenated with a width-5 char-CNN."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..batching import Batch, clip_ids
from .common import ParamFactory

CONV_WIDTH = 5


class Embedder:
    """Maps tokens to [x^w; x^c].

    The lookup matrix is a constant (never handed to the optimizer).  Char
    embeddings are computed once per distinct token in a batch and then
    gathered, which is equivalent to running the CNN at every position.
    """

    def __init__(self, embeddings: np.ndarray, n_chars: int, factory: ParamFactory,
                 use_char: bool = True, char_dim: int = 50, char_out: int = 100):
        self.E = Tensor(np.asarray(embeddings, dtype=factory.dtype), requires_grad=False, name="E")
        self.use_char = use_char
        self.word_dim = self.E.shape[1]
        self.char_out = char_out if use_char else 0
        if use_char:
            table = factory.rng.normal(0.0, 0.1, size=(n_chars, char_dim))
            table[0] = 0.0
            self.char_table = factory.const("char.table", table)
            self.conv_kernel = factory.uniform("char.conv", (char_dim, char_out, CONV_WIDTH),
                                               char_dim * CONV_WIDTH)
            self.conv_bias = factory.zeros("char.conv_b", (char_out,))

    @property
    def dim(self) -> int:
        return self.word_dim + self.char_out

    def char_vectors(self, char_ids: np.ndarray, char_mask: np.ndarray) -> Tensor:
        """(U, C) char ids -> (U, char_out) by conv + masked max over time."""
        ids = np.where(char_ids >= self.char_table.shape[0], 1, char_ids)
        chars = ops.embedding_lookup(self.char_table, ids, padding_idx=0)
        conv = ops.conv1d(chars, self.conv_kernel, self.conv_bias)
        return ops.max_over_time(conv, axis=1, mask=char_mask[:, :, None])

    def lookup(self, ids: np.ndarray) -> Tensor:
        return Tensor(self.E.data[clip_ids(ids, self.E.shape[0])])

    def embed_tokens(self, ids: np.ndarray, char_ids: np.ndarray, char_mask: np.ndarray) -> Tensor:
        """One sequence: ids (L,), per-token chars (L, C) -> (L, d)."""
        xw = self.lookup(np.asarray(ids))
        if not self.use_char:
            return xw
        return ops.concat([xw, self.char_vectors(char_ids, char_mask)], axis=-1)

    def embed_batch(self, batch: Batch) -> tuple[Tensor, Tensor]:
        """Returns (question (B, LQ, d), context (B, LX, d)); padding rows are 0."""
        qw, xw = self.lookup(batch.q_ids), self.lookup(batch.x_ids)
        if self.use_char:
            cv = self.char_vectors(batch.char_ids, batch.char_mask)
            q = ops.concat([qw, ops.embedding_lookup(cv, batch.q_word_idx)], axis=-1)
            x = ops.concat([xw, ops.embedding_lookup(cv, batch.x_word_idx)], axis=-1)
        else:
            q, x = qw, xw
        q = ops.mul(q, batch.q_mask[:, :, None].astype(q.dtype))
        x = ops.mul(x, batch.x_mask[:, :, None].astype(x.dtype))
        return q, x
