"""Representation fusion: gated addition of states with attention co-states."""

from __future__ import annotations

import numpy as np

from ..autodiff import Tensor, ops
from ..batching import Batch
from .common import ParamFactory
from .fastqa import FastQAModel

GATE_SITES = ("intra", "intra_bw", "intra_fw", "inter", "inter_bw", "inter_fw")


class FusionLayer:
    """Intra-fusion over the context, then inter-fusion with the question,
    each followed by a backward and a forward recurrent fusion sweep.

    ``self_mask=False`` zeroes the self score (the self position still gets
    softmax weight); ``self_mask=True`` removes it from the softmax instead.
    """

    def __init__(self, n: int, factory: ParamFactory, self_mask: bool = False):
        self.n = n
        self.self_mask = self_mask
        self.v_beta = factory.const("fusion.v_beta", np.ones(n))
        self.v_gamma = factory.uniform("fusion.v_gamma", (n,), n)
        self.gates = {site: factory.linear(f"fusion.gate.{site}", 2 * n, n) for site in GATE_SITES}
        self.last_beta: np.ndarray | None = None
        self.last_gamma: np.ndarray | None = None

    def fuse(self, a: Tensor, b: Tensor, site: str) -> Tensor:
        """g * a + (1 - g) * b with g = sigmoid(FC([a; b]))."""
        if a.shape != b.shape:
            raise ops.ShapeError("fuse", a.shape, b.shape)
        W, bias = self.gates[site]
        n = self.n
        g = ops.sigmoid(ops.matmul(a, W[:n]) + ops.matmul(b, W[n:]) + bias)
        return g * a + (1.0 - g) * b

    def intra_weights(self, H: Tensor, mask: np.ndarray) -> Tensor:
        B, L, _ = H.shape
        off = ~np.eye(L, dtype=bool)
        scores = ops.matmul(H * self.v_beta, ops.swapaxes(H, 1, 2))
        scores = scores * off.astype(H.dtype)
        m = mask[:, None, :] & mask[:, :, None]
        if self.self_mask:
            # rows without any other real position keep the self weight
            lonely = ~(m & off).any(axis=-1, keepdims=True)
            m = m & (off | lonely)
        # padded query rows attend to themselves so their softmax is defined
        m = m | (~mask[:, :, None] & ~off)
        return ops.softmax(scores, axis=-1, mask=m)

    def intra(self, H: Tensor, mask: np.ndarray) -> Tensor:
        beta = self.intra_weights(H, mask)
        self.last_beta = beta.data
        return self.fuse(H, ops.matmul(beta, H), "intra")

    def inter_weights(self, H: Tensor, Z: Tensor, x_mask: np.ndarray, q_mask: np.ndarray) -> Tensor:
        """gamma: (B, LQ, LX), each real question row sums to one over the context."""
        scores = ops.matmul(Z * self.v_gamma, ops.swapaxes(H, 1, 2))
        gamma = ops.softmax(scores, axis=-1, mask=np.broadcast_to(x_mask[:, None, :], scores.shape))
        return gamma * q_mask[:, :, None].astype(H.dtype)

    def inter(self, H: Tensor, Z: Tensor, x_mask: np.ndarray, q_mask: np.ndarray) -> Tensor:
        gamma = self.inter_weights(H, Z, x_mask, q_mask)
        self.last_gamma = gamma.data
        return self.fuse(H, ops.matmul(ops.swapaxes(gamma, 1, 2), Z), "inter")

    def recurrent(self, Hs: Tensor, mask: np.ndarray, prefix: str) -> Tensor:
        """Backward sweep then forward sweep of fuse() along real positions."""
        B, L, n = Hs.shape
        lengths = mask.sum(axis=1)
        W_bw, b_bw = self.gates[f"{prefix}_bw"]
        W_fw, b_fw = self.gates[f"{prefix}_fw"]
        a_bw = ops.matmul(Hs, W_bw[:n]) + b_bw
        rows = [Hs[:, j] for j in range(L)]

        bw = [None] * L
        for j in range(L - 1, -1, -1):
            if j == L - 1:
                bw[j] = rows[j]
                continue
            prev = bw[j + 1]
            g = ops.sigmoid(a_bw[:, j] + ops.matmul(prev, W_bw[n:]))
            fused = g * rows[j] + (1.0 - g) * prev
            keep = (j < lengths - 1).astype(Hs.dtype)[:, None]
            bw[j] = fused * keep + rows[j] * (1.0 - keep)
        Hbw = ops.stack(bw, axis=1)

        a_fw = ops.matmul(Hbw, W_fw[:n]) + b_fw
        fw = [bw[0]]
        for j in range(1, L):
            prev = fw[j - 1]
            g = ops.sigmoid(a_fw[:, j] + ops.matmul(prev, W_fw[n:]))
            fw.append(g * bw[j] + (1.0 - g) * prev)
        return ops.stack(fw, axis=1)

    def __call__(self, H: Tensor, Z: Tensor, x_mask: np.ndarray, q_mask: np.ndarray) -> Tensor:
        Ht = self.recurrent(self.intra(H, x_mask), x_mask, "intra")
        return self.recurrent(self.inter(Ht, Z, x_mask, q_mask), x_mask, "inter")

    def saturate(self, bias: float = 1e3):
        """Push every gate bias far toward the first argument.  sigmoid then
        rounds to exactly 1, so fusion is the identity."""
        for _, b in self.gates.values():
            b.data[...] = bias


class FastQAExtModel(FastQAModel):
    """FastQA with a fusion layer between encoder and answer layer.  Base
    parameters are created first, so the same rng yields FastQA's weights."""

    kind = "fastqaext"

    def __init__(self, *args, self_mask: bool = False, **kwargs):
        super().__init__(*args, **kwargs)
        self.fusion = FusionLayer(self.n, self._factory, self_mask=self_mask)

    def interact(self, H: Tensor, Z: Tensor, batch: Batch) -> Tensor:
        return self.fusion(H, Z, batch.x_mask, batch.q_mask)
