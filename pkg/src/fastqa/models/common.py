"""Parameter initialization and small building blocks shared by the models."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..autodiff import Tensor, ops


@dataclass
class AnswerPrediction:
    s: int
    e: int
    probability: float
    answer_text: str = ""


class ParamFactory:
    """Creates named trainable tensors into a shared dict."""

    def __init__(self, params: dict, rng: np.random.Generator, dtype=np.float32):
        self.params = params
        self.rng = rng
        self.dtype = dtype

    def _add(self, name, data) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name}")
        t = Tensor(np.asarray(data, dtype=self.dtype), requires_grad=True, name=name)
        self.params[name] = t
        return t

    def uniform(self, name, shape, fan_in) -> Tensor:
        bound = 1.0 / np.sqrt(fan_in)
        return self._add(name, self.rng.uniform(-bound, bound, size=shape))

    def zeros(self, name, shape) -> Tensor:
        return self._add(name, np.zeros(shape))

    def const(self, name, value) -> Tensor:
        return self._add(name, value)

    def linear(self, name, n_in, n_out) -> tuple[Tensor, Tensor]:
        return self.uniform(f"{name}.W", (n_in, n_out), n_in), self.zeros(f"{name}.b", (n_out,))


def fc(x, W: Tensor, b: Tensor) -> Tensor:
    """FC(u) = u W + b, weights stored (in, out)."""
    return ops.matmul(x, W) + b


def window_sums(x: Tensor, starts: np.ndarray, ends: np.ndarray) -> tuple[Tensor, np.ndarray]:
    """Sums of x over [start, end) along axis 1 via a prefix sum.

    x: (B, L, k); starts/ends: (B, S) ints.  Returns ((B, S, k), counts).
    """
    B, L, k = x.shape
    zero = Tensor(np.zeros((B, 1, k), dtype=x.dtype))
    prefix = ops.concat([zero, ops.cumsum(x, axis=1)], axis=1)
    hi = ops.gather(prefix, ends[:, :, None], axis=1)
    lo = ops.gather(prefix, starts[:, :, None], axis=1)
    return hi - lo, np.maximum(ends - starts, 0)


def window_means(x: Tensor, starts: np.ndarray, ends: np.ndarray) -> Tensor:
    """Means over [start, end) along axis 1; an empty window yields zeros."""
    sums, counts = window_sums(x, starts, ends)
    scale = np.where(counts > 0, 1.0 / np.maximum(counts, 1), 0.0).astype(x.dtype)
    return sums * scale[:, :, None]


def rows_at(x: Tensor, idx: np.ndarray) -> Tensor:
    """x: (B, L, k), idx: (B, K) -> (B, K, k)."""
    return ops.gather(x, np.asarray(idx)[:, :, None], axis=1)


def param_count(params: dict) -> int:
    return int(sum(t.data.size for t in params.values()))
