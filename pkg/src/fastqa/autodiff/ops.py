"""Differentiable primitives over dense float tensors.

Every function takes ``Tensor`` operands (plain arrays are wrapped as
constants) and returns a new ``Tensor``.  Masks are boolean arrays, ``True``
marking real positions; masked positions receive exactly zero probability
or weight and exactly zero gradient.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .tensor import DomainError, ShapeError, Tensor, as_tensor, make_result


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = as_tensor(a, like=b)
    if not isinstance(b, Tensor):
        b = as_tensor(b, like=a)
    return a, b


def _broadcast_shape(op, a, b):
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(op, a.shape, b.shape, detail="not broadcastable") from None


def _mask_like(mask, x: np.ndarray, op: str) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    try:
        return np.broadcast_to(m, x.shape)
    except ValueError:
        raise ShapeError(op, x.shape, m.shape, detail="mask does not broadcast") from None


# --- elementwise arithmetic -------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("add", a, b)
    return make_result(
        a.data + b.data, "add", (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    _broadcast_shape("sub", a, b)
    return make_result(
        a.data - b.data, "sub", (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b) -> Tensor:
    """Elementwise product with broadcasting."""
    a, b = _pair(a, b)
    _broadcast_shape("elementwise_mul", a, b)
    return make_result(
        a.data * b.data, "elementwise_mul", (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def matmul(a, b) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim == 0 or b.ndim == 0:
        raise ShapeError("matmul", a.shape, b.shape, detail="scalar operand")
    if a.ndim == 1 and b.ndim != 2:
        raise ShapeError("matmul", a.shape, b.shape, detail="vector @ batched matrix")
    k_a = a.shape[-1]
    k_b = b.shape[0] if b.ndim == 1 else b.shape[-2]
    if k_a != k_b:
        raise ShapeError("matmul", a.shape, b.shape, detail=f"inner dims {k_a} != {k_b}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError("matmul", a.shape, b.shape, detail="batch dims") from None

    def bw(g):
        A, B = a.data, b.data
        if B.ndim == 1:
            ga = g[..., None] * B
            gb = A.reshape(-1, k_a).T @ g.reshape(-1)
            return ga, gb
        if A.ndim == 1:
            return B @ g, np.multiply.outer(A, g)
        ga = g @ np.swapaxes(B, -1, -2)
        if B.ndim == 2:
            gb = A.reshape(-1, k_a).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = _unbroadcast(np.swapaxes(A, -1, -2) @ g, b.shape)
        return _unbroadcast(ga, a.shape), gb

    return make_result(out, "matmul", (a, b), bw)


# --- structural -------------------------------------------------------------

def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [t if isinstance(t, Tensor) else as_tensor(t, like=tensors[0]) for t in tensors]
    ref = tensors[0]
    nd = ref.ndim
    ax = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != ref.shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat(axis={axis})", ref.shape, t.shape)
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)
    out = np.concatenate([t.data for t in tensors], axis=ax)

    def bw(g):
        parts = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            sl = [slice(None)] * nd
            sl[ax] = slice(lo, hi)
            parts.append(g[tuple(sl)])
        return tuple(parts)

    return make_result(out, "concat", tensors, bw)


def stack(tensors, axis: int = 0) -> Tensor:
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concat(expanded, axis=axis)


def _is_basic(key) -> bool:
    if not isinstance(key, tuple):
        key = (key,)
    return all(k is None or k is Ellipsis or isinstance(k, (int, np.integer, slice)) for k in key)


def index(x: Tensor, key) -> Tensor:
    """``x[key]`` (slice op); fancy indices accumulate gradients for repeats."""
    try:
        out = x.data[key]
    except IndexError as exc:
        raise ShapeError("slice", x.shape, detail=str(exc)) from None
    basic = _is_basic(key)

    def bw(g):
        gx = np.zeros_like(x.data)
        if basic:
            gx[key] = g
        else:
            np.add.at(gx, key, g)
        return (gx,)

    return make_result(np.array(out, copy=basic), "slice", (x,), bw)


def gather(x: Tensor, idx, axis: int) -> Tensor:
    """``take_along_axis``; ``idx`` has x's rank and broadcasts elsewhere."""
    idx = np.asarray(idx, dtype=np.intp)
    if idx.ndim != x.ndim:
        raise ShapeError("gather", x.shape, idx.shape, detail="index rank must match")
    out = np.take_along_axis(x.data, idx, axis)

    def bw(g):
        gx = np.zeros_like(x.data)
        grids = list(np.indices(out.shape, sparse=True))
        grids[axis] = np.broadcast_to(idx, out.shape)
        np.add.at(gx, tuple(grids), g)
        return (gx,)

    return make_result(out, "gather", (x,), bw)


def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError("reshape", x.shape, tuple(shape)) from None
    return make_result(out, "reshape", (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(a % x.ndim for a in axes)
    inv = np.argsort(axes)
    return make_result(np.transpose(x.data, axes), "transpose", (x,),
                       lambda g: (np.transpose(g, inv),))


def swapaxes(x: Tensor, a1: int, a2: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a1], axes[a2] = axes[a2], axes[a1]
    return transpose(x, axes)


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError("broadcast_to", x.shape, shape) from None
    return make_result(np.ascontiguousarray(out), "broadcast_to", (x,),
                       lambda g: (_unbroadcast(g, x.shape),))


# --- nonlinearities ---------------------------------------------------------

def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return make_result(y, "tanh", (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)
    return make_result(y, "sigmoid", (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    pos = x.data > 0
    return make_result(np.where(pos, x.data, 0).astype(x.dtype), "relu", (x,),
                       lambda g: (g * pos,))


def exp(x: Tensor) -> Tensor:
    with np.errstate(over="ignore"):
        y = np.exp(x.data)
    if not np.all(np.isfinite(y)):
        raise DomainError(f"exp: overflow for input max {np.max(x.data):.6g}")
    return make_result(y, "exp", (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    if np.any(~(x.data > 0)):
        raise DomainError(f"log: non-positive input (min {np.min(x.data):.6g})")
    return make_result(np.log(x.data), "log", (x,), lambda g: (g / x.data,))


def _masked_shift(x: np.ndarray, axis: int, mask):
    """Return (x - rowmax) with masked entries at -inf, plus the row max."""
    if mask is not None:
        x = np.where(mask, x, -np.inf)
    m = np.max(x, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0).astype(x.dtype)
    return x - m, m


def softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    m = None if mask is None else _mask_like(mask, x.data, "softmax")
    z, _ = _masked_shift(x.data, axis, m)
    e = np.exp(z)
    s = e.sum(axis=axis, keepdims=True)
    y = e / np.where(s == 0, 1, s)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make_result(y, "softmax", (x,), bw)


def log_softmax(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    """Log-probabilities; masked entries are reported as 0 and get no gradient."""
    m = None if mask is None else _mask_like(mask, x.data, "log_softmax")
    z, _ = _masked_shift(x.data, axis, m)
    e = np.exp(z)
    s = e.sum(axis=axis, keepdims=True)
    if np.any(s == 0):
        raise DomainError("log_softmax: a row has no unmasked entries")
    y = z - np.log(s)
    p = e / s
    if m is not None:
        y = np.where(m, y, 0).astype(x.dtype)

    def bw(g):
        if m is not None:
            g = np.where(m, g, 0)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return make_result(y, "log_softmax", (x,), bw)


def logsumexp(x: Tensor, axis: int = -1, mask=None) -> Tensor:
    m = None if mask is None else _mask_like(mask, x.data, "logsumexp")
    z, shift = _masked_shift(x.data, axis, m)
    e = np.exp(z)
    s = e.sum(axis=axis, keepdims=True)
    if np.any(s == 0):
        raise DomainError("logsumexp: a row has no unmasked entries")
    out = np.squeeze(np.log(s) + shift, axis=axis)
    p = e / s
    return make_result(out, "logsumexp", (x,), lambda g: (np.expand_dims(g, axis) * p,))


# --- reductions -------------------------------------------------------------

def sum(x: Tensor, axis=None, keepdims: bool = False, mask=None) -> Tensor:  # noqa: A001
    w = None if mask is None else _mask_like(mask, x.data, "sum").astype(x.dtype)
    data = x.data if w is None else x.data * w
    out = np.sum(data, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        g = np.broadcast_to(g, x.shape)
        return (g * w if w is not None else np.array(g),)

    return make_result(np.asarray(out, dtype=x.dtype), "sum", (x,), bw)


def mean(x: Tensor, axis=None, keepdims: bool = False, mask=None) -> Tensor:
    """Mean over ``axis``; with a mask, averages real entries only (empty -> 0)."""
    if mask is None:
        w = np.ones(x.shape, dtype=x.dtype)
    else:
        w = _mask_like(mask, x.data, "mean").astype(x.dtype)
    count = np.sum(w, axis=axis, keepdims=True)
    scale = np.where(count > 0, 1.0 / np.maximum(count, 1), 0).astype(x.dtype)
    out = np.sum(x.data * w * scale, axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape) * w * scale,)

    return make_result(np.asarray(out, dtype=x.dtype), "mean", (x,), bw)


def max_over_time(x: Tensor, axis: int = 1, mask=None) -> Tensor:
    """Max along ``axis``; the gradient goes to the single argmax position."""
    data = x.data
    if mask is not None:
        m = _mask_like(mask, data, "max_over_time")
        data = np.where(m, data, -np.inf)
    am = np.argmax(data, axis=axis)
    amk = np.expand_dims(am, axis)
    out = np.take_along_axis(data, amk, axis)
    empty = ~np.isfinite(out)
    out = np.squeeze(np.where(empty, 0, out), axis).astype(x.dtype)

    def bw(g):
        gx = np.zeros_like(x.data)
        gk = np.where(empty, 0, np.expand_dims(g, axis))
        np.put_along_axis(gx, amk, gk, axis)
        return (gx,)

    return make_result(out, "max_over_time", (x,), bw)


def cumsum(x: Tensor, axis: int) -> Tensor:
    def bw(g):
        return (np.flip(np.cumsum(np.flip(g, axis), axis=axis), axis),)

    return make_result(np.cumsum(x.data, axis=axis), "cumsum", (x,), bw)


# --- embedding, convolution, dropout ----------------------------------------

def embedding_lookup(table: Tensor, ids, padding_idx: int | None = None) -> Tensor:
    ids = np.asarray(ids, dtype=np.intp)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ShapeError("embedding_lookup", table.shape, ids.shape, detail="id out of range")
    out = table.data[ids]

    def bw(g):
        gt = np.zeros_like(table.data)
        np.add.at(gt, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        if padding_idx is not None:
            gt[padding_idx] = 0
        return (gt,)

    return make_result(out, "embedding_lookup", (table,), bw)


def conv1d(x: Tensor, kernel: Tensor, bias: Tensor | None = None) -> Tensor:
    """Same-padded 1-D convolution over axis 1.

    x: (N, T, C_in); kernel: (C_in, C_out, width) with odd width.
    """
    if x.ndim != 3 or kernel.ndim != 3 or kernel.shape[0] != x.shape[2] or kernel.shape[2] % 2 != 1:
        raise ShapeError("conv1d", x.shape, kernel.shape)
    N, T, cin = x.shape
    cout, width = kernel.shape[1], kernel.shape[2]
    pad = width // 2
    xp = np.pad(x.data, ((0, 0), (pad, pad), (0, 0)))
    cols = np.stack([xp[:, k:k + T] for k in range(width)], axis=2).reshape(N, T, width * cin)
    k2 = kernel.data.transpose(2, 0, 1).reshape(width * cin, cout)
    out = cols @ k2
    if bias is not None:
        if bias.shape != (cout,):
            raise ShapeError("conv1d", kernel.shape, bias.shape, detail="bias")
        out = out + bias.data
    inputs = (x, kernel) if bias is None else (x, kernel, bias)

    def bw(g):
        g2 = g.reshape(-1, cout)
        gk2 = cols.reshape(-1, width * cin).T @ g2
        gkernel = gk2.reshape(width, cin, cout).transpose(1, 2, 0)
        gcols = (g @ k2.T).reshape(N, T, width, cin)
        gxp = np.zeros_like(xp)
        for k in range(width):
            gxp[:, k:k + T] += gcols[:, :, k]
        grads = [gxp[:, pad:pad + T], gkernel]
        if bias is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_result(out, "conv1d", inputs, bw)


def dropout(x: Tensor, mask) -> Tensor:
    """Multiply by an externally supplied (already rescaled) dropout mask."""
    m = np.asarray(mask, dtype=x.dtype)
    try:
        out = x.data * m
    except ValueError:
        raise ShapeError("dropout", x.shape, m.shape) from None
    return make_result(out, "dropout", (x,), lambda g: (_unbroadcast(g * m, x.shape),))


# --- recurrent kernel -------------------------------------------------------

def lstm(x: Tensor, w: Tensor, b: Tensor, mask=None, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over axis 1 of ``x`` (B, T, I).

    ``w`` is (I + H, 4H) acting on ``[x_t; h_{t-1}]``, gates ordered
    (input, forget, cell, output).  Masked steps hold the state and emit zeros,
    so right-padded batches run correctly in both directions.
    """
    B, T, I = x.shape
    if w.ndim != 2 or w.shape[1] % 4 or w.shape[0] - I != w.shape[1] // 4:
        raise ShapeError("lstm", x.shape, w.shape)
    H = w.shape[1] // 4
    if b.shape != (4 * H,):
        raise ShapeError("lstm", w.shape, b.shape, detail="bias")
    dt = x.dtype
    m_all = np.ones((B, T), dtype=dt) if mask is None else np.asarray(mask, dtype=dt)
    wx, wh = w.data[:I], w.data[I:]
    xw = x.data @ wx + b.data
    steps = range(T - 1, -1, -1) if reverse else range(T)
    h = np.zeros((B, H), dtype=dt)
    c = np.zeros((B, H), dtype=dt)
    out = np.zeros((B, T, H), dtype=dt)
    cache = {}
    for t in steps:
        z = xw[:, t] + h @ wh
        i = expit(z[:, :H])
        f = expit(z[:, H:2 * H])
        gg = np.tanh(z[:, 2 * H:3 * H])
        o = expit(z[:, 3 * H:])
        c_new = f * c + i * gg
        tc = np.tanh(c_new)
        h_new = o * tc
        m = m_all[:, t, None]
        cache[t] = (i, f, gg, o, c, tc, h, m)
        out[:, t] = m * h_new
        c = m * c_new + (1 - m) * c
        h = m * h_new + (1 - m) * h

    def bw(gout):
        dxw = np.zeros_like(xw)
        dwh = np.zeros_like(wh)
        dh_next = np.zeros((B, H), dtype=dt)
        dc_next = np.zeros((B, H), dtype=dt)
        for t in reversed(list(steps)):
            i, f, gg, o, c_prev, tc, h_prev, m = cache[t]
            dh_new = m * (gout[:, t] + dh_next)
            dc_new = m * dc_next + dh_new * o * (1 - tc * tc)
            dz = np.concatenate([
                dc_new * gg * i * (1 - i),
                dc_new * c_prev * f * (1 - f),
                dc_new * i * (1 - gg * gg),
                dh_new * tc * o * (1 - o),
            ], axis=1)
            dxw[:, t] = dz
            dwh += h_prev.T @ dz
            dh_next = dz @ wh.T + (1 - m) * dh_next
            dc_next = dc_new * f + (1 - m) * dc_next
        dx = dxw @ wx.T
        dwx = x.data.reshape(-1, I).T @ dxw.reshape(-1, 4 * H)
        return dx, np.concatenate([dwx, dwh], axis=0), dxw.sum(axis=(0, 1))

    return make_result(out, "lstm", (x, w, b), bw)
