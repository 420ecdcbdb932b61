"""Gradient-check suites over the primitives and the three models.

Used by the ``gradcheck`` command and the test suite.  Everything runs in
float64 on tiny random inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, grad_check, ops
from .autodiff.gradcheck import GradCheckReport
from .batching import make_batch
from .models import BowModel, FastQAExtModel, FastQAModel
from .models.common import ParamFactory
from .models.fusion import FusionLayer
from .text import TokenizedExample, Vocabulary

WORDS = ["what", "which", "year", "is", "the", "cat", "Cat", "red", "blue", "of", "paris",
         "1066", "near", "a", "river", "?", ".", "dog", "in", "zub"]


def random_example(rng: np.random.Generator, lx: int, lq: int, ex_id: str = "q0",
                   words=WORDS, max_answer: int = 3) -> TokenizedExample:
    ctx = [words[i] for i in rng.integers(0, len(words), lx)]
    q = [words[i] for i in rng.integers(0, len(words), lq)]
    spans, pos = [], 0
    for t in ctx:
        spans.append((pos, pos + len(t)))
        pos += len(t) + 1
    raw = " ".join(ctx)
    s = int(rng.integers(0, lx))
    e = int(min(lx - 1, s + rng.integers(0, max_answer)))
    return TokenizedExample(ex_id, " ".join(q), tuple(q), tuple(ctx), tuple(spans), ((s, e),), raw,
                            (raw[spans[s][0]:spans[e][1]],))


def tiny_setup(seed: int, shapes=((11, 5), (7, 3)), dim: int = 6):
    """Random examples, a vocabulary over WORDS and a random embedding matrix."""
    rng = np.random.default_rng([seed, 11])
    examples = [random_example(rng, lx, lq, f"q{i}") for i, (lx, lq) in enumerate(shapes)]
    vocab = Vocabulary()
    for w in WORDS[:-1]:           # the last word stays out of vocabulary
        vocab.add_token(w)
    vocab.build_chars(examples)
    emb = rng.normal(0.0, 1.0, (len(vocab), dim))
    emb[:2] = 0.0
    return examples, vocab, emb


def build_tiny_model(kind: str, seed: int, n: int, emb, vocab, **kw):
    rng = np.random.default_rng([seed, 12])
    if kind == "bow":
        return BowModel(emb, vocab.n_chars, n=n, rng=rng, dtype=np.float64, **kw)
    cls = FastQAExtModel if kind == "fastqaext" else FastQAModel
    kw.setdefault("char_dim", 4)
    kw.setdefault("char_out", 5)
    return cls(emb, vocab.n_chars, n=n, rng=rng, dtype=np.float64, **kw)


def primitive_cases(seed: int) -> dict:
    """name -> (f, leaves) with f() a scalar loss."""
    rng = np.random.default_rng([seed, 13])

    def leaf(*shape, lo=None):
        data = rng.normal(size=shape) if lo is None else rng.uniform(lo, lo + 1.0, size=shape)
        return Tensor(data, requires_grad=True)

    cases = {}

    def add(name, make_out, *leaves):
        proj = np.random.default_rng([seed, 14, len(cases)])
        r = None

        def f():
            nonlocal r
            out = make_out()
            if r is None:
                r = Tensor(proj.normal(size=out.shape))
            return ops.sum(out * r)
        cases[name] = (f, list(leaves))

    a, b = leaf(3, 4), leaf(3, 4)
    add("add", lambda: ops.add(a, b), a, b)
    c, d = leaf(3, 4), leaf(4)
    add("sub_broadcast", lambda: ops.sub(c, d), c, d)
    e, f_ = leaf(2, 3, 4), leaf(1, 3, 1)
    add("elementwise_mul", lambda: ops.mul(e, f_), e, f_)
    m1, m2 = leaf(3, 5), leaf(5, 2)
    add("matmul", lambda: ops.matmul(m1, m2), m1, m2)
    m3, m4 = leaf(2, 3, 5), leaf(5, 4)
    add("matmul_batched", lambda: ops.matmul(m3, m4), m3, m4)
    m5, m6 = leaf(2, 3, 5), leaf(5)
    add("matmul_vector", lambda: ops.matmul(m5, m6), m5, m6)
    k1, k2 = leaf(2, 3), leaf(2, 5)
    add("concat", lambda: ops.concat([k1, k2], axis=1), k1, k2)
    s1, s2 = leaf(3, 2), leaf(3, 2)
    add("stack", lambda: ops.stack([s1, s2], axis=1), s1, s2)
    x = leaf(4, 5)
    add("slice", lambda: ops.index(x, (slice(1, 3), slice(None, None, 2))), x)
    xf = leaf(4, 5)
    add("fancy_index", lambda: ops.index(xf, np.array([0, 2, 2])), xf)
    g = leaf(2, 5, 3)
    gidx = rng.integers(0, 5, (2, 4, 1))
    add("gather", lambda: ops.gather(g, gidx, axis=1), g)
    r_ = leaf(2, 6)
    add("reshape", lambda: ops.reshape(r_, (3, 4)), r_)
    t = leaf(2, 3, 4)
    add("transpose", lambda: ops.transpose(t, (2, 0, 1)), t)
    sw = leaf(2, 3, 4)
    add("swapaxes", lambda: ops.swapaxes(sw, 1, 2), sw)
    bt = leaf(3, 1)
    add("broadcast_to", lambda: ops.broadcast_to(bt, (2, 3, 4)), bt)
    for name, fn in (("tanh", ops.tanh), ("sigmoid", ops.sigmoid), ("exp", ops.exp)):
        u = leaf(3, 4)
        add(name, lambda fn=fn, u=u: fn(u), u)
    z = rng.normal(size=(3, 4))
    rl = Tensor(np.sign(z) * (np.abs(z) + 0.1), requires_grad=True)    # away from the kink
    add("relu", lambda: ops.relu(rl), rl)
    lg = leaf(3, 4, lo=0.5)
    add("log", lambda: ops.log(lg), lg)
    mask = rng.random((3, 6)) < 0.7
    mask[:, 0] = True
    for name, fn in (("softmax", ops.softmax), ("log_softmax", ops.log_softmax),
                     ("logsumexp", ops.logsumexp)):
        u = leaf(3, 6)
        add(name, lambda fn=fn, u=u: fn(u, axis=-1, mask=mask), u)
    sm = leaf(3, 6)
    add("sum", lambda: ops.sum(sm, axis=1, mask=mask), sm)
    mn = leaf(3, 6)
    add("mean", lambda: ops.mean(mn, axis=1, mask=mask), mn)
    mo = leaf(2, 5, 3)
    add("max_over_time", lambda: ops.max_over_time(mo, axis=1, mask=mask[:2, :5, None]), mo)
    cs = leaf(2, 5, 3)
    add("cumsum", lambda: ops.cumsum(cs, axis=1), cs)
    table = leaf(6, 3)
    ids = rng.integers(0, 6, (2, 4))
    add("embedding_lookup", lambda: ops.embedding_lookup(table, ids), table)
    cx, ck, cb = leaf(2, 7, 3), leaf(3, 4, 5), leaf(4)
    add("conv1d", lambda: ops.conv1d(cx, ck, cb), cx, ck, cb)
    dx = leaf(2, 3, 4)
    dmask = (rng.random((2, 1, 4)) > 0.5) * 2.0
    add("dropout", lambda: ops.dropout(dx, dmask), dx)
    H = 3
    lx, lw, lb = leaf(2, 5, 4), leaf(4 + H, 4 * H), leaf(4 * H)
    lmask = np.array([[1, 1, 1, 1, 1], [1, 1, 1, 0, 0]], dtype=bool)
    add("lstm", lambda: ops.lstm(lx, lw, lb, mask=lmask), lx, lw, lb)
    rx, rw, rb = leaf(2, 5, 4), leaf(4 + H, 4 * H), leaf(4 * H)
    add("lstm_reverse", lambda: ops.lstm(rx, rw, rb, mask=lmask, reverse=True), rx, rw, rb)
    return cases


def check_primitives(seed: int, tol: float = 1e-5) -> dict:
    return {name: grad_check(f, leaves, tol=tol) for name, (f, leaves) in primitive_cases(seed).items()}


def check_model(kind: str, seed: int, n: int | None = None, tol: float = 1e-5,
                max_coords: int | None = 12) -> GradCheckReport:
    """Full training loss of a tiny model against finite differences."""
    if kind == "bow":
        examples, vocab, emb = tiny_setup(seed, shapes=((12, 5), (9, 4)))
        model = build_tiny_model("bow", seed, n or 9, emb, vocab, use_char=True, char_dim=4, char_out=5)
    else:
        examples, vocab, emb = tiny_setup(seed)
        model = build_tiny_model(kind, seed, n or 7, emb, vocab)
    batch = make_batch(examples, vocab, model.wiq_policy, dtype=np.float64)
    return grad_check(lambda: model.loss(batch), model.params, tol=tol, max_coords=max_coords, seed=seed)


def check_fusion(seed: int, n: int = 7, lx: int = 6, lq: int = 4, tol: float = 1e-5,
                 self_mask: bool = False, max_coords: int | None = 10) -> GradCheckReport:
    """Intra plus inter fusion, gradients w.r.t. its inputs and parameters."""
    rng = np.random.default_rng([seed, 15])
    params: dict = {}
    layer = FusionLayer(n, ParamFactory(params, rng, np.float64), self_mask=self_mask)
    for t in params.values():
        t.data += rng.normal(0.0, 0.3, t.shape)
    H = Tensor(np.tanh(rng.normal(size=(2, lx, n))), requires_grad=True, name="H")
    Z = Tensor(np.tanh(rng.normal(size=(2, lq, n))), requires_grad=True, name="Z")
    x_mask = np.ones((2, lx), dtype=bool)
    x_mask[1, lx - 2:] = False
    q_mask = np.ones((2, lq), dtype=bool)
    q_mask[1, lq - 1:] = False
    R = Tensor(rng.normal(size=(2, lx, n)) * x_mask[:, :, None])
    leaves = dict(params, H=H, Z=Z)
    return grad_check(lambda: ops.sum(layer(H, Z, x_mask, q_mask) * R), leaves, tol=tol,
                      max_coords=max_coords, seed=seed)


@dataclass
class SuiteResult:
    name: str
    seed: int
    report: GradCheckReport


DEFAULT_SUITE = ("primitives", "bow", "fastqa", "fusion")


def run_suite(models=DEFAULT_SUITE, seeds=range(10),
              n: int | None = None, tol: float = 1e-5) -> list[SuiteResult]:
    out = []
    for seed in seeds:
        for kind in models:
            if kind == "primitives":
                for name, rep in check_primitives(seed, tol).items():
                    out.append(SuiteResult(f"op:{name}", seed, rep))
            elif kind == "fusion":
                out.append(SuiteResult("fusion", seed, check_fusion(seed, n or 7, tol=tol)))
            else:
                out.append(SuiteResult(kind, seed, check_model(kind, seed, n, tol)))
    return out
