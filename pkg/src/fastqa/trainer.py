"""Adam training loop with dev-F1 learning-rate halving and checkpointing."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .batching import make_batch
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .evaluator import evaluate
from .models import MODELS, eligible_for_bow
from .text import Vocabulary, cut_context

log = logging.getLogger(__name__)

MODEL_DEFAULTS = {
    "bow": dict(n=150, batch_size=32, dropout_rate=0.2, use_char=False),
    "fastqa": dict(n=300, batch_size=64, dropout_rate=0.5, use_char=True),
    "fastqaext": dict(n=300, batch_size=64, dropout_rate=0.5, use_char=True),
}


@dataclass
class TrainConfig:
    """``None`` fields take the per-model default on construction.

    ``checkpoint_every`` counts mini-batches; ``None`` for fastqa/fastqaext
    means 1000, and for bow means once per epoch.
    """

    model: str = "fastqa"
    n: int | None = None
    lr: float = 1e-3
    batch_size: int | None = None
    dropout_rate: float | None = None
    checkpoint_every: int | None = None
    beam_k: int = 5
    max_context: int = 400
    seed: int = 0
    use_char: bool | None = None
    char_dim: int = 50
    char_out: int = 100
    wiq_binary: bool = True
    wiq_weighted: bool = True
    self_mask: bool = False
    gold_reduction: str = "min"
    clip_norm: float | None = 5.0
    patience: int = 5
    min_lr: float = 1e-6
    max_epochs: int = 10
    max_steps: int | None = None
    eval_batch_size: int = 64
    dtype: str = "float32"

    def __post_init__(self):
        if self.model not in MODEL_DEFAULTS:
            raise ValueError(f"unknown model {self.model!r}")
        for k, v in MODEL_DEFAULTS[self.model].items():
            if getattr(self, k) is None:
                setattr(self, k, v)
        if self.checkpoint_every is None and self.model != "bow":
            self.checkpoint_every = 1000
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout rate must be in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def build_model(config: TrainConfig, embeddings: np.ndarray, n_chars: int):
    cls = MODELS[config.model]
    kw = dict(n=config.n, use_char=config.use_char, char_dim=config.char_dim, char_out=config.char_out,
              rng=np.random.default_rng([config.seed, 0]), dtype=np.dtype(config.dtype).type)
    if config.model != "bow":
        kw.update(wiq_binary=config.wiq_binary, wiq_weighted=config.wiq_weighted,
                  gold_reduction=config.gold_reduction)
    if config.model == "fastqaext":
        kw["self_mask"] = config.self_mask
    return cls(embeddings, n_chars, **kw)


# --- optimizer pieces ------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict) -> "AdamState":
        return cls({k: np.zeros_like(p.data) for k, p in params.items()},
                   {k: np.zeros_like(p.data) for k, p in params.items()})


def global_norm(grads: dict) -> float:
    return float(np.sqrt(sum(float(np.sum(np.square(g, dtype=np.float64))) for g in grads.values())))


def adam_step(params: dict, grads: dict, state: AdamState, lr: float, clip_norm: float | None = None) -> bool:
    """In-place bias-corrected Adam update.  Returns False (and changes
    nothing) if any gradient is non-finite."""
    if not all(np.all(np.isfinite(g)) for g in grads.values()):
        return False
    if clip_norm is not None:
        norm = global_norm(grads)
        if norm > clip_norm:
            scale = clip_norm / norm
            grads = {k: g * np.asarray(scale, dtype=g.dtype) for k, g in grads.items()}
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for k, p in params.items():
        g = grads.get(k)
        if g is None:
            g = np.zeros_like(p.data)
        dt = p.data.dtype
        m = state.m[k] = (dt.type(b1) * state.m[k] + dt.type(1 - b1) * g).astype(dt)
        v = state.v[k] = (dt.type(b2) * state.v[k] + dt.type(1 - b2) * g * g).astype(dt)
        m_hat = m / dt.type(c1)
        v_hat = v / dt.type(c2)
        p.data -= (dt.type(lr) * m_hat / (np.sqrt(v_hat) + dt.type(state.eps))).astype(dt)
    return True


def lr_schedule_update(f1_history, lr: float, floor: float = 1e-6) -> float:
    """Halve when the latest checkpoint F1 is below the previous one."""
    if len(f1_history) >= 2 and f1_history[-1] < f1_history[-2]:
        return max(lr / 2.0, floor)
    return lr


def variational_dropout_mask(rng: np.random.Generator, batch_size: int, dim: int, rate: float,
                             dtype=np.float32) -> np.ndarray | None:
    """(B, 1, d) inverted-dropout mask, shared across all positions of an example."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return None
    keep = rng.random((batch_size, 1, dim)) >= rate
    return (keep / (1.0 - rate)).astype(dtype)


def variational_input_dropout(emb, rate: float, rng: np.random.Generator, training: bool = True):
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if not training or rate == 0.0:
        return emb
    data = emb.data if isinstance(emb, Tensor) else np.asarray(emb)
    mask = variational_dropout_mask(rng, data.shape[0], data.shape[-1], rate, data.dtype)
    return emb * mask


# --- training loop -----------------------------------------------------------

def predict_examples(model, examples, vocab: Vocabulary, beam_k: int = 5, batch_size: int = 64) -> dict:
    """id -> answer text.  Examples are batched in the given order."""
    preds = {}
    dtype = np.dtype(model.dtype).type
    for i in range(0, len(examples), batch_size):
        chunk = examples[i:i + batch_size]
        batch = make_batch(chunk, vocab, model.wiq_policy, dtype=dtype)
        for ex, p in zip(chunk, model.predict(batch, beam_k=beam_k)):
            preds[ex.id] = p.answer_text
    return preds


def prepare_training_examples(examples, config: TrainConfig) -> list:
    out = []
    for ex in examples:
        if not ex.answerable:
            continue
        cut = cut_context(ex, config.max_context)
        if cut is None:
            continue
        if config.model == "bow" and not eligible_for_bow(cut):
            continue
        out.append(cut)
    return out


@dataclass
class TrainerState:
    step: int = 0
    epoch: int = 0
    batch_in_epoch: int = 0
    lr: float = 1e-3
    f1_history: list = field(default_factory=list)
    best_f1: float = -1.0
    best_step: int = -1
    bad_checkpoints: int = 0
    loss_sum: float = 0.0
    loss_count: int = 0
    skipped_steps: int = 0
    stopped: bool = False


class Trainer:
    """Deterministic given (config, data): shuffling and dropout draw from
    generators seeded by (seed, epoch) and (seed, step), so a run resumed from
    a checkpoint reproduces the uninterrupted one."""

    def __init__(self, config: TrainConfig, vocab: Vocabulary, embeddings: np.ndarray,
                 train_examples, dev_examples, out_dir=None, model=None):
        if not dev_examples:
            raise ValueError("dev set is empty")
        self.config = config
        self.vocab = vocab
        self.embeddings = embeddings
        self.model = model if model is not None else build_model(config, embeddings, vocab.n_chars)
        self.train_examples = prepare_training_examples(train_examples, config)
        if not self.train_examples:
            raise ValueError("no usable training examples")
        self.dev_examples = list(dev_examples)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.adam = AdamState.for_params(self.model.params)
        self.state = TrainerState(lr=config.lr)
        self.dtype = np.dtype(config.dtype).type
        self.history: list[dict] = []
        self._t0 = time.perf_counter()

    # -- batches

    def n_batches_per_epoch(self) -> int:
        return -(-len(self.train_examples) // self.config.batch_size)

    def epoch_order(self, epoch: int) -> np.ndarray:
        return np.random.default_rng([self.config.seed, 1, epoch]).permutation(len(self.train_examples))

    def next_batch(self):
        st, bs = self.state, self.config.batch_size
        order = self.epoch_order(st.epoch)
        idx = order[st.batch_in_epoch * bs:(st.batch_in_epoch + 1) * bs]
        return make_batch([self.train_examples[i] for i in idx], self.vocab, self.model.wiq_policy,
                          dtype=self.dtype)

    # -- one update

    def train_step(self) -> float:
        st, cfg = self.state, self.config
        batch = self.next_batch()
        rng = np.random.default_rng([cfg.seed, 2, st.step])
        mask = variational_dropout_mask(rng, batch.size, self.model.input_dim, cfg.dropout_rate, self.dtype)
        params = self.model.params
        for p in params.values():
            p.grad = None
        loss = self.model.loss(batch, mask)
        loss.backward()
        grads = {k: p.grad for k, p in params.items() if p.grad is not None}
        value = float(loss.data)
        if not np.isfinite(value) or not adam_step(params, grads, self.adam, st.lr, cfg.clip_norm):
            st.skipped_steps += 1
            self._log({"event": "skipped_step", "step": st.step, "loss": value})
        else:
            st.loss_sum += value
            st.loss_count += 1
        st.step += 1
        st.batch_in_epoch += 1
        if st.batch_in_epoch >= self.n_batches_per_epoch():
            st.epoch += 1
            st.batch_in_epoch = 0
            if cfg.checkpoint_every is None:
                self.checkpoint()
        if cfg.checkpoint_every is not None and st.step % cfg.checkpoint_every == 0:
            self.checkpoint()
        return value

    # -- checkpoints

    def evaluate_dev(self):
        preds = predict_examples(self.model, self.dev_examples, self.vocab, self.config.beam_k,
                                 self.config.eval_batch_size)
        golds = {ex.id: list(ex.raw_answers) for ex in self.dev_examples}
        return evaluate(preds, golds)

    def checkpoint(self) -> dict:
        st = self.state
        res = self.evaluate_dev()
        st.f1_history.append(res.f1)
        new_lr = lr_schedule_update(st.f1_history, st.lr, self.config.min_lr)
        if new_lr != st.lr:
            self._log({"event": "lr_halved", "step": st.step, "f1_prev": st.f1_history[-2],
                       "f1_curr": st.f1_history[-1], "lr": new_lr})
        st.lr = new_lr
        improved = res.f1 > st.best_f1
        if improved:
            st.best_f1, st.best_step, st.bad_checkpoints = res.f1, st.step, 0
        else:
            st.bad_checkpoints += 1
        loss = st.loss_sum / st.loss_count if st.loss_count else float("nan")
        st.loss_sum, st.loss_count = 0.0, 0
        if st.bad_checkpoints >= self.config.patience:
            st.stopped = True
        record = {"step": st.step, "loss": loss, "dev_em": res.exact_match, "dev_f1": res.f1,
                  "lr": st.lr, "wall_time": time.perf_counter() - self._t0}
        self._log(record)
        if self.out_dir is not None:
            self.save(self.out_dir / "last.ckpt")
            if improved:
                self.save(self.out_dir / "best.ckpt")
        return record

    def _log(self, record: dict):
        self.history.append(record)
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            with open(self.out_dir / "metrics.jsonl", "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")
        log.info("%s", record)

    def done(self) -> bool:
        cfg, st = self.config, self.state
        if st.stopped or st.epoch >= cfg.max_epochs:
            return True
        return cfg.max_steps is not None and st.step >= cfg.max_steps

    def run(self, max_steps: int | None = None) -> list[float]:
        """Train until done; ``max_steps`` additionally bounds this call."""
        losses = []
        while not self.done() and (max_steps is None or len(losses) < max_steps):
            losses.append(self.train_step())
        return losses

    def train(self) -> dict:
        self.run()
        st = self.state
        return {"best_f1": st.best_f1, "best_step": st.best_step, "steps": st.step,
                "history": self.history}

    # -- persistence

    def state_arrays(self) -> dict:
        arrays = {f"param/{k}": p.data for k, p in self.model.params.items()}
        arrays.update({f"adam_m/{k}": a for k, a in self.adam.m.items()})
        arrays.update({f"adam_v/{k}": a for k, a in self.adam.v.items()})
        return arrays

    def save(self, path):
        meta = {"config": self.config.to_dict(), "trainer": asdict(self.state), "adam_t": self.adam.t,
                "words_sha256": self.vocab.words_hash(), "chars_sha256": self.vocab.chars_hash(),
                "chars": self.vocab.id_to_char, "model": self.config.model}
        save_checkpoint(path, self.state_arrays(), meta)

    def restore(self, path):
        arrays, meta = load_checkpoint(path)
        if meta["words_sha256"] != self.vocab.words_hash():
            raise CheckpointError("vocabulary hash mismatch")
        if meta["chars_sha256"] != self.vocab.chars_hash():
            raise CheckpointError("character inventory mismatch")
        if meta["config"] != self.config.to_dict():
            raise CheckpointError("checkpoint config differs from trainer config")
        load_params(self.model, arrays)
        for k in self.model.params:
            self.adam.m[k] = arrays[f"adam_m/{k}"].astype(self.dtype)
            self.adam.v[k] = arrays[f"adam_v/{k}"].astype(self.dtype)
        self.adam.t = meta["adam_t"]
        self.state = TrainerState(**meta["trainer"])
        return self


def load_params(model, arrays: dict):
    for k, p in model.params.items():
        key = f"param/{k}"
        if key not in arrays:
            raise CheckpointError(f"checkpoint lacks parameter {k}")
        if arrays[key].shape != p.data.shape:
            raise CheckpointError(f"shape mismatch for {k}: {arrays[key].shape} vs {p.data.shape}")
        p.data = arrays[key].astype(p.data.dtype)


def model_from_checkpoint(path, embeddings: np.ndarray, vocab: Vocabulary):
    """Rebuild a model for inference; the character inventory comes from the file."""
    arrays, meta = load_checkpoint(path)
    if meta["words_sha256"] != vocab.words_hash():
        raise CheckpointError("vocabulary hash mismatch")
    config = TrainConfig.from_dict(meta["config"])
    vocab = Vocabulary(list(vocab.id_to_token), list(meta["chars"]))
    model = build_model(config, embeddings, vocab.n_chars)
    load_params(model, arrays)
    return model, config, vocab
