"""Desk-scale training presets on the synthetic task, shared by scripts and tests."""

from __future__ import annotations

import time
from pathlib import Path

from .synth import SynthConfig, write_dataset
from .text import ingest_squad, load_embeddings
from .trainer import TrainConfig, Trainer

SYNTH_PRESETS = {
    "bow": dict(model="bow", n=32, batch_size=32, dropout_rate=0.2, use_char=False),
    "fastqa": dict(model="fastqa", n=32, batch_size=64, dropout_rate=0.2, use_char=False),
    "fastqaext": dict(model="fastqaext", n=32, batch_size=64, dropout_rate=0.2, use_char=False),
}


def ensure_synth(data_dir, seed: int = 0, n_train: int = 5000, n_dev: int = 500) -> dict:
    data_dir = Path(data_dir)
    paths = {k: data_dir / f"{k}.{ext}" for k, ext in
             (("train", "json"), ("dev", "json"), ("embeddings", "txt"))}
    if not all(p.exists() for p in paths.values()):
        write_dataset(data_dir, SynthConfig(n_train=n_train, n_dev=n_dev, seed=seed))
    return paths


def synth_config(model: str, seed: int = 0, epochs: int = 2, wiq: bool = True, n_train: int = 5000,
                 **overrides) -> TrainConfig:
    kw = dict(SYNTH_PRESETS[model], seed=seed, max_epochs=epochs, patience=10 ** 6)
    kw["checkpoint_every"] = -(-n_train // kw["batch_size"])      # once per epoch
    if not wiq:
        kw.update(wiq_binary=False, wiq_weighted=False)
    kw.update(overrides)
    return TrainConfig(**kw)


def train_on_synth(data_dir, model: str, seed: int = 0, epochs: int = 2, wiq: bool = True,
                   data_seed: int = 0, out_dir=None, **overrides) -> dict:
    """Train on the 5k/500 synthetic split; returns final dev metrics and the log."""
    paths = ensure_synth(data_dir, seed=data_seed)
    mode = "bow" if model == "bow" else "fastqa"
    vocab, emb = load_embeddings(paths["embeddings"], dim=SynthConfig().dim)
    train = ingest_squad(paths["train"], mode)
    dev = ingest_squad(paths["dev"], mode)
    vocab.build_chars(train)
    config = synth_config(model, seed, epochs, wiq, n_train=len(train), **overrides)
    t0 = time.perf_counter()
    trainer = Trainer(config, vocab, emb, train, dev, out_dir=out_dir)
    trainer.run()
    final = [r for r in trainer.history if "dev_em" in r][-1]
    return {"dev_em": final["dev_em"], "dev_f1": final["dev_f1"], "steps": trainer.state.step,
            "seconds": time.perf_counter() - t0, "history": trainer.history, "trainer": trainer}
