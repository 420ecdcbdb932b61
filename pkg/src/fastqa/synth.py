"""Synthetic extractive-QA task solvable by type plus context matching.

Each context has six ten-token sentences.  Every sentence holds one entity
with a three-word cluster of fillers right next to it.  The question names
an entity type and the (shuffled) cluster of the answer entity:
``which <type> is near <c1> <c2> <c3> ?``.  Two same-type distractors make
type matching alone insufficient.  In "hard" examples one of them sits just
across the sentence boundary from the answer's cluster, so a window-count
heuristic cannot tell it from the answer but a sequence model can.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TYPES = {
    "color": ["red", "blue", "green", "amber", "violet"],
    "city": ["paris", "lima", "oslo", "cairo", "delhi"],
    "year": ["1066", "1492", "1776", "1815", "1969"],
    "animal": ["otter", "lynx", "heron", "bison", "gecko"],
    "fruit": ["mango", "plum", "kiwi", "lemon", "fig"],
    "metal": ["zinc", "iron", "cobalt", "nickel", "tin"],
    "river": ["nile", "volga", "rhine", "indus", "amazon"],
    "planet": ["mars", "venus", "saturn", "jupiter", "mercury"],
    "sport": ["polo", "judo", "rugby", "golf", "squash"],
    "tool": ["hammer", "chisel", "wrench", "saw", "drill"],
}
FUNCTION_WORDS = ["which", "is", "near", "?", "."]
FILLERS = ["bax", "cor", "dut", "fep", "gim", "hol", "jun", "kev", "lom", "mip", "nux", "pav",
           "quo", "rab", "sil", "tek", "uvo", "vam", "wex", "yor", "zed", "bri", "cla", "dro",
           "fli", "gru", "ple", "sna", "tri", "vos", "wim", "zor", "kra", "mel", "nod"]

N_SENTENCES = 6
SENTENCE_SLOTS = 9        # tokens before the full stop
CLUSTER = 3


@dataclass
class SynthConfig:
    n_train: int = 5000
    n_dev: int = 500
    seed: int = 0
    hard_fraction: float = 0.5
    dim: int = 50
    noise: float = 0.5


def vocabulary() -> list[str]:
    words = list(TYPES)
    for ents in TYPES.values():
        words.extend(ents)
    words.extend(FUNCTION_WORDS)
    words.extend(FILLERS)
    return words


def make_embeddings(cfg: SynthConfig) -> dict:
    """Entities and their type noun share a type centroid; everything else is random."""
    rng = np.random.default_rng([cfg.seed, 7])
    out = {}
    for t, ents in TYPES.items():
        centroid = rng.normal(0.0, 1.0, cfg.dim)
        out[t] = centroid + rng.normal(0.0, cfg.noise, cfg.dim)
        for e in ents:
            out[e] = centroid + rng.normal(0.0, cfg.noise, cfg.dim)
    for w in FUNCTION_WORDS + FILLERS:
        out[w] = rng.normal(0.0, 1.0, cfg.dim)
    return out


def _block(entity: str, cluster: list, cluster_left: bool) -> list:
    return list(cluster) + [entity] if cluster_left else [entity] + list(cluster)


def _sentence(block: list, offset: int, rng, fillers: list) -> list:
    pad = [fillers[i] for i in rng.integers(0, len(fillers), SENTENCE_SLOTS - len(block))]
    return pad[:offset] + block + pad[offset:] + ["."]


def make_example(rng: np.random.Generator, hard: bool) -> tuple[list, list, int]:
    """Returns (context tokens, question tokens, answer token index)."""
    types = list(TYPES)
    t_ans = types[rng.integers(len(types))]
    ans, d1, d2 = rng.choice(TYPES[t_ans], size=3, replace=False)
    others = [t for t in types if t != t_ans]
    other_types = rng.choice(others, size=N_SENTENCES - 3, replace=False)
    entities = [ans, d1, d2] + [TYPES[t][rng.integers(5)] for t in other_types]

    perm = rng.permutation(len(FILLERS))
    q_cluster = [FILLERS[i] for i in perm[:CLUSTER]]
    rest = [FILLERS[i] for i in perm[CLUSTER:]]
    clusters = [q_cluster] + [list(rng.choice(rest, size=CLUSTER, replace=False))
                              for _ in range(N_SENTENCES - 1)]
    left = [bool(rng.integers(2)) for _ in range(N_SENTENCES)]
    free = SENTENCE_SLOTS - CLUSTER - 1
    offsets = [int(rng.integers(0, free + 1)) for _ in range(N_SENTENCES)]

    # sentence order: answer sentence at position a, others shuffled around it
    order = list(rng.permutation(N_SENTENCES))
    a = order.index(0)
    if hard:
        # d1 goes just across the full stop on the cluster side of the answer
        nb = a - 1 if left[0] else a + 1
        if not 0 <= nb < N_SENTENCES:
            left[0] = not left[0]
            nb = a - 1 if left[0] else a + 1
        j = order.index(1)
        order[nb], order[j] = order[j], order[nb]
        a = order.index(0)
        if left[0]:
            offsets[0], left[1], offsets[1] = 0, True, free
        else:
            offsets[0], left[1], offsets[1] = free, False, 0
    else:
        # same-type distractors never share a boundary with the answer sentence
        near = {a - 1, a + 1}
        for k in (1, 2):
            pos = order.index(k)
            if pos in near:
                swap = next(i for i in range(N_SENTENCES)
                            if i not in near and i != a and order[i] not in (1, 2))
                order[pos], order[swap] = order[swap], order[pos]
    context, answer_idx = [], -1
    for k in order:
        block = _block(entities[k], clusters[k], left[k])
        sent = _sentence(block, offsets[k], rng, rest)
        if k == 0:
            answer_idx = len(context) + offsets[k] + (CLUSTER if left[k] else 0)
        context.extend(sent)
    question = ["which", t_ans, "is", "near"] + list(rng.permutation(q_cluster)) + ["?"]
    assert context[answer_idx] == ans
    return context, question, answer_idx


def to_squad(examples: list, prefix: str) -> dict:
    paragraphs = []
    for i, (ctx, q, idx) in enumerate(examples):
        text = " ".join(ctx)
        start = len(" ".join(ctx[:idx])) + (1 if idx else 0)
        paragraphs.append({
            "context": text,
            "qas": [{"id": f"{prefix}{i:05d}", "question": " ".join(q),
                     "answers": [{"text": ctx[idx], "answer_start": start}]}],
        })
    return {"version": "synth-1", "data": [{"title": prefix, "paragraphs": paragraphs}]}


def generate(cfg: SynthConfig) -> tuple[dict, dict, dict]:
    rng = np.random.default_rng([cfg.seed, 1])
    def split(n, prefix):
        return to_squad([make_example(rng, bool(rng.random() < cfg.hard_fraction)) for _ in range(n)], prefix)
    return split(cfg.n_train, "train"), split(cfg.n_dev, "dev"), make_embeddings(cfg)


def write_dataset(out_dir, cfg: SynthConfig) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    train, dev, emb = generate(cfg)
    paths = {"train": out / "train.json", "dev": out / "dev.json", "embeddings": out / "embeddings.txt"}
    for key, obj in (("train", train), ("dev", dev)):
        tmp = paths[key].with_suffix(".json.tmp")
        tmp.write_text(json.dumps(obj), encoding="utf-8")
        tmp.replace(paths[key])
    tmp = paths["embeddings"].with_suffix(".txt.tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        for w in vocabulary():
            fh.write(w + " " + " ".join(f"{x:.6f}" for x in emb[w]) + "\n")
    tmp.replace(paths["embeddings"])
    return {k: str(v) for k, v in paths.items()}
