"""Command-line entry point: ``python -m fastqa <command> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
from pathlib import Path

from .checkpoint import CheckpointError
from .evaluator import diff_systems, evaluate
from .text import (CACHE_FORMAT, IngestStats, examples_from_squad, ingest_squad, load_cache,
                   load_embeddings, read_newsqa_csv, save_cache)

log = logging.getLogger("fastqa")

MODES = {"bow": "bow", "fastqa": "fastqa", "fastqaext": "fastqa"}


class CliError(Exception):
    pass


class Outputs:
    """Tracks files a command creates so they can be removed if it fails."""

    def __init__(self):
        self.paths: list[Path] = []

    def add(self, path) -> Path:
        p = Path(path)
        if not p.exists():
            self.paths.append(p)
        return p

    def cleanup(self):
        for p in reversed(self.paths):
            if p.is_dir():
                shutil.rmtree(p, ignore_errors=True)
            elif p.exists():
                p.unlink()


def write_json(path, obj):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=1, sort_keys=True), encoding="utf-8")
    os.replace(tmp, path)


def infer_dim(path) -> int:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if parts != [""]:
                return len(parts) - 1
    raise CliError(f"{path}: empty embeddings file")


def read_embeddings(path, dim=None):
    if not Path(path).is_file():
        raise CliError(f"embeddings file not found: {path}")
    return load_embeddings(path, dim or infer_dim(path))


def load_examples(path, mode: str) -> list:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"data file not found: {path}")
    if p.suffix == ".csv":
        return examples_from_squad(read_newsqa_csv(p), mode)
    with open(p, encoding="utf-8") as fh:
        head = fh.read(256)
    if CACHE_FORMAT in head:
        examples, cached_mode = load_cache(p)
        if cached_mode != mode:
            raise CliError(f"{path} was preprocessed for {cached_mode!r}, need {mode!r}")
        return examples
    return ingest_squad(p, mode)


def gold_answers(path) -> tuple[dict, dict]:
    """id -> answers and id -> question text from a SQuAD-layout file."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    golds, questions = {}, {}
    for article in data["data"]:
        for para in article["paragraphs"]:
            for qa in para["qas"]:
                golds[str(qa["id"])] = [a["text"] for a in qa.get("answers", [])]
                questions[str(qa["id"])] = qa["question"]
    return golds, questions


# --- commands ----------------------------------------------------------------


def cmd_synth(args, outputs: Outputs):
    from .synth import SynthConfig, write_dataset
    outputs.add(args.out)
    cfg = SynthConfig(n_train=args.n_train, n_dev=args.n_dev, seed=args.seed)
    paths = write_dataset(args.out, cfg)
    print(json.dumps(paths, indent=1))


def cmd_preprocess(args, outputs: Outputs):
    mode = MODES[args.model]
    stats = IngestStats()
    if args.data.endswith(".csv"):
        examples = examples_from_squad(read_newsqa_csv(args.data), mode, stats)
    else:
        if not Path(args.data).is_file():
            raise CliError(f"data file not found: {args.data}")
        examples = ingest_squad(args.data, mode, stats)
    save_cache(outputs.add(args.out), examples, mode)
    print(json.dumps({"examples": len(examples), **vars(stats)}))


def train_config_from_args(args):
    from .trainer import TrainConfig
    overrides = {"model": args.model, "seed": args.seed, "beam_k": args.beam_k,
                 "max_context": args.max_context, "lr": args.lr}
    for key, attr in (("n", "n"), ("batch_size", "batch_size"), ("dropout_rate", "dropout"),
                      ("checkpoint_every", "checkpoint_every"), ("max_steps", "max_steps"),
                      ("max_epochs", "epochs"), ("patience", "patience")):
        if getattr(args, attr) is not None:
            overrides[key] = getattr(args, attr)
    if args.no_char:
        overrides["use_char"] = False
    if args.no_wiq_b:
        overrides["wiq_binary"] = False
    if args.no_wiq_w:
        overrides["wiq_weighted"] = False
    return TrainConfig(**overrides)


def cmd_train(args, outputs: Outputs):
    from .trainer import Trainer
    config = train_config_from_args(args)
    mode = MODES[config.model]
    vocab, emb = read_embeddings(args.embeddings, args.emb_dim)
    train = load_examples(args.train, mode)
    dev = load_examples(args.dev, mode)
    vocab.build_chars(train)
    out = Path(args.out)
    resume = args.resume and (out / "last.ckpt").is_file()
    if not resume:
        outputs.add(out)
        out.mkdir(parents=True, exist_ok=True)
        metrics = out / "metrics.jsonl"
        if metrics.exists():
            metrics.unlink()
    write_json(out / "config.json", {"train": config.to_dict(), "embeddings": str(args.embeddings),
                                     "train_data": str(args.train), "dev_data": str(args.dev)})
    trainer = Trainer(config, vocab, emb, train, dev, out_dir=out)
    if resume:
        trainer.restore(out / "last.ckpt")
    summary = trainer.train()
    if trainer.state.best_step < 0:
        trainer.checkpoint()
    summary = {k: v for k, v in summary.items() if k != "history"}
    write_json(out / "summary.json", summary)
    print(json.dumps(summary))


def cmd_predict(args, outputs: Outputs):
    from .trainer import model_from_checkpoint, predict_examples
    vocab, emb = read_embeddings(args.embeddings, args.emb_dim)
    model, config, vocab = model_from_checkpoint(args.checkpoint, emb, vocab)
    examples = load_examples(args.data, MODES[config.model])
    preds = predict_examples(model, examples, vocab, beam_k=args.beam_k)
    write_json(outputs.add(args.out), preds)
    print(json.dumps({"predictions": len(preds), "out": str(args.out)}))


def cmd_evaluate(args, outputs: Outputs):
    golds, _ = gold_answers(args.gold)
    preds = json.loads(Path(args.pred).read_text(encoding="utf-8"))
    res = evaluate(preds, golds)
    print(json.dumps(res.to_dict()))
    if args.out:
        write_json(outputs.add(args.out), {**res.to_dict(), "missing": res.missing})


def cmd_gradcheck(args, outputs: Outputs) -> int:
    from .checks import DEFAULT_SUITE, run_suite
    models = DEFAULT_SUITE if args.model == "all" else (args.model,)
    results = run_suite(models, seeds=range(args.seed, args.seed + args.seeds), n=args.n, tol=args.tol)
    worst = 0.0
    for r in results:
        worst = max(worst, r.report.max_error)
        if not r.report.passed or args.verbose:
            print(f"{r.name} seed={r.seed}: {r.report.summary()}")
    failed = sum(not r.report.passed for r in results)
    print(json.dumps({"checks": len(results), "failed": failed, "max_error": worst, "tol": args.tol}))
    return 1 if failed else 0


def cmd_diff(args, outputs: Outputs):
    golds, questions = gold_answers(args.gold)
    res_a = evaluate(json.loads(Path(args.pred_a).read_text(encoding="utf-8")), golds)
    res_b = evaluate(json.loads(Path(args.pred_b).read_text(encoding="utf-8")), golds)
    report = diff_systems(res_a, res_b, questions)
    counts = {k: len(v) for k, v in report["sets"].items()}
    print(json.dumps(counts))
    if args.out:
        write_json(outputs.add(args.out), report)


# --- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fastqa", description="Extractive QA: BoW, FastQA, FastQAExt.")
    p.add_argument("--log-level", default="WARNING")
    sub = p.add_subparsers(dest="command", required=True)

    def model_flag(sp, choices=("bow", "fastqa", "fastqaext"), default="fastqa"):
        sp.add_argument("--model", choices=choices, default=default)

    s = sub.add_parser("synth", help="write the synthetic toy dataset")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--n-train", type=int, default=5000)
    s.add_argument("--n-dev", type=int, default=500)

    s = sub.add_parser("preprocess", help="tokenize and align a SQuAD JSON or NewsQA CSV file")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    model_flag(s)

    s = sub.add_parser("train")
    model_flag(s)
    s.add_argument("--train", required=True)
    s.add_argument("--dev", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--emb-dim", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--n", type=int)
    s.add_argument("--lr", type=float, default=1e-3)
    s.add_argument("--batch-size", type=int)
    s.add_argument("--dropout", type=float)
    s.add_argument("--max-context", type=int, default=400)
    s.add_argument("--checkpoint-every", type=int)
    s.add_argument("--beam-k", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--epochs", type=int)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--patience", type=int)
    s.add_argument("--no-char", action="store_true")
    s.add_argument("--no-wiq-b", action="store_true")
    s.add_argument("--no-wiq-w", action="store_true")
    s.add_argument("--resume", action="store_true", help="continue from OUT/last.ckpt if present")

    s = sub.add_parser("predict")
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--emb-dim", type=int)
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--beam-k", type=int, default=5)

    s = sub.add_parser("evaluate")
    s.add_argument("--pred", required=True)
    s.add_argument("--gold", required=True)
    s.add_argument("--out")

    s = sub.add_parser("gradcheck")
    s.add_argument("--model", choices=("all", "primitives", "bow", "fastqa", "fastqaext", "fusion"),
                   default="all")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--seeds", type=int, default=1)
    s.add_argument("--tol", type=float, default=1e-5)
    s.add_argument("--verbose", action="store_true")

    s = sub.add_parser("diff", help="compare two prediction files question by question")
    s.add_argument("--pred-a", required=True)
    s.add_argument("--pred-b", required=True)
    s.add_argument("--gold", required=True)
    s.add_argument("--out")
    return p


COMMANDS = {"synth": cmd_synth, "preprocess": cmd_preprocess, "train": cmd_train,
            "predict": cmd_predict, "evaluate": cmd_evaluate, "gradcheck": cmd_gradcheck,
            "diff": cmd_diff}


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(name)s: %(message)s")
    outputs = Outputs()
    try:
        code = COMMANDS[args.command](args, outputs)
    except (CliError, CheckpointError, ValueError, KeyError, OSError) as exc:
        outputs.cleanup()
        print(f"fastqa {args.command}: error: {exc}", file=sys.stderr)
        return 1
    except BaseException:
        outputs.cleanup()
        raise
    return int(code or 0)


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
