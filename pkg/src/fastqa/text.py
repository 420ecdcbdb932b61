"""Tokenization, vocabularies, embedding files and QA dataset ingestion."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import string
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .evaluator import normalize_answer

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"
PAD_ID, UNK_ID = 0, 1

# Function words shared by the BoW question filter and the LAT noun-phrase
# approximation.  Question words are included so they never count as matches.
STOPWORDS = frozenset("""
a an the and or but if of at by for with about to from in on into onto over
under is are was were be been being do does did has have had it its this that
these those as not no what which who whom whose when where why how there
than then so such can could will would should may might must
""".split())

CACHE_FORMAT = "fastqa-preprocessed"
CACHE_VERSION = 1


def tokenize(text: str, mode: str = "fastqa") -> tuple[list[str], list[tuple[int, int]]]:
    """Split on whitespace (dropped) and at every non-alphanumeric character
    (kept as its own token).  ``mode="bow"`` additionally lowercases."""
    if mode not in ("fastqa", "bow"):
        raise ValueError(f"unknown tokenizer mode {mode!r}")
    tokens, spans = [], []
    start = None
    for i, ch in enumerate(text):
        if ch.isalnum():
            if start is None:
                start = i
            continue
        if start is not None:
            tokens.append(text[start:i])
            spans.append((start, i))
            start = None
        if not ch.isspace():
            tokens.append(ch)
            spans.append((i, i + 1))
    if start is not None:
        tokens.append(text[start:])
        spans.append((start, len(text)))
    if mode == "bow":
        tokens = [t.lower() for t in tokens]
    return tokens, spans


@dataclass
class Vocabulary:
    """Word and character inventories; id 0 is padding, id 1 unknown."""

    id_to_token: list = field(default_factory=lambda: [PAD, UNK])
    id_to_char: list = field(default_factory=lambda: [PAD, UNK])

    def __post_init__(self):
        self.token_to_id = {t: i for i, t in enumerate(self.id_to_token)}
        self.char_to_id = {c: i for i, c in enumerate(self.id_to_char)}
        if len(self.token_to_id) != len(self.id_to_token):
            raise ValueError("duplicate tokens in vocabulary")

    def __len__(self):
        return len(self.id_to_token)

    @property
    def n_chars(self) -> int:
        return len(self.id_to_char)

    def add_token(self, token: str) -> int:
        if token not in self.token_to_id:
            self.token_to_id[token] = len(self.id_to_token)
            self.id_to_token.append(token)
        return self.token_to_id[token]

    def token_id(self, token: str) -> int:
        return self.token_to_id.get(token, UNK_ID)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.token_to_id.get(t, UNK_ID) for t in tokens]

    def char_ids(self, token: str, max_len: int = 25) -> list[int]:
        return [self.char_to_id.get(c, UNK_ID) for c in token[:max_len]]

    def build_chars(self, examples: Iterable["TokenizedExample"]):
        """Char inventory: printable ASCII first, then corpus characters in
        first-seen order."""
        chars = [PAD, UNK] + [c for c in string.printable if not c.isspace()]
        seen = set(chars)
        for ex in examples:
            for tok in list(ex.question_tokens) + list(ex.context_tokens):
                for c in tok:
                    if c not in seen:
                        seen.add(c)
                        chars.append(c)
        self.id_to_char = chars
        self.char_to_id = {c: i for i, c in enumerate(chars)}
        return self

    def words_hash(self) -> str:
        return hashlib.sha256("\n".join(self.id_to_token).encode("utf-8")).hexdigest()

    def chars_hash(self) -> str:
        return hashlib.sha256("\n".join(self.id_to_char).encode("utf-8")).hexdigest()


def load_embeddings(path, dim: int = 300, dtype=np.float32) -> tuple[Vocabulary, np.ndarray]:
    """Read ``<token> <f1> ... <f_dim>`` lines into a vocabulary and a matrix
    whose rows 0 (padding) and 1 (unknown) are zero."""
    vocab = Vocabulary()
    rows = [np.zeros(dim, dtype=dtype), np.zeros(dim, dtype=dtype)]
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\n").rstrip(" ").split(" ")
            if parts == [""]:
                continue
            if len(parts) != dim + 1:
                raise ValueError(f"{path}:{lineno}: expected {dim + 1} fields, got {len(parts)}")
            token = parts[0]
            if token in vocab.token_to_id:
                log.warning("%s:%d: duplicate token %r ignored (first wins)", path, lineno, token)
                continue
            try:
                vec = np.array([float(x) for x in parts[1:]], dtype=dtype)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            vocab.add_token(token)
            rows.append(vec)
    return vocab, np.stack(rows)


@dataclass(frozen=True)
class TokenizedExample:
    id: str
    question: str
    question_tokens: tuple
    context_tokens: tuple
    context_token_char_spans: tuple
    gold_spans: tuple
    raw_context: str
    raw_answers: tuple

    @property
    def answerable(self) -> bool:
        return len(self.gold_spans) > 0

    def span_text(self, s: int, e: int) -> str:
        return self.raw_context[self.context_token_char_spans[s][0]:self.context_token_char_spans[e][1]]


@dataclass
class IngestStats:
    questions: int = 0
    answers: int = 0
    unalignable: int = 0
    unanswerable_examples: int = 0


def align_answer(spans: list, text: str, answer: str, answer_start: int) -> tuple[int, int] | None:
    """Map a character-offset answer onto inclusive token indices.

    Leading/trailing whitespace in the answer is trimmed first.  Returns
    ``None`` when no token covers the boundaries or when the covered tokens
    do not reproduce the answer after normalization.
    """
    lead = len(answer) - len(answer.lstrip())
    a_start = answer_start + lead
    answer = answer.strip()
    if not answer or a_start < 0 or a_start + len(answer) > len(text):
        return None
    a_end = a_start + len(answer) - 1
    s = e = None
    for k, (cs, ce) in enumerate(spans):
        if s is None and cs <= a_start < ce:
            s = k
        if cs <= a_end < ce:
            e = k
            break
    if s is None or e is None or e < s:
        return None
    extracted = text[spans[s][0]:spans[e][1]]
    if normalize_answer(extracted) != normalize_answer(answer):
        return None
    return s, e


def examples_from_squad(data: dict, mode: str = "fastqa", stats: IngestStats | None = None) -> list[TokenizedExample]:
    stats = stats if stats is not None else IngestStats()
    out = []
    for article in data["data"]:
        for para in article["paragraphs"]:
            context = para["context"]
            tokens, spans = tokenize(context, mode)
            for qa in para["qas"]:
                stats.questions += 1
                q_tokens, _ = tokenize(qa["question"], mode)
                golds = []
                answers = qa.get("answers", [])
                for ans in answers:
                    stats.answers += 1
                    span = align_answer(spans, context, ans["text"], int(ans["answer_start"]))
                    if span is None:
                        stats.unalignable += 1
                    elif span not in golds:
                        golds.append(span)
                if not golds:
                    stats.unanswerable_examples += 1
                out.append(TokenizedExample(
                    id=str(qa["id"]),
                    question=qa["question"],
                    question_tokens=tuple(q_tokens),
                    context_tokens=tuple(tokens),
                    context_token_char_spans=tuple(spans),
                    gold_spans=tuple(sorted(golds)),
                    raw_context=context,
                    raw_answers=tuple(a["text"] for a in answers),
                ))
    out.sort(key=lambda ex: ex.id)
    return out


def ingest_squad(path, mode: str = "fastqa", stats: IngestStats | None = None) -> list[TokenizedExample]:
    """Load a SQuAD v1.1 JSON file; examples are sorted by id.

    Answers that cannot be aligned to token boundaries are dropped and
    counted in ``stats``; questions left without any gold span are kept (for
    evaluation) with an empty ``gold_spans``.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: malformed JSON: {exc}") from None
    stats = stats if stats is not None else IngestStats()
    examples = examples_from_squad(data, mode, stats)
    if stats.unalignable:
        log.info("%s: %d of %d answers unalignable", path, stats.unalignable, stats.answers)
    return examples


def newsqa_to_squad(rows: Iterable[dict]) -> dict:
    """Convert NewsQA CSV records into the SQuAD layout.

    Expected columns: ``story_id``, ``story_text``, ``question`` and
    ``answer_char_ranges`` (``"s:e"`` ranges, ``,`` between ranges and ``|``
    between annotators, ``None`` for no answer).
    """
    stories: dict = {}
    for k, row in enumerate(rows):
        sid = row["story_id"]
        para = stories.setdefault(sid, {"context": row["story_text"], "qas": []})
        answers, seen = [], set()
        for annotator in row.get("answer_char_ranges", "").split("|"):
            for rng in annotator.split(","):
                rng = rng.strip()
                if not rng or rng == "None" or ":" not in rng:
                    continue
                s, e = (int(v) for v in rng.split(":"))
                if (s, e) in seen or e <= s:
                    continue
                seen.add((s, e))
                answers.append({"text": para["context"][s:e], "answer_start": s})
        para["qas"].append({"id": f"{sid}#{k}", "question": row["question"], "answers": answers})
    return {"version": "newsqa", "data": [{"title": sid, "paragraphs": [p]} for sid, p in stories.items()]}


def read_newsqa_csv(path) -> dict:
    with open(path, encoding="utf-8", newline="") as fh:
        return newsqa_to_squad(csv.DictReader(fh))


def best_window_start(n_tokens: int, spans, max_len: int) -> tuple[int, int]:
    """Earliest window start maximizing the number of fully contained spans."""
    best, best_count = 0, -1
    for start in range(n_tokens - max_len + 1):
        end = start + max_len
        count = sum(1 for s, e in spans if start <= s and e < end)
        if count > best_count:
            best, best_count = start, count
    return best, best_count


def cut_context(example: TokenizedExample, max_len: int = 400) -> TokenizedExample | None:
    """Training-time context cut; ``None`` if no window keeps any answer."""
    n = len(example.context_tokens)
    if n <= max_len:
        return example
    start, count = best_window_start(n, example.gold_spans, max_len)
    if count <= 0:
        return None
    end = start + max_len
    kept = tuple((s - start, e - start) for s, e in example.gold_spans if start <= s and e < end)
    return replace(
        example,
        context_tokens=example.context_tokens[start:end],
        context_token_char_spans=example.context_token_char_spans[start:end],
        gold_spans=kept,
    )


def save_cache(path, examples: list[TokenizedExample], mode: str):
    """Versioned JSON cache of tokenized examples."""
    payload = {
        "format": CACHE_FORMAT,
        "version": CACHE_VERSION,
        "mode": mode,
        "examples": [asdict(ex) for ex in examples],
    }
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    tmp.replace(path)


def load_cache(path) -> tuple[list[TokenizedExample], str]:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    if payload.get("format") != CACHE_FORMAT or payload.get("version") != CACHE_VERSION:
        raise ValueError(f"{path}: not a {CACHE_FORMAT} v{CACHE_VERSION} cache")
    examples = []
    for d in payload["examples"]:
        d = dict(d)
        d["question_tokens"] = tuple(d["question_tokens"])
        d["context_tokens"] = tuple(d["context_tokens"])
        d["context_token_char_spans"] = tuple(tuple(s) for s in d["context_token_char_spans"])
        d["gold_spans"] = tuple(tuple(s) for s in d["gold_spans"])
        d["raw_answers"] = tuple(d["raw_answers"])
        examples.append(TokenizedExample(**d))
    return examples, payload["mode"]
