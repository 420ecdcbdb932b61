"""Exact-match / token-F1 scoring and win-loss comparison of two systems."""

from __future__ import annotations

import re
import string
from collections import Counter
from dataclasses import dataclass, field

_PUNCT = re.compile("[" + re.escape(string.punctuation) + "]")
_ARTICLES = re.compile(r"\b(a|an|the)\b")
QUESTION_WORDS = ("what", "which", "who", "whom", "whose", "when", "where", "why", "how")


def normalize_answer(s: str) -> str:
    """Lowercase, punctuation to spaces, drop articles, collapse whitespace."""
    s = _PUNCT.sub(" ", s.lower())
    s = _ARTICLES.sub(" ", s)
    return " ".join(s.split())


def token_f1(pred: str, gold: str) -> float:
    p = normalize_answer(pred).split()
    g = normalize_answer(gold).split()
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    common = sum((Counter(p) & Counter(g)).values())
    if common == 0:
        return 0.0
    precision = common / len(p)
    recall = common / len(g)
    return 2 * precision * recall / (precision + recall)


def exact_match(pred: str, gold: str) -> float:
    return float(normalize_answer(pred) == normalize_answer(gold))


@dataclass
class EvalResult:
    exact_match: float
    f1: float
    per_question: dict = field(default_factory=dict)
    missing: int = 0

    def to_dict(self) -> dict:
        return {"exact_match": self.exact_match, "f1": self.f1}


def evaluate(predictions: dict, golds: dict) -> EvalResult:
    """Score ``id -> answer`` against ``id -> [gold answers]``.

    Questions without a prediction score 0 and are counted in ``missing``.
    """
    per_q = {}
    missing = 0
    for qid in sorted(golds):
        answers = list(golds[qid]) or [""]
        if qid in predictions:
            pred = predictions[qid]
        else:
            pred = None
            missing += 1
        if pred is None:
            em = f1 = 0.0
        else:
            em = max(exact_match(pred, a) for a in answers)
            f1 = max(token_f1(pred, a) for a in answers)
        per_q[qid] = (em, f1, pred, answers)
    total = len(per_q)
    if total == 0:
        return EvalResult(0.0, 0.0, per_q, missing)
    em_sum = sum(v[0] for v in per_q.values())
    f1_sum = sum(v[1] for v in per_q.values())
    return EvalResult(100.0 * em_sum / total, 100.0 * f1_sum / total, per_q, missing)


def question_word(question: str) -> str:
    for tok in normalize_answer(question).split():
        if tok in QUESTION_WORDS:
            return tok
    return "other"


def _summarize(ids, res: EvalResult, questions: dict | None) -> dict:
    hist = Counter()
    q_lens, a_lens = [], []
    for qid in ids:
        golds = res.per_question[qid][3]
        a_lens.append(sum(len(normalize_answer(a).split()) for a in golds) / max(len(golds), 1))
        if questions is not None:
            q = questions[qid]
            q_lens.append(len(q.split()))
            hist[question_word(q)] += 1
    return {
        "count": len(ids),
        "mean_question_length": sum(q_lens) / len(q_lens) if q_lens else 0.0,
        "mean_answer_length": sum(a_lens) / len(a_lens) if a_lens else 0.0,
        "question_words": dict(sorted(hist.items())),
    }


def diff_systems(res_a: EvalResult, res_b: EvalResult, questions: dict | None = None) -> dict:
    """Partition question ids by which system got them exactly right."""
    ids_a, ids_b = set(res_a.per_question), set(res_b.per_question)
    if ids_a != ids_b:
        raise ValueError(f"question ids differ: {len(ids_a ^ ids_b)} not shared")
    sets = {"a_wins": [], "b_wins": [], "both": [], "neither": []}
    for qid in sorted(ids_a):
        a = res_a.per_question[qid][0] == 1.0
        b = res_b.per_question[qid][0] == 1.0
        key = "both" if a and b else "a_wins" if a else "b_wins" if b else "neither"
        sets[key].append(qid)
    return {
        "sets": sets,
        "summaries": {k: _summarize(v, res_a, questions) for k, v in sets.items()},
    }
