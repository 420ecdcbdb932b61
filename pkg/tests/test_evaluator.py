import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastqa.evaluator import (diff_systems, evaluate, exact_match, normalize_answer, question_word,
                              token_f1)

words = st.lists(st.sampled_from(["the", "cat", "a", "black", "dog", "1688", "-", "Paris", "!"]), max_size=6)


def test_normalize_examples():
    assert normalize_answer("The Cat!") == "cat"
    assert normalize_answer("1688-1692") == "1688 1692"
    assert normalize_answer("") == ""
    assert normalize_answer("  an   apple,  the pie ") == "apple pie"


def test_token_f1_examples():
    assert token_f1("Paris", "Paris") == 1.0
    assert token_f1("the cat", "cat") == 1.0
    assert token_f1("black cat", "cat") == pytest.approx(2 / 3)
    assert token_f1("", "") == 1.0
    assert token_f1("cat", "") == 0.0 and token_f1("", "cat") == 0.0


def test_f1_uses_multiset_counts():
    # set intersection would give P = 1; multiset gives P = 1/2
    assert token_f1("cat cat", "cat") == pytest.approx(2 * 0.5 * 1.0 / 1.5)


def test_evaluate_examples():
    golds = {"q1": ["cat"], "q2": ["Paris"]}
    res = evaluate({"q1": "cat", "q2": "paris"}, golds)
    assert (res.exact_match, res.f1) == (100.0, 100.0)
    res = evaluate({"q": "black cat"}, {"q": ["cat"]})
    assert res.exact_match == 0.0 and res.f1 == pytest.approx(66.67, abs=0.01)
    res = evaluate({}, golds)
    assert (res.exact_match, res.f1, res.missing) == (0.0, 0.0, 2)


def test_evaluate_max_over_golds():
    res = evaluate({"q": "dog"}, {"q": ["cat", "the dog"]})
    assert res.exact_match == 100.0


def test_diff_systems():
    golds = {"q1": ["cat"], "q2": ["dog"], "q3": ["emu"]}
    good = evaluate({"q1": "cat", "q2": "dog", "q3": "emu"}, golds)
    bad = evaluate({"q1": "x", "q2": "y", "q3": "z"}, golds)
    same = diff_systems(good, good)
    assert same["sets"]["a_wins"] == [] and same["sets"]["b_wins"] == []
    d = diff_systems(good, bad, {"q1": "What is it?", "q2": "Who barks?", "q3": "Which bird?"})
    assert len(d["sets"]["a_wins"]) == 3
    hist = d["summaries"]["a_wins"]["question_words"]
    assert hist == {"what": 1, "which": 1, "who": 1}
    assert sum(hist.values()) == d["summaries"]["a_wins"]["count"]
    with pytest.raises(ValueError):
        diff_systems(good, evaluate({}, {"other": ["x"]}))


def test_question_word():
    assert question_word("How many goals?") == "how"
    assert question_word("Name the river.") == "other"


@given(st.lists(words, min_size=1, max_size=3).map(lambda ws: [" ".join(w) for w in ws]), words)
def test_f1_symmetric_and_bounded(golds, pred_words):
    pred = " ".join(pred_words)
    for g in golds:
        assert token_f1(pred, g) == pytest.approx(token_f1(g, pred))
        if exact_match(pred, g):
            assert token_f1(pred, g) == 1.0
    res = evaluate({"q": pred}, {"q": golds})
    assert 0.0 <= res.exact_match <= res.f1 <= 100.0


@given(st.dictionaries(st.text("abc", min_size=1, max_size=3), st.tuples(words, words), min_size=1, max_size=6),
       st.randoms())
def test_evaluate_permutation_invariant(items, rnd):
    preds = {k: " ".join(p) for k, (p, _) in items.items()}
    golds = {k: [" ".join(g)] for k, (_, g) in items.items()}
    keys = list(items)
    rnd.shuffle(keys)
    res_a = evaluate(preds, golds)
    res_b = evaluate({k: preds[k] for k in keys}, {k: golds[k] for k in keys})
    assert (res_a.exact_match, res_a.f1) == (res_b.exact_match, res_b.f1)
