from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastqa.autodiff import Tensor
from fastqa.batching import make_batch
from fastqa.checks import build_tiny_model, random_example, tiny_setup
from fastqa.models.bow import (CONTEXT_WINDOWS, SPAN_WINDOW, eligible_for_bow, enumerate_spans,
                               extract_lat, span_count)


def lat_text(q):
    toks = q.split()
    lat = extract_lat(toks)
    return " ".join(toks[lat.start:lat.end + 1]), lat.kind


# --- answer type span --------------------------------------------------------

def test_lat_examples():
    assert lat_text("what year did the war end ?") == ("year", "noun_phrase_after_what_which")
    assert lat_text("Which of the rivers is longest ?") == ("rivers", "noun_phrase_after_what_which")
    assert lat_text("When was it built ?") == ("When", "question_word")
    assert lat_text("how many people live there ?") == ("how many", "question_word")
    # only function words follow "what": the wh-word itself is the type span
    assert lat_text("what is it ?") == ("what", "question_word")
    assert lat_text("Name the river .") == ("Name", "fallback")
    with pytest.raises(ValueError):
        extract_lat([])


def test_lat_noun_phrase_is_capped_at_three_tokens():
    assert lat_text("what big red old car won ?")[0] == "big red old"


# --- span enumeration --------------------------------------------------------

def test_span_counts():
    assert span_count(3) == 6
    assert span_count(1) == 1
    assert span_count(400) == 3955
    s, e = enumerate_spans(3)
    assert list(zip(s, e)) == [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]


@given(st.integers(1, 40), st.integers(1, 12))
def test_enumeration_matches_count(length, max_len):
    s, e = enumerate_spans(length, max_len)
    assert len(s) == span_count(length, max_len)
    assert np.all(e >= s) and np.all(e - s < max_len) and np.all(e < length)
    assert len(set(zip(s, e))) == len(s)


def test_eligibility():
    ex = random_example(np.random.default_rng(0), 30, 4)
    assert eligible_for_bow(ex)
    long = replace(ex, gold_spans=((0, 10),))
    assert not eligible_for_bow(long)


# --- span and context features versus naive loops -------------------------------

def naive_span_repr(model, x, length, s, e):
    def mean(lo, hi):
        lo, hi = max(lo, 0), min(hi, length)
        return x[lo:hi].mean(axis=0) if hi > lo else np.zeros(x.shape[1])
    u = np.concatenate([x[s], x[e], mean(s, e + 1), mean(s - SPAN_WINDOW, s),
                        mean(e + 1, e + 1 + SPAN_WINDOW)])
    return np.tanh(u @ model.span_W.data + model.span_b.data)


def naive_context_feats(wb, ww, length, s, e):
    feats = np.stack([wb, ww], axis=-1)
    out = []
    for w in CONTEXT_WINDOWS:
        for lo, hi in ((max(s - w, 0), s), (e + 1, min(e + 1 + w, length))):
            out.extend(feats[lo:hi].mean(axis=0) if hi > lo else [0.0, 0.0])
    return np.array(out)


@pytest.mark.parametrize("seed", range(3))
def test_span_encoding_matches_naive(seed):
    exs, vocab, emb = tiny_setup(seed, shapes=((23, 4), (9, 3)))
    model = build_tiny_model("bow", seed, 5, emb, vocab)
    batch = make_batch(exs, vocab, wiq_policy=model.wiq_policy)
    _, x = model.embedder.embed_batch(batch)
    s1, e1 = enumerate_spans(batch.x_ids.shape[1])
    starts, ends = np.broadcast_to(s1, (2, len(s1))), np.broadcast_to(e1, (2, len(e1)))
    xs = model.encode_spans(x, starts, ends, batch.x_lengths).data
    for b in range(2):
        L = int(batch.x_lengths[b])
        for k in np.flatnonzero(e1 < L):
            ref = naive_span_repr(model, x.data[b], L, s1[k], e1[k])
            np.testing.assert_allclose(xs[b, k], ref, atol=1e-10)


@pytest.mark.parametrize("seed", range(3))
def test_context_features_match_naive(seed):
    r = np.random.default_rng(seed)
    L, LX = 30, 34
    wb = np.zeros((1, LX))
    wb[0, :L] = r.integers(0, 2, L)
    ww = np.zeros((1, LX))
    ww[0, :L] = r.random(L)
    exs, vocab, emb = tiny_setup(seed)
    model = build_tiny_model("bow", seed, 4, emb, vocab)
    s1, e1 = enumerate_spans(LX)
    feats = model.context_features(wb, Tensor(ww), s1[None], e1[None], np.array([L])).data
    for k in np.flatnonzero(e1 < L):
        np.testing.assert_allclose(feats[0, k], naive_context_feats(wb[0], ww[0], L, s1[k], e1[k]),
                                   atol=1e-12)


def test_context_score_hand_example():
    exs, vocab, emb = tiny_setup(0)
    model = build_tiny_model("bow", 0, 4, emb, vocab)
    # one span (1, 1) in a 4 token context; binary feature on token 0 only
    wb = np.array([[1.0, 0.0, 0.0, 0.0]])
    ww = np.array([[0.0, 0.0, 0.5, 0.5]])
    feats = model.context_features(wb, Tensor(ww), np.array([[1]]), np.array([[1]]), np.array([4])).data[0, 0]
    # window 5: left = token 0, right = tokens 2..3; windows 10 and 20 see the same tokens
    np.testing.assert_allclose(feats, [1.0, 0.0, 0.0, 0.5] * 3)
    model.window_weights.data[:] = np.arange(12.0)
    g = model.context_score(Tensor(feats[None, None])).data
    assert g[0, 0] == pytest.approx(0 + 3 * 0.5 + 4 + 7 * 0.5 + 8 + 11 * 0.5)


# --- scores, loss and prediction ---------------------------------------------

def flat_model(seed=0, gold=((2, 2),)):
    exs, vocab, emb = tiny_setup(seed, shapes=((6, 3),))
    ex = replace(exs[0], gold_spans=tuple(gold))
    model = build_tiny_model("bow", seed, 4, emb, vocab)
    model.type_w2.data[:] = 0.0
    model.window_weights.data[:] = 0.0
    return model, make_batch([ex], vocab, wiq_policy=model.wiq_policy)


def test_uniform_scores_give_log_span_count_loss():
    model, batch = flat_model()
    N = span_count(6)
    assert model.loss(batch).item() == pytest.approx(np.log(N))
    model, batch = flat_model(gold=((2, 2), (3, 4)))
    assert model.loss(batch).item() == pytest.approx(np.log(N / 2))


def test_loss_requires_short_gold_span():
    model, batch = flat_model(gold=((0, 5),))
    model.loss(batch)  # length 6 is fine
    exs, vocab, emb = tiny_setup(0, shapes=((14, 3),))
    ex = replace(exs[0], gold_spans=((0, 12),))
    with pytest.raises(ValueError):
        model.loss(make_batch([ex], vocab))


@pytest.mark.parametrize("seed", range(3))
def test_span_distribution_normalized_and_padding_free(seed):
    exs, vocab, emb = tiny_setup(seed, shapes=((13, 4), (5, 3)))
    model = build_tiny_model("bow", seed, 5, emb, vocab)
    probs, out = model.span_probabilities(make_batch(exs, vocab))
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
    assert np.all(probs[~out.span_mask] == 0)
    preds = model.predict(make_batch(exs, vocab))
    for p, ex in zip(preds, exs):
        assert 0 <= p.s <= p.e < len(ex.context_tokens) and p.e - p.s < 10


def test_prediction_invariant_to_constant_shift():
    exs, vocab, emb = tiny_setup(4, shapes=((12, 4),))
    model = build_tiny_model("bow", 4, 5, emb, vocab)
    batch = make_batch(exs, vocab)
    before = model.predict(batch)[0]
    model.type_b2.data += 17.0
    after = model.predict(batch)[0]
    assert (before.s, before.e) == (after.s, after.e)
    assert before.probability == pytest.approx(after.probability)


def test_type_score_is_per_span(rng):
    exs, vocab, emb = tiny_setup(5)
    model = build_tiny_model("bow", 5, 4, emb, vocab)
    z = Tensor(rng.normal(size=(1, 4)))
    xs = rng.normal(size=(1, 7, 4))
    perm = rng.permutation(7)
    a = model.type_score(z, Tensor(xs)).data
    b = model.type_score(z, Tensor(xs[:, perm])).data
    np.testing.assert_allclose(a[:, perm], b, atol=1e-12)


def test_loss_is_differentiable_end_to_end():
    exs, vocab, emb = tiny_setup(6)
    model = build_tiny_model("bow", 6, 4, emb, vocab)
    loss = model.loss(make_batch(exs, vocab))
    loss.backward()
    assert np.isfinite(loss.item())
    assert all(p.grad is not None for p in model.params.values())
    assert np.any(model.window_weights.grad != 0)
