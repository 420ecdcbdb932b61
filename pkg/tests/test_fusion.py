import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fastqa.autodiff import Tensor, ops
from fastqa.batching import make_batch
from fastqa.checks import build_tiny_model, tiny_setup
from fastqa.models.common import ParamFactory
from fastqa.models.fusion import GATE_SITES, FusionLayer


def layer(n=5, seed=0, self_mask=False):
    return FusionLayer(n, ParamFactory({}, np.random.default_rng(seed), np.float64), self_mask=self_mask)


def full(B, L):
    return np.ones((B, L), dtype=bool)


def test_fuse_with_neutral_gate_averages(rng):
    f = layer()
    W, b = f.gates["intra"]
    W.data[:] = 0.0
    a, c = Tensor(rng.normal(size=(2, 5))), Tensor(rng.normal(size=(2, 5)))
    np.testing.assert_allclose(f.fuse(a, c, "intra").data, (a.data + c.data) / 2)
    with pytest.raises(ops.ShapeError):
        f.fuse(a, Tensor(np.zeros((3, 5))), "intra")


def test_fusing_a_state_with_itself_is_identity(rng):
    f = layer()
    a = Tensor(rng.normal(size=(3, 5)))
    np.testing.assert_allclose(f.fuse(a, a, "inter").data, a.data, atol=1e-15)


def test_single_position_intra_fusion_is_identity(rng):
    f = layer()
    H = Tensor(rng.normal(size=(2, 1, 5)))
    np.testing.assert_allclose(f.intra(H, full(2, 1)).data, H.data, atol=1e-15)
    np.testing.assert_array_equal(f.last_beta, np.ones((2, 1, 1)))


def test_constant_sequence_is_a_fixed_point_of_intra_stage(rng):
    f = layer()
    row = rng.normal(size=5)
    H = Tensor(np.tile(row, (1, 6, 1)))
    out = f.recurrent(f.intra(H, full(1, 6)), full(1, 6), "intra").data
    np.testing.assert_allclose(out, H.data, atol=1e-12)


def test_self_score_zeroed_or_masked(rng):
    H = Tensor(rng.normal(size=(1, 4, 5)))
    beta = layer().intra_weights(H, full(1, 4)).data
    np.testing.assert_allclose(beta.sum(axis=-1), 1.0)
    assert np.all(np.diagonal(beta[0]) > 0)
    beta = layer(self_mask=True).intra_weights(H, full(1, 4)).data
    np.testing.assert_allclose(beta.sum(axis=-1), 1.0)
    assert np.all(np.diagonal(beta[0]) == 0)
    # a lone real position keeps its own weight
    beta = layer(self_mask=True).intra_weights(Tensor(rng.normal(size=(1, 3, 5))),
                                               np.array([[True, False, False]])).data
    assert beta[0, 0, 0] == 1.0


def test_zero_states_give_uniform_inter_weights(rng):
    f = layer()
    H = Tensor(np.zeros((1, 4, 5)))
    Z = Tensor(rng.normal(size=(1, 2, 5)))
    gamma = f.inter_weights(H, Z, full(1, 4), full(1, 2)).data
    np.testing.assert_allclose(gamma, 0.25)
    co = ops.matmul(ops.swapaxes(Tensor(gamma), 1, 2), Z).data
    np.testing.assert_allclose(co[0], np.tile(Z.data[0].sum(axis=0) / 4, (4, 1)))


def test_inter_weights_normalized_over_real_context(rng):
    f = layer()
    H = Tensor(rng.normal(size=(2, 6, 5)))
    Z = Tensor(rng.normal(size=(2, 3, 5)))
    x_mask = np.array([[1] * 6, [1] * 4 + [0] * 2], dtype=bool)
    q_mask = np.array([[1] * 3, [1] * 2 + [0]], dtype=bool)
    gamma = f.inter_weights(H, Z, x_mask, q_mask).data
    np.testing.assert_allclose(gamma[0].sum(axis=-1), 1.0)
    np.testing.assert_allclose(gamma[1, :2].sum(axis=-1), 1.0)
    assert np.all(gamma[1, 2] == 0) and np.all(gamma[1, :, 4:] == 0)


@given(st.integers(1, 3), st.integers(1, 8), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_saturated_fusion_is_exact_identity(B, LX, LQ, seed):
    r = np.random.default_rng(seed)
    f = layer(n=4, seed=seed)
    f.saturate()
    H = Tensor(np.tanh(r.normal(size=(B, LX, 4))))
    Z = Tensor(np.tanh(r.normal(size=(B, LQ, 4))))
    out = f(H, Z, full(B, LX), full(B, LQ))
    assert out.shape == H.shape
    np.testing.assert_array_equal(out.data, H.data)


def test_padding_does_not_change_real_positions(rng):
    f = layer(seed=3)
    H = rng.normal(size=(1, 4, 5))
    Z = rng.normal(size=(1, 3, 5))
    ref = f(Tensor(H), Tensor(Z), full(1, 4), full(1, 3)).data
    Hp = np.concatenate([H, rng.normal(size=(1, 3, 5))], axis=1)
    Zp = np.concatenate([Z, rng.normal(size=(1, 2, 5))], axis=1)
    out = f(Tensor(Hp), Tensor(Zp), np.array([[1] * 4 + [0] * 3], dtype=bool),
            np.array([[1] * 3 + [0] * 2], dtype=bool)).data
    np.testing.assert_allclose(out[:, :4], ref, atol=1e-12)


def test_gate_sites_and_parameters():
    factory = ParamFactory({}, np.random.default_rng(0), np.float64)
    FusionLayer(5, factory)
    names = set(factory.params)
    for site in GATE_SITES:
        assert factory.params[f"fusion.gate.{site}.W"].shape == (10, 5)
        assert f"fusion.gate.{site}.b" in names
    assert np.all(factory.params["fusion.v_beta"].data == 1.0)


def test_saturated_extension_matches_base_model():
    exs, vocab, emb = tiny_setup(4)
    base = build_tiny_model("fastqa", 4, 6, emb, vocab)
    ext = build_tiny_model("fastqaext", 4, 6, emb, vocab)
    for k, p in base.params.items():
        np.testing.assert_array_equal(ext.params[k].data, p.data)
    ext.fusion.saturate()
    batch = make_batch(exs, vocab)
    assert ext.loss(batch).item() == base.loss(batch).item()
    pa, pb = base.predict(batch), ext.predict(batch)
    assert [(p.s, p.e) for p in pa] == [(p.s, p.e) for p in pb]


def test_extension_gradients_reach_fusion_gates():
    exs, vocab, emb = tiny_setup(5)
    ext = build_tiny_model("fastqaext", 5, 5, emb, vocab)
    ext.loss(make_batch(exs, vocab)).backward()
    for site in GATE_SITES:
        assert np.any(ext.fusion.gates[site][0].grad != 0), site
