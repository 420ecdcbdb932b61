import threading

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from fastqa.autodiff import (DomainError, GradCheckError, Graph, ShapeError, Tensor, backward,
                             grad_check, no_grad, ops)
from fastqa.checks import primitive_cases

finite = st.floats(-20, 20, allow_nan=False, allow_infinity=False)


def leaf(data):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=True)


# --- forward examples --------------------------------------------------------

def test_softmax_of_zeros_is_uniform():
    out = ops.softmax(Tensor(np.zeros(3)))
    np.testing.assert_allclose(out.data, [1 / 3] * 3)


def test_concat_axis0_shape():
    out = ops.concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 3)))], axis=0)
    assert out.shape == (6, 3)


def test_matmul_all_ones():
    out = ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 4))))
    assert out.shape == (2, 4)
    assert np.all(out.data == 3.0)


def test_shape_error_names_op_and_dims():
    with pytest.raises(ShapeError) as info:
        ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))
    assert "matmul" in str(info.value)
    assert "(2, 3)" in str(info.value) and "(4, 5)" in str(info.value)
    with pytest.raises(ShapeError, match="add"):
        ops.add(Tensor(np.ones((2, 3))), Tensor(np.ones((4,))))


def test_log_and_exp_domain_errors():
    with pytest.raises(DomainError):
        ops.log(Tensor(np.array([1.0, 0.0])))
    with pytest.raises(DomainError):
        ops.log(Tensor(np.array([-1.0])))
    with pytest.raises(DomainError):
        ops.exp(Tensor(np.array([1e4])))


def test_masked_softmax_gives_zero_to_padding():
    x = Tensor(np.array([[1.0, 2.0, 50.0], [0.0, 0.0, 0.0]]))
    mask = np.array([[True, True, False], [True, False, False]])
    p = ops.softmax(x, mask=mask).data
    assert p[0, 2] <= 1e-30 and p[1, 1] == 0.0 and p[1, 2] == 0.0
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)


def test_log_softmax_masked_entries_are_zero_and_get_no_gradient():
    x = leaf([[1.0, 2.0, 3.0]])
    mask = np.array([[True, False, True]])
    out = ops.log_softmax(x, mask=mask)
    assert out.data[0, 1] == 0.0
    ops.sum(out).backward()
    assert x.grad[0, 1] == 0.0


def test_mean_of_empty_masked_window_is_zero():
    x = Tensor(np.ones((2, 3)))
    out = ops.mean(x, axis=1, mask=np.array([[False] * 3, [True, False, True]]))
    np.testing.assert_array_equal(out.data, [0.0, 1.0])


def test_conv1d_center_identity_kernel_reproduces_input(rng):
    x = rng.normal(size=(2, 7, 3))
    k = np.zeros((3, 3, 5))
    for c in range(3):
        k[c, c, 2] = 1.0
    out = ops.conv1d(Tensor(x), Tensor(k))
    np.testing.assert_array_equal(out.data, x)


def test_embedding_lookup_range_checked():
    with pytest.raises(ShapeError, match="out of range"):
        ops.embedding_lookup(Tensor(np.zeros((3, 2))), np.array([0, 3]))


def test_padding_row_gets_no_gradient():
    table = leaf(np.ones((4, 2)))
    ops.sum(ops.embedding_lookup(table, np.array([0, 1, 0]), padding_idx=0)).backward()
    np.testing.assert_array_equal(table.grad[0], 0.0)
    np.testing.assert_array_equal(table.grad[1], 1.0)


# --- lstm --------------------------------------------------------------------

def test_lstm_padding_does_not_change_real_outputs(rng):
    H = 4
    w = Tensor(rng.normal(0, 0.5, (3 + H, 4 * H)))
    b = Tensor(rng.normal(0, 0.5, 4 * H))
    x = rng.normal(size=(1, 5, 3))
    padded = np.concatenate([x, rng.normal(size=(1, 3, 3))], axis=1)
    mask = np.array([[True] * 5 + [False] * 3])
    for reverse in (False, True):
        ref = ops.lstm(Tensor(x), w, b, reverse=reverse).data
        out = ops.lstm(Tensor(padded), w, b, mask=mask, reverse=reverse).data
        np.testing.assert_allclose(out[:, :5], ref, atol=1e-12)
        assert np.all(out[:, 5:] == 0.0)


def test_lstm_reverse_equals_forward_on_flipped_input(rng):
    H = 3
    w = Tensor(rng.normal(0, 0.5, (2 + H, 4 * H)))
    b = Tensor(np.zeros(4 * H))
    x = rng.normal(size=(2, 6, 2))
    rev = ops.lstm(Tensor(x), w, b, reverse=True).data
    fwd = ops.lstm(Tensor(x[:, ::-1].copy()), w, b).data
    np.testing.assert_allclose(rev, fwd[:, ::-1], atol=1e-12)


# --- backward ----------------------------------------------------------------

def test_grad_of_sum_is_ones():
    x = leaf([1.0, 2.0, 3.0])
    ops.sum(x).backward()
    np.testing.assert_array_equal(x.grad, [1, 1, 1])


def test_grad_of_sum_of_squares():
    x = leaf([1.0, 2.0])
    ops.sum(x * x).backward()
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_cross_entropy_gradient_is_softmax_minus_onehot(rng):
    z = leaf(rng.normal(size=5))
    target = 2
    loss = -ops.log_softmax(z)[target]
    loss.backward()
    p = np.exp(z.data - z.data.max())
    p /= p.sum()
    onehot = np.eye(5)[target]
    np.testing.assert_allclose(z.grad, p - onehot, atol=1e-12)
    rep = grad_check(lambda: -ops.log_softmax(z)[target], [z])
    assert rep.passed


def test_backward_accumulates_unless_reset():
    x = leaf([1.0, 2.0])
    loss = ops.sum(x * 3.0)
    loss.backward()
    loss.backward()
    np.testing.assert_array_equal(x.grad, [6.0, 6.0])
    loss.backward(reset=True)
    np.testing.assert_array_equal(x.grad, [3.0, 3.0])


def test_backward_rejects_non_scalar():
    x = leaf([1.0, 2.0])
    with pytest.raises(ShapeError):
        backward(x * 2.0)


def test_constant_inputs_get_no_grad():
    x = leaf([1.0])
    c = Tensor(np.array([5.0]))
    ops.sum(x * c).backward()
    assert c.grad is None
    np.testing.assert_array_equal(x.grad, [5.0])


def test_graph_inputs_precede_consumers(rng):
    x = leaf(rng.normal(size=(3, 4)))
    w = leaf(rng.normal(size=(4, 2)))
    loss = ops.sum(ops.tanh(ops.matmul(x, w)) * ops.sigmoid(ops.matmul(x, w)))
    g = Graph.from_output(loss)
    ids = [n.id for n in g.nodes]
    assert ids == sorted(ids)
    for node in g.nodes:
        for t in node.inputs:
            if t._node is not None:
                assert t._node.id < node.id
    assert {id(t) for t in g.leaves()} == {id(x), id(w)}


def test_no_grad_records_nothing():
    x = leaf([1.0, 2.0])
    with no_grad():
        y = ops.tanh(x) * 2.0
    assert y._node is None and not y.requires_grad


def test_no_grad_is_thread_local():
    seen = {}

    def worker():
        x = leaf([1.0])
        seen["node"] = (x * 2.0)._node

    with no_grad():
        t = threading.Thread(target=worker)
        t.start()
        t.join()
    assert seen["node"] is not None


# --- gradient checker --------------------------------------------------------

@pytest.mark.parametrize("seed", range(2))
@pytest.mark.parametrize("name", sorted(primitive_cases(0)))
def test_primitive_gradients(name, seed):
    f, leaves = primitive_cases(seed)[name]
    rep = grad_check(f, leaves)
    assert rep.passed, rep.summary()


def test_tanh_composition_within_1e6(rng):
    x = leaf(rng.normal(size=(5, 5)))
    rep = grad_check(lambda: ops.sum(ops.tanh(ops.tanh(x) * 2.0 + x)), [x])
    assert rep.max_error <= 1e-6


def test_relu_away_from_kink_passes(rng):
    z = rng.normal(size=(4, 4))
    x = leaf(np.sign(z) * (np.abs(z) + 0.01))
    assert grad_check(lambda: ops.sum(ops.relu(x) * x), [x]).passed


def test_grad_check_flags_a_wrong_gradient():
    from fastqa.autodiff.tensor import make_result
    x = leaf([0.3, -0.2])

    def bad_square(t):
        return make_result(t.data ** 2, "bad_square", (t,), lambda g: (g * t.data,))  # missing 2x

    rep = grad_check(lambda: ops.sum(bad_square(x)), [x])
    assert not rep.passed and rep.failed == ["leaf0"]


def test_grad_check_requires_float64():
    x = Tensor(np.ones(2, dtype=np.float32), requires_grad=True)
    with pytest.raises(TypeError):
        grad_check(lambda: ops.sum(x), [x])


def test_grad_check_names_non_finite_node():
    x = leaf([1.0, 2.0])
    with pytest.raises(GradCheckError, match="elementwise_mul"):
        grad_check(lambda: ops.sum(x * np.array([np.inf, 1.0])), [x])


def test_forward_is_deterministic(rng):
    f, leaves = primitive_cases(3)["lstm"]
    assert f().data.tobytes() == f().data.tobytes()


# --- properties --------------------------------------------------------------

@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 8)), elements=finite),
       st.floats(-50, 50))
def test_softmax_shift_invariance(x, c):
    a = ops.softmax(Tensor(x)).data
    b = ops.softmax(Tensor(x + c)).data
    np.testing.assert_allclose(a, b, atol=1e-9)


@given(st.data())
def test_masked_softmax_normalizes(data):
    rows = data.draw(st.integers(1, 4))
    cols = data.draw(st.integers(1, 8))
    x = data.draw(arrays(np.float64, (rows, cols), elements=finite))
    mask = data.draw(arrays(bool, (rows, cols)))
    mask[:, 0] = True
    p = ops.softmax(Tensor(x), mask=mask).data
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)
    assert np.all(p[~mask] <= 1e-30)
    lse = ops.logsumexp(Tensor(x), mask=mask).data
    ref = np.log(np.sum(np.where(mask, np.exp(x - x.max(axis=1, keepdims=True)), 0), axis=1)) + x.max(axis=1)
    np.testing.assert_allclose(lse, ref, rtol=1e-9, atol=1e-9)


@given(st.integers(1, 5), st.integers(1, 5), st.integers(1, 5), st.integers(0, 2 ** 31))
def test_matmul_gradient_random_shapes(m, k, n, seed):
    r = np.random.default_rng(seed)
    a, b = leaf(r.normal(size=(m, k))), leaf(r.normal(size=(k, n)))
    proj = r.normal(size=(m, n))
    assert grad_check(lambda: ops.sum(ops.matmul(a, b) * proj), [a, b]).passed


@given(st.integers(1, 3), st.integers(1, 6), st.integers(1, 4), st.integers(0, 2 ** 31))
def test_max_over_time_routes_to_single_argmax(b, t, c, seed):
    r = np.random.default_rng(seed)
    x = leaf(r.permutation(b * t * c).reshape(b, t, c).astype(float))   # no ties
    ops.sum(ops.max_over_time(x, axis=1)).backward()
    assert np.all(x.grad.sum(axis=1) == 1.0)
    assert np.all((x.grad == 0) | (x.grad == 1))
