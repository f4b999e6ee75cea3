import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from cotar import tensor as tt
from cotar.tensor import Accountant, GraphError, ShapeError, Tensor, grad_check

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def leaf(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


def probe_sum(out, rng):
    return tt.sum(tt.mul(out, Tensor(rng.normal(size=out.shape))))


# -- finite-difference checks, one per op ---------------------------------

OPS = {
    "matmul": lambda r: ((a := leaf(r, 3, 4)), (b := leaf(r, 4, 2)), lambda: tt.matmul(a, b)),
    "matmul_batched": lambda r: ((a := leaf(r, 2, 3, 4)), (b := leaf(r, 4, 5)), lambda: tt.matmul(a, b)),
    "matmul_pairwise": lambda r: ((a := leaf(r, 2, 3, 4)), (b := leaf(r, 2, 4, 3)), lambda: tt.matmul(a, b)),
    "add_bias": lambda r: ((a := leaf(r, 2, 3, 4)), (b := leaf(r, 4)), lambda: tt.add_bias(a, b)),
    "mul": lambda r: ((a := leaf(r, 3, 4)), (b := leaf(r, 3, 4)), lambda: tt.mul(a, b)),
    "concat": lambda r: ((a := leaf(r, 3, 2)), (b := leaf(r, 3, 5)), lambda: tt.concat(a, b)),
}

UNARY = {
    "gelu": lambda x: tt.gelu(x),
    "softmax_last": lambda x: tt.softmax(x, -1),
    "softmax_tokens": lambda x: tt.softmax(x, -2),
    "mean_tokens": lambda x: tt.mean(x, -2),
    "sum_axis0": lambda x: tt.sum(x, 0),
    "transpose": lambda x: tt.transpose(x),
    "reshape": lambda x: tt.reshape(x, (2, 12)),
    "scale": lambda x: tt.scale(x, -2.5),
    "repeat": lambda x: tt.repeat_rows(tt.mean(x, -2), 5),
}


@pytest.mark.parametrize("name", sorted(OPS))
def test_binary_op_gradients(name, rng):
    a, b, f = OPS[name](rng)
    probe = rng.normal(size=f().shape)
    rep = grad_check(lambda: tt.sum(tt.mul(f(), Tensor(probe))), [a, b])
    assert rep.passed, rep


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_op_gradients(name, rng):
    x = leaf(rng, 2, 3, 4)
    probe = rng.normal(size=UNARY[name](x).shape)
    rep = grad_check(lambda: tt.sum(tt.mul(UNARY[name](x), Tensor(probe))), [x])
    assert rep.passed, rep


def test_layer_norm_gradient(rng):
    x, g, b = leaf(rng, 3, 5), leaf(rng, 5), leaf(rng, 5)
    probe = rng.normal(size=(3, 5))
    rep = grad_check(lambda: tt.sum(tt.mul(tt.layer_norm(x, g, b), Tensor(probe))), [x, g, b])
    assert rep.passed, rep


def test_cross_entropy_gradient(rng):
    z = leaf(rng, 4, 3)
    y = np.array([0, 2, 1, 2])
    assert grad_check(lambda: tt.softmax_cross_entropy(z, y), [z]).passed


def test_dropout_gradient_with_fixed_mask(rng):
    x = leaf(rng, 4, 6)
    seed = 7
    rep = grad_check(lambda: tt.sum(tt.dropout(x, 0.3, np.random.default_rng(seed))), [x])
    assert rep.passed


# -- forward identities -------------------------------------------------------


@given(arrays(np.float64, (3, 4), elements=finite))
def test_softmax_rows_sum_to_one(x):
    s = tt.softmax(Tensor(x), -1).data
    assert np.allclose(s.sum(-1), 1.0, atol=1e-12)
    assert np.all(s > 0)


def test_softmax_is_shift_invariant(rng):
    x = rng.normal(size=(3, 4))
    a = tt.softmax(Tensor(x), -2).data
    b = tt.softmax(Tensor(x + 1e3), -2).data
    assert np.allclose(a, b, atol=1e-12)


def test_softmax_large_inputs_stay_finite():
    s = tt.softmax(Tensor(np.array([[1000.0, 0.0, -1000.0]])), -1).data
    assert np.all(np.isfinite(s)) and s[0, 0] == pytest.approx(1.0)


@given(st.floats(-6, 6))
def test_gelu_matches_scalar_formula(x):
    want = 0.5 * x * (1 + math.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x ** 3)))
    assert tt.gelu(Tensor(np.array([x]))).data[0] == pytest.approx(want, abs=1e-12)


@given(arrays(np.float64, (2, 6), elements=st.floats(-100, 100)))
def test_layer_norm_standardizes(x):
    if np.any(x.std(axis=-1) < 1e-2):
        return
    y = tt.layer_norm(Tensor(x), Tensor(np.ones(6)), Tensor(np.zeros(6))).data
    assert np.allclose(y.mean(-1), 0, atol=1e-9)
    assert np.allclose(y.var(-1), 1, atol=1e-3)


def test_cross_entropy_of_uniform_logits_is_log_k():
    loss = tt.softmax_cross_entropy(Tensor(np.zeros((5, 4))), np.arange(5) % 4)
    assert float(loss.data) == pytest.approx(math.log(4), abs=1e-12)


def test_dropout_zero_rate_is_identity(rng):
    x = leaf(rng, 3, 3)
    assert tt.dropout(x, 0.0, rng) is x


def test_dropout_preserves_expectation():
    x = Tensor(np.ones((200, 200)))
    y = tt.dropout(x, 0.25, np.random.default_rng(0)).data
    assert abs(y.mean() - 1.0) < 0.02
    assert set(np.unique(y)) <= {0.0, 1 / 0.75}


# -- graph mechanics ----------------------------------------------------------


def test_second_backward_on_same_trace_raises(rng):
    x = leaf(rng, 2, 2)
    loss = tt.sum(tt.gelu(x))
    tt.backward(loss)
    with pytest.raises(GraphError):
        tt.backward(loss)


def test_leaf_gradients_accumulate_across_passes(rng):
    x = leaf(rng, 3)
    tt.backward(tt.sum(x))
    tt.backward(tt.sum(x))
    assert np.array_equal(x.grad, np.full(3, 2.0))


def test_shared_subexpression_accumulates(rng):
    x = leaf(rng, 4)
    y = tt.gelu(x)
    tt.backward(tt.sum(tt.add(y, y)))
    x2 = Tensor(x.data.copy(), requires_grad=True)
    tt.backward(tt.sum(tt.scale(tt.gelu(x2), 2.0)))
    assert np.allclose(x.grad, x2.grad, atol=1e-14)


def test_non_scalar_backward_rejected(rng):
    with pytest.raises(ShapeError):
        tt.backward(tt.gelu(leaf(rng, 3)))


def test_backward_without_grad_inputs_rejected():
    with pytest.raises(GraphError):
        tt.backward(tt.sum(Tensor(np.ones(3))))


def test_graphs_are_isolated(rng):
    a, b = leaf(rng, 3), leaf(rng, 3)
    la = tt.sum(tt.gelu(a))
    lb = tt.sum(tt.gelu(b))
    tt.backward(la)
    assert np.all(b.grad == 0)
    tt.backward(lb)
    assert np.any(b.grad != 0)


@pytest.mark.parametrize("bad", [
    lambda: tt.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3)))),
    lambda: tt.matmul(Tensor(np.ones((2, 2, 3))), Tensor(np.ones((3, 3, 2)))),
    lambda: tt.mul(Tensor(np.ones(3)), Tensor(np.ones(4))),
    lambda: tt.add(Tensor(np.ones((2, 3))), Tensor(np.ones(2))),
    lambda: tt.concat(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3)))),
    lambda: tt.layer_norm(Tensor(np.ones((2, 3))), Tensor(np.ones(2)), Tensor(np.ones(2))),
    lambda: tt.softmax_cross_entropy(Tensor(np.ones((2, 3))), [0]),
])
def test_shape_errors(bad):
    with pytest.raises(ShapeError):
        bad()


def test_cross_entropy_label_range():
    with pytest.raises(ValueError):
        tt.softmax_cross_entropy(Tensor(np.ones((2, 3))), [0, 3])


def test_batch_axes_match_loop(rng):
    x = rng.normal(size=(3, 4, 5))
    w = Tensor(rng.normal(size=(5, 2)))
    batched = tt.softmax(tt.matmul(Tensor(x), w), -2).data
    looped = np.stack([tt.softmax(tt.matmul(Tensor(xi), w), -2).data for xi in x])
    assert np.array_equal(batched, looped)


# -- grad_check itself --------------------------------------------------------


def test_grad_check_catches_a_wrong_backward(rng):
    x = leaf(rng, 4)

    def broken():
        out = tt.gelu(x)
        out._backward = lambda g: (2.0 * g,)
        return tt.sum(out)

    assert not grad_check(broken, [x]).passed


def test_rel_err_floor():
    assert tt.rel_err(1e-9, 0.0)[()] == pytest.approx(1e-6)
    assert tt.rel_err(2.0, 1.0)[()] == pytest.approx(0.5)


# -- accountant ---------------------------------------------------------------


def test_accountant_counts_matmul_macs(rng):
    a, b = Tensor(rng.normal(size=(2, 3, 4))), Tensor(rng.normal(size=(4, 5)))
    with Accountant() as acc:
        tt.matmul(a, b)
    assert acc.macs == 2 * 3 * 4 * 5
    assert acc.max_buffer == 2 * 3 * 5


def test_accountant_tracks_frees(rng):
    x = Tensor(rng.normal(size=(10, 10)))
    with Accountant() as acc:
        y = tt.gelu(x)
        assert acc.live == 100
        del y
        assert acc.live == 0
    assert acc.peak_live == 100


def test_accountant_ignores_leaves():
    with Accountant() as acc:
        Tensor(np.ones((50, 50)))
    assert acc.n_alloc == 0 and acc.peak_live == 0


def test_accountant_nesting(rng):
    x = Tensor(rng.normal(size=(3, 3)))
    with Accountant() as outer:
        tt.mul(x, x)
        with Accountant() as inner:
            tt.mul(x, x)
    assert outer.macs == 18 and inner.macs == 9
