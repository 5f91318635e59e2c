"""Autodiff core: forward values and gradients against finite differences."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import check_grad

from factmem import tensor as T
from factmem.errors import NumericError, ShapeError, UsageError

RNG = np.random.default_rng(20240811)


# ---------------------------------------------------------------------------
# forward values
# ---------------------------------------------------------------------------


def test_matmul_value() -> None:
    a = T.tensor([[1.0, 2.0], [3.0, 4.0]])
    b = T.tensor([[5.0], [6.0]])
    out = T.matmul(a, b)
    assert out.data.tolist() == [[17.0], [39.0]]


def test_matmul_gradient_is_ones_times_transpose() -> None:
    # d/dA sum(A @ B) = ones @ B^T
    a = T.tensor([[1.0, 2.0], [3.0, 4.0]], requires_grad=True)
    b = T.tensor([[5.0], [6.0]])
    T.tsum(T.matmul(a, b)).backward()
    expected = np.ones((2, 1)) @ b.data.T
    np.testing.assert_allclose(a.grad, expected)


def test_softmax_uniform() -> None:
    out = T.softmax(T.tensor([[0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]])


def test_softmax_large_logits_no_overflow() -> None:
    out = T.softmax(T.tensor([[1000.0, 0.0]]))
    assert np.all(np.isfinite(out.data))
    np.testing.assert_allclose(out.data[0, 0], 1.0)
    np.testing.assert_allclose(out.data.sum(), 1.0)


def test_softmax_mask_exact_zero() -> None:
    mask = np.array([[True, True, False]])
    out = T.softmax(T.tensor([[1.0, 2.0, 50.0]]), mask=mask)
    assert out.data[0, 2] == 0.0
    np.testing.assert_allclose(out.data.sum(), 1.0)


def test_softmax_mask_all_false_row_rejected() -> None:
    with pytest.raises(UsageError):
        T.softmax(T.tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))


def test_layernorm_two_point_row() -> None:
    # [1, -1]: mean 0, var 1, so output is approximately [1, -1] (eps shrinks it)
    g = T.tensor(np.ones(2))
    b = T.tensor(np.zeros(2))
    out = T.layernorm(T.tensor([[1.0, -1.0]]), g, b, eps=1e-5)
    expected = 1.0 / np.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out.data, [[expected, -expected]], rtol=1e-12)


def test_layernorm_constant_row_is_bias() -> None:
    g = T.tensor(np.ones(4))
    b = T.tensor(np.array([0.5, -0.5, 1.5, 0.0]))
    out = T.layernorm(T.tensor([[7.0, 7.0, 7.0, 7.0]]), g, b)
    np.testing.assert_allclose(out.data, [[0.5, -0.5, 1.5, 0.0]])


def test_gelu_values() -> None:
    assert T.gelu(T.tensor([[0.0]])).item() == 0.0
    assert T.gelu(T.tensor([[3.0]])).item() == pytest.approx(2.9964, abs=1e-4)
    # gelu(x) - gelu(-x) = x for the tanh form
    x = 1.7
    diff = T.gelu(T.tensor([[x]])).item() - T.gelu(T.tensor([[-x]])).item()
    assert diff == pytest.approx(x, abs=1e-12)


def test_sigmoid_zero() -> None:
    assert T.sigmoid(T.tensor([[0.0]])).item() == pytest.approx(0.5)


def test_sum_and_mean() -> None:
    a = T.tensor([[1.0, 2.0], [3.0, 4.0]])
    assert T.tsum(a).item() == 10.0
    assert T.tmean(a).item() == 2.5


def test_pick_selects_per_row() -> None:
    a = T.tensor([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    out = T.pick(a, [2, 0])
    assert out.data.tolist() == [[3.0], [4.0]]


def test_gather_rows_and_scatter_add() -> None:
    table = T.tensor(np.arange(12.0).reshape(4, 3), requires_grad=True)
    out = T.gather_rows(table, [1, 1, 3])
    np.testing.assert_allclose(out.data[0], out.data[1])
    T.tsum(out).backward()
    # row 1 was used twice, so its gradient doubles
    expected = np.zeros((4, 3))
    expected[1] = 2.0
    expected[3] = 1.0
    np.testing.assert_allclose(table.grad, expected)


def test_concat_slice_roundtrip() -> None:
    a = T.tensor(RNG.normal(size=(2, 3)))
    b = T.tensor(RNG.normal(size=(2, 4)))
    cat = T.concat_cols([a, b])
    np.testing.assert_allclose(T.slice_cols(cat, 0, 3).data, a.data)
    np.testing.assert_allclose(T.slice_cols(cat, 3, 7).data, b.data)


def test_broadcast_row_sums_gradient() -> None:
    row = T.tensor([[1.0, 2.0]], requires_grad=True)
    out = T.broadcast_row(row, 5)
    assert out.shape == (5, 2)
    T.tsum(out).backward()
    np.testing.assert_allclose(row.grad, [[5.0, 5.0]])


def test_normalize_rows_unit_length() -> None:
    a = T.tensor([[3.0, 4.0]])
    out = T.normalize_rows(a)
    np.testing.assert_allclose(out.data, [[0.6, 0.8]])
    with pytest.raises(NumericError):
        T.normalize_rows(T.tensor([[0.0, 0.0]]))


def test_simple_parameter_gradients() -> None:
    # sum(W) -> ones; sum(W*W)/2 -> W
    w = T.tensor([[1.0, -2.0], [0.5, 3.0]], requires_grad=True)
    T.tsum(w).backward()
    np.testing.assert_allclose(w.grad, np.ones((2, 2)))

    w2 = T.tensor([[1.0, -2.0], [0.5, 3.0]], requires_grad=True)
    T.scale(T.tsum(T.mul(w2, w2)), 0.5).backward()
    np.testing.assert_allclose(w2.grad, w2.data)


def test_shape_errors() -> None:
    with pytest.raises(ShapeError):
        T.matmul(T.tensor([[1.0, 2.0]]), T.tensor([[1.0, 2.0]]))
    with pytest.raises(ShapeError):
        T.add(T.tensor([[1.0, 2.0]]), T.tensor([[1.0, 2.0, 3.0]]))
    with pytest.raises(ShapeError):
        T.mul(T.tensor([[1.0, 2.0]]), T.tensor([[1.0, 2.0, 3.0]]))


def test_nonfinite_input_rejected() -> None:
    with pytest.raises(NumericError):
        T.tensor([[np.inf]])
    with pytest.raises(NumericError):
        T.tensor([[np.nan, 1.0]])


def test_no_grad_skips_graph() -> None:
    w = T.tensor([[2.0]], requires_grad=True)
    with T.no_grad():
        out = T.mul(w, w)
    assert not out.requires_grad
    assert out._parents == ()


# ---------------------------------------------------------------------------
# gradients against central differences
# ---------------------------------------------------------------------------


def test_grad_matmul_chain() -> None:
    b0 = RNG.normal(size=(3, 2))
    check_grad(lambda w: T.tsum(T.matmul(w, T.tensor(b0))), RNG.normal(size=(4, 3)))


def test_grad_add_bias() -> None:
    x0 = RNG.normal(size=(3, 4))
    check_grad(
        lambda b: T.tsum(T.tanh(T.add(T.tensor(x0), b))), RNG.normal(size=4)
    )


def test_grad_softmax() -> None:
    check_grad(
        lambda x: T.tsum(T.mul(T.softmax(x), T.softmax(x))),
        RNG.normal(size=(2, 5)),
    )


def test_grad_masked_softmax() -> None:
    mask = np.array([[True, False, True, True], [True, True, True, False]])
    w0 = RNG.normal(size=(2, 4))
    check_grad(
        lambda x: T.tsum(T.mul(T.softmax(x, mask=mask), T.tensor(w0))),
        RNG.normal(size=(2, 4)),
    )


def test_grad_log_softmax_pick() -> None:
    check_grad(
        lambda x: T.neg(T.tsum(T.pick(T.log_softmax(x), [1, 3, 0]))),
        RNG.normal(size=(3, 5)),
    )


def test_grad_layernorm_input() -> None:
    g0 = RNG.normal(size=6) + 1.0
    b0 = RNG.normal(size=6)
    check_grad(
        lambda x: T.tsum(
            T.gelu(T.layernorm(x, T.tensor(g0), T.tensor(b0)))
        ),
        RNG.normal(size=(3, 6)),
    )


def test_grad_layernorm_gain_bias() -> None:
    x0 = RNG.normal(size=(4, 5))

    def loss_gain(g: T.Tensor) -> T.Tensor:
        return T.tsum(T.layernorm(T.tensor(x0), g, T.tensor(np.zeros(5))))

    # gain gradient via a quadratic so it is nontrivial
    def loss_gain2(g: T.Tensor) -> T.Tensor:
        out = T.layernorm(T.tensor(x0), g, T.tensor(np.zeros(5)))
        return T.tsum(T.mul(out, out))

    check_grad(loss_gain2, RNG.normal(size=5) + 1.0)

    def loss_bias(b: T.Tensor) -> T.Tensor:
        out = T.layernorm(T.tensor(x0), T.tensor(np.ones(5)), b)
        return T.tsum(T.mul(out, out))

    check_grad(loss_bias, RNG.normal(size=5))


def test_grad_gelu_sigmoid_tanh() -> None:
    x0 = RNG.normal(size=(2, 7))
    check_grad(lambda x: T.tsum(T.gelu(x)), x0.copy())
    check_grad(lambda x: T.tsum(T.sigmoid(x)), x0.copy())
    check_grad(lambda x: T.tsum(T.tanh(x)), x0.copy())


def test_grad_normalize_rows() -> None:
    w0 = RNG.normal(size=(3, 4))
    check_grad(
        lambda x: T.tsum(T.mul(T.normalize_rows(x), T.tensor(w0))),
        RNG.normal(size=(3, 4)) + 0.5,
    )


def test_grad_concat_slice_transpose() -> None:
    def loss(x: T.Tensor) -> T.Tensor:
        cat = T.concat_cols([x, T.scale(x, 2.0)])
        back = T.slice_cols(cat, 2, 4)
        return T.tsum(T.matmul(back, T.transpose(x)))

    check_grad(loss, RNG.normal(size=(2, 2)))


def test_grad_gather_broadcast_mean() -> None:
    def loss(table: T.Tensor) -> T.Tensor:
        picked = T.gather_rows(table, [0, 2, 2])
        row = T.slice_rows(picked, 0, 1)
        spread = T.broadcast_row(row, 4)
        return T.tmean(T.mul(spread, spread))

    check_grad(loss, RNG.normal(size=(3, 2)))


def test_grad_shared_subexpression() -> None:
    # value feeding two branches must accumulate both contributions
    def loss(x: T.Tensor) -> T.Tensor:
        s = T.sigmoid(x)
        return T.add(T.tsum(T.mul(s, s)), T.tsum(T.tanh(s)))

    check_grad(loss, RNG.normal(size=(2, 3)))


@settings(max_examples=25, deadline=None)
@given(
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_grad_random_composite(rows: int, cols: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    w0 = rng.normal(size=(cols, cols))

    def loss(x: T.Tensor) -> T.Tensor:
        h = T.gelu(T.matmul(x, T.tensor(w0)))
        return T.tmean(T.mul(h, h))

    check_grad(loss, rng.normal(size=(rows, cols)))


def test_backward_requires_scalar() -> None:
    with pytest.raises(UsageError):
        T.tensor([[1.0, 2.0]], requires_grad=True).backward()


def test_parameter_set_registry() -> None:
    ps = T.ParameterSet()
    ps.register("w", np.ones((2, 3)))
    ps.register("b", np.zeros(3))
    assert ps.count() == 9
    assert ps.names() == ["w", "b"]
    with pytest.raises(UsageError):
        ps.register("w", np.ones(1))


def test_backward_helper_fills_missing_with_zeros() -> None:
    ps = T.ParameterSet()
    w = ps.register("w", np.array([[2.0]]))
    unused = ps.register("unused", np.ones(3))
    loss = T.tsum(T.mul(w.tensor, w.tensor))
    grads = T.backward(loss, ps)
    np.testing.assert_allclose(grads["w"], [[4.0]])
    np.testing.assert_allclose(grads["unused"], np.zeros(3))
