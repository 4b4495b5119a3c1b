import numpy as np
import pytest

from prosodiff.autodiff import GradError, ShapeError, Tensor, concat, zero_grads

from conftest import gradcheck


def test_sum_gradient_is_ones():
    x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((2, 3)))


def test_quadratic_gradient():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    (x * x).sum().backward()
    assert np.allclose(x.grad, 2.0 * x.data, atol=0, rtol=0)


def test_backward_rejects_non_scalar():
    x = Tensor(np.ones(4), requires_grad=True)
    with pytest.raises(GradError):
        (x * 2.0).backward()


def test_matmul_rejects_1d():
    with pytest.raises(ShapeError):
        Tensor(np.ones(3), requires_grad=True) @ Tensor(np.ones((3, 2)))


def test_matmul_rejects_mismatched_inner_dims():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((4, 2)))


def test_reuse_accumulates_gradient():
    # y = x + x should give dy/dx = 2
    x = Tensor(np.array([3.0]), requires_grad=True)
    (x + x).sum().backward()
    assert x.grad[0] == 2.0


def test_gradcheck_elementwise_chain():
    rng = np.random.default_rng(0)
    x0 = rng.uniform(0.5, 1.5, size=(3, 4))
    err = gradcheck(lambda t: ((t.exp() + t.log()) * t.tanh()).sum(), x0)
    assert err < 1e-6


def test_gradcheck_broadcast_add_mul():
    rng = np.random.default_rng(1)
    a0 = rng.standard_normal((2, 1, 4))

    def loss(t):
        b = Tensor(np.arange(12.0).reshape(3, 4) * 0.1)
        return ((t + b) * b + t * 2.0).sum()

    assert gradcheck(loss, a0) < 1e-7


def test_gradcheck_matmul_batched():
    rng = np.random.default_rng(2)
    a0 = rng.standard_normal((2, 3, 4))
    w = rng.standard_normal((4, 5))
    err = gradcheck(lambda t: (t @ Tensor(w)).sum(), a0)
    assert err < 1e-7


def test_gradcheck_softmax_and_log_softmax():
    rng = np.random.default_rng(3)
    x0 = rng.standard_normal((4, 6))
    tgt = rng.standard_normal((4, 6))
    err1 = gradcheck(lambda t: (t.softmax(axis=-1) * Tensor(tgt)).sum(), x0)
    err2 = gradcheck(lambda t: (t.log_softmax(axis=-1) * Tensor(tgt)).sum(), x0)
    assert err1 < 1e-6 and err2 < 1e-6


def test_gradcheck_reductions_and_reshape():
    rng = np.random.default_rng(4)
    x0 = rng.standard_normal((3, 4))

    def loss(t):
        m = t.mean(axis=0)
        return (m * m).sum() + t.reshape(12).sum() + t.swapaxes(0, 1).sum()

    assert gradcheck(loss, x0) < 1e-7


def test_getitem_gradient_repeated_index():
    x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    idx = np.array([0, 0, 2])
    x[idx].sum().backward()
    assert np.array_equal(x.grad, np.array([2.0, 0.0, 1.0]))


def test_concat_gradient_splits_correctly():
    a = Tensor(np.ones((2, 2)), requires_grad=True)
    b = Tensor(np.ones((2, 3)), requires_grad=True)
    out = concat([a, b], axis=1)
    (out * np.arange(10.0).reshape(2, 5)).sum().backward()
    assert np.array_equal(a.grad, np.array([[0.0, 1.0], [5.0, 6.0]]))
    assert np.array_equal(b.grad, np.array([[2.0, 3.0, 4.0], [7.0, 8.0, 9.0]]))


def test_backward_is_deterministic():
    rng = np.random.default_rng(5)
    x0 = rng.standard_normal((4, 4))
    grads = []
    for _ in range(2):
        t = Tensor(x0.copy(), requires_grad=True)
        ((t @ t).softmax(axis=-1).log() * t.tanh()).sum().backward()
        grads.append(t.grad.copy())
    assert np.array_equal(grads[0], grads[1])


def test_zero_grads_clears():
    x = Tensor(np.ones(3), requires_grad=True)
    x.sum().backward()
    assert x.grad is not None
    zero_grads([x])
    assert x.grad is None


def test_no_grad_tracking_without_requires_grad():
    x = Tensor(np.ones(3))
    y = (x * 2.0).sum()
    assert not y.requires_grad


def test_division_and_pow():
    rng = np.random.default_rng(6)
    x0 = rng.uniform(0.5, 2.0, size=(5,))
    err = gradcheck(lambda t: (1.0 / t + t ** 3 + t.sqrt()).sum(), x0)
    assert err < 1e-6
