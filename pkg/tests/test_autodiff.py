import numpy as np
import pytest

from splatqa.autodiff import Tensor, as_tensor, layer_norm, softmax, stack
from splatqa.rng import make_rng


def numeric_grad(fn, x: np.ndarray, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar-valued fn at every coordinate."""
    g = np.zeros_like(x)
    flat = x.ravel()
    gf = g.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(x)
        flat[i] = orig - h
        down = fn(x)
        flat[i] = orig
        gf[i] = (up - down) / (2 * h)
    return g


def check_op(build, shape, seed=0, h=1e-6, tol=1e-6):
    """Compare analytic gradients of sum(build(x)) against finite differences."""
    rng = make_rng(seed)
    x = rng.normal(size=shape)

    def value(arr):
        return float(build(Tensor(arr.copy())).sum().data)

    t = Tensor(x.copy(), requires_grad=True)
    out = build(t).sum()
    out.backward()
    num = numeric_grad(value, x.copy(), h)
    assert np.allclose(t.grad, num, rtol=tol, atol=tol), f"max diff {np.abs(t.grad - num).max()}"


class TestElementwise:
    def test_add_mul_broadcast(self):
        check_op(lambda t: t * 2.0 + 3.0, (4, 5))
        rng = make_rng(1)
        c = Tensor(rng.normal(size=(5,)))
        check_op(lambda t: t * c + c, (4, 5))

    def test_div(self):
        rng = make_rng(2)
        c = Tensor(rng.normal(size=(4, 5)) + 3.0)
        check_op(lambda t: t / c, (4, 5))
        check_op(lambda t: c / (t * t + 2.0), (4, 5))

    def test_relu_leaky_gelu(self):
        check_op(lambda t: t.relu(), (40,), seed=3)
        check_op(lambda t: t.leaky_relu(0.2), (40,), seed=4)
        check_op(lambda t: t.gelu(), (40,), seed=5, tol=1e-5)

    def test_exp_log_sqrt(self):
        check_op(lambda t: t.exp(), (10,), seed=6)
        check_op(lambda t: (t * t + 1.0).log(), (10,), seed=7)
        check_op(lambda t: (t * t + 1.0).sqrt(), (10,), seed=8)


class TestMatmulShapes:
    def test_2d(self):
        rng = make_rng(9)
        b = Tensor(rng.normal(size=(5, 3)))
        check_op(lambda t: t @ b, (4, 5))

    def test_grad_to_both_sides(self):
        rng = make_rng(10)
        a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
        b = Tensor(rng.normal(size=(4, 2)), requires_grad=True)
        (a @ b).sum().backward()
        assert a.grad.shape == (3, 4)
        assert b.grad.shape == (4, 2)
        assert np.allclose(a.grad, np.ones((3, 2)) @ b.data.T)
        assert np.allclose(b.grad, a.data.T @ np.ones((3, 2)))

    def test_vector_cases(self):
        rng = make_rng(11)
        m = Tensor(rng.normal(size=(6, 2)))
        check_op(lambda t: t @ m, (6,))
        v = Tensor(rng.normal(size=(6,)))
        check_op(lambda t: v @ t, (6, 2))


class TestReductions:
    def test_sum_axes(self):
        check_op(lambda t: t.sum(axis=0), (3, 4))
        check_op(lambda t: t.sum(axis=1, keepdims=True), (3, 4))
        check_op(lambda t: t.sum(axis=(0, 2)), (2, 3, 4))

    def test_mean(self):
        check_op(lambda t: t.mean(axis=-1), (3, 4))

    def test_max_routes_to_first_argmax(self):
        x = np.array([[1.0, 5.0, 5.0], [2.0, 0.0, 7.0]])
        t = Tensor(x, requires_grad=True)
        t.max(axis=1).sum().backward()
        assert np.array_equal(t.grad, [[0, 1, 0], [0, 0, 1]])

    def test_max_grad_generic(self):
        check_op(lambda t: t.max(axis=1), (5, 7), seed=12)
        check_op(lambda t: t.max(axis=0, keepdims=True), (5, 7), seed=13)


class TestShapeOps:
    def test_reshape_transpose(self):
        check_op(lambda t: t.reshape(6, 2), (3, 4))
        check_op(lambda t: t.transpose((1, 0, 2)), (2, 3, 4))

    def test_take_rows_scatter_adds(self):
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        t = Tensor(x, requires_grad=True)
        t.take_rows(np.array([0, 0, 1])).sum().backward()
        assert np.array_equal(t.grad, [[2, 2], [1, 1]])

    def test_stack(self):
        rng = make_rng(14)
        a = Tensor(rng.normal(size=()), requires_grad=True)
        b = Tensor(rng.normal(size=()), requires_grad=True)
        out = stack([a, b])
        (out * out).sum().backward()
        assert np.allclose(a.grad, 2 * a.data)
        assert np.allclose(b.grad, 2 * b.data)


class TestComposite:
    def test_softmax_rows_sum_to_one(self):
        rng = make_rng(15)
        t = Tensor(rng.normal(size=(4, 6)) * 50)  # large values: overflow safety
        s = softmax(t, axis=1)
        assert np.allclose(s.data.sum(axis=1), 1.0)

    def test_softmax_grad(self):
        rng = make_rng(16)
        w = Tensor(rng.normal(size=(6,)))
        check_op(lambda t: softmax(t, axis=1) * w, (4, 6), seed=17, tol=1e-5)

    def test_softmax_with_neg_inf_mask(self):
        mask = np.array([[0.0, -np.inf, 0.0]])
        t = Tensor(np.array([[1.0, 2.0, 3.0]]), requires_grad=True)
        s = softmax(t + Tensor(mask), axis=1)
        assert s.data[0, 1] == 0.0
        assert np.allclose(s.data.sum(), 1.0)
        s.max(axis=1).sum().backward()
        assert np.all(np.isfinite(t.grad))

    def test_layer_norm_grad(self):
        rng = make_rng(18)
        g = Tensor(rng.normal(size=(6,)), requires_grad=True)
        b = Tensor(rng.normal(size=(6,)), requires_grad=True)
        check_op(lambda t: layer_norm(t, g, b), (4, 6), seed=19, tol=1e-5)

    def test_zero_upstream_zero_grads(self):
        t = Tensor(np.ones((3, 3)), requires_grad=True)
        out = (t * t).sum()
        out.backward(np.zeros(()))
        assert np.all(t.grad == 0)

    def test_shared_node_accumulates(self):
        t = Tensor(np.array([2.0]), requires_grad=True)
        out = (t * t).sum()  # same tensor twice
        out.backward()
        assert np.allclose(t.grad, [4.0])

    def test_as_tensor_constant(self):
        c = as_tensor(3.0)
        assert not c.requires_grad
        assert float(c.data) == 3.0
