import numpy as np
import pytest

from stvae import autodiff as ad
from stvae.autodiff import DimensionError, GraphError, Node

from oracles import rel_err


def _check(build, *shapes, seed=0, positive=False, tol=1e-5):
    """Compare backward() with central differences for a scalar-valued graph builder."""
    rng = np.random.default_rng(seed)
    arrays = [rng.uniform(0.2, 2.0, s) if positive else rng.standard_normal(s) for s in shapes]
    nodes = [Node(a.copy()) for a in arrays]
    out = ad.sum(build(*nodes))
    ad.backward(out)
    for i, a in enumerate(arrays):
        def f(v, i=i):
            vals = [x.copy() for x in arrays]
            vals[i] = v.reshape(a.shape)
            return ad.sum(build(*[Node(x) for x in vals])).item()

        numeric = ad.finite_diff_gradient(f, a, eps=1e-6)
        assert rel_err(nodes[i].grad, numeric, floor=1e-4) < tol, f"input {i}"


UNARY = {
    "exp": ad.exp, "tanh": ad.tanh, "sigmoid": ad.sigmoid, "softplus": ad.softplus,
    "square": ad.square, "identity": ad.identity,
}
POSITIVE = {"log": ad.log, "log1p": ad.log1p, "sqrt": ad.sqrt, "digamma": ad.digamma}


@pytest.mark.parametrize("name", sorted(UNARY))
@pytest.mark.parametrize("seed", range(5))
def test_unary_gradients(name, seed):
    _check(UNARY[name], (3, 4), seed=seed)


@pytest.mark.parametrize("name", sorted(POSITIVE))
def test_positive_domain_gradients(name):
    _check(POSITIVE[name], (3, 4), positive=True)


@pytest.mark.parametrize("seed", range(100))
def test_composite_graph_matches_finite_differences(seed):
    def build(x, W, b, c):
        h = ad.tanh(ad.affine(x, W, b))
        y = ad.softplus(h @ c) * ad.sigmoid(ad.slice_rows(h, 0, 3) @ c)
        return y / (ad.exp(y) + 1.0) - ad.log1p(ad.square(h)) * 0.5

    _check(build, (3, 4), (4, 5), (1, 5), (5, 1), seed=seed)


@pytest.mark.parametrize("op", [ad.add, ad.sub, ad.mul, ad.div])
def test_broadcast_binary_ops(op):
    _check(lambda a, b: op(a, b), (4, 3), (1, 3), positive=True)
    _check(lambda a, b: op(a, b), (4, 3), (4, 1), positive=True)
    _check(lambda a, b: op(a, b), (4, 3), (1, 1), positive=True)


def test_reductions_and_row_ops():
    _check(lambda a: ad.sum(a, axis=0) * ad.sum(a, axis=0), (4, 3))
    _check(lambda a: ad.sum(a, axis=1) * ad.sum(a, axis=1), (4, 3))
    _check(lambda a: ad.mean(ad.square(a)), (4, 3))
    _check(lambda a: ad.square(ad.tile_rows(a, 3)) * ad.tile_rows(a, 3), (2, 3))
    _check(lambda a: ad.exp(ad.slice_rows(a, 1, 3)), (4, 3))


def test_reused_node_accumulates():
    x = Node(np.array([[1.5]]))
    y = x * x + x * 3.0
    ad.backward(y)
    assert x.grad[0, 0] == pytest.approx(2 * 1.5 + 3.0)


def test_matmul_example():
    a = Node(np.array([[1.0, 2.0]]))
    b = Node(np.array([[3.0], [4.0]]))
    loss = a @ b
    ad.backward(loss)
    assert loss.item() == 11.0
    np.testing.assert_array_equal(a.grad, [[3.0, 4.0]])
    np.testing.assert_array_equal(b.grad, [[1.0], [2.0]])


def test_relu_derivative_at_zero_is_zero():
    x = Node(np.array([[-1.0, 0.0, 2.0]]))
    ad.backward(ad.sum(ad.relu(x)))
    np.testing.assert_array_equal(x.grad, [[0.0, 0.0, 1.0]])


def test_softplus_large_input_is_identity():
    x = Node(np.array([[50.0, 800.0]]))
    out = ad.softplus(x)
    np.testing.assert_array_equal(out.value, [[50.0, 800.0]])
    ad.backward(ad.sum(out))
    np.testing.assert_allclose(x.grad, [[1.0, 1.0]])


def test_backward_requires_scalar_loss():
    with pytest.raises(GraphError):
        ad.backward(Node(np.zeros((2, 1))))


def test_backward_twice_raises_until_reset():
    x = Node(np.array([[2.0]]))
    loss = ad.square(x)
    ad.backward(loss)
    with pytest.raises(GraphError):
        ad.backward(loss)
    ad.reset(loss)
    ad.backward(loss)
    assert x.grad[0, 0] == 4.0


def test_shape_mismatch_raises():
    with pytest.raises(DimensionError):
        Node(np.zeros((2, 3))) @ Node(np.zeros((2, 3)))
    with pytest.raises(DimensionError):
        Node(np.zeros((2, 3))) + Node(np.zeros((3, 2)))


def test_unknown_activation_rejected():
    with pytest.raises(ValueError):
        ad.activation(Node(np.zeros((1, 1))), "swish")


def test_gradients_are_deterministic():
    def run():
        rng = np.random.default_rng(3)
        x, W = Node(rng.standard_normal((5, 4))), Node(rng.standard_normal((4, 3)))
        ad.backward(ad.sum(ad.tanh(x @ W)))
        return W.grad.copy()

    np.testing.assert_array_equal(run(), run())


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ValueError):
        ad.finite_diff_gradient(lambda v: 0.0, [1.0], eps=0.0)
