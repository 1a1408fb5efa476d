import numpy as np
from django.test import SimpleTestCase
from numpy.testing import assert_allclose, assert_array_equal

from safefl_app.engine.detection import matching_objective
from safefl_app.engine.exceptions import GraphError
from safefl_app.engine.networks import SoftmaxRegression, TanhMLP
from safefl_app.engine.tensor_graph import Graph, Tensor, backward


def central_difference(f, x, h=1e-5):
    grad = np.zeros_like(x)
    for index in np.ndindex(x.shape):
        plus, minus = x.copy(), x.copy()
        plus[index] += h
        minus[index] -= h
        grad[index] = (f(plus) - f(minus)) / (2 * h)
    return grad


def max_relative_error(analytic, numeric, floor=1e-8):
    mask = np.abs(analytic) > floor
    if not mask.any():
        return 0.0
    return float(np.max(np.abs(analytic[mask] - numeric[mask]) / np.abs(analytic[mask])))


class TensorTests(SimpleTestCase):

    def test_rejects_non_finite_values(self):
        with self.assertRaises(GraphError):
            Tensor([1.0, np.nan])
        with self.assertRaises(GraphError):
            Graph().leaf([np.inf])

    def test_tensor_is_read_only(self):
        tensor = Tensor([[1.0, 2.0]])
        with self.assertRaises(ValueError):
            tensor.data[0, 0] = 5.0


class GraphTests(SimpleTestCase):

    def test_product_rule(self):
        g = Graph()
        a = g.leaf([1.0, 2.0, 3.0], requires_grad=True)
        b = g.leaf([4.0, 5.0, 6.0], requires_grad=True)
        out = g.mean(g.multiply(a, b))
        grads = backward(g, out)
        assert_allclose(grads[a], np.array([4.0, 5.0, 6.0]) / 3)
        assert_allclose(grads[b], np.array([1.0, 2.0, 3.0]) / 3)

    def test_bias_broadcast_is_summed_back(self):
        g = Graph()
        x = g.leaf(np.ones((3, 2)), requires_grad=True)
        bias = g.leaf([0.5, -0.5], requires_grad=True)
        out = g.squared_l2_norm(g.add(x, bias))
        grads = g.backward(out)
        assert_allclose(grads[bias], 2 * np.array([1.5, 0.5]) * 3)
        self.assertEqual(grads[x].shape, (3, 2))

    def test_incompatible_broadcast_raises(self):
        g = Graph()
        a = g.leaf(np.ones((3, 1)))
        b = g.leaf(np.ones((1, 4)))
        with self.assertRaises(GraphError):
            g.add(a, b)
        with self.assertRaises(GraphError):
            g.matmul(g.leaf(np.ones((2, 3))), g.leaf(np.ones((2, 3))))

    def test_backward_needs_scalar(self):
        g = Graph()
        a = g.leaf([1.0, 2.0], requires_grad=True)
        with self.assertRaises(GraphError):
            g.backward(g.tanh(a))

    def test_unreached_leaf_gets_zero_gradient(self):
        g = Graph()
        a = g.leaf([1.0, 2.0], requires_grad=True)
        unused = g.leaf([[3.0]], requires_grad=True)
        grads = g.backward(g.squared_l2_norm(a))
        assert_array_equal(grads[unused], np.zeros((1, 1)))
        assert_allclose(grads[a], [2.0, 4.0])

    def test_operands_from_another_graph_are_rejected(self):
        first, second = Graph(), Graph()
        a = first.leaf([1.0])
        b = second.leaf([1.0])
        with self.assertRaises(GraphError):
            first.add(a, b)

    def test_soft_cross_entropy_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        logits0 = rng.normal(size=(4, 3))
        targets0 = rng.dirichlet(np.ones(3), size=4)

        def value(logits, targets):
            g = Graph()
            return float(g.soft_cross_entropy(g.leaf(logits), g.leaf(targets)).value)

        g = Graph()
        logits = g.leaf(logits0, requires_grad=True)
        targets = g.leaf(targets0, requires_grad=True)
        grads = g.backward(g.soft_cross_entropy(logits, targets))
        assert_allclose(grads[logits], central_difference(lambda z: value(z, targets0), logits0), atol=1e-8)
        assert_allclose(grads[targets], central_difference(lambda t: value(logits0, t), targets0), atol=1e-8)

    def test_softmax_and_concat_gradients(self):
        rng = np.random.default_rng(1)
        z0 = rng.normal(size=(3, 4))
        weights = rng.normal(size=12)

        def value(z):
            g = Graph()
            flat = g.concat([g.softmax_rows(g.leaf(z))])
            return float(g.mean(g.multiply(flat, g.leaf(weights))).value)

        g = Graph()
        z = g.leaf(z0, requires_grad=True)
        out = g.mean(g.multiply(g.concat([g.softmax_rows(z)]), g.leaf(weights)))
        assert_allclose(g.backward(out)[z], central_difference(value, z0), atol=1e-9)


class HypergradientTests(SimpleTestCase):
    """Gradient of the trajectory-matching objective through unrolled SGD."""

    def check(self, network, seed):
        rng = np.random.default_rng(seed)
        w_start = network.init_params(rng)
        w_target = w_start + rng.normal(0.0, 0.05, size=network.dim)
        X0 = rng.normal(size=(4, network.n_features))
        Y0 = rng.normal(size=(4, network.n_classes))
        steps, inner_lr = 3, 0.5

        _, grad_X, grad_Y = matching_objective(network, w_start, w_target, X0, Y0, steps, inner_lr)

        def objective_X(X):
            return matching_objective(network, w_start, w_target, X, Y0, steps, inner_lr)[0]

        def objective_Y(Y):
            return matching_objective(network, w_start, w_target, X0, Y, steps, inner_lr)[0]

        self.assertLessEqual(max_relative_error(grad_X, central_difference(objective_X, X0)), 1e-4)
        self.assertLessEqual(max_relative_error(grad_Y, central_difference(objective_Y, Y0)), 1e-4)

    def test_softmax_regression_two_classes(self):
        self.check(SoftmaxRegression(4, 2), seed=0)

    def test_tanh_mlp(self):
        self.check(TanhMLP(4, 3, hidden=5), seed=1)
