import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from melcode.errors import DimensionError, DivergenceError
from melcode.nn import (
    LINEAR,
    SIGMOID,
    DenseNet,
    LayerParams,
    Topology,
    TrainConfig,
    backward,
    forward,
    init_net,
    mse_loss,
    sgd_train,
    sigmoid,
)

from .oracles import numeric_gradients, plain_forward, plain_mse


def random_net(rng, widths, tags):
    return DenseNet(tuple(
        LayerParams(rng.normal(0, 0.8, (o, i)), rng.normal(0, 0.3, o), t)
        for i, o, t in zip(widths[:-1], widths[1:], tags)
    ))


def max_rel_error(a, b):
    # below ~1e-6 the finite-difference roundoff (~1e-11) dominates the ratio
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(a) + np.abs(b), 1e-6)))


class TestForward:
    def test_identity(self, rng):
        net = DenseNet((LayerParams(np.eye(4), np.zeros(4), LINEAR),))
        x = rng.standard_normal(4)
        assert np.array_equal(forward(net, x), x)

    def test_sigmoid_at_zero(self):
        net = DenseNet((LayerParams(np.zeros((3, 5)), np.zeros(3), SIGMOID),))
        assert np.all(forward(net, np.ones((2, 5))) == 0.5)

    def test_composition(self, rng):
        a = random_net(rng, (4, 6), (SIGMOID,))
        b = random_net(rng, (6, 3), (LINEAR,))
        x = rng.standard_normal((7, 4))
        both = DenseNet(a.layers + b.layers)
        assert np.array_equal(forward(both, x), forward(b, forward(a, x)))

    def test_matches_loop_reference(self, rng):
        net = random_net(rng, (3, 4, 2), (SIGMOID, LINEAR))
        x = rng.standard_normal((5, 3))
        ref = plain_forward([(l.weights, l.bias, l.activation) for l in net.layers], x)
        assert np.allclose(forward(net, x), ref, rtol=1e-12, atol=1e-12)

    def test_dimension_mismatch(self):
        net = DenseNet((LayerParams(np.zeros((2, 3)), np.zeros(2), LINEAR),))
        with pytest.raises(DimensionError):
            forward(net, np.zeros(4))

    def test_layers_must_chain(self):
        with pytest.raises(DimensionError):
            DenseNet((LayerParams(np.zeros((2, 3)), np.zeros(2)), LayerParams(np.zeros((2, 3)), np.zeros(2))))

    def test_sigmoid_extremes_stay_finite(self):
        out = sigmoid(np.array([-1000.0, 0.0, 1000.0]))
        assert out.tolist() == [0.0, 0.5, 1.0]


class TestLoss:
    def test_zero_on_equal(self, rng):
        a = rng.standard_normal((3, 4))
        assert mse_loss(a, a) == 0.0

    def test_ones(self):
        assert mse_loss(np.ones((1, 6)), np.zeros((1, 6))) == 1.0

    def test_hand_value(self):
        assert mse_loss([[2.0, 0.0]], [[0.0, 0.0]]) == 2.0

    def test_symmetric_and_matches_loop(self, rng):
        a, b = rng.standard_normal((2, 5, 3))
        assert mse_loss(a, b) == mse_loss(b, a)
        assert mse_loss(a, b) == pytest.approx(plain_mse(a, b), rel=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            mse_loss(np.zeros((2, 3)), np.zeros((3, 2)))


class TestBackward:
    def test_zero_residual(self, rng):
        net = random_net(rng, (3, 4, 2), (SIGMOID, LINEAR))
        x = rng.standard_normal((5, 3))
        for gw, gb in backward(net, x, forward(net, x)):
            assert not gw.any() and not gb.any()

    def test_single_linear_closed_form(self, rng):
        net = random_net(rng, (4, 3), (LINEAR,))
        x = rng.standard_normal(4)
        target = rng.standard_normal(3)
        pred = forward(net, x)
        (gw, gb), = backward(net, x, target)
        assert np.allclose(gw, (2.0 / 3) * np.outer(pred - target, x), rtol=1e-13)
        assert np.allclose(gb, (2.0 / 3) * (pred - target), rtol=1e-13)

    @given(st.integers(0, 10_000), st.integers(1, 4))
    @settings(max_examples=25, deadline=None)
    def test_matches_finite_differences(self, seed, depth):
        rng = np.random.default_rng(seed)
        widths = tuple(int(w) for w in rng.integers(1, 11, depth + 1))
        tags = tuple(rng.choice([LINEAR, SIGMOID], depth))
        net = random_net(rng, widths, tags)
        x = rng.standard_normal((3, widths[0]))
        y = rng.standard_normal((3, widths[-1]))
        params = []
        for layer in net.layers:
            params += [layer.weights.copy(), layer.bias.copy()]

        def loss():
            layers = [(params[2 * k], params[2 * k + 1], t) for k, t in enumerate(tags)]
            return plain_mse(plain_forward(layers, x), y)

        numeric = numeric_gradients(loss, params)
        analytic = [g for pair in backward(net, x, y) for g in pair]
        for a, n in zip(analytic, numeric):
            assert max_rel_error(a, n) < 1e-4


class TestInit:
    def test_biases_zero(self):
        net = init_net(Topology((7, 5, 3)), 1)
        assert all(not layer.bias.any() for layer in net.layers)

    def test_same_seed_same_net(self):
        a = init_net(Topology((7, 5, 3)), 42)
        b = init_net(Topology((7, 5, 3)), 42)
        assert a == b
        assert init_net(Topology((7, 5, 3)), 43) != a

    def test_ranges(self):
        net = init_net(Topology((30, 20, 10)), 0)
        sig, lin = net.layers
        assert sig.activation == SIGMOID and lin.activation == LINEAR
        assert np.abs(sig.weights).max() <= 4 * np.sqrt(6 / 50)
        assert np.abs(sig.weights).max() > np.sqrt(6 / 50)
        assert np.abs(lin.weights).max() <= np.sqrt(6 / 30)

    def test_large_layer_mean(self):
        net = init_net(Topology((1000, 1000)), 0)
        assert abs(net.layers[0].weights.mean()) < 0.01

    def test_topology_defaults(self):
        topo = Topology((257, 125, 75, 50))
        assert topo.activations == (SIGMOID, SIGMOID, LINEAR)
        assert str(topo) == "257x125x75x50"
        assert Topology.parse("257x125x75x50") == topo

    @pytest.mark.parametrize("bad", [(5,), (5, 0)])
    def test_bad_topology(self, bad):
        with pytest.raises(ValueError):
            Topology(bad)


def linear_data(rng, n=200):
    w = rng.standard_normal((3, 4))
    x = rng.standard_normal((n, 4))
    return x, x @ w.T + 0.5


class TestSgd:
    def test_zero_learning_rate_leaves_net(self, rng):
        net = init_net(Topology((4, 5, 3)), 0)
        x, y = linear_data(rng)
        trained, trace = sgd_train(net, x, y, TrainConfig(10, 3, 0.0, 0))
        assert trained == net
        assert len(trace) == 3

    def test_linear_regression_descends(self, rng):
        net = init_net(Topology((4, 3)), 0)
        x, y = linear_data(rng)
        _, trace = sgd_train(net, x, y, TrainConfig(10, 20, 0.1, 0))
        assert trace[-1] < trace[0]

    def test_deterministic(self, rng):
        net = init_net(Topology((4, 6, 3)), 0)
        x, y = linear_data(rng)
        cfg = TrainConfig(7, 5, 0.05, 9)
        a, ta = sgd_train(net, x, y, cfg)
        b, tb = sgd_train(net, x, y, cfg)
        assert a == b and ta == tb

    def test_step_count(self, rng):
        net = init_net(Topology((4, 3)), 0)
        x, y = linear_data(rng, 25)
        steps = []
        sgd_train(net, x, y, TrainConfig(10, 4, 0.01, 0), input_transform=lambda b: steps.append(len(b)) or b)
        assert len(steps) == 4 * 3
        assert steps[:3] == [10, 10, 5]

    def test_one_step_is_gradient_step(self, rng):
        net = init_net(Topology((4, 3)), 0)
        x, y = linear_data(rng, 8)
        trained, _ = sgd_train(net, x, y, TrainConfig(8, 1, 0.3, 0, shuffle=False))
        (gw, gb), = backward(net, x, y)
        assert np.allclose(trained.layers[0].weights, net.layers[0].weights - 0.3 * gw, rtol=1e-14)
        assert np.allclose(trained.layers[0].bias, net.layers[0].bias - 0.3 * gb, rtol=1e-14)

    def test_order_invariant_loss_at_zero_lr(self, rng):
        net = init_net(Topology((4, 5, 3)), 0)
        x, y = linear_data(rng, 60)
        _, shuffled = sgd_train(net, x, y, TrainConfig(7, 2, 0.0, 3, shuffle=True))
        _, ordered = sgd_train(net, x, y, TrainConfig(7, 2, 0.0, 3, shuffle=False))
        full = mse_loss(forward(net, x), y)
        assert shuffled == pytest.approx(ordered, rel=1e-12)
        assert shuffled[0] == pytest.approx(full, rel=1e-12)

    def test_hook_sees_every_epoch(self, rng):
        net = init_net(Topology((4, 3)), 0)
        x, y = linear_data(rng, 20)
        seen = []
        _, trace = sgd_train(net, x, y, TrainConfig(5, 3, 0.01, 0), hook=lambda e, l, n: seen.append((e, l)))
        assert seen == list(enumerate(trace))

    def test_divergence_names_epoch(self, rng):
        net = init_net(Topology((4, 3)), 0)
        x, y = linear_data(rng)
        with pytest.raises(DivergenceError) as info:
            sgd_train(net, x * 1e3, y, TrainConfig(10, 50, 10.0, 0))
        assert "epoch" in str(info.value)
        assert info.value.epoch >= 0

    def test_rejects_empty_and_mismatched(self, rng):
        net = init_net(Topology((4, 3)), 0)
        with pytest.raises(ValueError):
            sgd_train(net, np.zeros((0, 4)), np.zeros((0, 3)), TrainConfig())
        with pytest.raises(DimensionError):
            sgd_train(net, np.zeros((5, 4)), np.zeros((5, 2)), TrainConfig())

    @pytest.mark.parametrize("kwargs", [{"batch_size": 0}, {"epochs": 0}, {"learning_rate": -1.0}])
    def test_config_validation(self, kwargs):
        with pytest.raises(ValueError):
            TrainConfig(**kwargs)

    def test_sigmoid_outputs_in_open_interval(self, rng):
        net = random_net(rng, (5, 4), (SIGMOID,))
        out = forward(net, rng.standard_normal((50, 5)) * 3)
        assert np.all((out > 0) & (out < 1))
