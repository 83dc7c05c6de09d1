import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, strategies as st

from comopt import net
from comopt.net import (DenseLayer, GradientError, ObjectiveModel, adam_step,
                        build_model, forward, forward_batch, init_adam,
                        input_gradient, leaky_relu, param_gradients)


def linear_model(weight=1.0, bias=0.0):
    return ObjectiveModel([DenseLayer(np.array([[weight]]), np.array([bias]))])


def fd_param_gradients(model, batch, loss_spec, h=1e-5):
    """Central finite differences on the batch-mean loss, parameter by
    parameter. Independent of the backprop path it is checking."""
    def loss(m):
        preds = np.array([forward(m, x) for x, _, _ in batch])
        targets = np.array([t for _, t, _ in batch])
        weights = np.array([w for _, _, w in batch])
        if loss_spec == "squared_error":
            return float(np.mean(weights * 0.5 * (preds - targets) ** 2))
        return float(np.mean(weights * preds))

    grads = []
    for k, lyr in enumerate(model.layers):
        dw = np.zeros_like(lyr.weights)
        db = np.zeros_like(lyr.bias)
        for idx in np.ndindex(*lyr.weights.shape):
            m = model.copy()
            m.layers[k].weights[idx] += h
            hi = loss(m)
            m.layers[k].weights[idx] -= 2 * h
            lo = loss(m)
            dw[idx] = (hi - lo) / (2 * h)
        for i in range(lyr.bias.size):
            m = model.copy()
            m.layers[k].bias[i] += h
            hi = loss(m)
            m.layers[k].bias[i] -= 2 * h
            lo = loss(m)
            db[i] = (hi - lo) / (2 * h)
        grads.append((dw, db))
    return grads


def fd_input_gradient(model, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h
        xm = x.copy()
        xm[i] -= h
        g[i] = (forward(model, xp) - forward(model, xm)) / (2 * h)
    return g


def sample_smooth_case(rng, input_dim, hidden, margin=1e-3):
    """Model/input pair whose pre-activations stay away from the activation
    kink, so central differences are exact (the net is locally linear)."""
    for _ in range(200):
        model = build_model(input_dim, hidden, rng=rng)
        x = rng.normal(size=input_dim)
        pres, _ = net._forward_cached(model, x[None, :])
        if all(np.min(np.abs(p)) > margin for p in pres[:-1]):
            return model, x
    raise RuntimeError("could not sample a kink-free case")


def rel_err(a, b):
    return np.abs(a - b) / np.maximum(1e-3, np.maximum(np.abs(a), np.abs(b)))


class TestLeakyRelu:
    def test_positive_pass_through(self):
        assert leaky_relu(5.0, 0.3) == 5.0

    def test_boundary(self):
        assert leaky_relu(0.0, 0.3) == 0.0

    def test_negative_scaled_by_leak(self):
        assert leaky_relu(-1.0, 0.3) == pytest.approx(-0.3)

    def test_array_input(self):
        npt.assert_allclose(leaky_relu(np.array([-2.0, 3.0]), 0.3), [-0.6, 3.0])

    @given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6))
    def test_monotone_nondecreasing(self, a, b):
        lo, hi = min(a, b), max(a, b)
        assert leaky_relu(lo, 0.3) <= leaky_relu(hi, 0.3)

    @given(st.floats(1e-12, 1e-3))
    def test_continuous_at_zero(self, eps):
        assert abs(leaky_relu(eps, 0.3) - leaky_relu(-eps, 0.3)) <= 2 * eps


class TestForward:
    def test_zero_weight_network_outputs_bias(self):
        model = build_model(4, (8,), rng=np.random.default_rng(0))
        for lyr in model.layers:
            lyr.weights[:] = 0.0
            lyr.bias[:] = 0.0
        model.layers[-1].bias[:] = 3.5
        assert forward(model, np.zeros(4)) == 3.5
        assert forward(model, np.ones(4)) == 3.5

    def test_single_linear_layer(self):
        assert forward(linear_model(weight=2.0), np.array([3.0])) == 6.0

    def test_one_hidden_unit_negative_input_uses_leak(self):
        model = ObjectiveModel([
            DenseLayer(np.array([[1.0]]), np.array([0.0])),
            DenseLayer(np.array([[1.0]]), np.array([0.0])),
        ], leak=0.3)
        assert forward(model, np.array([-2.0])) == pytest.approx(-0.6)

    def test_deterministic_bitwise(self):
        rng = np.random.default_rng(3)
        model = build_model(6, (16, 16), rng=rng)
        x = rng.normal(size=6)
        assert forward(model, x) == forward(model, x)

    def test_dimension_mismatch_raises(self):
        model = build_model(4, (8,), rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            forward(model, np.zeros(5))

    def test_batch_matches_single(self):
        rng = np.random.default_rng(4)
        model = build_model(5, (8, 8), rng=rng)
        X = rng.normal(size=(7, 5))
        batch = forward_batch(model, X)
        npt.assert_allclose(batch, [forward(model, x) for x in X], rtol=1e-12)


class TestModelInvariants:
    def test_final_layer_must_be_scalar(self):
        with pytest.raises(ValueError):
            ObjectiveModel([DenseLayer(np.zeros((2, 3)), np.zeros(2))])

    def test_layer_dims_must_chain(self):
        with pytest.raises(ValueError):
            ObjectiveModel([
                DenseLayer(np.zeros((4, 3)), np.zeros(4)),
                DenseLayer(np.zeros((1, 5)), np.zeros(1)),
            ])

    def test_leak_range(self):
        with pytest.raises(ValueError):
            ObjectiveModel([DenseLayer(np.zeros((1, 1)), np.zeros(1))], leak=1.5)

    def test_default_leak(self):
        model = build_model(3, (4,), rng=np.random.default_rng(0))
        assert model.leak == 0.3


class TestParamGradients:
    def test_linear_squared_error_chain_rule(self):
        # f(x) = w*x with w=1: d/dw of 0.5*(f-0)^2 at x=2 is (2-0)*2 = 4
        grads = param_gradients(linear_model(weight=1.0),
                                [(np.array([2.0]), 0.0, 1.0)], "squared_error")
        npt.assert_allclose(grads[0][0], [[4.0]])
        npt.assert_allclose(grads[0][1], [2.0])

    def test_signed_linear_loss_is_prediction_gradient(self):
        rng = np.random.default_rng(5)
        model = build_model(3, (6,), rng=rng)
        x = rng.normal(size=3)
        grads = param_gradients(model, [(x, 0.0, 1.0)], "linear")
        fd = fd_param_gradients(model, [(x, 0.0, 1.0)], "linear")
        for (dw, db), (fw, fb) in zip(grads, fd):
            assert rel_err(dw, fw).max() < 1e-4
            assert rel_err(db, fb).max() < 1e-4

    def test_two_layer_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        model, x0 = sample_smooth_case(rng, 4, (8,))
        batch = [(x0, float(rng.normal()), 1.0),
                 (x0 + 0.5, float(rng.normal()), 1.0)]
        grads = param_gradients(model, batch, "squared_error")
        fd = fd_param_gradients(model, batch, "squared_error")
        for (dw, db), (fw, fb) in zip(grads, fd):
            assert rel_err(dw, fw).max() < 1e-4
            assert rel_err(db, fb).max() < 1e-4

    def test_empty_batch_rejected(self):
        model = linear_model()
        with pytest.raises(ValueError):
            param_gradients(model, [], "squared_error")

    def test_unknown_loss_spec_rejected(self):
        with pytest.raises(ValueError):
            param_gradients(linear_model(), [(np.array([1.0]), 0.0, 1.0)], "huber")


class TestInputGradient:
    def test_pure_linear_model_gradient_is_weight(self):
        model = ObjectiveModel([DenseLayer(np.array([[2.0, -1.0, 0.5]]),
                                           np.array([7.0]))])
        for x in (np.zeros(3), np.array([1.0, 2.0, 3.0])):
            npt.assert_allclose(input_gradient(model, x), [2.0, -1.0, 0.5])

    def test_zero_first_layer_gives_zero_gradient(self):
        model = build_model(4, (8,), rng=np.random.default_rng(1))
        model.layers[0].weights[:] = 0.0
        npt.assert_allclose(input_gradient(model, np.ones(4)), np.zeros(4))

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        model, x = sample_smooth_case(rng, 5, (8, 8))
        g = input_gradient(model, x)
        fd = fd_input_gradient(model, x)
        assert rel_err(g, fd).max() < 1e-4

    def test_dimension_mismatch_raises(self):
        model = build_model(4, (), rng=np.random.default_rng(0))
        with pytest.raises(ValueError):
            input_gradient(model, np.zeros(3))


class TestAdam:
    def make(self, n=3):
        model = ObjectiveModel([DenseLayer(np.ones((1, n)), np.zeros(1))])
        return model, init_adam(model, learning_rate=1e-3)

    def test_moments_zero_initialized(self):
        _, state = self.make()
        assert state.step_count == 0
        for (mw, mb), (vw, vb) in zip(state.first_moment, state.second_moment):
            assert not mw.any() and not mb.any()
            assert not vw.any() and not vb.any()

    def test_zero_gradient_is_identity(self):
        model, state = self.make()
        before = model.copy()
        for _ in range(5):
            adam_step(state, model, net.zero_gradients(model))
        npt.assert_array_equal(model.layers[0].weights, before.layers[0].weights)
        assert state.step_count == 5

    def test_first_step_moves_by_learning_rate(self):
        model, state = self.make()
        grads = [(np.full((1, 3), 2.0), np.array([-3.0]))]
        adam_step(state, model, grads)
        # bias-corrected first step is ~ -lr * sign(g)
        npt.assert_allclose(model.layers[0].weights, 1.0 - 1e-3, rtol=1e-6)
        npt.assert_allclose(model.layers[0].bias, 1e-3, rtol=1e-6)

    def test_two_steps_cumulative_move(self):
        # hand-evaluated recurrence: each of the two steps with g=1 moves by
        # lr/(1+eps'), so the cumulative magnitude sits just under 2e-3
        model, state = self.make(1)
        grads = [(np.ones((1, 1)), np.zeros(1))]
        adam_step(state, model, grads)
        adam_step(state, model, grads)
        moved = abs(model.layers[0].weights[0, 0] - 1.0)
        assert 1.9e-3 <= moved <= 2.0e-3

    def test_nan_gradient_leaves_params_untouched(self):
        model, state = self.make()
        before = model.copy()
        grads = [(np.full((1, 3), np.nan), np.zeros(1))]
        with pytest.raises(GradientError):
            adam_step(state, model, grads)
        npt.assert_array_equal(model.layers[0].weights, before.layers[0].weights)
        assert state.step_count == 0

    def test_step_count_increments_by_one(self):
        model, state = self.make()
        adam_step(state, model, net.zero_gradients(model))
        assert state.step_count == 1

    @given(st.integers(0, 50))
    def test_zero_gradient_identity_at_any_step_count(self, warm):
        model, state = self.make(2)
        snapshot = model.copy()
        for _ in range(warm + 1):
            adam_step(state, model, net.zero_gradients(model))
        npt.assert_array_equal(model.layers[0].weights,
                               snapshot.layers[0].weights)
        assert state.step_count == warm + 1

    def test_params_finite_after_updates(self):
        rng = np.random.default_rng(8)
        model = build_model(4, (8,), rng=rng)
        state = init_adam(model)
        for _ in range(20):
            g = [(rng.normal(size=l.weights.shape), rng.normal(size=l.bias.shape))
                 for l in model.layers]
            adam_step(state, model, g)
        for lyr in model.layers:
            assert np.all(np.isfinite(lyr.weights)) and np.all(np.isfinite(lyr.bias))


class TestSaveLoad:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(9)
        model = build_model(5, (8, 4), leak=0.2, rng=rng)
        path = tmp_path / "model.npz"
        net.save_model(model, path)
        loaded = net.load_model(path)
        assert loaded.leak == 0.2
        x = rng.normal(size=5)
        assert forward(loaded, x) == forward(model, x)
