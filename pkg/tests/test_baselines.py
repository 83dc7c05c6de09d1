import numpy as np
import numpy.testing as npt
import pytest
from hypothesis import given, strategies as st

from comopt.baselines import (Ensemble, ensemble_forward,
                              ensemble_input_gradient, train_ensemble,
                              train_naive)
from comopt.net import (DenseLayer, ObjectiveModel, build_model, forward,
                        input_gradient)
from comopt.trainer import OfflineDataset, TrainerConfig, fit_normalization, train


def linear_member(weights, bias=0.0):
    w = np.atleast_2d(np.asarray(weights, dtype=float))
    return ObjectiveModel([DenseLayer(w, np.array([bias]))])


def toy_dataset(n=24, dim=2, seed=0):
    rng = np.random.default_rng(seed)
    raw_x = rng.uniform(-1, 1, size=(n, dim))
    raw_y = raw_x[:, 0] - raw_x[:, 1]
    stats = fit_normalization(raw_x, raw_y)
    return OfflineDataset(stats.normalize_x(raw_x), stats.normalize_y(raw_y), stats)


class TestEnsembleForward:
    def test_single_member_equals_member(self):
        member = linear_member([2.0], bias=1.0)
        ens = Ensemble([member], "mean")
        x = np.array([3.0])
        assert ensemble_forward(ens, x) == forward(member, x)

    def test_min_and_mean_of_constant_members(self):
        members = [linear_member([0.0], bias=1.0), linear_member([0.0], bias=3.0)]
        x = np.array([0.0])
        assert ensemble_forward(Ensemble(members, "min"), x) == 1.0
        assert ensemble_forward(Ensemble(members, "mean"), x) == 2.0

    def test_min_never_exceeds_mean(self):
        rng = np.random.default_rng(1)
        members = [build_model(3, (6,), rng=rng) for _ in range(4)]
        for _ in range(20):
            x = rng.normal(size=3)
            assert (ensemble_forward(Ensemble(members, "min"), x)
                    <= ensemble_forward(Ensemble(members, "mean"), x))

    def test_mean_is_arithmetic_mean(self):
        rng = np.random.default_rng(2)
        members = [build_model(2, (4,), rng=rng) for _ in range(3)]
        x = rng.normal(size=2)
        expect = np.mean([forward(m, x) for m in members])
        assert ensemble_forward(Ensemble(members, "mean"), x) == pytest.approx(
            expect, rel=1e-15)

    @given(st.integers(1, 6), st.integers(0, 2**32 - 1))
    def test_min_below_mean_property(self, size, seed):
        rng = np.random.default_rng(seed)
        members = [build_model(2, (4,), rng=rng) for _ in range(size)]
        x = rng.normal(size=2)
        assert (ensemble_forward(Ensemble(members, "min"), x)
                <= ensemble_forward(Ensemble(members, "mean"), x) + 1e-12)

    def test_empty_ensemble_rejected(self):
        with pytest.raises(ValueError):
            Ensemble([], "mean")

    def test_mismatched_input_dims_rejected(self):
        with pytest.raises(ValueError):
            Ensemble([linear_member([1.0]), linear_member([1.0, 2.0])], "mean")


class TestEnsembleInputGradient:
    def test_single_member_gradient(self):
        member = linear_member([2.0, -3.0])
        ens = Ensemble([member], "min")
        npt.assert_allclose(ensemble_input_gradient(ens, np.zeros(2)), [2.0, -3.0])

    def test_mean_mode_averages_linear_members(self):
        ens = Ensemble([linear_member([1.0, 0.0]), linear_member([3.0, 2.0])],
                       "mean")
        npt.assert_allclose(ensemble_input_gradient(ens, np.zeros(2)), [2.0, 1.0])

    def test_min_mode_uses_strictly_lowest_member(self):
        low = linear_member([5.0], bias=-10.0)
        high = linear_member([-1.0], bias=10.0)
        ens = Ensemble([high, low], "min")
        npt.assert_allclose(ensemble_input_gradient(ens, np.zeros(1)), [5.0])

    def test_min_mode_tie_goes_to_lowest_index(self):
        a = linear_member([1.0], bias=0.0)
        b = linear_member([-7.0], bias=0.0)
        ens = Ensemble([a, b], "min")
        npt.assert_allclose(ensemble_input_gradient(ens, np.zeros(1)), [1.0])

    def test_mean_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        members = [build_model(3, (8,), rng=rng) for _ in range(3)]
        ens = Ensemble(members, "mean")
        x = rng.normal(size=3)
        g = ensemble_input_gradient(ens, x)
        h = 1e-5
        fd = np.zeros(3)
        for i in range(3):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd[i] = (ensemble_forward(ens, xp) - ensemble_forward(ens, xm)) / (2 * h)
        npt.assert_allclose(g, fd, rtol=1e-4, atol=1e-6)

    def test_mean_gradient_is_mean_of_member_gradients(self):
        rng = np.random.default_rng(4)
        members = [build_model(2, (4,), rng=rng) for _ in range(5)]
        ens = Ensemble(members, "mean")
        x = rng.normal(size=2)
        expect = np.mean([input_gradient(m, x) for m in members], axis=0)
        npt.assert_allclose(ensemble_input_gradient(ens, x), expect, rtol=1e-12)


class TestTrainNaive:
    def test_bitwise_equal_to_trainer_with_alpha_pinned(self):
        ds = toy_dataset()
        cfg = TrainerConfig(epochs=3, batch_size=8, mining_steps=2,
                            hidden=(8,), seed=7, alpha_init=0.0, alpha_lr=0.0)
        naive, _ = train_naive(ds, cfg)
        pinned, _ = train(ds, cfg)
        for a, b in zip(naive.layers, pinned.layers):
            npt.assert_array_equal(a.weights, b.weights)
            npt.assert_array_equal(a.bias, b.bias)

    def test_naive_ignores_conservative_settings(self):
        ds = toy_dataset()
        base = TrainerConfig(epochs=2, batch_size=8, mining_steps=2,
                             hidden=(8,), seed=7)
        with_alpha = TrainerConfig(epochs=2, batch_size=8, mining_steps=2,
                                   hidden=(8,), seed=7, alpha_init=5.0,
                                   alpha_lr=0.5)
        m1, _ = train_naive(ds, base)
        m2, _ = train_naive(ds, with_alpha)
        for a, b in zip(m1.layers, m2.layers):
            npt.assert_array_equal(a.weights, b.weights)

    def test_mse_decreases(self):
        ds = toy_dataset()
        cfg = TrainerConfig(epochs=30, batch_size=8, hidden=(8,), seed=1)
        _, log = train_naive(ds, cfg)
        assert log[-1]["mse"] < log[0]["mse"]


class TestTrainEnsemble:
    def test_members_differ_only_by_seed(self):
        ds = toy_dataset()
        cfg = TrainerConfig(epochs=2, batch_size=8, hidden=(8,), seed=3)
        ens, logs = train_ensemble(ds, cfg, size=3, aggregate="mean")
        assert len(ens.members) == 3
        assert len(logs) == 3
        w0 = ens.members[0].layers[0].weights
        w1 = ens.members[1].layers[0].weights
        assert not np.array_equal(w0, w1)

    def test_deterministic(self):
        ds = toy_dataset()
        cfg = TrainerConfig(epochs=2, batch_size=8, hidden=(8,), seed=3)
        e1, _ = train_ensemble(ds, cfg, size=2)
        e2, _ = train_ensemble(ds, cfg, size=2)
        for a, b in zip(e1.members, e2.members):
            npt.assert_array_equal(a.layers[0].weights, b.layers[0].weights)

    def test_size_validated(self):
        with pytest.raises(ValueError):
            train_ensemble(toy_dataset(), TrainerConfig(), size=0)
