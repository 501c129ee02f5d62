"""Tests for the dense-network toolkit."""

from __future__ import annotations

import numpy as np
import pytest

from neuropareto.errors import DomainError, InternalError
from neuropareto.neural import (
    MLP,
    DenseLayer,
    DropoutMask,
    OptimizerState,
    adam_step,
    layer_norm,
    softmax_cross_entropy,
    softmax_temperature,
)


def numeric_grads(net: MLP, X: np.ndarray, upstream: np.ndarray, mask: DropoutMask | None,
                  h: float = 1e-5) -> list[np.ndarray]:
    grads = []
    for p in net.params:
        g = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            saved = p[idx]
            p[idx] = saved + h
            up = float(np.sum(upstream * net.forward(X, mask)[0]))
            p[idx] = saved - h
            down = float(np.sum(upstream * net.forward(X, mask)[0]))
            p[idx] = saved
            g[idx] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def relative_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = max(float(np.max(np.abs(n))), 1e-6)
        worst = max(worst, float(np.max(np.abs(a - n))) / scale)
    return worst


class TestLayerNorm:
    def test_constant_vector(self) -> None:
        np.testing.assert_array_equal(layer_norm(np.full(5, 3.0)), np.zeros(5))

    def test_moments(self) -> None:
        v = np.random.default_rng(0).normal(0.0, 100.0, 20)
        out = layer_norm(v)
        assert abs(out.mean()) < 1e-6
        assert abs(out.var() - 1.0) < 1e-6

    def test_shift_invariance(self) -> None:
        v = np.random.default_rng(1).random(8)
        np.testing.assert_allclose(layer_norm(v + 7.5), layer_norm(v), atol=1e-12)


class TestSoftmaxTemperature:
    def test_symmetric(self) -> None:
        np.testing.assert_allclose(softmax_temperature([0.0, 0.0], 3.0), [0.5, 0.5])

    def test_large_temperature_is_uniform(self) -> None:
        p = softmax_temperature([5.0, -3.0, 1.0], 1e6)
        np.testing.assert_allclose(p, np.full(3, 1.0 / 3.0), atol=1e-5)

    def test_direct_value(self) -> None:
        p = softmax_temperature([10.0, 0.0], 1.0)
        assert p[0] == pytest.approx(1.0 / (1.0 + np.exp(-10.0)))

    def test_shift_invariant_and_normalized(self) -> None:
        z = np.random.default_rng(2).normal(size=(4, 5))
        p = softmax_temperature(z, 0.7)
        np.testing.assert_allclose(p, softmax_temperature(z + 100.0, 0.7), atol=1e-12)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(p > 0.0)

    @pytest.mark.parametrize("T", [0.0, -1.0])
    def test_nonpositive_temperature(self, T: float) -> None:
        with pytest.raises(DomainError):
            softmax_temperature([1.0, 2.0], T)


class TestForward:
    def test_zero_network(self) -> None:
        net = MLP.build([3, 4, 2], np.random.default_rng(0))
        for p in net.params:
            p[...] = 0.0
        np.testing.assert_array_equal(net(np.array([0.3, -2.0, 5.0])), np.zeros(2))

    def test_identity_layer_is_relu(self) -> None:
        net = MLP([DenseLayer(W=np.eye(3), b=np.zeros(3), activation=True)])
        np.testing.assert_array_equal(net(np.array([1.0, -2.0, 0.5])), [1.0, 0.0, 0.5])

    def test_same_mask_same_output(self) -> None:
        rng = np.random.default_rng(1)
        net = MLP.build([4, 8, 8, 3], rng, layer_norm=True, dropout=[0.3, 0.0])
        X = rng.random((5, 4))
        mask = net.sample_mask(5, rng)
        np.testing.assert_array_equal(net.forward(X, mask)[0], net.forward(X, mask)[0])

    def test_no_mask_is_deterministic(self) -> None:
        rng = np.random.default_rng(2)
        net = MLP.build([4, 8, 3], rng, dropout=[0.5])
        X = rng.random((3, 4))
        np.testing.assert_array_equal(net(X), net(X))

    def test_width_mismatch(self) -> None:
        net = MLP.build([4, 8, 3], np.random.default_rng(0))
        with pytest.raises(InternalError):
            net.forward(np.zeros((2, 5)))

    def test_round_trip(self) -> None:
        rng = np.random.default_rng(3)
        net = MLP.build([4, 6, 2], rng, layer_norm=True, dropout=[0.1])
        X = rng.random((3, 4))
        np.testing.assert_array_equal(MLP.from_dict(net.to_dict())(X), net(X))


class TestBackward:
    def test_linear_squared_loss(self) -> None:
        rng = np.random.default_rng(0)
        net = MLP([DenseLayer(W=rng.normal(size=(2, 3)), b=rng.normal(size=2))])
        X = rng.normal(size=(4, 3))
        y = rng.normal(size=(4, 2))
        out, cache = net.forward(X)
        resid = out - y
        dW, db = net.backward(cache, 2.0 * resid)
        np.testing.assert_allclose(dW, 2.0 * resid.T @ X)
        np.testing.assert_allclose(db, 2.0 * resid.sum(axis=0))

    def test_zero_upstream(self) -> None:
        rng = np.random.default_rng(1)
        net = MLP.build([3, 5, 2], rng, layer_norm=True)
        _, cache = net.forward(rng.random((4, 3)))
        for g in net.backward(cache, np.zeros((4, 2))):
            assert not np.any(g)

    def test_stale_cache(self) -> None:
        rng = np.random.default_rng(2)
        net = MLP.build([3, 5, 2], rng)
        _, cache = net.forward(rng.random((4, 3)))
        net.touch()
        with pytest.raises(InternalError, match="stale"):
            net.backward(cache, np.ones((4, 2)))

    @pytest.mark.parametrize("seed", range(20))
    @pytest.mark.parametrize(
        "sizes,layer_norm,dropout,features",
        [
            ([4, 8, 8, 3], True, [0.2, 0.0], False),
            ([13, 8, 2], False, None, False),
            ([4, 6, 3], False, None, True),
            ([3, 1], False, None, False),
            ([3, 4, 1], False, None, False),
        ],
        ids=["classifier", "acquisition", "feature-net", "mean-head", "noise-net"],
    )
    def test_gradient_check(
        self,
        seed: int,
        sizes: list[int],
        layer_norm: bool,
        dropout: list[float] | None,
        features: bool,
    ) -> None:
        rng = np.random.default_rng(seed)
        net = MLP.build(
            sizes, rng, layer_norm=layer_norm, dropout=dropout, activate_output=features
        )
        X = rng.normal(size=(5, sizes[0]))
        mask = net.sample_mask(5, rng) if dropout else None
        upstream = rng.normal(size=(5, sizes[-1]))
        _, cache = net.forward(X, mask)
        analytic = net.backward(cache, upstream)
        assert relative_error(analytic, numeric_grads(net, X, upstream, mask)) < 1e-4

    @pytest.mark.parametrize("seed", range(5))
    def test_input_gradient(self, seed: int) -> None:
        rng = np.random.default_rng(seed)
        net = MLP.build([4, 6, 3], rng, layer_norm=True)
        X = rng.normal(size=(5, 4))
        upstream = rng.normal(size=(5, 3))
        grads, g_in = net.backward_input(net.forward(X)[1], upstream)
        h = 1e-5
        numeric = np.zeros_like(X)
        for idx in np.ndindex(X.shape):
            bumped = X.copy()
            bumped[idx] += h
            up = float(np.sum(upstream * net(bumped)))
            bumped[idx] -= 2.0 * h
            numeric[idx] = (up - float(np.sum(upstream * net(bumped)))) / (2.0 * h)
        assert relative_error([g_in], [numeric]) < 1e-4
        assert relative_error(grads, numeric_grads(net, X, upstream, None)) < 1e-4

    def test_cross_entropy_gradient(self) -> None:
        rng = np.random.default_rng(4)
        logits = rng.normal(size=(6, 3))
        labels = rng.integers(0, 3, size=6)
        weights = rng.random(6) + 0.5
        _, grad = softmax_cross_entropy(logits, labels, weights)
        h = 1e-6
        numeric = np.zeros_like(logits)
        for idx in np.ndindex(logits.shape):
            bumped = logits.copy()
            bumped[idx] += h
            up = softmax_cross_entropy(bumped, labels, weights)[0]
            bumped[idx] -= 2.0 * h
            down = softmax_cross_entropy(bumped, labels, weights)[0]
            numeric[idx] = (up - down) / (2.0 * h)
        np.testing.assert_allclose(grad, numeric, atol=1e-7)


class TestAdam:
    def test_zero_gradient_keeps_params(self) -> None:
        p = [np.array([1.0, -2.0])]
        state = OptimizerState.for_params(p)
        adam_step(p, [np.zeros(2)], state)
        np.testing.assert_array_equal(p[0], [1.0, -2.0])

    def test_moves_against_gradient(self) -> None:
        p = [np.zeros(2)]
        state = OptimizerState.for_params(p, lr=0.01)
        for _ in range(50):
            adam_step(p, [np.array([1.0, -3.0])], state)
        assert p[0][0] < 0.0 < p[0][1]

    def test_step_counter(self) -> None:
        p = [np.zeros(1)]
        state = OptimizerState.for_params(p)
        adam_step(p, [np.ones(1)], state)
        assert state.step == 1
        assert (state.beta1, state.beta2, state.eps, state.lr) == (0.9, 0.999, 1e-8, 1e-3)

    def test_shape_mismatch(self) -> None:
        p = [np.zeros(2)]
        with pytest.raises(InternalError):
            adam_step(p, [np.zeros(3)], OptimizerState.for_params(p))
