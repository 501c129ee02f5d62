"""Minimal dense-network toolkit: forward, reverse-mode gradients and Adam.

Shared by the rank classifier, the surrogate's mean and noise networks and
the acquisition scorer. Batches are row-major: inputs have shape (n, width).
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import logsumexp, softmax

from neuropareto.errors import DomainError, InternalError

LN_EPS = 1e-5


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------


def layer_norm(v: Any) -> np.ndarray:
    """Normalize along the last axis; no learned scale or shift."""
    v = np.asarray(v, dtype=float)
    mean = v.mean(axis=-1, keepdims=True)
    var = v.var(axis=-1, keepdims=True)
    return (v - mean) / np.sqrt(var + LN_EPS)


def softmax_temperature(z: Any, T: float) -> np.ndarray:
    """Temperature-scaled softmax along the last axis."""
    if not T > 0.0:
        raise DomainError(f"temperature must be positive, got {T}")
    return np.asarray(softmax(np.asarray(z, dtype=float) / T, axis=-1))


def softmax_cross_entropy(
    logits: np.ndarray,
    labels: np.ndarray,
    weights: np.ndarray | None = None,
) -> tuple[float, np.ndarray]:
    """Weighted mean cross-entropy and its gradient w.r.t. the logits."""
    n = logits.shape[0]
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    total = float(w.sum())
    rows = np.arange(n)
    nll = logsumexp(logits, axis=1) - logits[rows, labels]
    loss = float(np.sum(w * nll) / total)
    grad = softmax(logits, axis=1)
    grad[rows, labels] -= 1.0
    grad *= (w / total)[:, None]
    return loss, grad


def glorot_uniform(fan_in: int, fan_out: int, rng: np.random.Generator) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


@dataclass
class DenseLayer:
    """Affine map, optionally followed by ReLU, LayerNorm and dropout."""

    W: np.ndarray
    b: np.ndarray
    activation: bool = False
    layer_norm: bool = False
    dropout: float = 0.0

    @property
    def width(self) -> int:
        return int(self.W.shape[0])


@dataclass
class DropoutMask:
    """Binary keep-masks per layer; ``None`` where a layer has no dropout."""

    masks: list[np.ndarray | None]
    keep: list[float]


@dataclass
class _LayerCache:
    inputs: np.ndarray
    pre: np.ndarray
    normed: np.ndarray | None
    sigma: np.ndarray | None
    scale: np.ndarray | None


@dataclass
class ForwardCache:
    version: int
    layers: list[_LayerCache] = field(default_factory=list)


# ---------------------------------------------------------------------------
# MLP
# ---------------------------------------------------------------------------


class MLP:
    """Stack of dense layers with hand-written backward pass."""

    def __init__(self, layers: list[DenseLayer]) -> None:
        if not layers:
            raise InternalError("an MLP needs at least one layer")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.W.shape[1] != prev.W.shape[0]:
                raise InternalError(
                    f"layer widths do not chain: {prev.W.shape} -> {nxt.W.shape}"
                )
        for layer in layers:
            if not 0.0 <= layer.dropout < 1.0:
                raise InternalError(f"dropout must be in [0, 1), got {layer.dropout}")
        self.layers = layers
        self._version = 0

    @classmethod
    def build(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        *,
        layer_norm: bool = False,
        dropout: Sequence[float] | None = None,
        zero_output: bool = False,
        activate_output: bool = False,
    ) -> MLP:
        """Glorot-initialized network; hidden layers use ReLU.

        ``dropout`` gives one probability per hidden layer, applied to that
        layer's output. ``activate_output`` puts a ReLU on the last layer too,
        for networks that emit features rather than predictions.
        """
        n_hidden = len(sizes) - 2
        rates = list(dropout) if dropout is not None else [0.0] * n_hidden
        if len(rates) != n_hidden:
            raise InternalError("one dropout rate per hidden layer is required")
        layers: list[DenseLayer] = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            hidden = i < n_hidden
            W = glorot_uniform(fan_in, fan_out, rng)
            if not hidden and zero_output:
                W = np.zeros_like(W)
            layers.append(
                DenseLayer(
                    W=W,
                    b=np.zeros(fan_out),
                    activation=hidden or activate_output,
                    layer_norm=hidden and layer_norm,
                    dropout=rates[i] if hidden else 0.0,
                )
            )
        return cls(layers)

    @property
    def input_width(self) -> int:
        return int(self.layers[0].W.shape[1])

    @property
    def output_width(self) -> int:
        return int(self.layers[-1].W.shape[0])

    @property
    def has_dropout(self) -> bool:
        return any(layer.dropout > 0.0 for layer in self.layers)

    @property
    def params(self) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for layer in self.layers:
            out.extend([layer.W, layer.b])
        return out

    def touch(self) -> None:
        """Mark parameters as changed so older caches are rejected."""
        self._version += 1

    def sample_mask(self, n: int, rng: np.random.Generator) -> DropoutMask:
        masks: list[np.ndarray | None] = []
        for layer in self.layers:
            if layer.dropout > 0.0:
                masks.append((rng.random((n, layer.width)) >= layer.dropout).astype(float))
            else:
                masks.append(None)
        return DropoutMask(masks=masks, keep=[1.0 - layer.dropout for layer in self.layers])

    def forward(
        self, X: np.ndarray, mask: DropoutMask | None = None
    ) -> tuple[np.ndarray, ForwardCache]:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.input_width:
            raise InternalError(
                f"expected input of width {self.input_width}, got shape {X.shape}"
            )
        if mask is not None and len(mask.masks) != len(self.layers):
            raise InternalError("dropout mask does not match the network depth")

        cache = ForwardCache(version=self._version)
        a = X
        for i, layer in enumerate(self.layers):
            pre = a @ layer.W.T + layer.b
            out = np.maximum(pre, 0.0) if layer.activation else pre
            normed = sigma = None
            if layer.layer_norm:
                sigma = np.sqrt(out.var(axis=1, keepdims=True) + LN_EPS)
                normed = (out - out.mean(axis=1, keepdims=True)) / sigma
                out = normed
            scale = None
            if mask is not None and layer.dropout > 0.0:
                keep = mask.masks[i]
                if keep is None or keep.shape[-1] != layer.width:
                    raise InternalError(f"dropout mask shape mismatch at layer {i}")
                scale = np.broadcast_to(keep / (1.0 - layer.dropout), out.shape)
                out = out * scale
            cache.layers.append(_LayerCache(a, pre, normed, sigma, scale))
            a = out
        return a, cache

    def __call__(self, X: np.ndarray, mask: DropoutMask | None = None) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            return self.forward(X[None, :], mask)[0][0]
        return self.forward(X, mask)[0]

    def backward(self, cache: ForwardCache, upstream: np.ndarray) -> list[np.ndarray]:
        """Gradients of sum(upstream * output) for every parameter, in ``params`` order."""
        return self.backward_input(cache, upstream)[0]

    def backward_input(
        self, cache: ForwardCache, upstream: np.ndarray
    ) -> tuple[list[np.ndarray], np.ndarray]:
        """Parameter gradients plus the gradient w.r.t. the network input."""
        if cache.version != self._version:
            raise InternalError("forward cache is stale: parameters changed since")
        g = np.asarray(upstream, dtype=float)
        grads: list[np.ndarray] = []
        for layer, lc in zip(reversed(self.layers), reversed(cache.layers)):
            if lc.scale is not None:
                g = g * lc.scale
            if lc.normed is not None and lc.sigma is not None:
                y = lc.normed
                g = (
                    g
                    - g.mean(axis=1, keepdims=True)
                    - y * (g * y).mean(axis=1, keepdims=True)
                ) / lc.sigma
            if layer.activation:
                g = g * (lc.pre > 0.0)
            grads.extend([g.sum(axis=0), g.T @ lc.inputs])
            g = g @ layer.W
        grads.reverse()
        return grads, g

    def copy(self) -> MLP:
        return MLP(
            [
                DenseLayer(
                    W=layer.W.copy(),
                    b=layer.b.copy(),
                    activation=layer.activation,
                    layer_norm=layer.layer_norm,
                    dropout=layer.dropout,
                )
                for layer in self.layers
            ]
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "layers": [
                {
                    "shape": list(layer.W.shape),
                    "W": layer.W.ravel().tolist(),
                    "b": layer.b.tolist(),
                    "activation": layer.activation,
                    "layer_norm": layer.layer_norm,
                    "dropout": layer.dropout,
                }
                for layer in self.layers
            ]
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> MLP:
        layers = []
        for entry in data["layers"]:
            shape = tuple(entry["shape"])
            layers.append(
                DenseLayer(
                    W=np.asarray(entry["W"], dtype=float).reshape(shape),
                    b=np.asarray(entry["b"], dtype=float),
                    activation=bool(entry["activation"]),
                    layer_norm=bool(entry["layer_norm"]),
                    dropout=float(entry["dropout"]),
                )
            )
        return cls(layers)


# ---------------------------------------------------------------------------
# Optimizer
# ---------------------------------------------------------------------------


@dataclass
class OptimizerState:
    """Adam moment accumulators mirroring a parameter list."""

    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray], lr: float = 1e-3) -> OptimizerState:
        return cls(
            m=[np.zeros_like(p) for p in params],
            v=[np.zeros_like(p) for p in params],
            lr=lr,
        )


def adam_step(
    params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: OptimizerState
) -> list[np.ndarray]:
    """Bias-corrected Adam update applied in place."""
    if len(params) != len(grads) or len(params) != len(state.m):
        raise InternalError("parameter, gradient and state lists differ in length")
    state.step += 1
    c1 = 1.0 - state.beta1**state.step
    c2 = 1.0 - state.beta2**state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise InternalError(f"gradient shape {g.shape} != parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return list(params)
