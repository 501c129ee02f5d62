"""History-aware acquisition: features, scorer network, history buffer and targets."""

from __future__ import annotations

import logging
from collections import deque
from collections.abc import Iterator, Sequence
from typing import Any

import numpy as np

from neuropareto.errors import DomainError, FeatureError
from neuropareto.models import (
    AcquisitionSettings,
    ClassifierOutput,
    HistoryRecord,
    SurrogatePrediction,
)
from neuropareto.neural import MLP, OptimizerState, adam_step

logger = logging.getLogger(__name__)

DIV_EPS = 1e-8
HUBER_DELTA = 1.0


def feature_width(M: int, K: int) -> int:
    return 3 * M + K + 2


# ---------------------------------------------------------------------------
# History
# ---------------------------------------------------------------------------


class HistoryBuffer:
    """Bounded FIFO of selection records plus the running scale of |Δdiv|."""

    def __init__(
        self, capacity: int = 1000, window: int = 20, ema_decay: float = 0.99
    ) -> None:
        if capacity < 1:
            raise DomainError(f"buffer capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.window = window
        self.ema_decay = ema_decay
        self.records: deque[HistoryRecord] = deque(maxlen=capacity)
        self._ema = 0.0
        self._updates = 0

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[HistoryRecord]:
        return iter(self.records)

    @property
    def running_abs_div(self) -> float:
        """Bias-corrected moving average of |Δdiv|."""
        if not self._updates:
            return 0.0
        return self._ema / (1.0 - self.ema_decay**self._updates)

    def observe_div(self, delta: float) -> None:
        self._ema = self.ema_decay * self._ema + (1.0 - self.ema_decay) * abs(delta)
        self._updates += 1

    def append(self, record: HistoryRecord) -> None:
        self.records.append(record)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Features, ΔHV and normalized Δdiv stacked over all records."""
        if not self.records:
            return np.empty((0, 0)), np.empty(0), np.empty(0)
        feats = np.vstack([r.feat for r in self.records])
        hv = np.array([r.delta_hv for r in self.records])
        div = np.array([r.delta_div_norm for r in self.records])
        return feats, hv, div

    def to_list(self) -> list[dict[str, Any]]:
        return [r.to_dict() for r in self.records]


def window_stats(buffer: HistoryBuffer, w: int | None = None) -> tuple[float, float]:
    """Mean and population std of the latest ``w`` ΔHV values; (0, 0) when empty."""
    w = buffer.window if w is None else w
    if not buffer.records or w < 1:
        return 0.0, 0.0
    recent = np.array([r.delta_hv for r in list(buffer.records)[-w:]])
    return float(recent.mean()), float(recent.std())


def diversity_target(div_before: float, div_after: float, buffer: HistoryBuffer) -> float:
    """Diversity gain scaled by the running |Δdiv|; updates the running scale."""
    delta = div_after - div_before
    buffer.observe_div(delta)
    return delta / (DIV_EPS + buffer.running_abs_div)


# ---------------------------------------------------------------------------
# Features
# ---------------------------------------------------------------------------


def _finite(name: str, values: np.ndarray) -> np.ndarray:
    if np.any(np.isnan(values)) or not np.all(np.isfinite(values)):
        raise FeatureError(f"non-finite values in acquisition feature source '{name}'")
    return values


def build_features(
    pred: SurrogatePrediction,
    clf_outputs: Sequence[ClassifierOutput],
    stats: tuple[float, float],
) -> np.ndarray:
    """Rows of [f_hat, u_ep, u_al, p_bar, μ_ΔHV, σ_ΔHV], one per candidate."""
    n = len(pred)
    if len(clf_outputs) != n:
        raise FeatureError(
            f"{n} surrogate predictions but {len(clf_outputs)} classifier outputs"
        )
    p_bar = np.vstack([o.p_bar for o in clf_outputs]) if n else np.empty((0, 0))
    window = np.broadcast_to(np.asarray(stats, dtype=float), (n, 2))
    return np.hstack(
        [
            _finite("f_hat", pred.f_hat),
            _finite("u_ep", pred.u_ep),
            _finite("u_al", pred.u_al),
            _finite("p_bar", p_bar),
            _finite("window_stats", window),
        ]
    )


def static_score(
    feats: Any,
    weights: Sequence[float],
    proxy_hv: Any,
    M: int,
    K: int,
) -> np.ndarray:
    """Fixed linear score over the same features the learned scorer sees."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (6,) or not np.all(np.isfinite(w)):
        raise DomainError("static_score needs six finite weights")
    X = np.atleast_2d(np.asarray(feats, dtype=float))
    if X.shape[1] != feature_width(M, K):
        raise FeatureError(f"expected {feature_width(M, K)} features, got {X.shape[1]}")
    u_ep = np.abs(X[:, M : 2 * M]).sum(axis=1)
    u_al = np.abs(X[:, 2 * M : 3 * M]).sum(axis=1)
    p_first = X[:, 3 * M]
    mu, sigma = X[:, 3 * M + K], X[:, 3 * M + K + 1]
    channels = np.column_stack([np.asarray(proxy_hv, dtype=float), u_ep, u_al, p_first, mu, sigma])
    return channels @ w


# ---------------------------------------------------------------------------
# Scorer network
# ---------------------------------------------------------------------------


class AcqNet:
    """Two-headed scorer: predicted log1p(ΔHV) and normalized Δdiv."""

    def __init__(
        self,
        width: int,
        rng: np.random.Generator,
        settings: AcquisitionSettings | None = None,
    ) -> None:
        self.settings = settings or AcquisitionSettings()
        self.width = width
        self.net = MLP.build([width, self.settings.hidden, 2], rng)
        self.feature_mean = np.zeros(width)
        self.feature_std = np.ones(width)
        self.optimizer = OptimizerState.for_params(
            self.net.params, lr=self.settings.learning_rate
        )

    def refresh_standardizer(self, feats: np.ndarray) -> None:
        self.feature_mean = feats.mean(axis=0)
        std = feats.std(axis=0)
        self.feature_std = np.where(std > 1e-12, std, 1.0)

    def standardize(self, feats: Any) -> np.ndarray:
        X = np.atleast_2d(np.asarray(feats, dtype=float))
        if X.shape[1] != self.width:
            raise FeatureError(f"acquisition net expects {self.width} features, got {X.shape[1]}")
        return (X - self.feature_mean) / self.feature_std

    def zero(self) -> None:
        for p in self.net.params:
            p[...] = 0.0
        self.net.touch()


def score(net: AcqNet, feats: Any) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic (ŝ_HV, ŝ_div) per feature row."""
    out = net.net.forward(net.standardize(feats))[0]
    return np.expm1(out[:, 0]), out[:, 1]


def acquisition_loss_and_grads(
    net: AcqNet,
    feats: np.ndarray,
    delta_hv: np.ndarray,
    delta_div: np.ndarray,
    lambda_div: float,
    lambda_reg: float,
    loss: str = "mse",
) -> tuple[float, list[np.ndarray]]:
    """Composite regression loss on standardized features, with L2 on every parameter."""
    out, cache = net.net.forward(net.standardize(feats))
    n = out.shape[0]
    err_hv = out[:, 0] - np.log1p(delta_hv)
    err_div = out[:, 1] - delta_div
    if loss == "mse":
        value = float(np.mean(err_hv**2) + lambda_div * np.mean(err_div**2))
        d_hv, d_div = 2.0 * err_hv, 2.0 * err_div
    elif loss == "huber":
        value = float(np.mean(_huber(err_hv)) + lambda_div * np.mean(_huber(err_div)))
        d_hv = 2.0 * np.clip(err_hv, -HUBER_DELTA, HUBER_DELTA)
        d_div = 2.0 * np.clip(err_div, -HUBER_DELTA, HUBER_DELTA)
    else:
        raise DomainError(f"unknown acquisition loss '{loss}'")

    upstream = np.column_stack([d_hv / n, lambda_div * d_div / n])
    grads = net.net.backward(cache, upstream)
    params = net.net.params
    value += lambda_reg * float(sum(np.sum(p * p) for p in params))
    grads = [g + 2.0 * lambda_reg * p for g, p in zip(grads, params)]
    return value, grads


def _huber(err: np.ndarray) -> np.ndarray:
    a = np.abs(err)
    return np.where(a <= HUBER_DELTA, a**2, HUBER_DELTA * (2.0 * a - HUBER_DELTA))


def train_acquisition(
    net: AcqNet,
    buffer: HistoryBuffer,
    rng: np.random.Generator,
    *,
    lambda_div: float | None = None,
    lambda_reg: float | None = None,
    steps: int | None = None,
) -> float | None:
    """Minibatch Adam on the buffer; returns the full-buffer loss, None if skipped."""
    s = net.settings
    lambda_div = s.lambda_div if lambda_div is None else lambda_div
    lambda_reg = s.lambda_reg if lambda_reg is None else lambda_reg
    steps = s.steps if steps is None else steps
    if not len(buffer):
        logger.warning("Acquisition history is empty; skipping training")
        return None

    feats, hv, div = buffer.arrays()
    net.refresh_standardizer(feats)
    n = feats.shape[0]
    batch = min(s.batch_size, n)
    for _ in range(steps):
        idx = rng.choice(n, size=batch, replace=False)
        _, grads = acquisition_loss_and_grads(
            net, feats[idx], hv[idx], div[idx], lambda_div, lambda_reg, s.loss
        )
        adam_step(net.net.params, grads, net.optimizer)
        net.net.touch()
    final, _ = acquisition_loss_and_grads(net, feats, hv, div, lambda_div, lambda_reg, s.loss)
    logger.debug("Acquisition trained %d steps on %d records, loss %.5f", steps, n, final)
    return final
