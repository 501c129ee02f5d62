"""MC-dropout nondomination-rank classifier with temperature calibration."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.special import entr, logsumexp

from neuropareto.errors import DomainError, ModelStateError, TrainingError
from neuropareto.models import ClassifierOutput, ClassifierSettings, MCConfig, ProblemSpec
from neuropareto.neural import (
    MLP,
    OptimizerState,
    adam_step,
    softmax_cross_entropy,
    softmax_temperature,
)
from neuropareto.pareto import Archive, rank_labels

logger = logging.getLogger(__name__)

T_MIN = 0.05
T_MAX = 20.0
T_GRID_POINTS = 200
U_EP_FLOOR = 1e-12


def temperature_grid() -> np.ndarray:
    """Log-spaced search grid; T = 1 is always a candidate."""
    grid = np.logspace(np.log10(T_MIN), np.log10(T_MAX), T_GRID_POINTS)
    return np.union1d(grid, [1.0])


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------


class ClassifierModel:
    """Rank classifier over decision vectors scaled to the unit box."""

    def __init__(
        self,
        net: MLP,
        K: int,
        lower: np.ndarray,
        upper: np.ndarray,
        temperature: float = 1.0,
        settings: ClassifierSettings | None = None,
    ) -> None:
        if net.output_width != K:
            raise DomainError(f"classifier net has {net.output_width} outputs, expected K={K}")
        self.net = net
        self.K = K
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        self.T = temperature
        self.settings = settings or ClassifierSettings()
        self.trained = False
        self._optimizer = OptimizerState.for_params(
            net.params, lr=self.settings.learning_rate
        )

    @classmethod
    def build(
        cls,
        problem: ProblemSpec,
        K: int,
        rng: np.random.Generator,
        settings: ClassifierSettings | None = None,
    ) -> ClassifierModel:
        s = settings or ClassifierSettings()
        net = MLP.build(
            [problem.D, s.hidden1, s.hidden2, K],
            rng,
            layer_norm=True,
            dropout=[s.dropout, 0.0],
        )
        return cls(net, K, problem.lower_bounds, problem.upper_bounds, settings=s)

    def scale(self, X: Any) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        span = np.where(self.upper > self.lower, self.upper - self.lower, 1.0)
        return (X - self.lower) / span

    def logits(self, X: Any) -> np.ndarray:
        """Deterministic single pass, no dropout."""
        return self.net.forward(self.scale(X))[0]

    def predict_proba(self, X: Any) -> np.ndarray:
        self._require_trained()
        return softmax_temperature(self.logits(X), self.T)

    def train_on_labels(
        self,
        X: np.ndarray,
        labels: np.ndarray,
        epochs: int,
        rng: np.random.Generator,
    ) -> list[float]:
        """Weighted cross-entropy with dropout active; returns per-epoch mean losses.

        ``labels`` are 0-based class indices.
        """
        if epochs < 1:
            raise DomainError(f"epochs must be >= 1, got {epochs}")
        Xs = self.scale(X)
        labels = np.asarray(labels, dtype=int)
        n = Xs.shape[0]
        counts = np.bincount(labels, minlength=self.K).astype(float)
        present = counts > 0
        class_weight = np.zeros(self.K)
        class_weight[present] = n / (present.sum() * counts[present])
        sample_weight = class_weight[labels]

        batch = self.settings.batch_size
        losses: list[float] = []
        for _ in range(epochs):
            order = rng.permutation(n)
            total = 0.0
            for start in range(0, n, batch):
                idx = order[start : start + batch]
                mask = self.net.sample_mask(idx.size, rng)
                out, cache = self.net.forward(Xs[idx], mask)
                loss, dlogits = softmax_cross_entropy(out, labels[idx], sample_weight[idx])
                grads = self.net.backward(cache, dlogits)
                adam_step(self.net.params, grads, self._optimizer)
                self.net.touch()
                total += loss * idx.size
            losses.append(total / n)
        self.trained = True
        return losses

    def _require_trained(self) -> None:
        if not self.trained:
            raise ModelStateError("rank classifier has not been trained")

    def to_dict(self) -> dict[str, Any]:
        return {
            "net": self.net.to_dict(),
            "K": self.K,
            "temperature": self.T,
            "lower": self.lower.tolist(),
            "upper": self.upper.tolist(),
            "trained": self.trained,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ClassifierModel:
        model = cls(
            MLP.from_dict(data["net"]),
            int(data["K"]),
            np.asarray(data["lower"], dtype=float),
            np.asarray(data["upper"], dtype=float),
            temperature=float(data["temperature"]),
        )
        model.trained = bool(data["trained"])
        return model


@dataclass
class ClassifierFit:
    """Training outcome plus the held-out split used for calibration."""

    loss: float
    losses: list[float]
    temperature: float
    calibration_X: np.ndarray = field(repr=False)
    calibration_labels: np.ndarray = field(repr=False)


# ---------------------------------------------------------------------------
# Training and calibration
# ---------------------------------------------------------------------------


def calibration_split(
    labels: np.ndarray, fraction: float, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Stratified split: floor(fraction * count) indices of each label held out."""
    held: list[np.ndarray] = []
    for label in np.unique(labels):
        members = np.flatnonzero(labels == label)
        take = int(np.floor(fraction * members.size))
        if take:
            held.append(rng.choice(members, size=take, replace=False))
    cal = np.sort(np.concatenate(held)) if held else np.zeros(0, dtype=int)
    train = np.setdiff1d(np.arange(labels.size), cal)
    return train, cal


def fit_temperature_from_logits(logits: np.ndarray, labels: np.ndarray) -> float:
    """Grid-search the temperature minimizing mean NLL."""
    z = np.asarray(logits, dtype=float)
    y = np.asarray(labels, dtype=int)
    if z.shape[0] == 0:
        logger.warning("Calibration set is empty; keeping temperature at 1")
        return 1.0
    grid = temperature_grid()
    scaled = z[None, :, :] / grid[:, None, None]
    picked = scaled[:, np.arange(z.shape[0]), y]
    nll = np.mean(logsumexp(scaled, axis=2) - picked, axis=1)
    return float(grid[int(np.argmin(nll))])


def fit_temperature(model: ClassifierModel, X_cal: Any, labels_cal: Any) -> float:
    """Fit and store the temperature on a held-out set."""
    X_cal = np.asarray(X_cal, dtype=float)
    labels_cal = np.asarray(labels_cal, dtype=int)
    if X_cal.size == 0:
        logger.warning("Calibration set is empty; keeping temperature at 1")
        model.T = 1.0
        return model.T
    model.T = fit_temperature_from_logits(model.logits(X_cal), labels_cal)
    logger.debug("Fitted temperature %.4f on %d points", model.T, labels_cal.size)
    return model.T


def fit_classifier(
    model: ClassifierModel,
    archive: Archive,
    K: int,
    epochs: int,
    rng: np.random.Generator,
    *,
    calibrate: bool = True,
) -> ClassifierFit:
    """Train on archive rank labels, then calibrate on a stratified held-out split."""
    if epochs < 1:
        raise DomainError(f"epochs must be >= 1, got {epochs}")
    if len(archive) < K:
        raise TrainingError(
            f"archive holds {len(archive)} samples but K={K} rank classes are "
            "requested; increase initial_size or lower rank_classes"
        )
    labels = rank_labels(archive.F, K) - 1
    X = archive.X
    train, cal = calibration_split(labels, model.settings.calibration_fraction, rng)
    losses = model.train_on_labels(X[train], labels[train], epochs, rng)
    if calibrate:
        fit_temperature(model, X[cal], labels[cal])
    else:
        model.T = 1.0
    logger.debug(
        "Classifier trained %d epochs on %d points, loss %.4f, T=%.3f",
        epochs,
        train.size,
        losses[-1],
        model.T,
    )
    return ClassifierFit(
        loss=losses[-1],
        losses=losses,
        temperature=model.T,
        calibration_X=X[cal],
        calibration_labels=labels[cal],
    )


def confidence_and_correct(
    model: ClassifierModel, X: Any, labels: Any
) -> tuple[np.ndarray, np.ndarray]:
    """Top-class confidence and hit flags of single-pass predictions."""
    probs = model.predict_proba(X)
    hits = np.argmax(probs, axis=1) == np.asarray(labels, dtype=int)
    return probs.max(axis=1), hits.astype(float)


def mean_nll(model: ClassifierModel, X: Any, labels: Any) -> float:
    probs = model.predict_proba(X)
    y = np.asarray(labels, dtype=int)
    return float(-np.mean(np.log(np.maximum(probs[np.arange(y.size), y], 1e-300))))


# ---------------------------------------------------------------------------
# MC-dropout prediction
# ---------------------------------------------------------------------------


def _check_mc(mc: MCConfig) -> None:
    if not 1 <= mc.S0 <= mc.S_max:
        raise DomainError(f"need 1 <= S0 <= S_max, got S0={mc.S0}, S_max={mc.S_max}")
    if not mc.tau > 0.0:
        raise DomainError(f"tau must be positive, got {mc.tau}")


def adaptive_pass_count(sigma2: Any, mc: MCConfig) -> np.ndarray:
    """Pass count per input from the preliminary across-pass variance."""
    _check_mc(mc)
    s2 = np.asarray(sigma2, dtype=float)
    # Tolerance keeps exact multiples of tau from rounding up a step.
    factor = np.ceil(s2 / mc.tau - 1e-9).astype(int)
    escalated = np.minimum(mc.S_max, mc.S0 * np.maximum(factor, 1))
    return np.where(s2 <= mc.tau, mc.S0, escalated)


def _stochastic_passes(
    model: ClassifierModel, Xs: np.ndarray, passes: int, rng: np.random.Generator
) -> np.ndarray:
    out = np.empty((passes, Xs.shape[0], model.K))
    for s in range(passes):
        mask = model.net.sample_mask(Xs.shape[0], rng)
        out[s] = softmax_temperature(model.net.forward(Xs, mask)[0], model.T)
    return out


def _mc_predict(
    model: ClassifierModel, X: np.ndarray, mc: MCConfig, rng: np.random.Generator
) -> list[ClassifierOutput]:
    model._require_trained()
    _check_mc(mc)
    Xs = model.scale(X)
    probs = _stochastic_passes(model, Xs, mc.S0, rng)
    s_used = np.atleast_1d(adaptive_pass_count(probs.var(axis=0).mean(axis=1), mc))

    needs_more = np.flatnonzero(s_used > mc.S0)
    extra: np.ndarray | None = None
    if needs_more.size:
        extra = _stochastic_passes(
            model, Xs[needs_more], int(s_used[needs_more].max()) - mc.S0, rng
        )
    slot = {int(i): j for j, i in enumerate(needs_more)}

    outputs: list[ClassifierOutput] = []
    for i in range(Xs.shape[0]):
        passes = probs[:, i, :]
        if extra is not None and i in slot:
            passes = np.vstack([passes, extra[: s_used[i] - mc.S0, slot[i], :]])
        p_bar = passes.mean(axis=0)
        u_ep = float(entr(p_bar).sum() - entr(passes).sum(axis=1).mean())
        if u_ep < U_EP_FLOOR:
            u_ep = 0.0
        outputs.append(ClassifierOutput(p_bar=p_bar, u_ep=u_ep, s_used=int(s_used[i])))
    return outputs


def predict_with_uncertainty(
    model: ClassifierModel, x: Any, mc: MCConfig, rng: np.random.Generator
) -> ClassifierOutput:
    return _mc_predict(model, np.atleast_2d(np.asarray(x, dtype=float)), mc, rng)[0]


class PredictionCache:
    """Per-iteration memo of classifier outputs keyed by the candidate's bytes."""

    def __init__(self) -> None:
        self._store: dict[bytes, ClassifierOutput] = {}

    def __len__(self) -> int:
        return len(self._store)

    def __contains__(self, x: Any) -> bool:
        return self.key(x) in self._store

    @staticmethod
    def key(x: Any) -> bytes:
        return np.ascontiguousarray(x, dtype=float).tobytes()

    def get(self, x: Any) -> ClassifierOutput | None:
        return self._store.get(self.key(x))

    def put(self, x: Any, output: ClassifierOutput) -> None:
        self._store[self.key(x)] = output

    def clear(self) -> None:
        self._store.clear()


def predict_batch(
    model: ClassifierModel,
    pool: Any,
    mc: MCConfig,
    rng: np.random.Generator,
    cache: PredictionCache | None = None,
) -> list[ClassifierOutput]:
    """Order-preserving batch prediction; cached candidates are not re-run."""
    P = np.atleast_2d(np.asarray(pool, dtype=float))
    if cache is None:
        return _mc_predict(model, P, mc, rng)

    missing: list[int] = []
    queued: set[bytes] = set()
    for i, x in enumerate(P):
        key = cache.key(x)
        if key not in queued and cache.get(x) is None:
            queued.add(key)
            missing.append(i)
    if missing:
        for i, out in zip(missing, _mc_predict(model, P[missing], mc, rng)):
            cache.put(P[i], out)
    results: list[ClassifierOutput] = []
    for x in P:
        hit = cache.get(x)
        assert hit is not None
        results.append(hit)
    return results
