"""Per-objective two-layer Deep GP surrogate.

Layer 1 is a whitened sparse variational GP over the scaled decision vector
with a neural mean function. Layer 2 is a random-Fourier-feature linear model
with an identity mean acting on the layer-1 output. The mean function is a
linear head on a learned feature map, and a small network reads the same
features to predict the log observation noise. All targets are standardized
per objective.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.linalg import solve_triangular
from scipy.spatial.distance import cdist, pdist

from neuropareto.errors import DomainError, ModelStateError, NumericError
from neuropareto.models import FitReport, ProblemSpec, SurrogatePrediction, SurrogateSettings
from neuropareto.neural import MLP, ForwardCache, OptimizerState, adam_step
from neuropareto.pareto import Archive

logger = logging.getLogger(__name__)

LOG_2PI = float(np.log(2.0 * np.pi))
JITTER_START = 1e-8
JITTER_MAX = 1e-4
VAR_FLOOR = 1e-12

WARM = "warm"
FULL = "full"
REFIT_KINDS = (WARM, FULL)


def gaussian_nlpd(y: Any, mean: Any, var: Any) -> float:
    """Mean negative log density of ``y`` under independent Gaussians."""
    y = np.asarray(y, dtype=float)
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    if y.size == 0:
        raise DomainError("nlpd needs a nonempty holdout set")
    if np.any(var <= 0.0):
        raise DomainError("predictive variances must be positive")
    return float(np.mean(0.5 * (LOG_2PI + np.log(var)) + (y - mean) ** 2 / (2.0 * var)))


def _rbf(X1: np.ndarray, X2: np.ndarray, ell: np.ndarray, sf2: float) -> np.ndarray:
    return sf2 * np.exp(-0.5 * cdist(X1 / ell, X2 / ell, "sqeuclidean"))


def _weighted_sq_dist(W: np.ndarray, X1: np.ndarray, X2: np.ndarray) -> np.ndarray:
    """Per dimension d: sum_ij W_ij (X1_id - X2_jd)^2."""
    return (
        W.sum(axis=1) @ (X1 * X1)
        - 2.0 * np.sum(X1 * (W @ X2), axis=0)
        + W.sum(axis=0) @ (X2 * X2)
    )


def _cholesky_backward(L: np.ndarray, grad_L: np.ndarray) -> np.ndarray:
    """Symmetric gradient w.r.t. K from the gradient w.r.t. L = chol(K)."""
    P = np.tril(L.T @ grad_L)
    P = 0.5 * (P + np.tril(P, -1).T)
    left = solve_triangular(L, P, lower=True, trans="T")
    return solve_triangular(L, left.T, lower=True, trans="T").T


def inducing_locations(X: np.ndarray, n_inducing: int, rng: np.random.Generator) -> np.ndarray:
    """k-means centers, or the inputs themselves when there are too few."""
    if n_inducing >= X.shape[0]:
        return X.copy()
    centers, _ = kmeans2(X, n_inducing, minit="++", missing="warn", rng=rng)
    return np.asarray(centers, dtype=float)


# ---------------------------------------------------------------------------
# One objective
# ---------------------------------------------------------------------------


@dataclass
class _Layer1:
    ell: np.ndarray
    sf2: float
    Kzz: np.ndarray
    L: np.ndarray
    Kxz: np.ndarray
    A: np.ndarray
    phi: np.ndarray
    feat_cache: ForwardCache
    head_cache: ForwardCache
    h: np.ndarray
    var1: np.ndarray
    s: np.ndarray


class ObjectiveGP:
    """Variational state, kernel hyperparameters and networks for one objective."""

    def __init__(
        self,
        Z: np.ndarray,
        lengthscale: float,
        feature_net: MLP,
        mean_head: MLP,
        noise_net: MLP | None,
        omega: np.ndarray,
        phase: np.ndarray,
        settings: SurrogateSettings,
    ) -> None:
        self.settings = settings
        self.deep = settings.deep
        self.Z = Z
        self.log_ell = np.full(Z.shape[1], np.log(lengthscale))
        self.log_sf2 = np.zeros(1)
        self.m_v = np.zeros(Z.shape[0])
        self.log_s = np.zeros(Z.shape[0])
        self.feature_net = feature_net
        self.mean_head = mean_head
        self.noise_net = noise_net
        self.log_noise = np.array([np.log(settings.initial_noise)])
        self.omega = omega
        self.phase = phase
        self.prior_var = settings.layer2_prior_variance
        self.mu_b = np.zeros(omega.size)
        self.log_s_b = np.full(omega.size, np.log(self.prior_var))
        self.jitter = JITTER_START
        self.last_validation_elbo: float | None = None
        self.optimizer = OptimizerState.for_params(self.params, lr=settings.learning_rate)

    @property
    def n_inducing(self) -> int:
        return int(self.Z.shape[0])

    @property
    def params(self) -> list[np.ndarray]:
        core = [self.log_ell, self.log_sf2, self.m_v, self.log_s]
        if self.deep:
            core += [self.mu_b, self.log_s_b]
        else:
            core.append(self.log_noise)
        core += self.feature_net.params + self.mean_head.params
        if self.deep and self.noise_net is not None:
            core += self.noise_net.params
        return core

    @property
    def _noise_slots(self) -> range:
        n = len(self.params)
        if self.deep and self.noise_net is not None:
            return range(n - len(self.noise_net.params), n)
        return range(4, 5)

    def reset_inducing(self, Z: np.ndarray) -> None:
        """Swap in new inducing locations and restart q(v) at the prior."""
        self.Z = Z
        self.m_v = np.zeros(Z.shape[0])
        self.log_s = np.zeros(Z.shape[0])
        self.optimizer = OptimizerState.for_params(self.params, lr=self.settings.learning_rate)

    # -- forward pieces -----------------------------------------------------

    def _cholesky(self, Kzz: np.ndarray) -> np.ndarray:
        eye = np.eye(Kzz.shape[0])
        while True:
            try:
                return np.linalg.cholesky(Kzz + self.jitter * eye)
            except np.linalg.LinAlgError:
                if not self.escalate_jitter():
                    raise NumericError(
                        f"inducing covariance not positive definite at jitter {self.jitter:g}"
                    ) from None

    def escalate_jitter(self) -> bool:
        if self.jitter >= JITTER_MAX * (1.0 - 1e-9):
            return False
        self.jitter = min(self.jitter * 10.0, JITTER_MAX)
        logger.warning("Raising inducing jitter to %g", self.jitter)
        return True

    def layer1(self, X: np.ndarray) -> _Layer1:
        ell = np.exp(self.log_ell)
        sf2 = float(np.exp(self.log_sf2[0]))
        Kzz = _rbf(self.Z, self.Z, ell, sf2)
        L = self._cholesky(Kzz)
        Kxz = _rbf(X, self.Z, ell, sf2)
        A = solve_triangular(L, Kxz.T, lower=True).T
        phi, feat_cache = self.feature_net.forward(X)
        mean_out, head_cache = self.mean_head.forward(phi)
        s = np.exp(self.log_s)
        h = mean_out[:, 0] + A @ self.m_v
        var1 = np.maximum(sf2 + (A * A) @ (s - 1.0), VAR_FLOOR)
        return _Layer1(ell, sf2, Kzz, L, Kxz, A, phi, feat_cache, head_cache, h, var1, s)

    def features(self, h: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """RFF map of ``h`` and its derivative, trailing axis of width R."""
        c = np.sqrt(2.0 / self.omega.size)
        arg = h[..., None] * self.omega + self.phase
        return c * np.cos(arg), -c * self.omega * np.sin(arg)

    def _noise_from_latent(self, phi: np.ndarray) -> tuple[np.ndarray, ForwardCache | None]:
        if self.deep and self.noise_net is not None:
            out, cache = self.noise_net.forward(phi)
            return out[:, 0], cache
        return np.full(phi.shape[0], self.log_noise[0]), None

    def log_noise_at(self, X: np.ndarray) -> np.ndarray:
        """Log noise variance at scaled inputs, read off the learned feature map."""
        return self._noise_from_latent(self.feature_net.forward(X)[0])[0]

    def kl(self) -> float:
        s = np.exp(self.log_s)
        total = 0.5 * float(np.sum(s + self.m_v**2 - 1.0 - self.log_s))
        if self.deep:
            p = self.prior_var
            s_b = np.exp(self.log_s_b)
            total += 0.5 * float(
                np.sum(s_b / p + self.mu_b**2 / p - 1.0 - (self.log_s_b - np.log(p)))
            )
        return total

    # -- objective ----------------------------------------------------------

    def elbo(
        self, X: np.ndarray, y: np.ndarray, *, with_grads: bool = False, train_noise: bool = True
    ) -> tuple[float, list[np.ndarray] | None, np.ndarray]:
        """ELBO, its gradient (params order) and per-point expected log-likelihood."""
        l1 = self.layer1(X)
        if self.deep:
            Phi, dPhi = self.features(l1.h)
            s_b = np.exp(self.log_s_b)
            f = l1.h + Phi @ self.mu_b
            v = l1.var1 + (Phi * Phi) @ s_b
        else:
            f = l1.h
            v = l1.var1
        eta, noise_cache = self._noise_from_latent(l1.phi)
        sn2 = np.exp(eta)
        resid = y - f
        point = -0.5 * LOG_2PI - 0.5 * eta - (resid**2 + v) / (2.0 * sn2)
        value = float(point.sum()) - self.kl()
        if not with_grads:
            return value, None, point

        r = resid / sn2
        g_var1 = -0.5 / sn2
        if self.deep:
            g_h = r * (1.0 + dPhi @ self.mu_b) + 2.0 * g_var1 * ((Phi * dPhi) @ s_b)
            d_mu_b = Phi.T @ r - self.mu_b / self.prior_var
            d_log_s_b = s_b * ((Phi * Phi).T @ g_var1) - 0.5 * (s_b / self.prior_var - 1.0)
        else:
            g_h = r
        d_eta = -0.5 + (resid**2 + v) / (2.0 * sn2)
        d_m_v = l1.A.T @ g_h - self.m_v
        d_log_s = l1.s * ((l1.A * l1.A).T @ g_var1) - 0.5 * (l1.s - 1.0)

        G_A = np.outer(g_h, self.m_v) + 2.0 * g_var1[:, None] * l1.A * (l1.s - 1.0)
        G_Kxz = solve_triangular(l1.L, G_A.T, lower=True, trans="T").T
        grad_L = -np.tril(solve_triangular(l1.L, G_A.T @ l1.A, lower=True, trans="T"))
        G_Kzz = _cholesky_backward(l1.L, grad_L)

        W_xz = G_Kxz * l1.Kxz
        W_zz = G_Kzz * l1.Kzz
        d_log_sf2 = np.array([W_xz.sum() + W_zz.sum() + g_var1.sum() * l1.sf2])
        d_log_ell = (
            _weighted_sq_dist(W_xz, X, self.Z) + _weighted_sq_dist(W_zz, self.Z, self.Z)
        ) / l1.ell**2

        grads = [d_log_ell, d_log_sf2, d_m_v, d_log_s]
        if self.deep:
            grads += [d_mu_b, d_log_s_b]
        else:
            grads.append(np.array([d_eta.sum()]))
        head_grads, g_phi = self.mean_head.backward_input(l1.head_cache, g_h[:, None])
        noise_grads: list[np.ndarray] = []
        if self.deep and self.noise_net is not None and noise_cache is not None:
            noise_grads, g_noise = self.noise_net.backward_input(noise_cache, d_eta[:, None])
            g_phi = g_phi + g_noise
        grads += self.feature_net.backward(l1.feat_cache, g_phi) + head_grads + noise_grads
        if not train_noise:
            for i in self._noise_slots:
                grads[i] = np.zeros_like(grads[i])
        return value, grads, point

    def step(self, X: np.ndarray, y: np.ndarray, *, train_noise: bool) -> float:
        """One Adam ascent step on the ELBO; returns the pre-step value."""
        while True:
            value, grads, _ = self.elbo(X, y, with_grads=True, train_noise=train_noise)
            if grads is not None and np.isfinite(value) and all(
                np.all(np.isfinite(g)) for g in grads
            ):
                break
            if not self.escalate_jitter():
                raise NumericError("surrogate ELBO is not finite at maximum jitter")
        adam_step(self.params, [-g for g in grads], self.optimizer)
        self._touch()
        return value

    def _touch(self) -> None:
        self.feature_net.touch()
        self.mean_head.touch()
        if self.noise_net is not None:
            self.noise_net.touch()

    def snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.params]

    def restore(self, saved: list[np.ndarray]) -> None:
        for p, s in zip(self.params, saved):
            p[...] = s
        self._touch()

    def moments(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Deterministic predictive mean and variance (noise excluded)."""
        l1 = self.layer1(X)
        if not self.deep:
            return l1.h, l1.var1
        Phi, dPhi = self.features(l1.h)
        mean = l1.h + Phi @ self.mu_b
        var = l1.var1 + (Phi * Phi) @ np.exp(self.log_s_b)
        return mean, var

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "Z": self.Z.tolist(),
            "log_lengthscale": self.log_ell.tolist(),
            "log_signal_variance": float(self.log_sf2[0]),
            "m_v": self.m_v.tolist(),
            "log_s": self.log_s.tolist(),
            "feature_net": self.feature_net.to_dict(),
            "mean_head": self.mean_head.to_dict(),
            "jitter": self.jitter,
            "deep": self.deep,
        }
        if self.deep:
            data.update(
                omega=self.omega.tolist(),
                phase=self.phase.tolist(),
                mu_beta=self.mu_b.tolist(),
                log_s_beta=self.log_s_b.tolist(),
                noise_net=self.noise_net.to_dict() if self.noise_net else None,
            )
        else:
            data["log_noise"] = float(self.log_noise[0])
        return data


# ---------------------------------------------------------------------------
# Multi-objective model
# ---------------------------------------------------------------------------


class SurrogateModel:
    """Independent per-objective surrogates plus the shared input/target transforms."""

    def __init__(
        self,
        problem: ProblemSpec,
        settings: SurrogateSettings,
        objectives: list[ObjectiveGP],
        y_mean: np.ndarray,
        y_std: np.ndarray,
    ) -> None:
        self.problem = problem
        self.settings = settings
        self.objectives = objectives
        self.y_mean = y_mean
        self.y_std = y_std
        self.fits_completed = 0
        self.fitted = False

    @property
    def M(self) -> int:
        return len(self.objectives)

    @property
    def n_inducing(self) -> int:
        return max(gp.n_inducing for gp in self.objectives)

    @property
    def noise_frozen(self) -> bool:
        return self.fits_completed < self.settings.noise_freeze_iterations

    def scale(self, X: Any) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        span = np.where(self.problem.span > 0.0, self.problem.span, 1.0)
        return (X - self.problem.lower_bounds) / span

    def standardize(self, F: np.ndarray) -> np.ndarray:
        return (F - self.y_mean) / self.y_std

    def destandardize(self, Y: np.ndarray) -> np.ndarray:
        return Y * self.y_std + self.y_mean

    def set_targets(self, F: np.ndarray) -> np.ndarray:
        """Refresh the per-objective transform from ``F`` and return standardized targets."""
        self.y_mean = F.mean(axis=0)
        std = F.std(axis=0)
        self.y_std = np.where(std > 0.0, std, 1.0)
        return self.standardize(F)

    def require_fitted(self) -> None:
        if not self.fitted:
            raise ModelStateError("surrogate has not been fitted")

    def to_dict(self) -> dict[str, Any]:
        return {
            "problem": self.problem.name,
            "y_mean": self.y_mean.tolist(),
            "y_std": self.y_std.tolist(),
            "fits_completed": self.fits_completed,
            "objectives": [gp.to_dict() for gp in self.objectives],
        }


def init_surrogate(
    problem: ProblemSpec,
    archive: Archive,
    rng: np.random.Generator,
    settings: SurrogateSettings | None = None,
) -> SurrogateModel:
    """Build an unfitted surrogate whose inducing points come from k-means."""
    s = settings or SurrogateSettings()
    if len(archive) < 2:
        raise ModelStateError(f"surrogate needs at least 2 samples, archive has {len(archive)}")
    if s.rff_features % 2:
        raise DomainError(f"rff_features must be even, got {s.rff_features}")

    F = archive.F
    y_mean = F.mean(axis=0)
    std = F.std(axis=0)
    model = SurrogateModel(problem, s, [], y_mean, np.where(std > 0.0, std, 1.0))
    Xs = model.scale(archive.X)
    spread = float(np.median(pdist(Xs))) if Xs.shape[0] > 1 else 1.0
    lengthscale = spread if spread > 0.0 else 1.0

    for _ in range(problem.M):
        Z = inducing_locations(Xs, s.inducing, rng)
        feature_net = MLP.build(
            [problem.D, s.mean_hidden, s.mean_features], rng, activate_output=True
        )
        mean_head = MLP.build([s.mean_features, 1], rng)
        noise_net = None
        if s.deep:
            noise_net = MLP.build([s.mean_features, s.noise_hidden, 1], rng, zero_output=True)
            noise_net.layers[-1].b[:] = np.log(s.initial_noise)
        omega = rng.normal(0.0, 1.0 / s.layer2_lengthscale, size=s.rff_features)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=s.rff_features)
        model.objectives.append(
            ObjectiveGP(Z, lengthscale, feature_net, mean_head, noise_net, omega, phase, s)
        )
    logger.debug(
        "Surrogate initialized: %d objectives, %d inducing points, lengthscale %.3f",
        problem.M,
        model.n_inducing,
        lengthscale,
    )
    return model


def _validation_slice(n: int, fraction: float) -> slice:
    count = max(1, int(np.ceil(fraction * n)))
    return slice(n - count, n)


def _maybe_double_inducing(
    model: SurrogateModel,
    gp: ObjectiveGP,
    Xs: np.ndarray,
    y: np.ndarray,
    val: slice,
    rng: np.random.Generator,
) -> bool:
    if gp.last_validation_elbo is None:
        return False
    current = float(np.mean(gp.elbo(Xs, y)[2][val]))
    previous = gp.last_validation_elbo
    drop = (previous - current) / max(abs(previous), 1e-12)
    if drop <= model.settings.elbo_drop_tolerance:
        return False
    target = min(2 * gp.n_inducing, Xs.shape[0])
    if target <= gp.n_inducing:
        logger.debug("Validation ELBO dropped %.1f%% but inducing count is capped", 100 * drop)
        return False
    gp.reset_inducing(inducing_locations(Xs, target, rng))
    logger.info(
        "Validation ELBO dropped %.1f%%; inducing points doubled to %d", 100 * drop, target
    )
    return True


def fit_surrogate(
    model: SurrogateModel,
    archive: Archive,
    mode: str,
    rng: np.random.Generator,
) -> FitReport:
    """Maximize each objective's ELBO with full-batch Adam.

    ``warm`` runs a bounded number of epochs from the current state; ``full``
    runs to convergence or the epoch cap. The best parameters seen, including
    the starting point, are kept.
    """
    if mode not in REFIT_KINDS:
        raise DomainError(f"refit mode must be one of {REFIT_KINDS}, got '{mode}'")
    if len(archive) < 2:
        raise ModelStateError(f"surrogate needs at least 2 samples, archive has {len(archive)}")
    s = model.settings
    Xs = model.scale(archive.X)
    Y = model.set_targets(archive.F)
    val = _validation_slice(Xs.shape[0], s.validation_fraction)
    train_noise = not model.noise_frozen

    doubled = False
    for m, gp in enumerate(model.objectives):
        doubled |= _maybe_double_inducing(model, gp, Xs, Y[:, m], val, rng)
    if doubled:
        mode = FULL
    max_epochs = s.full_epochs if mode == FULL else s.warm_epochs

    initial = [gp.elbo(Xs, Y[:, m])[0] for m, gp in enumerate(model.objectives)]
    best = list(initial)
    saved = [gp.snapshot() for gp in model.objectives]
    trace: list[list[float]] = []
    nlpd_trace: list[float] = []
    degraded = False
    rising = 0

    for epoch in range(max_epochs):
        for m, gp in enumerate(model.objectives):
            for _ in range(s.steps_per_epoch):
                gp.step(Xs, Y[:, m], train_noise=train_noise)
        values: list[float] = []
        nlpds: list[float] = []
        for m, gp in enumerate(model.objectives):
            value = gp.elbo(Xs, Y[:, m])[0]
            values.append(value)
            if np.isfinite(value) and value > best[m]:
                best[m] = value
                saved[m] = gp.snapshot()
            mean, var = gp.moments(Xs[val])
            noise = np.exp(gp.log_noise_at(Xs[val]))
            nlpds.append(gaussian_nlpd(Y[val, m], mean, var + noise))
        trace.append(values)
        nlpd_trace.append(float(np.mean(nlpds)))

        if len(nlpd_trace) > 1 and nlpd_trace[-1] > nlpd_trace[-2]:
            rising += 1
        else:
            rising = 0
        if rising >= s.nlpd_patience:
            degraded = True
            logger.debug("Validation NLPD rose %d epochs running; stopping", rising)
            break
        if epoch + 1 >= s.min_epochs and len(trace) > 1:
            before = sum(trace[-2])
            gain = (sum(values) - before) / max(abs(before), 1e-12)
            if gain < s.improvement_tolerance:
                break

    for gp, params in zip(model.objectives, saved):
        gp.restore(params)
    for m, gp in enumerate(model.objectives):
        gp.last_validation_elbo = float(np.mean(gp.elbo(Xs, Y[:, m])[2][val]))

    model.fits_completed += 1
    model.fitted = True
    report = FitReport(
        elbo_trace=trace,
        epochs_run=len(trace),
        refit_kind=mode,
        n_inducing=model.n_inducing,
        initial_elbo=initial,
        final_elbo=best,
        nlpd_degraded=degraded,
        inducing_doubled=doubled,
    )
    logger.debug(
        "Surrogate %s fit: %d epochs, ELBO %s -> %s",
        mode,
        report.epochs_run,
        [round(v, 3) for v in initial],
        [round(v, 3) for v in best],
    )
    return report


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def predict(
    model: SurrogateModel, X: Any, S_gp: int, rng: np.random.Generator
) -> SurrogatePrediction:
    """Sampled propagation through both layers, de-standardized."""
    model.require_fitted()
    if S_gp < 1:
        raise DomainError(f"propagation samples must be >= 1, got {S_gp}")
    Xs = model.scale(X)
    n = Xs.shape[0]
    f_hat = np.empty((n, model.M))
    u_ep = np.empty((n, model.M))
    u_al = np.empty((n, model.M))
    for m, gp in enumerate(model.objectives):
        l1 = gp.layer1(Xs)
        if gp.deep:
            hs = l1.h + np.sqrt(l1.var1) * rng.standard_normal((S_gp, n))
            Phi, _ = gp.features(hs)
            means = hs + Phi @ gp.mu_b
            weight_var = (Phi * Phi) @ np.exp(gp.log_s_b)
            f_hat[:, m] = means.mean(axis=0)
            u_ep[:, m] = means.var(axis=0) + weight_var.mean(axis=0)
        else:
            f_hat[:, m] = l1.h
            u_ep[:, m] = l1.var1
        u_al[:, m] = np.exp(gp.log_noise_at(Xs))
    var_scale = model.y_std**2
    return SurrogatePrediction(
        f_hat=model.destandardize(f_hat),
        u_ep=u_ep * var_scale,
        u_al=u_al * var_scale,
    )


def proxy_predict(model: SurrogateModel, X: Any) -> tuple[np.ndarray, np.ndarray]:
    """Single deterministic pass: approximate means and a summed coarse variance."""
    model.require_fitted()
    Xs = model.scale(X)
    n = Xs.shape[0]
    means = np.empty((n, model.M))
    coarse = np.zeros(n)
    for m, gp in enumerate(model.objectives):
        l1 = gp.layer1(Xs)
        if gp.deep:
            Phi, dPhi = gp.features(l1.h)
            means[:, m] = l1.h + Phi @ gp.mu_b
            slope = 1.0 + dPhi @ gp.mu_b
            coarse += slope**2 * l1.var1 * model.y_std[m] ** 2
        else:
            means[:, m] = l1.h
            coarse += l1.var1 * model.y_std[m] ** 2
    return model.destandardize(means), coarse


def nlpd(model: SurrogateModel, X: Any, F: Any, rng: np.random.Generator, S_gp: int = 8) -> float:
    """Gaussian NLPD with total variance u_ep + u_al, averaged over objectives."""
    F = np.atleast_2d(np.asarray(F, dtype=float))
    if F.shape[0] == 0:
        raise DomainError("nlpd needs a nonempty holdout set")
    pred = predict(model, X, S_gp, rng)
    total = pred.u_ep + pred.u_al
    return float(
        np.mean([gaussian_nlpd(F[:, m], pred.f_hat[:, m], total[:, m]) for m in range(model.M)])
    )
