"""Budgeted optimization loop and its baselines."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from collections.abc import Iterable, Sequence
from typing import Any

import numpy as np

from neuropareto.acq import (
    AcqNet,
    HistoryBuffer,
    build_features,
    diversity_target,
    feature_width,
    score,
    static_score,
    train_acquisition,
    window_stats,
)
from neuropareto.bench import evaluate_batch, latin_hypercube, reference_front
from neuropareto.deepgp import FULL, WARM, fit_surrogate, init_surrogate, predict, proxy_predict
from neuropareto.errors import DomainError
from neuropareto.models import (
    ABLATION_STATIC_WEIGHTS,
    ABLATIONS,
    ClassifierOutput,
    FitReport,
    HistoryRecord,
    HVConfig,
    LoopConfig,
    MCConfig,
    ProblemSpec,
    RunResult,
    RunTableRow,
    SelectionWeights,
)
from neuropareto.pareto import Archive, archive_diversity, crowding_distance
from neuropareto.quality import delta_hv, hv_contributions, hypervolume, igd, reference_point
from neuropareto.rankclf import ClassifierModel, PredictionCache, fit_classifier, predict_batch

logger = logging.getLogger(__name__)

SBX_ETA = 15.0
SBX_PAIR_RATE = 0.9
SBX_VARIABLE_RATE = 0.5
DEDUP_TOL = 1e-6
SCREEN_VARIANCE_PENALTY = 0.5
SCREEN_EXPLORATION_BONUS = 0.1

_STREAMS = (
    "design",
    "classifier",
    "mc",
    "surrogate",
    "predict",
    "acquisition",
    "variation",
    "baseline",
)


# ---------------------------------------------------------------------------
# Candidate generation
# ---------------------------------------------------------------------------


def mutation_index(mean_rank: float, K: int) -> float:
    """Polynomial-mutation index: 25 for rank-1 parents, 5 for rank-K parents."""
    return 20.0 * (1.0 - (mean_rank - 1.0) / (K - 1)) + 5.0


def _sbx(
    p1: np.ndarray, p2: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    u = rng.random(p1.shape)
    beta = np.where(
        u <= 0.5,
        (2.0 * u) ** (1.0 / (SBX_ETA + 1.0)),
        (1.0 / (2.0 * (1.0 - u))) ** (1.0 / (SBX_ETA + 1.0)),
    )
    cross = (rng.random(p1.shape) < SBX_VARIABLE_RATE) & (
        rng.random(p1.shape[0]) < SBX_PAIR_RATE
    )[:, None]
    c1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2)
    c2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2)
    return np.where(cross, c1, p1), np.where(cross, c2, p2)


def _polynomial_mutation(
    Y: np.ndarray, eta: float, rng: np.random.Generator
) -> np.ndarray:
    """Mutate unit-box coordinates, each with probability 1/D."""
    D = Y.shape[1]
    hit = rng.random(Y.shape) < 1.0 / D
    u = rng.random(Y.shape)
    delta = np.where(
        u < 0.5,
        (2.0 * u) ** (1.0 / (eta + 1.0)) - 1.0,
        1.0 - (2.0 * (1.0 - u)) ** (1.0 / (eta + 1.0)),
    )
    return np.clip(np.where(hit, Y + delta, Y), 0.0, 1.0)


def stratum_crowding(archive: Archive) -> np.ndarray:
    """Crowding distance of each archive member within its own nondominated front."""
    crowd = np.empty(len(archive))
    ranks = archive.ranks
    for level in np.unique(ranks):
        members = np.flatnonzero(ranks == level)
        crowd[members] = crowding_distance(archive.F[members])
    return crowd


def tournament(
    ranks: np.ndarray,
    crowd: np.ndarray,
    K: int,
    size: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Binary tournaments between entrants drawn with weight 2^(K - rank).

    The lower predicted rank wins; equal ranks go to the larger crowding distance.
    """
    weights = 2.0 ** (K - ranks)
    probs = weights / weights.sum()
    a = rng.choice(ranks.size, size=size, p=probs)
    b = rng.choice(ranks.size, size=size, p=probs)
    a_wins = (ranks[a] < ranks[b]) | ((ranks[a] == ranks[b]) & (crowd[a] >= crowd[b]))
    return np.where(a_wins, a, b)


def generate_candidates(
    problem: ProblemSpec,
    archive: Archive,
    parent_outputs: Sequence[ClassifierOutput],
    pool_size: int,
    K: int,
    rng: np.random.Generator,
) -> np.ndarray:
    """Rank-biased tournaments, SBX and rank-modulated polynomial mutation."""
    if len(archive) < 2:
        raise DomainError("candidate generation needs at least 2 archive members")
    if len(parent_outputs) != len(archive):
        raise DomainError("one classifier output per archive member is required")

    lo, span = problem.lower_bounds, np.where(problem.span > 0.0, problem.span, 1.0)
    X = (archive.X - lo) / span
    ranks = np.array([o.predicted_rank for o in parent_outputs], dtype=float)
    crowd = stratum_crowding(archive)

    n_pairs = math.ceil(pool_size / 2)
    first = tournament(ranks, crowd, K, n_pairs, rng)
    second = tournament(ranks, crowd, K, n_pairs, rng)
    eta_m = mutation_index(float(np.mean(ranks[np.concatenate([first, second])])), K)

    c1, c2 = _sbx(X[first], X[second], rng)
    children = np.clip(np.vstack([c1, c2])[:pool_size], 0.0, 1.0)
    children = _polynomial_mutation(children, eta_m, rng)
    pool = lo + children * span
    return np.clip(pool, problem.lower_bounds, problem.upper_bounds)


# ---------------------------------------------------------------------------
# Screening and selection
# ---------------------------------------------------------------------------


def screen(
    pool: np.ndarray,
    clf_outputs: Sequence[ClassifierOutput],
    surrogate: Any,
    n_screen: int,
    front: np.ndarray,
    hv_cfg: HVConfig,
) -> tuple[np.ndarray, np.ndarray]:
    """Indices of the best ``n_screen`` candidates by proxy score, best first."""
    if pool.shape[0] < n_screen:
        logger.warning(
            "Pool of %d is smaller than N_screen=%d; keeping all", pool.shape[0], n_screen
        )
    means, coarse = proxy_predict(surrogate, pool)
    u_ep = np.array([o.u_ep for o in clf_outputs])
    proxy = (
        hv_contributions(front, means, hv_cfg)
        - SCREEN_VARIANCE_PENALTY * coarse
        + SCREEN_EXPLORATION_BONUS * u_ep
    )
    order = np.argsort(-proxy, kind="stable")[:n_screen]
    return order, proxy[order]


def zscore(values: Any) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    std = v.std()
    if v.size == 0 or std <= 0.0:
        return np.zeros_like(v)
    return (v - v.mean()) / std


def composite_score(
    s_hv_pred: Any,
    s_div_pred: Any,
    u_ep_clf: Any,
    s_hv_sur: Any,
    weights: SelectionWeights,
) -> np.ndarray:
    return (
        weights.alpha_hv * zscore(s_hv_pred)
        + weights.alpha_div * zscore(s_div_pred)
        + weights.alpha_clf * zscore(u_ep_clf)
        + zscore(s_hv_sur)
    )


def greedy_pick(scores: Any, X_unit: np.ndarray, q: int) -> list[int]:
    """Top ``q`` by score, skipping near-duplicates of earlier picks."""
    order = np.argsort(-np.asarray(scores, dtype=float), kind="stable")
    picked: list[int] = []
    for i in order:
        if len(picked) == q:
            break
        if picked and np.any(np.max(np.abs(X_unit[picked] - X_unit[i]), axis=1) <= DEDUP_TOL):
            continue
        picked.append(int(i))
    if len(picked) < q:
        logger.warning("Only %d distinct candidates for a batch of %d", len(picked), q)
    return picked


def composite_select(
    X_unit: np.ndarray,
    s_hv_pred: Any,
    s_div_pred: Any,
    u_ep_clf: Any,
    s_hv_sur: Any,
    q: int,
    weights: SelectionWeights,
) -> list[int]:
    """Indices into the top-k set, in selection order."""
    if q > X_unit.shape[0]:
        logger.warning("Batch size %d exceeds the %d scored candidates", q, X_unit.shape[0])
    scores = composite_score(s_hv_pred, s_div_pred, u_ep_clf, s_hv_sur, weights)
    return greedy_pick(scores, X_unit, q)


# ---------------------------------------------------------------------------
# Loop
# ---------------------------------------------------------------------------


class OptimizationLoop:
    """One seeded run of the surrogate-assisted loop or a baseline."""

    def __init__(
        self,
        problem: ProblemSpec,
        config: LoopConfig,
        seed: int,
        *,
        mode: str = "neuropareto",
        disabled: Iterable[str] = (),
        static_weights: Sequence[float] | None = None,
    ) -> None:
        self.problem = problem
        self.seed = seed
        self.mode = mode
        self.disabled = frozenset(disabled) | config.disabled
        unknown = self.disabled - ABLATIONS
        if unknown:
            raise DomainError(f"unknown ablation(s): {', '.join(sorted(unknown))}")
        if "deepgp" in self.disabled:
            config = dataclasses.replace(
                config, surrogate=dataclasses.replace(config.surrogate, deep=False)
            )
        self.config = config
        self.weights = tuple(static_weights or config.static_weights)
        if "learned_acq" in self.disabled:
            self.weights = ABLATION_STATIC_WEIGHTS
        self.mc = MCConfig(1, 1, config.mc.tau) if "uncertainty" in self.disabled else config.mc
        streams = np.random.SeedSequence(seed).spawn(len(_STREAMS))
        self.rng = {name: np.random.default_rng(s) for name, s in zip(_STREAMS, streams)}

        self.archive = Archive()
        self.rows: list[RunTableRow] = []
        self.buffer = HistoryBuffer(
            config.acquisition.buffer_size,
            config.acquisition.window,
            config.acquisition.ema_decay,
        )
        self.diagnostics: list[dict[str, Any]] = []
        self.oracle_pairs: list[tuple[float, float]] = []
        self.front_ref = reference_front(problem)
        self.hv_cfg: HVConfig | None = None

    @property
    def uses_learned_acquisition(self) -> bool:
        return self.mode != "static" and "learned_acq" not in self.disabled

    @property
    def evals(self) -> int:
        return len(self.archive)

    # -- shared steps -------------------------------------------------------

    def _initial_design(self) -> None:
        started = time.perf_counter()
        n0 = min(self.config.initial_size, self.config.budget)
        X0 = latin_hypercube(
            n0,
            self.problem.D,
            (self.problem.lower_bounds, self.problem.upper_bounds),
            self.rng["design"],
        )
        F0 = evaluate_batch(self.problem, X0)
        self.archive.record(X0, F0)
        ref = reference_point(F0, self.front_ref)
        lower = np.minimum(F0.min(axis=0), self.front_ref.min(axis=0))
        self.hv_cfg = HVConfig(
            ref_point=tuple(float(v) for v in ref),
            mc_samples=self.config.hv_mc_samples,
            mc_seed=self.config.hv_seed,
            lower_point=tuple(float(v) for v in lower),
        )
        self._log_row(0, "none", 0, 0.0, 0.0, time.perf_counter() - started)

    def _log_row(
        self,
        iteration: int,
        refit: str,
        epochs: int,
        acq_loss: float,
        mean_s: float,
        seconds: float,
    ) -> None:
        assert self.hv_cfg is not None
        row = RunTableRow(
            iteration=iteration,
            evals=self.evals,
            hv=hypervolume(self.archive.F, self.hv_cfg),
            igd=igd(self.archive.pareto_front(), self.front_ref),
            mean_s_used=mean_s,
            refit=refit,
            epochs=epochs,
            acq_loss=acq_loss,
            seconds=seconds,
        )
        self.rows.append(row)
        logger.info(
            "seed %d iter %d: evals=%d hv=%.5f igd=%.5f",
            self.seed,
            iteration,
            row.evals,
            row.hv,
            row.igd,
        )

    def _evaluate_and_record(
        self, X: np.ndarray, feats: np.ndarray | None
    ) -> list[int]:
        """True-evaluate in order, logging sequential ΔHV and Δdiv per point."""
        assert self.hv_cfg is not None
        F = evaluate_batch(self.problem, X)
        indices: list[int] = []
        for i in range(X.shape[0]):
            gain = delta_hv(self.archive.F, F[i], self.hv_cfg)
            div_before = archive_diversity(self.archive)
            (sample,) = self.archive.record(X[i : i + 1], F[i : i + 1])
            div_norm = diversity_target(div_before, archive_diversity(self.archive), self.buffer)
            if feats is not None:
                self.buffer.append(
                    HistoryRecord(
                        feat=feats[i].copy(),
                        delta_hv=gain,
                        delta_div_norm=div_norm,
                        eval_index=sample.eval_index,
                    )
                )
            indices.append(sample.eval_index)
        return indices

    def _result(self) -> RunResult:
        assert self.hv_cfg is not None
        return RunResult(
            archive=self.archive,
            rows=self.rows,
            seed=self.seed,
            mode=self.mode,
            ref_point=self.hv_cfg.ref_point,
            config_echo={
                "mode": self.mode,
                "disabled": sorted(self.disabled),
                "static_weights": list(self.weights),
            },
            history=list(self.buffer.records),
            diagnostics=self.diagnostics,
            oracle_pairs=self.oracle_pairs,
        )

    # -- run modes ----------------------------------------------------------

    def run_random(self) -> RunResult:
        self._initial_design()
        iteration = 0
        while self.evals < self.config.budget:
            iteration += 1
            started = time.perf_counter()
            q = min(self.config.batch_size, self.config.budget - self.evals)
            X = self.rng["baseline"].uniform(
                self.problem.lower_bounds, self.problem.upper_bounds, size=(q, self.problem.D)
            )
            self._evaluate_and_record(X, None)
            self._log_row(iteration, "none", 0, 0.0, 0.0, time.perf_counter() - started)
        return self._result()

    def run(self) -> RunResult:
        if self.mode == "random":
            return self.run_random()
        cfg = self.config
        self._initial_design()
        assert self.hv_cfg is not None

        classifier = ClassifierModel.build(
            self.problem, cfg.rank_classes, self.rng["classifier"], cfg.classifier
        )
        surrogate = init_surrogate(self.problem, self.archive, self.rng["surrogate"], cfg.surrogate)
        width = feature_width(self.problem.M, cfg.rank_classes)
        acq_net = AcqNet(width, self.rng["acquisition"], cfg.acquisition)
        cache = PredictionCache()
        span = np.where(self.problem.span > 0.0, self.problem.span, 1.0)
        report: FitReport | None = None

        iteration = 0
        while self.evals < cfg.budget:
            iteration += 1
            started = time.perf_counter()
            cache.clear()

            epochs = cfg.classifier.epochs if iteration == 1 else cfg.classifier.warm_epochs
            clf_fit = fit_classifier(
                classifier,
                self.archive,
                cfg.rank_classes,
                epochs,
                self.rng["classifier"],
                calibrate="temp_scaling" not in self.disabled,
            )

            refit = "none"
            surrogate_epochs = 0
            if report is None or (iteration - 1) % cfg.refit_every == 0:
                kind = FULL if report is None or report.nlpd_degraded else WARM
                report = fit_surrogate(surrogate, self.archive, kind, self.rng["surrogate"])
                refit = report.refit_kind
                surrogate_epochs = report.epochs_run

            acq_loss = 0.0
            if self.uses_learned_acquisition:
                trained = train_acquisition(acq_net, self.buffer, self.rng["acquisition"])
                acq_loss = 0.0 if trained is None else trained

            parents = predict_batch(classifier, self.archive.X, self.mc, self.rng["mc"], cache)
            pool = generate_candidates(
                self.problem,
                self.archive,
                parents,
                cfg.pool_size,
                cfg.rank_classes,
                self.rng["variation"],
            )
            pool_out = predict_batch(classifier, pool, self.mc, self.rng["mc"], cache)
            if "uncertainty" in self.disabled:
                pool_out = [
                    ClassifierOutput(p_bar=o.p_bar, u_ep=0.0, s_used=o.s_used) for o in pool_out
                ]

            front = self.archive.pareto_front()
            if "screening" in self.disabled:
                top = np.arange(pool.shape[0])
            else:
                screened, _ = screen(pool, pool_out, surrogate, cfg.n_screen, front, self.hv_cfg)
                top = screened[: cfg.top_k]

            X_top = pool[top]
            top_out = [pool_out[i] for i in top]
            pred = predict(surrogate, X_top, cfg.surrogate.propagation_samples, self.rng["predict"])
            feats = build_features(pred, top_out, window_stats(self.buffer))
            s_hv_sur = hv_contributions(front, pred.f_hat, self.hv_cfg)
            q = min(cfg.batch_size, cfg.budget - self.evals)
            X_unit = (X_top - self.problem.lower_bounds) / span

            if self.uses_learned_acquisition:
                s_hv_pred, s_div_pred = score(acq_net, feats)
                u_ep_clf = np.array([o.u_ep for o in top_out])
                chosen = composite_select(
                    X_unit, s_hv_pred, s_div_pred, u_ep_clf, s_hv_sur, q, cfg.selection
                )
            else:
                static = static_score(
                    feats, self.weights, s_hv_sur, self.problem.M, cfg.rank_classes
                )
                chosen = greedy_pick(static, X_unit, q)

            if cfg.oracle_probe:
                self._probe(front, X_top, X_top[chosen])

            selected = self._evaluate_and_record(X_top[chosen], feats[chosen])
            mean_s = float(np.mean([o.s_used for o in pool_out]))
            self._log_row(
                iteration,
                refit,
                surrogate_epochs,
                acq_loss,
                mean_s,
                time.perf_counter() - started,
            )
            self.diagnostics.append(
                {
                    "iteration": iteration,
                    "temperature": classifier.T,
                    "classifier_loss": clf_fit.loss,
                    "n_inducing": surrogate.n_inducing,
                    "inducing_doubled": bool(report.inducing_doubled) if refit != "none" else False,
                    "elbo_initial": list(report.initial_elbo) if refit != "none" else [],
                    "elbo_final": list(report.final_elbo) if refit != "none" else [],
                    "feature_width": int(feats.shape[1]),
                    "selected": selected,
                }
            )
        return self._result()

    def _probe(self, front: np.ndarray, X_top: np.ndarray, X_chosen: np.ndarray) -> None:
        """Oracle and realized gains from true evaluations outside the budget."""
        assert self.hv_cfg is not None
        if self.problem.D > 10:
            return
        oracle = hv_contributions(front, evaluate_batch(self.problem, X_top), self.hv_cfg)
        realized = hv_contributions(front, evaluate_batch(self.problem, X_chosen), self.hv_cfg)
        self.oracle_pairs.append(
            (float(oracle.max(initial=0.0)), float(realized.max(initial=0.0)))
        )


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def run(problem: ProblemSpec, config: LoopConfig, seed: int) -> RunResult:
    return OptimizationLoop(problem, config, seed).run()


def run_random_baseline(problem: ProblemSpec, config: LoopConfig, seed: int) -> RunResult:
    return OptimizationLoop(problem, config, seed, mode="random").run()


def run_static_baseline(
    problem: ProblemSpec,
    config: LoopConfig,
    weights: Sequence[float],
    seed: int,
) -> RunResult:
    return OptimizationLoop(problem, config, seed, mode="static", static_weights=weights).run()


def run_ablation(
    problem: ProblemSpec,
    config: LoopConfig,
    disable: Iterable[str],
    seed: int,
) -> RunResult:
    return OptimizationLoop(problem, config, seed, mode="ablation", disabled=disable).run()


def run_mode(
    problem: ProblemSpec,
    config: LoopConfig,
    seed: int,
    mode: str,
    *,
    disable: Iterable[str] = (),
    weights: Sequence[float] | None = None,
) -> RunResult:
    """Dispatch on a configured mode name."""
    if mode == "neuropareto":
        return run(problem, config, seed)
    if mode == "random":
        return run_random_baseline(problem, config, seed)
    if mode == "static":
        return run_static_baseline(problem, config, weights or config.static_weights, seed)
    if mode == "ablation":
        return run_ablation(problem, config, disable, seed)
    raise DomainError(f"unknown run mode '{mode}'")
