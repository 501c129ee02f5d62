"""Quality indicators, calibration metrics and the constants-estimation protocols."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from typing import Any

import numpy as np
from scipy.spatial.distance import cdist

from neuropareto.bench import evaluate_batch, latin_hypercube
from neuropareto.errors import DomainError, EstimationError
from neuropareto.models import CalibrationReport, HVConfig, ProblemSpec
from neuropareto.pareto import Archive, nondominated_mask

logger = logging.getLogger(__name__)

MC_CHUNK = 20_000


def _points(points: Any, M: int) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.size == 0:
        return np.empty((0, M))
    P = np.atleast_2d(P)
    if P.shape[1] != M:
        raise DomainError(
            f"points have {P.shape[1]} objectives but the reference point has {M}"
        )
    return P


# ---------------------------------------------------------------------------
# IGD
# ---------------------------------------------------------------------------


def igd(solutions: Any, reference: Any) -> float:
    """Mean distance from each reference point to its nearest solution."""
    S = np.atleast_2d(np.asarray(solutions, dtype=float))
    R = np.atleast_2d(np.asarray(reference, dtype=float))
    if S.size == 0 or R.size == 0:
        raise DomainError("igd needs nonempty solution and reference sets")
    if S.shape[1] != R.shape[1]:
        raise DomainError(
            f"solutions have {S.shape[1]} objectives, reference has {R.shape[1]}"
        )
    return float(np.mean(cdist(R, S).min(axis=1)))


# ---------------------------------------------------------------------------
# Hypervolume
# ---------------------------------------------------------------------------


def _hv_2d(P: np.ndarray, ref: np.ndarray) -> float:
    """Staircase scan: ascending f1, each f2 improvement adds one rectangle."""
    P = P[np.lexsort((P[:, 1], P[:, 0]))]
    best_before = np.concatenate([[ref[1]], np.minimum.accumulate(P[:, 1])[:-1]])
    heights = np.maximum(best_before - P[:, 1], 0.0)
    return float(np.sum((ref[0] - P[:, 0]) * heights))


def _hv_sweep(P: np.ndarray, ref: np.ndarray) -> float:
    if P.shape[1] == 2:
        return _hv_2d(P, ref)
    P = P[np.argsort(P[:, -1], kind="stable")]
    volume = 0.0
    for i in range(P.shape[0]):
        upper = P[i + 1, -1] if i + 1 < P.shape[0] else ref[-1]
        depth = upper - P[i, -1]
        if depth > 0.0:
            volume += depth * _hv_sweep(P[: i + 1, :-1], ref[:-1])
    return volume


def _hv_monte_carlo(
    P: np.ndarray,
    ref: np.ndarray,
    samples: int,
    seed: int,
    lower_point: np.ndarray | None = None,
) -> float:
    rng = np.random.default_rng(seed)
    lower = P.min(axis=0)
    if lower_point is not None:
        lower = np.minimum(lower, lower_point)
    box = float(np.prod(ref - lower))
    if box <= 0.0:
        return 0.0
    hits = 0
    remaining = samples
    while remaining > 0:
        m = min(MC_CHUNK, remaining)
        draws = rng.uniform(lower, ref, size=(m, P.shape[1]))
        covered = np.zeros(m, dtype=bool)
        for p in P:
            covered |= np.all(p <= draws, axis=1)
        hits += int(covered.sum())
        remaining -= m
    return box * hits / samples


def hypervolume(points: Any, cfg: HVConfig) -> float:
    """Dominated volume bounded by ``cfg.ref_point``.

    Exact dimension sweep for M <= 3, seeded Monte Carlo above that (or when
    ``cfg.method`` forces it).
    """
    ref = cfg.ref
    M = ref.shape[0]
    if M < 2:
        raise DomainError(f"hypervolume needs M >= 2, got {M}")
    P = _points(points, M)
    P = P[np.all(P < ref, axis=1)]
    if P.shape[0] == 0:
        return 0.0
    P = P[nondominated_mask(P)]

    method = _method(cfg)
    if method == "exact":
        return _hv_sweep(P, ref)
    lower = None if cfg.lower_point is None else np.asarray(cfg.lower_point, dtype=float)
    return _hv_monte_carlo(P, ref, cfg.mc_samples, cfg.mc_seed, lower)


def _method(cfg: HVConfig) -> str:
    if cfg.method == "auto":
        return "exact" if cfg.ref.shape[0] <= 3 else "monte_carlo"
    if cfg.method not in ("exact", "monte_carlo"):
        raise DomainError(f"unknown hypervolume method '{cfg.method}'")
    return cfg.method


def _box_contribution(front: np.ndarray, p: np.ndarray, ref: np.ndarray, cfg: HVConfig) -> float:
    """Seeded estimate of the volume in [p, ref] that ``front`` leaves uncovered."""
    box = float(np.prod(ref - p))
    if front.shape[0] == 0:
        return box
    samples = max(1_000, cfg.mc_samples // 100)
    draws = np.random.default_rng(cfg.mc_seed).uniform(p, ref, size=(samples, p.size))
    covered = np.zeros(samples, dtype=bool)
    for f in front:
        covered |= np.all(f <= draws, axis=1)
    return box * float(np.mean(~covered))


def delta_hv(archive_points: Any, new_point: Any, cfg: HVConfig) -> float:
    """HV gained by adding ``new_point``; never negative."""
    M = cfg.ref.shape[0]
    P = _points(archive_points, M)
    p = _points(new_point, M)
    if P.shape[0] == 0:
        return hypervolume(p, cfg)
    gain = hypervolume(np.vstack([P, p]), cfg) - hypervolume(P, cfg)
    return max(gain, 0.0)


hv_contribution = delta_hv


def hv_contributions(front: Any, candidates: Any, cfg: HVConfig) -> np.ndarray:
    """Contribution of each candidate taken alone against ``front``."""
    ref = cfg.ref
    M = ref.shape[0]
    F = _points(front, M)
    C = _points(candidates, M)
    gains = np.zeros(C.shape[0])
    if C.shape[0] == 0:
        return gains

    useful = np.all(C < ref, axis=1)
    if F.shape[0]:
        covered = np.any(np.all(F[None, :, :] <= C[:, None, :], axis=2), axis=1)
        useful &= ~covered
    if _method(cfg) == "monte_carlo":
        for i in np.flatnonzero(useful):
            gains[i] = _box_contribution(F, C[i], ref, cfg)
        return gains

    base = hypervolume(F, cfg) if F.shape[0] else 0.0
    for i in np.flatnonzero(useful):
        joined = np.vstack([F, C[i : i + 1]]) if F.shape[0] else C[i : i + 1]
        gains[i] = max(hypervolume(joined, cfg) - base, 0.0)
    return gains


def reference_point(solutions: Any, front: Any, margin: float = 1.1) -> np.ndarray:
    """Componentwise max of solutions and reference front, pushed outward."""
    joined = np.vstack(
        [np.atleast_2d(np.asarray(solutions, float)), np.atleast_2d(np.asarray(front, float))]
    )
    peak = joined.max(axis=0)
    # A non-positive peak cannot be scaled outward; shift it instead.
    return np.where(peak > 0.0, peak * margin, peak + (margin - 1.0))


# ---------------------------------------------------------------------------
# Calibration
# ---------------------------------------------------------------------------


def calibration_metrics(
    confidences: Any, correct: Any, bins: int = 15
) -> CalibrationReport:
    """ECE, MCE and ACE over equal-width confidence bins."""
    c = np.asarray(confidences, dtype=float).ravel()
    hit = np.asarray(correct, dtype=float).ravel()
    if c.size == 0:
        raise DomainError("calibration_metrics needs at least one prediction")
    if c.shape != hit.shape:
        raise DomainError("confidences and correctness flags differ in length")
    if bins < 1:
        raise DomainError(f"bins must be >= 1, got {bins}")
    if np.any(c < 0.0) or np.any(c > 1.0):
        raise DomainError("confidences must lie in [0, 1]")

    index = np.clip(np.ceil(c * bins).astype(int) - 1, 0, bins - 1)
    rows: list[dict[str, float]] = []
    gaps: list[float] = []
    ece = 0.0
    for b in range(bins):
        in_bin = index == b
        count = int(in_bin.sum())
        confidence = float(c[in_bin].mean()) if count else 0.0
        accuracy = float(hit[in_bin].mean()) if count else 0.0
        rows.append(
            {
                "bin": float(b),
                "center": (b + 0.5) / bins,
                "confidence": confidence,
                "accuracy": accuracy,
                "count": float(count),
            }
        )
        if count:
            gap = abs(accuracy - confidence)
            gaps.append(gap)
            ece += count / c.size * gap
    return CalibrationReport(
        ece=ece, mce=max(gaps), ace=float(np.mean(gaps)), bins=rows
    )


# ---------------------------------------------------------------------------
# Constants protocols
# ---------------------------------------------------------------------------


def lipschitz_quantile(ratios: Any, q: float = 0.95) -> float:
    r = np.asarray(ratios, dtype=float)
    if r.size == 0:
        raise EstimationError("no usable HV sensitivity ratios")
    return float(np.quantile(r, q))


def estimate_L_H(
    problem: ProblemSpec,
    archive: Archive,
    N: int,
    delta: float,
    cfg: HVConfig,
    rng: np.random.Generator,
    quantile: float = 0.95,
) -> float:
    """Conservative HV sensitivity: a high quantile of |dHV| / |dy|_1."""
    if N < 10:
        raise DomainError(f"estimate_L_H needs N >= 10, got {N}")
    if delta <= 0.0:
        raise DomainError(f"perturbation delta must be positive, got {delta}")

    X = latin_hypercube(N, problem.D, (problem.lower_bounds, problem.upper_bounds), rng)
    Y = evaluate_batch(problem, X)
    Y_shift = Y * (1.0 + delta)
    norms = np.sum(np.abs(Y - Y_shift), axis=1)
    usable = np.isfinite(norms) & (norms > 0.0)
    skipped = int((~usable).sum())
    if skipped:
        logger.debug("L_H protocol skipped %d zero-norm perturbations", skipped)
    if not usable.any():
        raise EstimationError("every L_H perturbation had zero norm")

    front = archive.pareto_front()
    base = hv_contributions(front, Y[usable], cfg)
    moved = hv_contributions(front, Y_shift[usable], cfg)
    return lipschitz_quantile(np.abs(base - moved) / norms[usable], quantile)


def estimate_H_max(
    archive_scenarios: Sequence[Any],
    trials: int,
    cfg: HVConfig,
    rng: np.random.Generator,
) -> float:
    """Largest HV loss from swapping one front member for the worst candidate."""
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    M = cfg.ref.shape[0]
    fronts = []
    for scenario in archive_scenarios:
        P = _points(scenario, M)
        if P.shape[0]:
            fronts.append(P[nondominated_mask(P)])
    if not fronts:
        return 0.0

    worst_case = cfg.ref[None, :]
    largest = 0.0
    for _ in range(trials):
        front = fronts[int(rng.integers(len(fronts)))]
        member = int(rng.integers(front.shape[0]))
        replaced = np.vstack([np.delete(front, member, axis=0), worst_case])
        loss = hypervolume(front, cfg) - hypervolume(replaced, cfg)
        largest = max(largest, loss)
    return largest


def estimate_rho(oracle_gains: Sequence[float], realized_gains: Sequence[float]) -> float:
    """Median of realized / oracle gain over iterations with positive oracle gain."""
    oracle = np.asarray(oracle_gains, dtype=float)
    realized = np.asarray(realized_gains, dtype=float)
    if oracle.size == 0 or oracle.shape != realized.shape:
        raise DomainError("oracle and realized gains must be equal-length and nonempty")
    usable = oracle > 0.0
    if not usable.any():
        raise EstimationError("no iteration had a positive oracle gain")
    return float(np.median(realized[usable] / oracle[usable]))


def suggest_K(budget: int, n_min: int) -> int:
    """Upper bound on the rank count so each class can hold ``n_min`` samples."""
    if not budget >= n_min >= 1:
        raise DomainError(
            f"suggest_K needs budget >= N_min >= 1, got B={budget}, N_min={n_min}"
        )
    return budget // n_min
