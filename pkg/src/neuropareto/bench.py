"""DTLZ and ZDT benchmark problems, reference fronts and initial designs.

Formulas follow the canonical suite definitions; docs/benchmarks.md lists
them in full.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Callable
from enum import Enum
from typing import Any

import numpy as np
from scipy.stats import qmc

from neuropareto.errors import ConfigError, DomainError
from neuropareto.models import ProblemSpec
from neuropareto.pareto import nondominated_mask

logger = logging.getLogger(__name__)


class ProblemName(str, Enum):
    DTLZ1 = "dtlz1"
    DTLZ2 = "dtlz2"
    DTLZ3 = "dtlz3"
    DTLZ4 = "dtlz4"
    DTLZ5 = "dtlz5"
    DTLZ6 = "dtlz6"
    DTLZ7 = "dtlz7"
    ZDT1 = "zdt1"
    ZDT2 = "zdt2"
    ZDT3 = "zdt3"
    ZDT4 = "zdt4"
    ZDT6 = "zdt6"

    @property
    def is_zdt(self) -> bool:
        return self.value.startswith("zdt")


DTLZ_OBJECTIVES = (2, 3, 5)


def default_front_size(M: int) -> int:
    return {2: 1000, 3: 5000}.get(M, 10000)


def _problem_name(name: str | ProblemName) -> ProblemName:
    try:
        return ProblemName(str(getattr(name, "value", name)).lower())
    except ValueError:
        valid = ", ".join(p.value for p in ProblemName)
        raise ConfigError(f"unknown problem '{name}'; expected one of: {valid}") from None


def make_problem(name: str | ProblemName, D: int, M: int) -> ProblemSpec:
    """Build a validated problem spec with the suite's standard bounds."""
    key = _problem_name(name)
    if key.is_zdt:
        if M != 2:
            raise ConfigError(f"{key.value} is bi-objective: M must be 2, got M={M}")
        if D < 2:
            raise ConfigError(f"{key.value} needs D >= 2, got D={D}")
    else:
        if M not in DTLZ_OBJECTIVES:
            raise ConfigError(
                f"{key.value} supports M in {DTLZ_OBJECTIVES}, got M={M}"
            )
        if D < M + 1:
            raise ConfigError(f"{key.value} needs D >= M + 1 = {M + 1}, got D={D}")

    lower = [0.0] * D
    upper = [1.0] * D
    if key is ProblemName.ZDT4:
        lower[1:] = [-5.0] * (D - 1)
        upper[1:] = [5.0] * (D - 1)
    return ProblemSpec(
        name=key.value, D=D, M=M, lower=tuple(lower), upper=tuple(upper)
    )


# ---------------------------------------------------------------------------
# Objective functions (vectorized over rows)
# ---------------------------------------------------------------------------


def _multimodal_g(xm: np.ndarray) -> np.ndarray:
    k = xm.shape[1]
    return 100.0 * (
        k + np.sum((xm - 0.5) ** 2 - np.cos(20.0 * np.pi * (xm - 0.5)), axis=1)
    )


def _sphere_g(xm: np.ndarray) -> np.ndarray:
    return np.sum((xm - 0.5) ** 2, axis=1)


def _spherical(theta: np.ndarray, radius: np.ndarray) -> np.ndarray:
    """Map M-1 angles per row onto a sphere octant of the given radius."""
    M = theta.shape[1] + 1
    F = np.repeat(radius[:, None], M, axis=1)
    for i in range(M):
        F[:, i] *= np.prod(np.cos(theta[:, : M - 1 - i]), axis=1)
        if i > 0:
            F[:, i] *= np.sin(theta[:, M - 1 - i])
    return F


def _linear(position: np.ndarray, radius: np.ndarray) -> np.ndarray:
    M = position.shape[1] + 1
    F = np.repeat(radius[:, None], M, axis=1)
    for i in range(M):
        F[:, i] *= np.prod(position[:, : M - 1 - i], axis=1)
        if i > 0:
            F[:, i] *= 1.0 - position[:, M - 1 - i]
    return F


def _dtlz1(X: np.ndarray, M: int) -> np.ndarray:
    g = _multimodal_g(X[:, M - 1 :])
    return _linear(X[:, : M - 1], 0.5 * (1.0 + g))


def _dtlz2(X: np.ndarray, M: int) -> np.ndarray:
    g = _sphere_g(X[:, M - 1 :])
    return _spherical(X[:, : M - 1] * np.pi / 2.0, 1.0 + g)


def _dtlz3(X: np.ndarray, M: int) -> np.ndarray:
    g = _multimodal_g(X[:, M - 1 :])
    return _spherical(X[:, : M - 1] * np.pi / 2.0, 1.0 + g)


def _dtlz4(X: np.ndarray, M: int) -> np.ndarray:
    g = _sphere_g(X[:, M - 1 :])
    return _spherical(X[:, : M - 1] ** 100 * np.pi / 2.0, 1.0 + g)


def _degenerate_angles(position: np.ndarray, g: np.ndarray) -> np.ndarray:
    theta = np.empty_like(position)
    theta[:, 0] = position[:, 0] * np.pi / 2.0
    theta[:, 1:] = (
        np.pi / (4.0 * (1.0 + g[:, None])) * (1.0 + 2.0 * g[:, None] * position[:, 1:])
    )
    return theta


def _dtlz5(X: np.ndarray, M: int) -> np.ndarray:
    g = _sphere_g(X[:, M - 1 :])
    return _spherical(_degenerate_angles(X[:, : M - 1], g), 1.0 + g)


def _dtlz6(X: np.ndarray, M: int) -> np.ndarray:
    g = np.sum(X[:, M - 1 :] ** 0.1, axis=1)
    return _spherical(_degenerate_angles(X[:, : M - 1], g), 1.0 + g)


def _dtlz7(X: np.ndarray, M: int) -> np.ndarray:
    xm = X[:, M - 1 :]
    g = 1.0 + 9.0 / xm.shape[1] * np.sum(xm, axis=1)
    head = X[:, : M - 1]
    h = M - np.sum(head / (1.0 + g[:, None]) * (1.0 + np.sin(3.0 * np.pi * head)), axis=1)
    return np.column_stack([head, (1.0 + g) * h])


def _zdt_g(tail: np.ndarray) -> np.ndarray:
    return 1.0 + 9.0 * np.sum(tail, axis=1) / tail.shape[1]


def _zdt1(X: np.ndarray, M: int) -> np.ndarray:
    f1 = X[:, 0]
    g = _zdt_g(X[:, 1:])
    return np.column_stack([f1, g * (1.0 - np.sqrt(f1 / g))])


def _zdt2(X: np.ndarray, M: int) -> np.ndarray:
    f1 = X[:, 0]
    g = _zdt_g(X[:, 1:])
    return np.column_stack([f1, g * (1.0 - (f1 / g) ** 2)])


def _zdt3(X: np.ndarray, M: int) -> np.ndarray:
    f1 = X[:, 0]
    g = _zdt_g(X[:, 1:])
    ratio = f1 / g
    return np.column_stack(
        [f1, g * (1.0 - np.sqrt(ratio) - ratio * np.sin(10.0 * np.pi * f1))]
    )


def _zdt4(X: np.ndarray, M: int) -> np.ndarray:
    f1 = X[:, 0]
    tail = X[:, 1:]
    g = 1.0 + 10.0 * tail.shape[1] + np.sum(
        tail**2 - 10.0 * np.cos(4.0 * np.pi * tail), axis=1
    )
    return np.column_stack([f1, g * (1.0 - np.sqrt(f1 / g))])


def _zdt6_f1(x1: np.ndarray) -> np.ndarray:
    return 1.0 - np.exp(-4.0 * x1) * np.sin(6.0 * np.pi * x1) ** 6


def _zdt6(X: np.ndarray, M: int) -> np.ndarray:
    f1 = _zdt6_f1(X[:, 0])
    g = 1.0 + 9.0 * (np.sum(X[:, 1:], axis=1) / (X.shape[1] - 1)) ** 0.25
    return np.column_stack([f1, g * (1.0 - (f1 / g) ** 2)])


PROBLEMS: dict[ProblemName, Callable[[np.ndarray, int], np.ndarray]] = {
    ProblemName.DTLZ1: _dtlz1,
    ProblemName.DTLZ2: _dtlz2,
    ProblemName.DTLZ3: _dtlz3,
    ProblemName.DTLZ4: _dtlz4,
    ProblemName.DTLZ5: _dtlz5,
    ProblemName.DTLZ6: _dtlz6,
    ProblemName.DTLZ7: _dtlz7,
    ProblemName.ZDT1: _zdt1,
    ProblemName.ZDT2: _zdt2,
    ProblemName.ZDT3: _zdt3,
    ProblemName.ZDT4: _zdt4,
    ProblemName.ZDT6: _zdt6,
}


def _check_decisions(problem: ProblemSpec, X: np.ndarray) -> None:
    if X.ndim != 2 or X.shape[1] != problem.D:
        raise DomainError(
            f"{problem.name} expects decision vectors of length {problem.D}, "
            f"got shape {X.shape}"
        )
    if not np.all(np.isfinite(X)):
        raise DomainError("decision vector contains non-finite values")
    if np.any(X < problem.lower_bounds) or np.any(X > problem.upper_bounds):
        raise DomainError(f"decision vector outside the bounds of {problem.name}")


def evaluate_batch(problem: ProblemSpec, X: Any) -> np.ndarray:
    """Evaluate rows of ``X``; output order matches input order."""
    X = np.asarray(X, dtype=float)
    _check_decisions(problem, X)
    return PROBLEMS[ProblemName(problem.name)](X, problem.M)


def evaluate(problem: ProblemSpec, x: Any) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise DomainError(f"evaluate takes a single vector, got shape {x.shape}")
    return evaluate_batch(problem, x[None, :])[0]


# ---------------------------------------------------------------------------
# Reference fronts
# ---------------------------------------------------------------------------


def optimal_decisions(problem: ProblemSpec, n: int) -> np.ndarray:
    """Grid of at least ``n`` Pareto-optimal decision vectors."""
    key = ProblemName(problem.name)
    n_position = 1 if key.is_zdt else problem.M - 1
    side = math.ceil(n ** (1.0 / n_position) - 1e-9)
    side = max(side, 2)
    axes = np.meshgrid(*([np.linspace(0.0, 1.0, side)] * n_position), indexing="ij")
    position = np.column_stack([a.ravel() for a in axes])

    tail_value = 0.5
    if key.is_zdt or key in (ProblemName.DTLZ6, ProblemName.DTLZ7):
        tail_value = 0.0
    tail = np.full((position.shape[0], problem.D - n_position), tail_value)
    return np.hstack([position, tail])


def _simplex_points(n: int, M: int) -> np.ndarray:
    """Deterministic points on the unit simplex via sorted Halton spacings."""
    u = qmc.Halton(d=M - 1, scramble=False).random(n)
    u = np.sort(u, axis=1)
    padded = np.hstack([np.zeros((n, 1)), u, np.ones((n, 1))])
    return np.diff(padded, axis=1)


def _filtered_front(problem: ProblemSpec, n_points: int) -> np.ndarray:
    density = 20 if problem.M == 2 else 4
    F = evaluate_batch(problem, optimal_decisions(problem, density * n_points))
    front = F[nondominated_mask(F)]
    front = front[np.lexsort(front.T[::-1])]
    if front.shape[0] < n_points:
        logger.warning(
            "%s front filter kept %d of %d requested points",
            problem.name,
            front.shape[0],
            n_points,
        )
        return front
    keep = np.round(np.linspace(0, front.shape[0] - 1, n_points)).astype(int)
    return front[keep]


def reference_front(problem: ProblemSpec, n_points: int | None = None) -> np.ndarray:
    """Deterministic sample of the analytic Pareto front, shape (n, M)."""
    n = default_front_size(problem.M) if n_points is None else n_points
    if n < problem.M:
        raise DomainError(f"reference_front needs n_points >= M={problem.M}, got {n}")

    key = ProblemName(problem.name)
    t = np.linspace(0.0, 1.0, n)

    if key is ProblemName.DTLZ1:
        if problem.M == 2:
            return np.column_stack([0.5 * t, 0.5 * (1.0 - t)])
        return 0.5 * _simplex_points(n, problem.M)

    if key in (ProblemName.DTLZ2, ProblemName.DTLZ3, ProblemName.DTLZ4):
        if problem.M == 2:
            theta = t * np.pi / 2.0
            return np.column_stack([np.cos(theta), np.sin(theta)])
        return np.sqrt(_simplex_points(n, problem.M))

    if key in (ProblemName.DTLZ5, ProblemName.DTLZ6):
        X = optimal_decisions(problem, 2)[:1].repeat(n, axis=0)
        X[:, 0] = t
        X[:, 1 : problem.M - 1] = 0.5
        return evaluate_batch(problem, X)

    if key in (ProblemName.DTLZ7, ProblemName.ZDT3):
        return _filtered_front(problem, n)

    if key in (ProblemName.ZDT1, ProblemName.ZDT4):
        return np.column_stack([t, 1.0 - np.sqrt(t)])
    if key is ProblemName.ZDT2:
        return np.column_stack([t, 1.0 - t**2])

    # ZDT6: f1 covers [min f1, 1] on the optimal manifold.
    f1_min = float(np.min(_zdt6_f1(np.linspace(0.0, 1.0, 200_001))))
    f1 = np.linspace(f1_min, 1.0, n)
    return np.column_stack([f1, 1.0 - f1**2])


# ---------------------------------------------------------------------------
# Initial designs
# ---------------------------------------------------------------------------


def latin_hypercube(
    n: int,
    D: int,
    bounds: tuple[Any, Any],
    seed: int | np.random.Generator | None,
) -> np.ndarray:
    """Latin hypercube design of ``n`` points scaled to ``bounds``."""
    if n < 1:
        raise DomainError(f"latin_hypercube needs n >= 1, got {n}")
    lower = np.broadcast_to(np.asarray(bounds[0], dtype=float), (D,))
    upper = np.broadcast_to(np.asarray(bounds[1], dtype=float), (D,))
    sampler = qmc.LatinHypercube(d=D, rng=np.random.default_rng(seed))
    return np.asarray(qmc.scale(sampler.random(n), lower, upper))
