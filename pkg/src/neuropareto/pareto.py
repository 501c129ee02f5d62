"""Pareto dominance, nondominated sorting, crowding distance and the archive."""

from __future__ import annotations

import logging
from collections.abc import Iterable, Sequence
from typing import Any

import numpy as np

from neuropareto.errors import DomainError, InternalError
from neuropareto.models import Sample

logger = logging.getLogger(__name__)

MASK_BLOCK = 256


def _as_points(points: Any) -> np.ndarray:
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[None, :]
    if P.ndim != 2:
        raise DomainError(f"expected a 2-D point array, got shape {P.shape}")
    return P


# ---------------------------------------------------------------------------
# Dominance and sorting
# ---------------------------------------------------------------------------


def dominates(a: Any, b: Any) -> bool:
    """True iff ``a`` is no worse than ``b`` everywhere and better somewhere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DomainError(
            f"objective vectors differ in length: {a.shape[-1]} vs {b.shape[-1]}"
        )
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(points: Any) -> np.ndarray:
    """Boolean matrix whose entry (i, j) says point i dominates point j."""
    P = _as_points(points)
    no_worse = np.all(P[:, None, :] <= P[None, :, :], axis=2)
    better = np.any(P[:, None, :] < P[None, :, :], axis=2)
    return no_worse & better


def nondominated_sort(points: Any) -> np.ndarray:
    """Assign every point its 1-based front index by repeated peeling."""
    P = _as_points(points)
    n = P.shape[0]
    if n == 0:
        raise DomainError("nondominated_sort needs at least one point")

    dom = dominance_matrix(P)
    dominator_count = dom.sum(axis=0)
    fronts = np.zeros(n, dtype=int)
    assigned = np.zeros(n, dtype=bool)
    level = 0
    while not assigned.all():
        level += 1
        current = ~assigned & (dominator_count == 0)
        fronts[current] = level
        assigned |= current
        dominator_count = dominator_count - dom[current].sum(axis=0)
    return fronts


def nondominated_mask(points: Any) -> np.ndarray:
    """Mask of the first front, for point sets too large for the full matrix.

    Points are visited in lexicographic order in blocks, so any dominator of
    a point sits in an earlier block or in its own block. Each block is
    checked against the kept front and against itself.
    """
    P = _as_points(points)
    n, M = P.shape
    order = np.lexsort(P.T[::-1])
    mask = np.zeros(n, dtype=bool)
    front = np.empty((0, M))
    for start in range(0, n, MASK_BLOCK):
        idx = order[start : start + MASK_BLOCK]
        block = P[idx]
        beaten = dominance_matrix(block).any(axis=0)
        if front.shape[0]:
            no_worse = np.all(front[None, :, :] <= block[:, None, :], axis=2)
            better = np.any(front[None, :, :] < block[:, None, :], axis=2)
            beaten |= np.any(no_worse & better, axis=1)
        kept = idx[~beaten]
        mask[kept] = True
        front = np.vstack([front, P[kept]])
    return mask


def cap_ranks(fronts: Any, K: int) -> np.ndarray:
    """Collapse fronts deeper than ``K`` into the worst label ``K``."""
    if K < 2:
        raise DomainError(f"rank count K must be at least 2, got {K}")
    return np.minimum(np.asarray(fronts, dtype=int), K)


def rank_labels(points: Any, K: int) -> np.ndarray:
    """Rank labels in 1..K: 1 is nondominated, K the worst bucket."""
    if K < 2:
        raise DomainError(f"rank count K must be at least 2, got {K}")
    return cap_ranks(nondominated_sort(points), K)


# ---------------------------------------------------------------------------
# Diversity
# ---------------------------------------------------------------------------


def crowding_distance(front: Any) -> np.ndarray:
    """Per-point crowding distance with boundary points pinned to 2M.

    Objectives whose span is zero contribute nothing and mark no boundary.
    Sorting ties fall back to the other objectives, then to input order.
    """
    P = _as_points(front)
    n, M = P.shape
    boundary_value = 2.0 * M
    if n <= 2:
        return np.full(n, boundary_value)

    distance = np.zeros(n)
    on_boundary = np.zeros(n, dtype=bool)
    index = np.arange(n)
    for m in range(M):
        others = [j for j in range(M) if j != m]
        keys = [index] + [P[:, j] for j in reversed(others)] + [P[:, m]]
        order = np.lexsort(keys)
        span = P[order[-1], m] - P[order[0], m]
        if span <= 0.0:
            continue
        on_boundary[order[0]] = True
        on_boundary[order[-1]] = True
        distance[order[1:-1]] += (P[order[2:], m] - P[order[:-2], m]) / span
    distance[on_boundary] = boundary_value
    return distance


def front_diversity(points: Any) -> float:
    """Mean crowding distance over the nondominated subset of ``points``."""
    P = _as_points(points)
    if P.shape[0] == 0:
        raise DomainError("diversity of an empty set is undefined")
    return float(np.mean(crowding_distance(P[nondominated_mask(P)])))


def archive_diversity(archive: Archive) -> float:
    """Mean crowding distance over the archive's rank-1 subset."""
    if len(archive) == 0:
        raise DomainError("archive_diversity needs a nonempty archive")
    return float(np.mean(crowding_distance(archive.pareto_front())))


# ---------------------------------------------------------------------------
# Archive
# ---------------------------------------------------------------------------


class Archive:
    """Ordered store of true evaluations with cached nondomination ranks."""

    def __init__(self, samples: Iterable[Sample] = ()) -> None:
        self._samples: list[Sample] = []
        self._X = np.empty((0, 0))
        self._F = np.empty((0, 0))
        self._ranks = np.zeros(0, dtype=int)
        initial = list(samples)
        if initial:
            self.insert(initial)

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def samples(self) -> tuple[Sample, ...]:
        return tuple(self._samples)

    @property
    def X(self) -> np.ndarray:
        return self._X.copy()

    @property
    def F(self) -> np.ndarray:
        return self._F.copy()

    @property
    def ranks(self) -> np.ndarray:
        return self._ranks.copy()

    @property
    def next_index(self) -> int:
        if not self._samples:
            return 0
        return max(s.eval_index for s in self._samples) + 1

    def insert(self, samples: Sequence[Sample]) -> Archive:
        """Append evaluated samples and re-sort the whole archive."""
        if not samples:
            return self
        seen = {s.eval_index for s in self._samples}
        for sample in samples:
            if sample.eval_index in seen:
                raise InternalError(
                    f"duplicate eval_index {sample.eval_index} in archive"
                )
            seen.add(sample.eval_index)

        X_new = np.vstack([np.asarray(s.x, dtype=float) for s in samples])
        F_new = np.vstack([np.asarray(s.f, dtype=float) for s in samples])
        if self._samples:
            if X_new.shape[1] != self._X.shape[1] or F_new.shape[1] != self._F.shape[1]:
                raise InternalError("sample dimensions do not match the archive")
            self._X = np.vstack([self._X, X_new])
            self._F = np.vstack([self._F, F_new])
        else:
            self._X = X_new
            self._F = F_new
        self._samples.extend(samples)
        self._ranks = nondominated_sort(self._F)
        return self

    def record(self, X: Any, F: Any) -> list[Sample]:
        """Wrap fresh evaluations as samples with new indices and insert them."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        F = np.atleast_2d(np.asarray(F, dtype=float))
        start = self.next_index
        fresh = [
            Sample(x=X[i].copy(), f=F[i].copy(), eval_index=start + i)
            for i in range(X.shape[0])
        ]
        self.insert(fresh)
        return fresh

    def pareto_mask(self) -> np.ndarray:
        return self._ranks == 1

    def pareto_front(self) -> np.ndarray:
        return self._F[self.pareto_mask()]

    def pareto_set(self) -> np.ndarray:
        return self._X[self.pareto_mask()]

    def prefix(self, eval_index: int) -> Archive:
        """Snapshot holding only samples evaluated before ``eval_index``."""
        return Archive(s for s in self._samples if s.eval_index < eval_index)

    def to_records(self) -> list[dict[str, Any]]:
        return [
            {
                "x": s.x.tolist(),
                "f": s.f.tolist(),
                "eval_index": s.eval_index,
                "rank": int(rank),
            }
            for s, rank in zip(self._samples, self._ranks)
        ]

    @classmethod
    def from_records(cls, records: Iterable[dict[str, Any]]) -> Archive:
        return cls(
            Sample(
                x=np.asarray(r["x"], dtype=float),
                f=np.asarray(r["f"], dtype=float),
                eval_index=int(r["eval_index"]),
            )
            for r in records
        )
