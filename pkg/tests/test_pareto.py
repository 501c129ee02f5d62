"""Tests for dominance, sorting, crowding and the archive."""

from __future__ import annotations

import numpy as np
import pytest

from neuropareto.errors import DomainError, InternalError
from neuropareto.models import Sample
from neuropareto.pareto import (
    Archive,
    archive_diversity,
    cap_ranks,
    crowding_distance,
    dominates,
    front_diversity,
    nondominated_mask,
    nondominated_sort,
    rank_labels,
)


def brute_force_fronts(P: np.ndarray) -> np.ndarray:
    """Peel fronts by re-checking every remaining pair from scratch."""
    remaining = np.arange(P.shape[0])
    fronts = np.zeros(P.shape[0], dtype=int)
    level = 0
    while remaining.size:
        level += 1
        R = P[remaining]
        beaten = np.zeros(remaining.size, dtype=bool)
        for j in range(remaining.size):
            beaten |= np.all(R[j] <= R, axis=1) & np.any(R[j] < R, axis=1)
        fronts[remaining[~beaten]] = level
        remaining = remaining[beaten]
    return fronts


def random_point_set(rng: np.random.Generator, M: int, max_n: int = 200) -> np.ndarray:
    n = int(rng.integers(1, max_n + 1))
    P = rng.random((n, M))
    # Rounding half of the sets forces ties and duplicates.
    return np.round(P, 1) if rng.random() < 0.5 else P


class TestDominates:
    def test_strictly_better_somewhere(self) -> None:
        assert dominates((1, 2), (2, 2))

    def test_incomparable(self) -> None:
        assert not dominates((1, 2), (2, 1))
        assert not dominates((2, 1), (1, 2))

    def test_equal_points(self) -> None:
        assert not dominates((1, 1), (1, 1))

    def test_length_mismatch(self) -> None:
        with pytest.raises(DomainError):
            dominates((1, 2), (1, 2, 3))

    @pytest.mark.parametrize("M", [2, 3, 5])
    def test_strict_partial_order(self, M: int) -> None:
        rng = np.random.default_rng(M)
        for _ in range(2000):
            a, b, c = np.round(rng.random((3, M)), 1)
            assert not dominates(a, a)
            assert not (dominates(a, b) and dominates(b, a))
            if dominates(a, b) and dominates(b, c):
                assert dominates(a, c)


class TestNondominatedSort:
    def test_small_example(self) -> None:
        fronts = nondominated_sort([(1, 2), (2, 1), (2, 2), (3, 3)])
        assert fronts.tolist() == [1, 1, 2, 3]

    def test_single_point(self) -> None:
        assert nondominated_sort([(0.3, 0.7)]).tolist() == [1]

    def test_incomparable_points(self) -> None:
        t = np.linspace(0.0, 1.0, 7)
        assert set(nondominated_sort(np.column_stack([t, 1.0 - t]))) == {1}

    def test_empty_rejected(self) -> None:
        with pytest.raises(DomainError):
            nondominated_sort(np.empty((0, 2)))

    @pytest.mark.parametrize("M,sets", [(2, 200), (3, 200), (5, 100)])
    def test_matches_brute_force(self, M: int, sets: int) -> None:
        rng = np.random.default_rng(M)
        for _ in range(sets):
            P = random_point_set(rng, M)
            np.testing.assert_array_equal(nondominated_sort(P), brute_force_fronts(P))

    def test_mask_matches_first_front(self) -> None:
        rng = np.random.default_rng(3)
        for _ in range(20):
            P = np.round(rng.random((40, 3)), 1)
            np.testing.assert_array_equal(nondominated_mask(P), nondominated_sort(P) == 1)

    @pytest.mark.parametrize("M", [2, 3, 5])
    def test_mask_across_blocks(self, M: int) -> None:
        rng = np.random.default_rng(10 + M)
        P = np.vstack([rng.random((700, M)), np.round(rng.random((300, M)), 1)])
        np.testing.assert_array_equal(nondominated_mask(P), brute_force_fronts(P) == 1)

    def test_mask_large_front(self) -> None:
        t = np.linspace(0.0, 1.0, 3000)
        P = np.column_stack([t, 1.0 - t])
        mask = nondominated_mask(np.vstack([P, P + 0.1]))
        assert mask[:3000].all()
        assert not mask[3000:].any()


class TestRankLabels:
    def test_identity_below_k(self) -> None:
        labels = rank_labels([(1, 2), (2, 1), (2, 2), (3, 3)], 5)
        assert labels.tolist() == [1, 1, 2, 3]

    def test_capping(self) -> None:
        assert cap_ranks(np.arange(1, 10), 5).tolist() == [1, 2, 3, 4, 5, 5, 5, 5, 5]

    def test_chain_collapses(self) -> None:
        chain = [(i, i) for i in range(9)]
        assert rank_labels(chain, 5).tolist() == [1, 2, 3, 4, 5, 5, 5, 5, 5]

    def test_k_below_two_rejected(self) -> None:
        with pytest.raises(DomainError):
            rank_labels([(1, 1)], 1)


class TestCrowding:
    def test_middle_point(self) -> None:
        cd = crowding_distance([(0, 2), (1, 1), (2, 0)])
        assert cd.tolist() == pytest.approx([4.0, 2.0, 4.0])

    @pytest.mark.parametrize("n", [1, 2])
    def test_tiny_fronts_get_boundary_value(self, n: int) -> None:
        cd = crowding_distance([(0.0, 1.0), (1.0, 0.0)][:n])
        assert cd.tolist() == [4.0] * n

    def test_degenerate_objective_contributes_nothing(self) -> None:
        cd = crowding_distance([(0.0, 1.0), (0.5, 1.0), (1.0, 1.0)])
        assert cd.tolist() == pytest.approx([4.0, 1.0, 4.0])

    def test_outputs_finite(self) -> None:
        P = np.random.default_rng(0).random((30, 3))
        assert np.all(np.isfinite(crowding_distance(P)))

    def test_permutation_equivariant(self) -> None:
        rng = np.random.default_rng(4)
        for _ in range(20):
            P = rng.random((int(rng.integers(3, 40)), 3))
            perm = rng.permutation(P.shape[0])
            np.testing.assert_allclose(crowding_distance(P[perm]), crowding_distance(P)[perm])

    def test_front_diversity(self) -> None:
        assert front_diversity([(0, 2), (1, 1), (2, 0), (3, 3)]) == pytest.approx(10.0 / 3.0)


class TestArchive:
    def test_record_assigns_indices(self) -> None:
        archive = Archive()
        first = archive.record(np.zeros((2, 3)), [(1.0, 2.0), (2.0, 1.0)])
        second = archive.record(np.ones((1, 3)), [(3.0, 3.0)])
        assert [s.eval_index for s in first + second] == [0, 1, 2]
        assert archive.ranks.tolist() == [1, 1, 2]

    def test_dominated_insert_ranks_below(self) -> None:
        archive = Archive()
        archive.record(np.zeros((1, 2)), [(1.0, 1.0)])
        archive.record(np.zeros((1, 2)), [(2.0, 2.0)])
        assert archive.ranks.tolist() == [1, 2]

    def test_dominating_insert_becomes_sole_front(self) -> None:
        archive = Archive()
        archive.record(np.zeros((3, 2)), [(1.0, 2.0), (2.0, 1.0), (1.5, 1.5)])
        archive.record(np.zeros((1, 2)), [(0.0, 0.0)])
        assert archive.pareto_front().tolist() == [[0.0, 0.0]]

    def test_duplicate_index_rejected(self) -> None:
        archive = Archive()
        archive.record(np.zeros((1, 2)), [(1.0, 1.0)])
        clash = Sample(x=np.zeros(2), f=np.ones(2), eval_index=0)
        with pytest.raises(InternalError):
            archive.insert([clash])

    def test_prefix_and_records(self, archive_2d: Archive) -> None:
        snapshot = archive_2d.prefix(5)
        assert len(snapshot) == 5
        np.testing.assert_array_equal(snapshot.F, archive_2d.F[:5])
        restored = Archive.from_records(archive_2d.to_records())
        np.testing.assert_array_equal(restored.F, archive_2d.F)
        np.testing.assert_array_equal(restored.ranks, archive_2d.ranks)

    def test_diversity_single_point(self) -> None:
        archive = Archive()
        archive.record(np.zeros((1, 2)), [(0.5, 0.5)])
        assert archive_diversity(archive) == 4.0

    def test_diversity_deterministic(self, archive_2d: Archive) -> None:
        assert archive_diversity(archive_2d) == archive_diversity(archive_2d)

    def test_diversity_of_three_point_front(self) -> None:
        archive = Archive()
        archive.record(np.zeros((3, 2)), [(0.0, 2.0), (1.0, 1.0), (2.0, 0.0)])
        assert archive_diversity(archive) == pytest.approx(10.0 / 3.0)
