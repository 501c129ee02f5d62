"""Tests for candidate generation, selection and the optimization loop."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
import pytest

from neuropareto.bench import make_problem
from neuropareto.deepgp import fit_surrogate, init_surrogate
from neuropareto.errors import DomainError
from neuropareto.loop import (
    OptimizationLoop,
    composite_score,
    composite_select,
    generate_candidates,
    greedy_pick,
    mutation_index,
    run,
    run_ablation,
    run_mode,
    run_random_baseline,
    run_static_baseline,
    screen,
    stratum_crowding,
    tournament,
    zscore,
)
from neuropareto.models import (
    ABLATION_STATIC_WEIGHTS,
    ClassifierOutput,
    HVConfig,
    LoopConfig,
    ProblemSpec,
    RunResult,
    SelectionWeights,
    SurrogateSettings,
)
from neuropareto.pareto import Archive
from neuropareto.quality import delta_hv


def outputs_for(n: int, K: int = 3, rank: int = 1, u_ep: float = 0.0) -> list[ClassifierOutput]:
    p = np.full(K, 0.1 / (K - 1))
    p[rank - 1] = 0.9
    return [ClassifierOutput(p_bar=p.copy(), u_ep=u_ep, s_used=4) for _ in range(n)]


def without_seconds(result: RunResult) -> list[tuple[object, ...]]:
    return [row.as_tuple()[:-1] for row in result.rows]


class TestCandidates:
    @pytest.mark.parametrize("rank,expected", [(1.0, 25.0), (5.0, 5.0), (3.0, 15.0)])
    def test_mutation_index(self, rank: float, expected: float) -> None:
        assert mutation_index(rank, 5) == pytest.approx(expected)

    def test_tournament_prefers_lower_rank(self) -> None:
        rng = np.random.default_rng(0)
        picks = tournament(np.array([1.0, 3.0]), np.array([0.0, 10.0]), 3, 4000, rng)
        # Entrant weights are 4:1, so rank 1 loses only when both entrants are rank 3.
        assert np.mean(picks == 0) == pytest.approx(1.0 - 0.2**2, abs=0.02)

    def test_tournament_breaks_ties_by_crowding(self) -> None:
        rng = np.random.default_rng(1)
        picks = tournament(np.array([2.0, 2.0]), np.array([1.0, 5.0]), 3, 4000, rng)
        assert np.mean(picks == 1) == pytest.approx(0.75, abs=0.03)

    def test_stratum_crowding(self) -> None:
        archive = Archive()
        archive.record(np.zeros((4, 2)), [(0.0, 2.0), (1.0, 1.0), (2.0, 0.0), (3.0, 3.0)])
        assert stratum_crowding(archive).tolist() == pytest.approx([4.0, 2.0, 4.0, 4.0])

    @pytest.mark.parametrize("name,D", [("dtlz2", 4), ("zdt4", 5)])
    def test_pool_in_bounds(self, name: str, D: int) -> None:
        problem = make_problem(name, D, 2)
        rng = np.random.default_rng(0)
        archive = Archive()
        X = rng.uniform(problem.lower_bounds, problem.upper_bounds, size=(10, D))
        archive.record(X, rng.random((10, 2)))
        pool = generate_candidates(problem, archive, outputs_for(10), 7, 3, rng)
        assert pool.shape == (7, D)
        assert np.all(pool >= problem.lower_bounds) and np.all(pool <= problem.upper_bounds)

    def test_needs_two_parents(self, dtlz2: ProblemSpec) -> None:
        archive = Archive()
        archive.record(np.zeros((1, 4)), [(0.5, 0.5)])
        with pytest.raises(DomainError):
            generate_candidates(dtlz2, archive, outputs_for(1), 4, 3, np.random.default_rng(0))

    def test_output_count_checked(self, dtlz2: ProblemSpec, archive_2d: Archive) -> None:
        with pytest.raises(DomainError):
            generate_candidates(
                dtlz2, archive_2d, outputs_for(3), 4, 3, np.random.default_rng(0)
            )


class TestScreen:
    @pytest.fixture
    def fitted(
        self, dtlz2: ProblemSpec, archive_2d: Archive, small_surrogate: SurrogateSettings
    ) -> object:
        rng = np.random.default_rng(0)
        model = init_surrogate(dtlz2, archive_2d, rng, small_surrogate)
        fit_surrogate(model, archive_2d, "warm", rng)
        return model

    def test_full_screen_keeps_everyone(self, fitted: object, archive_2d: Archive) -> None:
        pool = np.random.default_rng(1).random((12, 4))
        cfg = HVConfig(ref_point=(2.0, 2.0))
        order, scores = screen(
            pool, outputs_for(12), fitted, 12, archive_2d.pareto_front(), cfg
        )
        assert sorted(order.tolist()) == list(range(12))
        assert np.all(np.diff(scores) <= 0.0)

    def test_duplicates_score_alike(self, fitted: object, archive_2d: Archive) -> None:
        pool = np.random.default_rng(2).random((6, 4))
        pool[4] = pool[1]
        cfg = HVConfig(ref_point=(2.0, 2.0))
        order, scores = screen(pool, outputs_for(6), fitted, 6, archive_2d.pareto_front(), cfg)
        by_index = dict(zip(order.tolist(), scores.tolist()))
        assert by_index[1] == by_index[4]

    def test_small_pool_warns(
        self, fitted: object, archive_2d: Archive, caplog: pytest.LogCaptureFixture
    ) -> None:
        pool = np.random.default_rng(3).random((3, 4))
        cfg = HVConfig(ref_point=(2.0, 2.0))
        with caplog.at_level(logging.WARNING, logger="neuropareto.loop"):
            order, _ = screen(pool, outputs_for(3), fitted, 10, archive_2d.pareto_front(), cfg)
        assert order.size == 3
        assert "smaller than" in caplog.text


class TestSelection:
    def test_zscore_constant(self) -> None:
        np.testing.assert_array_equal(zscore([2.0, 2.0, 2.0]), np.zeros(3))

    def test_composite_invariant_to_affine_rescaling(self) -> None:
        rng = np.random.default_rng(0)
        a, b, c, d = (rng.random(8) for _ in range(4))
        weights = SelectionWeights()
        base = composite_score(a, b, c, d, weights)
        moved = composite_score(3.0 * a + 1.0, 0.5 * b - 2.0, 10.0 * c, d + 4.0, weights)
        np.testing.assert_allclose(base, moved, atol=1e-12)

    def test_greedy_skips_duplicates(self) -> None:
        X = np.array([[0.1, 0.1], [0.1, 0.1], [0.5, 0.5], [0.9, 0.9]])
        assert greedy_pick([4.0, 3.0, 2.0, 1.0], X, 3) == [0, 2, 3]

    def test_greedy_short_batch_warns(self, caplog: pytest.LogCaptureFixture) -> None:
        X = np.zeros((3, 2))
        with caplog.at_level(logging.WARNING, logger="neuropareto.loop"):
            assert greedy_pick([1.0, 2.0, 3.0], X, 2) == [2]
        assert "distinct" in caplog.text

    def test_composite_select_order(self) -> None:
        X = np.random.default_rng(1).random((5, 3))
        s_hv = np.array([0.0, 5.0, 1.0, 3.0, 2.0])
        zeros = np.zeros(5)
        assert composite_select(X, s_hv, zeros, zeros, zeros, 2, SelectionWeights()) == [1, 3]


class TestLoop:
    @pytest.mark.parametrize("mode", ["neuropareto", "random", "static", "ablation"])
    def test_budget_is_exact(self, dtlz2: ProblemSpec, small_loop: LoopConfig, mode: str) -> None:
        config = replace(small_loop, budget=23)
        result = run_mode(dtlz2, config, 0, mode, disable=("screening",))
        assert len(result.archive) == 23
        assert result.rows[-1].evals == 23
        assert [r.iteration for r in result.rows] == list(range(len(result.rows)))

    def test_hypervolume_never_decreases(
        self, dtlz2: ProblemSpec, small_loop: LoopConfig
    ) -> None:
        result = run(dtlz2, small_loop, 1)
        hv = [row.hv for row in result.rows]
        assert all(b >= a for a, b in zip(hv, hv[1:]))

    def test_same_seed_same_run(self, dtlz2: ProblemSpec, small_loop: LoopConfig) -> None:
        first = run(dtlz2, small_loop, 2)
        second = run(dtlz2, small_loop, 2)
        assert without_seconds(first) == without_seconds(second)
        np.testing.assert_array_equal(first.archive.F, second.archive.F)

    def test_initial_design_only(self, dtlz2: ProblemSpec, small_loop: LoopConfig) -> None:
        result = run(dtlz2, replace(small_loop, budget=small_loop.initial_size), 3)
        assert len(result.rows) == 1
        assert result.rows[0].iteration == 0 and result.rows[0].refit == "none"

    def test_history_gains_replay(self, dtlz2: ProblemSpec, small_loop: LoopConfig) -> None:
        result = run(dtlz2, small_loop, 4)
        assert len(result.history) == len(result.archive) - small_loop.initial_size
        cfg = HVConfig(ref_point=result.ref_point)
        F = result.archive.F
        for record in result.history:
            prefix = result.archive.prefix(record.eval_index).F
            expected = delta_hv(prefix, F[record.eval_index], cfg)
            assert record.delta_hv == pytest.approx(expected, abs=1e-12)

    def test_without_temperature_scaling(
        self, dtlz2: ProblemSpec, small_loop: LoopConfig
    ) -> None:
        result = run_ablation(dtlz2, small_loop, ["temp_scaling"], 5)
        assert [d["temperature"] for d in result.diagnostics] == [1.0] * len(result.diagnostics)

    def test_static_and_learned_see_same_features(
        self, dtlz2: ProblemSpec, small_loop: LoopConfig
    ) -> None:
        learned = run(dtlz2, small_loop, 6)
        static = run_static_baseline(dtlz2, small_loop, ABLATION_STATIC_WEIGHTS, 6)
        widths = {d["feature_width"] for d in learned.diagnostics + static.diagnostics}
        assert widths == {3 * 2 + 3 + 2}

    def test_empty_ablation_matches_full_run(
        self, dtlz2: ProblemSpec, small_loop: LoopConfig
    ) -> None:
        full = run(dtlz2, small_loop, 7)
        ablated = run_ablation(dtlz2, small_loop, [], 7)
        assert without_seconds(full) == without_seconds(ablated)

    def test_random_baseline(self, dtlz2: ProblemSpec, small_loop: LoopConfig) -> None:
        result = run_random_baseline(dtlz2, small_loop, 8)
        assert len(result.archive) == small_loop.budget
        assert result.history == [] and result.mode == "random"

    def test_every_ablation_runs(self, dtlz2: ProblemSpec, small_loop: LoopConfig) -> None:
        disable = ["uncertainty", "deepgp", "learned_acq", "temp_scaling", "screening"]
        result = run_ablation(dtlz2, small_loop, disable, 9)
        assert len(result.archive) == small_loop.budget
        assert result.config_echo["disabled"] == sorted(disable)

    def test_unknown_ablation(self, dtlz2: ProblemSpec, small_loop: LoopConfig) -> None:
        with pytest.raises(DomainError, match="unknown ablation"):
            OptimizationLoop(dtlz2, small_loop, 0, disabled=["dropout"])

    def test_unknown_mode(self, dtlz2: ProblemSpec, small_loop: LoopConfig) -> None:
        with pytest.raises(DomainError):
            run_mode(dtlz2, small_loop, 0, "greedy")

    def test_oracle_probe_records_pairs(
        self, dtlz2: ProblemSpec, small_loop: LoopConfig
    ) -> None:
        result = run(dtlz2, replace(small_loop, oracle_probe=True), 10)
        assert len(result.oracle_pairs) == len(result.rows) - 1
        for oracle, realized in result.oracle_pairs:
            assert oracle >= realized >= 0.0
