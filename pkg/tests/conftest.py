"""Shared test fixtures."""

from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pytest
import yaml

from neuropareto.bench import make_problem
from neuropareto.models import (
    AcquisitionSettings,
    ClassifierSettings,
    LoopConfig,
    MCConfig,
    ProblemSpec,
    SurrogateSettings,
)
from neuropareto.pareto import Archive


@pytest.fixture(autouse=True)
def isolated_env(tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> Path:
    """Keep user/project settings and NEUROPARETO_* variables out of every test."""
    home = tmp_path / "home"
    home.mkdir()
    monkeypatch.setenv("HOME", str(home))
    monkeypatch.setenv("USERPROFILE", str(home))
    monkeypatch.chdir(tmp_path)
    for key in ("NEUROPARETO_PROBLEM", "NEUROPARETO_BUDGET", "NEUROPARETO_OUTPUT_DIR",
                "NEUROPARETO_SEEDS"):
        monkeypatch.delenv(key, raising=False)
    return home


@pytest.fixture
def project_root() -> Path:
    """Return the project root directory."""
    return Path(__file__).resolve().parent.parent


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def dtlz2() -> ProblemSpec:
    return make_problem("dtlz2", 4, 2)


@pytest.fixture
def small_classifier() -> ClassifierSettings:
    return ClassifierSettings(
        hidden1=16, hidden2=16, dropout=0.2, epochs=20, warm_epochs=5, batch_size=16
    )


@pytest.fixture
def small_surrogate() -> SurrogateSettings:
    return SurrogateSettings(
        inducing=8,
        rff_features=16,
        propagation_samples=4,
        mean_hidden=8,
        mean_features=4,
        noise_hidden=4,
        warm_epochs=2,
        full_epochs=4,
        min_epochs=1,
        steps_per_epoch=2,
    )


@pytest.fixture
def small_loop(
    small_classifier: ClassifierSettings, small_surrogate: SurrogateSettings
) -> LoopConfig:
    """A loop small enough to run several times per test."""
    return LoopConfig(
        budget=24,
        batch_size=3,
        pool_size=40,
        n_screen=20,
        top_k=8,
        initial_size=12,
        rank_classes=3,
        mc=MCConfig(S0=2, S_max=4, tau=0.01),
        classifier=small_classifier,
        surrogate=small_surrogate,
        acquisition=AcquisitionSettings(hidden=8, steps=5, batch_size=8),
        hv_mc_samples=2_000,
    )


@pytest.fixture
def archive_2d() -> Archive:
    """Twenty DTLZ2-like points with a spread of ranks."""
    rng = np.random.default_rng(7)
    X = rng.random((20, 4))
    F = rng.random((20, 2)) + 0.2
    archive = Archive()
    archive.record(X, F)
    return archive


@pytest.fixture
def small_settings() -> dict[str, Any]:
    """Settings mapping that keeps CLI runs to a few seconds."""
    return {
        "problem": "dtlz2",
        "D": 4,
        "M": 2,
        "budget": 18,
        "initial_size": 12,
        "rank_classes": 3,
        "batch_size": 3,
        "pool_size": 30,
        "n_screen": 15,
        "top_k": 6,
        "classifier": {
            "hidden1": 8,
            "hidden2": 8,
            "epochs": 10,
            "warm_epochs": 3,
            "batch_size": 16,
        },
        "mc_dropout": {"S0": 2, "S_max": 4},
        "surrogate": {
            "inducing": 6,
            "rff_features": 8,
            "propagation_samples": 2,
            "mean_hidden": 4,
            "mean_features": 2,
            "noise_hidden": 4,
            "warm_epochs": 1,
            "full_epochs": 2,
            "min_epochs": 1,
            "steps_per_epoch": 1,
        },
        "acquisition": {"hidden": 4, "steps": 2, "batch_size": 8},
        "hypervolume": {"mc_samples": 1000},
        "calibration": {"design_size": 60},
        "constants": {"lh_samples": 20, "hmax_trials": 10, "k_min_per_class": 6},
    }


@pytest.fixture
def settings_file(tmp_path: Path, small_settings: dict[str, Any]) -> Path:
    path = tmp_path / "settings.yaml"
    path.write_text(yaml.safe_dump(small_settings))
    return path
