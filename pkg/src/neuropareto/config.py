"""Configuration manager with layered precedence and validation into RunConfig."""

from __future__ import annotations

import dataclasses
import math
import os
from pathlib import Path
from typing import Any

import yaml

from neuropareto.bench import make_problem
from neuropareto.errors import ConfigError
from neuropareto.models import (
    ABLATIONS,
    MODES,
    AcquisitionSettings,
    CalibrationSettings,
    ClassifierSettings,
    ConstantsSettings,
    LoopConfig,
    MCConfig,
    RunConfig,
    SelectionWeights,
    SurrogateSettings,
)


def _package_config_dir() -> Path:
    """Return the config/ directory shipped with the package."""
    return Path(__file__).resolve().parent.parent.parent / "config"


def _user_config_dir() -> Path:
    """Return ~/.neuropareto/."""
    return Path.home() / ".neuropareto"


def _project_config_dir() -> Path:
    """Return .neuropareto/ in the current working directory."""
    return Path.cwd() / ".neuropareto"


def _load_yaml(path: Path) -> dict[str, Any]:
    """Load a YAML mapping, returning an empty dict if the file is absent."""
    if not path.is_file():
        return {}
    try:
        with open(path) as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a mapping at the top level")
    return data


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> dict[str, Any]:
    """Recursively merge override into base."""
    result = dict(base)
    for key, value in override.items():
        if key in result and isinstance(result[key], dict) and isinstance(value, dict):
            result[key] = _deep_merge(result[key], value)
        else:
            result[key] = value
    return result


# ---------------------------------------------------------------------------
# Schema
# ---------------------------------------------------------------------------

ENV_MAP: dict[str, str] = {
    "NEUROPARETO_PROBLEM": "problem",
    "NEUROPARETO_BUDGET": "budget",
    "NEUROPARETO_OUTPUT_DIR": "output_dir",
    "NEUROPARETO_SEEDS": "seeds",
}

_SECTIONS: dict[str, type] = {
    "selection": SelectionWeights,
    "classifier": ClassifierSettings,
    "mc_dropout": MCConfig,
    "surrogate": SurrogateSettings,
    "acquisition": AcquisitionSettings,
    "calibration": CalibrationSettings,
    "constants": ConstantsSettings,
}

_HYPERVOLUME_KEYS = {"mc_samples": 100_000, "seed": 20240917}

_TOP_LEVEL = {
    "problem",
    "D",
    "M",
    "budget",
    "seed",
    "seeds",
    "mode",
    "output_dir",
    "initial_size",
    "batch_size",
    "pool_size",
    "n_screen",
    "top_k",
    "rank_classes",
    "ablate",
    "static_weights",
    "refit_every",
    "oracle_probe",
    "hypervolume",
    *_SECTIONS,
}


def _coerce(dotted: str, value: Any, like: Any) -> Any:
    """Cast ``value`` to the type of the default ``like``."""
    try:
        if isinstance(like, bool):
            if isinstance(value, str):
                return value.strip().lower() in ("1", "true", "yes")
            return bool(value)
        if isinstance(like, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if isinstance(like, float):
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{dotted}: expected {type(like).__name__}, got {value!r}") from None


def _section(name: str, raw: Any) -> Any:
    cls = _SECTIONS[name]
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    defaults = cls()
    fields = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(raw) - fields)
    if unknown:
        raise ConfigError(f"unknown config key '{name}.{unknown[0]}'")
    values = {k: _coerce(f"{name}.{k}", v, getattr(defaults, k)) for k, v in raw.items()}
    return cls(**values)


def _seed_list(value: Any) -> tuple[int, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(" ", "").split(",") if v]
    if isinstance(value, int):
        value = [value]
    try:
        seeds = tuple(int(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"seeds: expected a list of integers, got {value!r}") from None
    if not seeds:
        raise ConfigError("seeds: at least one seed is required")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"seeds: duplicate seeds in {list(seeds)}")
    return seeds


def _positive(name: str, value: int) -> int:
    if value < 1:
        raise ConfigError(f"{name} must be >= 1, got {value}")
    return value


def build_run_config(raw: dict[str, Any]) -> RunConfig:
    """Validate a merged mapping and fill defaults."""
    unknown = sorted(set(raw) - _TOP_LEVEL)
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")
    for required in ("problem", "D", "M"):
        if raw.get(required) is None:
            raise ConfigError(f"missing required config key '{required}'")

    D = _coerce("D", raw["D"], 0)
    M = _coerce("M", raw["M"], 0)
    problem = make_problem(str(raw["problem"]), D, M)

    budget = _positive("budget", _coerce("budget", raw.get("budget", 300), 0))
    q = _positive("batch_size", _coerce("batch_size", raw.get("batch_size", 5), 0))
    k = _positive("top_k", _coerce("top_k", raw.get("top_k", 50), 0))
    n_screen = _positive("n_screen", _coerce("n_screen", raw.get("n_screen", 500), 0))
    pool = _positive("pool_size", _coerce("pool_size", raw.get("pool_size", 1000), 0))
    if q > k:
        raise ConfigError(f"batch_size (q={q}) exceeds top_k (k={k})")
    if k > n_screen:
        raise ConfigError(f"top_k (k={k}) exceeds n_screen (N_screen={n_screen})")
    if n_screen > pool:
        raise ConfigError(f"n_screen (N_screen={n_screen}) exceeds pool_size ({pool})")

    K = _coerce("rank_classes", raw.get("rank_classes", 5), 0)
    if K < 2:
        raise ConfigError(f"rank_classes must be >= 2, got {K}")

    initial_raw = raw.get("initial_size")
    initial = (100 if D < 100 else 200) if initial_raw is None else _coerce(
        "initial_size", initial_raw, 0
    )
    if initial >= budget:
        raise ConfigError(f"initial_size ({initial}) must be smaller than budget ({budget})")
    if initial < max(2, K):
        raise ConfigError(
            f"initial_size ({initial}) must be at least rank_classes ({K}) and 2"
        )

    mode = str(raw.get("mode", "neuropareto"))
    if mode not in MODES:
        raise ConfigError(f"mode '{mode}' is not one of: {', '.join(MODES)}")
    ablate = tuple(str(a) for a in (raw.get("ablate") or ()))
    bad = sorted(set(ablate) - ABLATIONS)
    if bad:
        raise ConfigError(
            f"unknown ablation '{bad[0]}'; expected any of: {', '.join(sorted(ABLATIONS))}"
        )

    weights_raw = raw.get("static_weights", (1.0, 0.3, 0.0, 0.3, 0.0, 0.0))
    if not isinstance(weights_raw, (list, tuple)) or len(weights_raw) != 6:
        raise ConfigError("static_weights must be a list of six numbers")
    weights = tuple(_coerce(f"static_weights[{i}]", w, 0.0) for i, w in enumerate(weights_raw))

    sections = {name: _section(name, raw.get(name)) for name in _SECTIONS}
    mc: MCConfig = sections["mc_dropout"]
    if not 1 <= mc.S0 <= mc.S_max:
        raise ConfigError(f"mc_dropout needs 1 <= S0 <= S_max, got S0={mc.S0}, S_max={mc.S_max}")
    if mc.tau <= 0.0:
        raise ConfigError(f"mc_dropout.tau must be positive, got {mc.tau}")
    surrogate: SurrogateSettings = sections["surrogate"]
    if surrogate.rff_features < 2 or surrogate.rff_features % 2:
        raise ConfigError(f"surrogate.rff_features must be even, got {surrogate.rff_features}")
    if surrogate.inducing < 1:
        raise ConfigError(f"surrogate.inducing must be >= 1, got {surrogate.inducing}")
    acquisition: AcquisitionSettings = sections["acquisition"]
    if acquisition.loss not in ("mse", "huber"):
        raise ConfigError(f"acquisition.loss must be 'mse' or 'huber', got '{acquisition.loss}'")
    classifier: ClassifierSettings = sections["classifier"]
    if not 0.0 <= classifier.dropout < 1.0:
        raise ConfigError(f"classifier.dropout must be in [0, 1), got {classifier.dropout}")

    hv_raw = raw.get("hypervolume") or {}
    if not isinstance(hv_raw, dict):
        raise ConfigError("hypervolume: expected a mapping")
    unknown = sorted(set(hv_raw) - set(_HYPERVOLUME_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key 'hypervolume.{unknown[0]}'")
    hv = {k: _coerce(f"hypervolume.{k}", hv_raw.get(k, v), v) for k, v in _HYPERVOLUME_KEYS.items()}

    seeds = _seed_list(raw["seed"] if raw.get("seed") is not None else raw.get("seeds", [1]))

    loop = LoopConfig(
        budget=budget,
        batch_size=q,
        pool_size=pool,
        n_screen=n_screen,
        top_k=k,
        initial_size=initial,
        rank_classes=K,
        mc=mc,
        classifier=classifier,
        surrogate=surrogate,
        acquisition=acquisition,
        selection=sections["selection"],
        static_weights=weights,
        hv_mc_samples=hv["mc_samples"],
        hv_seed=hv["seed"],
        refit_every=_positive("refit_every", _coerce("refit_every", raw.get("refit_every", 1), 0)),
        oracle_probe=_coerce("oracle_probe", raw.get("oracle_probe", False), False),
    )

    echo = {key: value for key, value in raw.items() if key != "seed"}
    echo.update(
        problem=problem.name,
        D=D,
        M=M,
        budget=budget,
        seeds=list(seeds),
        initial_size=initial,
        mode=mode,
        ablate=list(ablate),
        static_weights=list(weights),
        hypervolume=hv,
    )
    for name, value in sections.items():
        echo[name] = dataclasses.asdict(value)

    return RunConfig(
        problem=problem.name,
        D=D,
        M=M,
        loop=loop,
        output_dir=str(raw.get("output_dir", "runs")),
        seeds=seeds,
        mode=mode,
        ablate=ablate,
        calibration=sections["calibration"],
        constants=sections["constants"],
        echo=echo,
    )


# ---------------------------------------------------------------------------
# Manager
# ---------------------------------------------------------------------------


class ConfigManager:
    """Loads and merges configuration from multiple sources.

    Precedence (highest first):
      1. CLI overrides (set via set_override)
      2. Environment variables (NEUROPARETO_*)
      3. Explicit --config file
      4. Project config: .neuropareto/settings.yaml
      5. User config: ~/.neuropareto/settings.yaml
      6. Package defaults: config/settings.yaml
    """

    def __init__(
        self,
        *,
        config_path: str | Path | None = None,
        cli_overrides: dict[str, Any] | None = None,
    ) -> None:
        self._cli_overrides = dict(cli_overrides or {})
        self._config_path = Path(config_path) if config_path else None
        if self._config_path is not None and not self._config_path.is_file():
            raise ConfigError(f"config file not found: {self._config_path}")
        self._merged: dict[str, Any] = {}
        self._load()

    def _load(self) -> None:
        merged = _load_yaml(_package_config_dir() / "settings.yaml")
        merged = _deep_merge(merged, _load_yaml(_user_config_dir() / "settings.yaml"))
        merged = _deep_merge(merged, _load_yaml(_project_config_dir() / "settings.yaml"))
        if self._config_path:
            merged = _deep_merge(merged, _load_yaml(self._config_path))

        for env_key, config_key in ENV_MAP.items():
            val = os.environ.get(env_key)
            if val is None:
                continue
            if config_key == "seeds":
                merged.pop("seed", None)
                merged["seeds"] = list(_seed_list(val))
            elif config_key == "budget":
                merged["budget"] = _coerce(env_key, val, 0)
            else:
                merged[config_key] = val

        if "seeds" in self._cli_overrides:
            merged.pop("seed", None)
        self._merged = _deep_merge(merged, self._cli_overrides)

    def set_override(self, key: str, value: Any) -> None:
        """Set a CLI-level override."""
        self._cli_overrides[key] = value
        self._load()

    @property
    def settings(self) -> RunConfig:
        """Validated run configuration built from the merged sources."""
        return build_run_config(self._merged)

    def get(self, key: str, default: Any = None) -> Any:
        return self._merged.get(key, default)

    @property
    def raw(self) -> dict[str, Any]:
        """Return the raw merged config dict."""
        return dict(self._merged)


def parse_config(
    path: str | Path | None, overrides: dict[str, Any] | None = None
) -> RunConfig:
    """One-call load and validation."""
    return ConfigManager(config_path=path, cli_overrides=overrides).settings
