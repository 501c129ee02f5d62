"""Data classes for neuropareto. No business logic, just structured data."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

if TYPE_CHECKING:
    from neuropareto.pareto import Archive


# ---------------------------------------------------------------------------
# Problems and evaluations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ProblemSpec:
    """A benchmark problem: family name, dimensions and box bounds."""

    name: str
    D: int
    M: int
    lower: tuple[float, ...]
    upper: tuple[float, ...]

    @property
    def lower_bounds(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_bounds(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def span(self) -> np.ndarray:
        return self.upper_bounds - self.lower_bounds


@dataclass(frozen=True, eq=False)
class Sample:
    """One true evaluation held by the archive."""

    x: np.ndarray
    f: np.ndarray
    eval_index: int


# ---------------------------------------------------------------------------
# Indicators and constants
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HVConfig:
    """Hypervolume settings; ``method`` is "auto", "exact" or "monte_carlo".

    ``lower_point`` pins the Monte Carlo sampling box so estimates stay
    comparable as the point set grows.
    """

    ref_point: tuple[float, ...]
    mc_samples: int = 100_000
    mc_seed: int = 20240917
    method: str = "auto"
    lower_point: tuple[float, ...] | None = None

    @property
    def ref(self) -> np.ndarray:
        return np.asarray(self.ref_point, dtype=float)


@dataclass
class CalibrationReport:
    """Binned calibration errors plus per-bin reliability rows."""

    ece: float
    mce: float
    ace: float
    bins: list[dict[str, float]] = field(default_factory=list)


@dataclass
class ConstantsEstimate:
    """Empirical L_H, H_max and rho with the counts used to get them."""

    L_H: float
    H_max: float
    rho: float
    provenance: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# Model outputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCConfig:
    """Adaptive MC-dropout schedule."""

    S0: int = 4
    S_max: int = 32
    tau: float = 0.01


@dataclass(frozen=True, eq=False)
class ClassifierOutput:
    """Calibrated mean rank distribution and epistemic score for one input."""

    p_bar: np.ndarray
    u_ep: float
    s_used: int

    @property
    def predicted_rank(self) -> int:
        return int(np.argmax(self.p_bar)) + 1


@dataclass(frozen=True, eq=False)
class SurrogatePrediction:
    """Predictive means and decomposed variances, shape (n, M) each."""

    f_hat: np.ndarray
    u_ep: np.ndarray
    u_al: np.ndarray

    def __len__(self) -> int:
        return int(self.f_hat.shape[0])


@dataclass
class FitReport:
    """Outcome of one surrogate fit, aggregated over objectives."""

    elbo_trace: list[list[float]] = field(default_factory=list)
    epochs_run: int = 0
    refit_kind: str = "warm"
    n_inducing: int = 0
    initial_elbo: list[float] = field(default_factory=list)
    final_elbo: list[float] = field(default_factory=list)
    nlpd_degraded: bool = False
    inducing_doubled: bool = False


@dataclass(frozen=True, eq=False)
class HistoryRecord:
    """Features as scored at selection time and the gains they produced."""

    feat: np.ndarray
    delta_hv: float
    delta_div_norm: float
    eval_index: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "feat": self.feat.tolist(),
            "delta_hv": self.delta_hv,
            "delta_div_norm": self.delta_div_norm,
            "eval_index": self.eval_index,
        }


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ClassifierSettings:
    hidden1: int = 128
    hidden2: int = 128
    dropout: float = 0.2
    epochs: int = 200
    warm_epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 32
    calibration_fraction: float = 0.2


@dataclass(frozen=True)
class SurrogateSettings:
    inducing: int = 40
    rff_features: int = 256
    propagation_samples: int = 8
    mean_hidden: int = 32
    mean_features: int = 16
    noise_hidden: int = 16
    warm_epochs: int = 10
    full_epochs: int = 50
    min_epochs: int = 5
    steps_per_epoch: int = 5
    learning_rate: float = 0.02
    noise_freeze_iterations: int = 3
    elbo_drop_tolerance: float = 0.02
    improvement_tolerance: float = 1e-3
    nlpd_patience: int = 3
    validation_fraction: float = 0.2
    layer2_lengthscale: float = 1.0
    layer2_prior_variance: float = 0.1
    initial_noise: float = 0.1
    deep: bool = True


@dataclass(frozen=True)
class AcquisitionSettings:
    hidden: int = 64
    buffer_size: int = 1000
    window: int = 20
    lambda_div: float = 0.5
    lambda_reg: float = 1e-4
    steps: int = 100
    batch_size: int = 64
    learning_rate: float = 1e-3
    loss: str = "mse"
    ema_decay: float = 0.99


@dataclass(frozen=True)
class SelectionWeights:
    alpha_hv: float = 1.0
    alpha_div: float = 0.3
    alpha_clf: float = 0.3


ABLATIONS = frozenset(
    {"uncertainty", "deepgp", "learned_acq", "temp_scaling", "screening"}
)
MODES = ("neuropareto", "random", "static", "ablation")
ABLATION_STATIC_WEIGHTS = (1.0, 0.3, 0.0, 0.3, 0.0, 0.0)


@dataclass(frozen=True)
class LoopConfig:
    """Everything one optimization run needs besides the problem and seed."""

    budget: int = 300
    batch_size: int = 5
    pool_size: int = 1000
    n_screen: int = 500
    top_k: int = 50
    initial_size: int = 100
    rank_classes: int = 5
    mc: MCConfig = field(default_factory=MCConfig)
    classifier: ClassifierSettings = field(default_factory=ClassifierSettings)
    surrogate: SurrogateSettings = field(default_factory=SurrogateSettings)
    acquisition: AcquisitionSettings = field(default_factory=AcquisitionSettings)
    selection: SelectionWeights = field(default_factory=SelectionWeights)
    static_weights: tuple[float, ...] = ABLATION_STATIC_WEIGHTS
    disabled: frozenset[str] = frozenset()
    hv_mc_samples: int = 100_000
    hv_seed: int = 20240917
    refit_every: int = 1
    oracle_probe: bool = False


@dataclass(frozen=True)
class CalibrationSettings:
    design_size: int = 300
    bins: int = 15


@dataclass(frozen=True)
class ConstantsSettings:
    lh_samples: int = 500
    lh_delta: float = 0.01
    hmax_trials: int = 200
    rho_max_dimension: int = 10
    k_min_per_class: int = 60


@dataclass(frozen=True)
class RunConfig:
    """Validated top-level configuration."""

    problem: str
    D: int
    M: int
    loop: LoopConfig
    output_dir: str = "runs"
    seeds: tuple[int, ...] = (1,)
    mode: str = "neuropareto"
    ablate: tuple[str, ...] = ()
    calibration: CalibrationSettings = field(default_factory=CalibrationSettings)
    constants: ConstantsSettings = field(default_factory=ConstantsSettings)
    echo: dict[str, Any] = field(default_factory=dict, compare=False)


# ---------------------------------------------------------------------------
# Run outputs
# ---------------------------------------------------------------------------


RUN_TABLE_HEADER = (
    "iteration",
    "evals",
    "hv",
    "igd",
    "mean_s_used",
    "refit",
    "epochs",
    "acq_loss",
    "seconds",
)


@dataclass(frozen=True)
class RunTableRow:
    """One line of the per-iteration run table."""

    iteration: int
    evals: int
    hv: float
    igd: float
    mean_s_used: float
    refit: str
    epochs: int
    acq_loss: float
    seconds: float

    def as_tuple(self) -> tuple[Any, ...]:
        return tuple(getattr(self, name) for name in RUN_TABLE_HEADER)


@dataclass
class RunResult:
    """Final archive plus the traces written by the CLI."""

    archive: Archive
    rows: list[RunTableRow]
    seed: int
    mode: str
    ref_point: tuple[float, ...]
    config_echo: dict[str, Any] = field(default_factory=dict)
    history: list[HistoryRecord] = field(default_factory=list)
    diagnostics: list[dict[str, Any]] = field(default_factory=list)
    oracle_pairs: list[tuple[float, float]] = field(default_factory=list)

    @property
    def final_hv(self) -> float:
        return self.rows[-1].hv

    @property
    def final_igd(self) -> float:
        return self.rows[-1].igd
