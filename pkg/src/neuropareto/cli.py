"""CLI command definitions using Click."""

from __future__ import annotations

import dataclasses
import itertools
import logging
import sys
from pathlib import Path
from typing import Any

import click
import numpy as np
from rich.console import Console
from rich.logging import RichHandler

from neuropareto import __version__
from neuropareto.bench import evaluate_batch, latin_hypercube, make_problem, reference_front
from neuropareto.config import parse_config
from neuropareto.display import Display
from neuropareto.errors import ConfigError, NeuroParetoError
from neuropareto.loop import run_mode
from neuropareto.models import (
    ABLATIONS,
    CalibrationReport,
    ConstantsEstimate,
    HVConfig,
    RunConfig,
    RunResult,
)
from neuropareto.pareto import Archive
from neuropareto.quality import (
    calibration_metrics,
    estimate_H_max,
    estimate_L_H,
    estimate_rho,
    reference_point,
    suggest_K,
)
from neuropareto.rankclf import (
    ClassifierModel,
    confidence_and_correct,
    fit_classifier,
    fit_temperature,
    mean_nll,
)
from neuropareto.stats import ALPHA, summarize, wilcoxon_signed_rank
from neuropareto.stores import RunStore

logger = logging.getLogger(__name__)

COMPARE_DEFAULT = "neuropareto,random,static"


def _setup_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.INFO if verbose else logging.WARNING,
        format="%(message)s",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


@click.group()
@click.option("--config", "-c", "config_path", default=None, help="Settings YAML file")
@click.option("--verbose", "-v", is_flag=True, help="Log progress at INFO level")
@click.version_option(__version__, prog_name="neuropareto")
@click.pass_context
def main(ctx: click.Context, config_path: str | None, verbose: bool) -> None:
    """Surrogate-assisted multi-objective optimization with calibrated uncertainty."""
    _setup_logging(verbose)
    ctx.ensure_object(dict)
    ctx.obj["config_path"] = config_path
    ctx.obj["display"] = Display()
    ctx.obj["verbose"] = verbose


def _output_options(fn: Any) -> Any:
    fn = click.option("--force", is_flag=True, help="Overwrite a non-empty output directory")(fn)
    fn = click.option("--seeds", default=None, help="Comma-separated seeds, e.g. 1,2,3")(fn)
    fn = click.option("--out", "out_dir", default=None, help="Output directory")(fn)
    return fn


def _prepare(
    ctx: click.Context,
    out_dir: str | None,
    seeds: str | None,
    force: bool,
    extra: dict[str, Any] | None = None,
) -> tuple[RunConfig, RunStore]:
    """Load config and open the output store, exiting 1 on failure."""
    display: Display = ctx.obj["display"]
    overrides: dict[str, Any] = dict(extra or {})
    if out_dir:
        overrides["output_dir"] = out_dir
    if seeds:
        overrides["seeds"] = seeds
    try:
        config = parse_config(ctx.obj["config_path"], overrides)
        store = RunStore(Path(config.output_dir), force=force)
    except NeuroParetoError as e:
        display.print_error(str(e))
        sys.exit(1)
    store.write_config(config.echo)
    return config, store


def _finals(results: list[RunResult]) -> dict[str, dict[str, float]]:
    return {
        "hv": summarize([r.final_hv for r in results]),
        "igd": summarize([r.final_igd for r in results]),
    }


def _run_seeds(
    display: Display,
    config: RunConfig,
    store: RunStore,
    mode: str,
    disable: tuple[str, ...],
    label: str | None = None,
) -> tuple[list[RunResult], bool]:
    problem = make_problem(config.problem, config.D, config.M)
    results: list[RunResult] = []
    failed = False
    for seed in config.seeds:
        display.print_run_header(problem.name, problem.D, problem.M, label or mode, seed)
        try:
            result = run_mode(problem, config.loop, seed, mode, disable=disable)
            store.write_run(result, label)
        except NeuroParetoError as e:
            display.print_error(f"seed {seed} failed: {e}")
            failed = True
            continue
        for row in result.rows:
            display.print_run_row(row)
        results.append(result)
    return results, failed


# ---------------------------------------------------------------------------
# run / ablate
# ---------------------------------------------------------------------------


@main.command("run")
@_output_options
@click.pass_context
def run_cmd(ctx: click.Context, out_dir: str | None, seeds: str | None, force: bool) -> None:
    """Run the configured mode on every seed and summarize final HV/IGD."""
    display: Display = ctx.obj["display"]
    config, store = _prepare(ctx, out_dir, seeds, force)
    results, failed = _run_seeds(display, config, store, config.mode, config.ablate)
    if results:
        summary = _finals(results)
        store.write_json(
            "summary.json",
            {"mode": config.mode, "seeds": [r.seed for r in results], **summary},
        )
        display.print_summary(summary, f"{config.mode}: final indicators")
    if failed:
        sys.exit(1)
    display.print_success(f"Outputs written to {store.root}")


@main.command("ablate")
@_output_options
@click.option(
    "--disable",
    "-d",
    multiple=True,
    type=click.Choice(sorted(ABLATIONS)),
    help="Component to disable (repeatable); defaults to the config's ablate list",
)
@click.pass_context
def ablate_cmd(
    ctx: click.Context,
    out_dir: str | None,
    seeds: str | None,
    force: bool,
    disable: tuple[str, ...],
) -> None:
    """Run the pipeline with selected components disabled."""
    display: Display = ctx.obj["display"]
    extra: dict[str, Any] = {"mode": "ablation"}
    if disable:
        extra["ablate"] = list(disable)
    config, store = _prepare(ctx, out_dir, seeds, force, extra)
    results, failed = _run_seeds(display, config, store, "ablation", config.ablate)
    if results:
        summary = _finals(results)
        store.write_json(
            "summary.json",
            {"mode": "ablation", "disabled": list(config.ablate), **summary},
        )
        display.print_summary(summary, f"without {', '.join(config.ablate) or 'nothing'}")
    if failed:
        sys.exit(1)
    display.print_success(f"Outputs written to {store.root}")


# ---------------------------------------------------------------------------
# compare
# ---------------------------------------------------------------------------


def _parse_modes(spec: str) -> list[tuple[str, str, tuple[str, ...]]]:
    """Mode tokens to (label, mode, disabled components)."""
    parsed: list[tuple[str, str, tuple[str, ...]]] = []
    for token in (t.strip() for t in spec.split(",")):
        if not token:
            continue
        if token in ("neuropareto", "random", "static"):
            parsed.append((token, token, ()))
        elif token.startswith("no-") and token[3:] in ABLATIONS:
            parsed.append((token, "ablation", (token[3:],)))
        else:
            raise ConfigError(
                f"unknown mode '{token}'; use neuropareto, random, static or no-<component>"
            )
    if len({label for label, _, _ in parsed}) < 2:
        raise ConfigError("compare needs at least two distinct modes")
    return parsed


@main.command("compare")
@_output_options
@click.option("--modes", default=COMPARE_DEFAULT, show_default=True, help="Modes to compare")
@click.pass_context
def compare_cmd(
    ctx: click.Context, out_dir: str | None, seeds: str | None, force: bool, modes: str
) -> None:
    """Run several modes on shared seeds and test paired differences."""
    display: Display = ctx.obj["display"]
    try:
        parsed = _parse_modes(modes)
    except ConfigError as e:
        display.print_error(str(e))
        sys.exit(1)
    config, store = _prepare(ctx, out_dir, seeds, force)

    finals: dict[str, dict[str, list[float]]] = {}
    failed = False
    for label, mode, disable in parsed:
        results, mode_failed = _run_seeds(display, config, store, mode, disable, label)
        failed |= mode_failed
        finals[label] = {
            "seeds": [r.seed for r in results],
            "hv": [r.final_hv for r in results],
            "igd": [r.final_igd for r in results],
        }
    if failed:
        display.print_error("some seeds failed; seed sets no longer match, skipping tests")
        sys.exit(1)

    medians = {
        label: {"hv": float(np.median(v["hv"])), "igd": float(np.median(v["igd"]))}
        for label, v in finals.items()
    }
    tests = [
        {
            "a": a,
            "b": b,
            "metric": metric,
            "p": wilcoxon_signed_rank(finals[a][metric], finals[b][metric]),
        }
        for a, b in itertools.combinations(finals, 2)
        for metric in ("hv", "igd")
    ]
    store.write_json(
        "comparison.json",
        {
            "alpha": ALPHA,
            "seeds": list(config.seeds),
            "medians": medians,
            "finals": finals,
            "tests": tests,
        },
    )
    display.print_comparison(medians, tests, ALPHA)
    display.print_success(f"Outputs written to {store.root}")


# ---------------------------------------------------------------------------
# calibrate
# ---------------------------------------------------------------------------


def calibration_report(config: RunConfig, seed: int) -> dict[str, Any]:
    """Train on an evaluated LHS design, then compare calibration before and after scaling."""
    problem = make_problem(config.problem, config.D, config.M)
    rng = np.random.default_rng(seed)
    X = latin_hypercube(
        config.calibration.design_size,
        problem.D,
        (problem.lower_bounds, problem.upper_bounds),
        rng,
    )
    archive = Archive()
    archive.record(X, evaluate_batch(problem, X))
    K = config.loop.rank_classes
    model = ClassifierModel.build(problem, K, rng, config.loop.classifier)
    fit = fit_classifier(model, archive, K, config.loop.classifier.epochs, rng, calibrate=False)
    X_cal, y_cal = fit.calibration_X, fit.calibration_labels
    if y_cal.size == 0:
        raise ConfigError("calibration split is empty; increase calibration.design_size")

    bins = config.calibration.bins
    before = calibration_metrics(*confidence_and_correct(model, X_cal, y_cal), bins=bins)
    nll_before = mean_nll(model, X_cal, y_cal)
    temperature = fit_temperature(model, X_cal, y_cal)
    after = calibration_metrics(*confidence_and_correct(model, X_cal, y_cal), bins=bins)
    nll_after = mean_nll(model, X_cal, y_cal)
    return {
        "seed": seed,
        "temperature": temperature,
        "calibration_points": int(y_cal.size),
        "before": dataclasses.asdict(before),
        "after": dataclasses.asdict(after),
        "nll_before": nll_before,
        "nll_after": nll_after,
    }


@main.command("calibrate")
@_output_options
@click.pass_context
def calibrate_cmd(ctx: click.Context, out_dir: str | None, seeds: str | None, force: bool) -> None:
    """Report ECE/MCE/ACE of the rank classifier before and after temperature scaling."""
    display: Display = ctx.obj["display"]
    config, store = _prepare(ctx, out_dir, seeds, force)
    reports: list[dict[str, Any]] = []
    failed = False
    for seed in config.seeds:
        try:
            report = calibration_report(config, seed)
        except NeuroParetoError as e:
            display.print_error(f"seed {seed} failed: {e}")
            failed = True
            continue
        reports.append(report)
        display.print_info(f"seed {seed}")
        display.print_calibration(
            CalibrationReport(**report["before"]),
            CalibrationReport(**report["after"]),
            report["temperature"],
        )
    store.write_json("calibration.json", {"bins": config.calibration.bins, "seeds": reports})
    if failed:
        sys.exit(1)
    display.print_success(f"Outputs written to {store.root}")


# ---------------------------------------------------------------------------
# constants
# ---------------------------------------------------------------------------


def estimate_constants(config: RunConfig, seed: int, *, with_rho: bool) -> ConstantsEstimate:
    """Run the L_H, H_max and (optionally) rho protocols for one seed."""
    problem = make_problem(config.problem, config.D, config.M)
    settings = config.constants
    if with_rho and problem.D > settings.rho_max_dimension:
        raise ConfigError(
            f"rho estimation needs oracle evaluations and is limited to "
            f"D <= {settings.rho_max_dimension}; got D={problem.D} (use --no-rho)"
        )
    rng = np.random.default_rng(seed)
    X = latin_hypercube(
        config.loop.initial_size,
        problem.D,
        (problem.lower_bounds, problem.upper_bounds),
        rng,
    )
    archive = Archive()
    archive.record(X, evaluate_batch(problem, X))
    front = reference_front(problem)
    ref = reference_point(archive.F, front)
    lower = np.minimum(archive.F.min(axis=0), front.min(axis=0))
    hv_cfg = HVConfig(
        ref_point=tuple(float(v) for v in ref),
        mc_samples=config.loop.hv_mc_samples,
        mc_seed=config.loop.hv_seed,
        lower_point=tuple(float(v) for v in lower),
    )

    L_H = estimate_L_H(problem, archive, settings.lh_samples, settings.lh_delta, hv_cfg, rng)
    cuts = sorted({max(2, int(len(archive) * f)) for f in (0.25, 0.5, 0.75, 1.0)})
    scenarios = [archive.prefix(c).F for c in cuts]
    H_max = estimate_H_max(scenarios, settings.hmax_trials, hv_cfg, rng)

    rho = float("nan")
    pairs: list[tuple[float, float]] = []
    if with_rho:
        loop = dataclasses.replace(config.loop, oracle_probe=True)
        pairs = run_mode(problem, loop, seed, "neuropareto").oracle_pairs
        rho = estimate_rho([p[0] for p in pairs], [p[1] for p in pairs])

    return ConstantsEstimate(
        L_H=L_H,
        H_max=H_max,
        rho=rho,
        provenance={
            "seed": seed,
            "N": settings.lh_samples,
            "delta": settings.lh_delta,
            "hmax_trials": settings.hmax_trials,
            "hmax_scenarios": cuts,
            "rho_iterations": len(pairs),
            "configured_K": config.loop.rank_classes,
            "suggested_K_max": suggest_K(config.loop.budget, settings.k_min_per_class),
        },
    )


@main.command("constants")
@_output_options
@click.option("--rho/--no-rho", default=True, help="Also estimate rho via oracle probing")
@click.pass_context
def constants_cmd(
    ctx: click.Context, out_dir: str | None, seeds: str | None, force: bool, rho: bool
) -> None:
    """Estimate L_H, H_max and rho with their provenance."""
    display: Display = ctx.obj["display"]
    config, store = _prepare(ctx, out_dir, seeds, force)
    estimates: list[dict[str, Any]] = []
    failed = False
    for seed in config.seeds:
        try:
            estimate = estimate_constants(config, seed, with_rho=rho)
        except NeuroParetoError as e:
            display.print_error(f"seed {seed} failed: {e}")
            failed = True
            continue
        estimates.append(dataclasses.asdict(estimate))
        display.print_constants(estimate)
    store.write_json("constants.json", {"seeds": estimates})
    if failed:
        sys.exit(1)
    display.print_success(f"Outputs written to {store.root}")
