"""Terminal output rendering using rich."""

from __future__ import annotations

import sys
from collections.abc import Mapping, Sequence
from typing import IO, Any

from rich.console import Console
from rich.table import Table

from neuropareto.models import CalibrationReport, ConstantsEstimate, RunTableRow


class Display:
    """Terminal display helpers powered by rich."""

    def __init__(self, file: IO[str] | None = None) -> None:
        self._file = file or sys.stdout
        self._console = Console(file=self._file)

    def print_error(self, message: str) -> None:
        """Print an error message in red."""
        self._console.print(f"[bold red]Error:[/bold red] {message}")

    def print_warning(self, message: str) -> None:
        """Print a warning message in yellow."""
        self._console.print(f"[bold yellow]Warning:[/bold yellow] {message}")

    def print_success(self, message: str) -> None:
        """Print a success message in green."""
        self._console.print(f"[bold green]✓[/bold green] {message}")

    def print_info(self, message: str) -> None:
        self._console.print(f"  {message}")

    def print_run_header(self, problem: str, D: int, M: int, mode: str, seed: int) -> None:
        self._console.print(
            f"\n  [bold]{problem}[/bold] D={D} M={M} | mode: [cyan]{mode}[/cyan] | seed {seed}"
        )

    def print_run_row(self, row: RunTableRow) -> None:
        """One progress line per outer iteration."""
        self._console.print(
            f"  iter {row.iteration:>3}  evals {row.evals:>4}  "
            f"HV {row.hv:.5f}  IGD {row.igd:.5f}  "
            f"S {row.mean_s_used:>5.2f}  refit {row.refit:<4}  "
            f"[dim]{row.seconds:.2f}s[/dim]"
        )

    def print_summary(self, summary: Mapping[str, Mapping[str, float]], title: str) -> None:
        """Median/IQR of final indicators across seeds."""
        table = Table(title=title)
        table.add_column("Metric", style="cyan")
        table.add_column("Median", justify="right")
        table.add_column("IQR", justify="right")
        table.add_column("Seeds", justify="right")
        for metric, stats in summary.items():
            table.add_row(
                metric.upper(),
                f"{stats['median']:.5f}",
                f"{stats['iqr']:.5f}",
                f"{int(stats['n'])}",
            )
        self._console.print(table)

    def print_comparison(
        self,
        medians: Mapping[str, Mapping[str, float]],
        tests: Sequence[Mapping[str, Any]],
        alpha: float,
    ) -> None:
        """Per-mode medians followed by pairwise signed-rank p-values."""
        table = Table(title="Mode comparison (median final values)")
        table.add_column("Mode", style="cyan")
        table.add_column("HV", justify="right")
        table.add_column("IGD", justify="right")
        for mode, values in medians.items():
            table.add_row(mode, f"{values['hv']:.5f}", f"{values['igd']:.5f}")
        self._console.print(table)

        pairs = Table(title=f"Wilcoxon signed-rank (alpha = {alpha})")
        pairs.add_column("Pair", style="cyan")
        pairs.add_column("Metric")
        pairs.add_column("p", justify="right")
        pairs.add_column("Significant", justify="center")
        for test in tests:
            significant = test["p"] < alpha
            pairs.add_row(
                f"{test['a']} vs {test['b']}",
                test["metric"].upper(),
                f"{test['p']:.5f}",
                "[green]yes[/green]" if significant else "no",
            )
        self._console.print(pairs)

    def print_calibration(
        self, before: CalibrationReport, after: CalibrationReport, temperature: float
    ) -> None:
        table = Table(title=f"Calibration (fitted T = {temperature:.3f})")
        table.add_column("Metric", style="cyan")
        table.add_column("Before", justify="right")
        table.add_column("After", justify="right")
        for name in ("ece", "mce", "ace"):
            table.add_row(
                name.upper(), f"{getattr(before, name):.4f}", f"{getattr(after, name):.4f}"
            )
        self._console.print(table)

        bins = Table(title="Reliability (after scaling)")
        for column in ("Bin", "Center", "Confidence", "Accuracy", "Count"):
            bins.add_column(column, justify="right")
        for row in after.bins:
            bins.add_row(
                f"{int(row['bin'])}",
                f"{row['center']:.3f}",
                f"{row['confidence']:.3f}",
                f"{row['accuracy']:.3f}",
                f"{int(row['count'])}",
            )
        self._console.print(bins)

    def print_constants(self, estimate: ConstantsEstimate) -> None:
        table = Table(title="Empirical constants")
        table.add_column("Constant", style="cyan")
        table.add_column("Estimate", justify="right")
        table.add_row("L_H", f"{estimate.L_H:.6g}")
        table.add_row("H_max", f"{estimate.H_max:.6g}")
        table.add_row("rho", "n/a" if estimate.rho != estimate.rho else f"{estimate.rho:.4f}")
        self._console.print(table)
        for key, value in estimate.provenance.items():
            self._console.print(f"  [dim]{key}:[/dim] {value}")
