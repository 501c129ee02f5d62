"""Tests for display module."""

from __future__ import annotations

from io import StringIO

from neuropareto.display import Display
from neuropareto.models import CalibrationReport, ConstantsEstimate, RunTableRow


def render() -> tuple[Display, StringIO]:
    out = StringIO()
    return Display(file=out), out


class TestDisplay:
    def test_print_error(self) -> None:
        d, out = render()
        d.print_error("something broke")
        assert "Error:" in out.getvalue()
        assert "something broke" in out.getvalue()

    def test_print_warning_and_success(self) -> None:
        d, out = render()
        d.print_warning("careful")
        d.print_success("done")
        text = out.getvalue()
        assert "careful" in text and "done" in text

    def test_print_run_row(self) -> None:
        d, out = render()
        d.print_run_header("dtlz2", 10, 2, "neuropareto", 3)
        d.print_run_row(RunTableRow(4, 120, 0.51234, 0.04321, 6.5, "warm", 10, 0.02, 1.25))
        text = out.getvalue()
        assert "dtlz2" in text and "seed 3" in text
        assert "0.51234" in text and "0.04321" in text and "warm" in text

    def test_print_summary(self) -> None:
        d, out = render()
        stats = {"median": 0.5, "q1": 0.4, "q3": 0.6, "iqr": 0.2, "n": 5.0}
        d.print_summary({"hv": stats, "igd": stats}, "final")
        text = out.getvalue()
        assert "HV" in text and "IGD" in text
        assert "0.50000" in text and "0.20000" in text

    def test_print_comparison(self) -> None:
        d, out = render()
        medians = {"neuropareto": {"hv": 0.9, "igd": 0.01}, "random": {"hv": 0.7, "igd": 0.05}}
        tests = [
            {"a": "neuropareto", "b": "random", "metric": "hv", "p": 0.01},
            {"a": "neuropareto", "b": "random", "metric": "igd", "p": 0.2},
        ]
        d.print_comparison(medians, tests, 0.05)
        text = out.getvalue()
        assert "neuropareto vs random" in text
        assert "yes" in text and "no" in text

    def test_print_calibration(self) -> None:
        d, out = render()
        row = {"bin": 1.0, "center": 0.5, "confidence": 0.55, "accuracy": 0.5, "count": 4.0}
        before = CalibrationReport(ece=0.2, mce=0.3, ace=0.25, bins=[row])
        after = CalibrationReport(ece=0.05, mce=0.1, ace=0.06, bins=[row])
        d.print_calibration(before, after, 1.75)
        text = out.getvalue()
        assert "1.750" in text
        assert "0.2000" in text and "0.0500" in text

    def test_print_constants_without_rho(self) -> None:
        d, out = render()
        d.print_constants(
            ConstantsEstimate(L_H=2.5, H_max=0.125, rho=float("nan"), provenance={"seed": 1})
        )
        text = out.getvalue()
        assert "2.5" in text and "0.125" in text
        assert "n/a" in text and "seed" in text
