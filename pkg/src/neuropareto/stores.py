"""Output directory layout: config echo, per-seed tables and JSON dumps."""

from __future__ import annotations

import csv
import json
import logging
from pathlib import Path
from typing import Any

import yaml

from neuropareto.errors import ConfigError
from neuropareto.models import RUN_TABLE_HEADER, RunResult, RunTableRow

logger = logging.getLogger(__name__)

_INT_COLUMNS = {"iteration", "evals", "epochs"}
_STR_COLUMNS = {"refit"}


def write_run_table(path: Path, rows: list[RunTableRow]) -> Path:
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(RUN_TABLE_HEADER)
        for row in rows:
            writer.writerow([repr(v) if isinstance(v, float) else v for v in row.as_tuple()])
    return path


def read_run_table(path: Path) -> list[RunTableRow]:
    """Parse a run table back into rows identical to the ones written."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader))
        if header != RUN_TABLE_HEADER:
            raise ConfigError(f"{path} does not have the run table header")
        rows = []
        for record in reader:
            values: dict[str, Any] = {}
            for name, raw in zip(header, record):
                if name in _INT_COLUMNS:
                    values[name] = int(raw)
                elif name in _STR_COLUMNS:
                    values[name] = raw
                else:
                    values[name] = float(raw)
            rows.append(RunTableRow(**values))
    return rows


def _dump(path: Path, payload: Any) -> Path:
    path.write_text(json.dumps(payload, indent=2, default=str))
    return path


class RunStore:
    """Writes one experiment's outputs under a single directory."""

    def __init__(self, root: Path | str, *, force: bool = False) -> None:
        self.root = Path(root)
        if self.root.exists() and any(self.root.iterdir()) and not force:
            raise ConfigError(
                f"output directory {self.root} is not empty; pass --force to overwrite"
            )
        self.root.mkdir(parents=True, exist_ok=True)

    def seed_dir(self, seed: int, label: str | None = None) -> Path:
        name = f"seed_{seed}" if label is None else f"{label}/seed_{seed}"
        path = self.root / name
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_config(self, echo: dict[str, Any]) -> Path:
        path = self.root / "effective_config.yaml"
        path.write_text(yaml.safe_dump(echo, sort_keys=False))
        return path

    def write_run(self, result: RunResult, label: str | None = None) -> Path:
        """Run table, archive, history and diagnostics for one seed."""
        base = self.seed_dir(result.seed, label)
        write_run_table(base / "run_table.csv", result.rows)
        _dump(
            base / "archive.json",
            {"ref_point": list(result.ref_point), "samples": result.archive.to_records()},
        )
        _dump(base / "history.json", [r.to_dict() for r in result.history])
        _dump(
            base / "diagnostics.json",
            {
                "mode": result.mode,
                "config": result.config_echo,
                "iterations": result.diagnostics,
                "oracle_pairs": [list(p) for p in result.oracle_pairs],
            },
        )
        logger.debug("Wrote seed %d outputs to %s", result.seed, base)
        return base

    def write_json(self, name: str, payload: Any) -> Path:
        return _dump(self.root / name, payload)

    def read_json(self, name: str) -> Any:
        return json.loads((self.root / name).read_text())
