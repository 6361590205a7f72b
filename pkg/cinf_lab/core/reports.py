#!/usr/bin/env python3
"""
Reports - Experiment reports, invariant checks and data files
Part of the CINF Lab outlier-noise mitigation infrastructure

An experiment returns an ExperimentReport: the config echo, per-point
metrics, a summary, the invariant checks and the tables/signals behind
them. save_report() persists the JSON record, one CSV per table and a
plot manifest describing how the tables map onto figures.
"""

import datetime
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np
import scipy

from cinf_lab.core.signal_core import Signal
from cinf_lab.core.signal_io import write_binary, write_csv
from cinf_lab.errors import InvariantViolation

logger = logging.getLogger(__name__)

REPORT_FILE = "report.json"
MANIFEST_FILE = "plot_manifest.json"


@dataclass
class InvariantCheck:
    name: str
    value: Optional[float]
    bound: str  # human-readable acceptance rule
    passed: bool
    hard: bool = True  # soft checks are flagged, never raised


def check_within(name: str, value: float, target: float, tolerance: float, hard: bool = True) -> InvariantCheck:
    passed = math.isfinite(value) and abs(value - target) <= tolerance
    return InvariantCheck(name, value, f"{target:g} ± {tolerance:g}", passed, hard)


def check_at_least(name: str, value: float, minimum: float, hard: bool = True) -> InvariantCheck:
    return InvariantCheck(name, value, f">= {minimum:g}", bool(value >= minimum), hard)


def check_greater(name: str, value: float, minimum: float, hard: bool = True) -> InvariantCheck:
    return InvariantCheck(name, value, f"> {minimum:g}", bool(value > minimum), hard)


def check_at_most(name: str, value: float, maximum: float, hard: bool = True) -> InvariantCheck:
    return InvariantCheck(name, value, f"<= {maximum:g}", bool(value <= maximum), hard)


def check_true(name: str, condition: bool, rule: str, hard: bool = True) -> InvariantCheck:
    return InvariantCheck(name, None, rule, bool(condition), hard)


@dataclass
class DataTable:
    """Column-oriented numeric table written as CSV."""
    columns: List[str]
    rows: np.ndarray

    @classmethod
    def from_columns(cls, **columns: Sequence[float]) -> "DataTable":
        names = list(columns)
        return cls(names, np.column_stack([np.asarray(columns[n], dtype=np.float64) for n in names]))

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, self.rows, delimiter=",", header=",".join(self.columns), comments="", fmt="%.17g")
        return path


@dataclass
class PlotSpec:
    """One entry of the plot manifest; rendering is left to external tools."""
    table: str
    x: str
    y: List[str]
    title: str
    kind: str = "line"  # line | step | scatter
    log_x: bool = False
    log_y: bool = False


def provenance(seed: int) -> Dict[str, Any]:
    from cinf_lab import __version__

    return {
        "package": "cinf_lab",
        "version": __version__,
        "timestamp": datetime.datetime.now().isoformat(),
        "seed": seed,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


@dataclass
class ExperimentReport:
    experiment: str
    config: Dict[str, Any]
    points: List[Dict[str, Any]] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    checks: List[InvariantCheck] = field(default_factory=list)
    provenance: Dict[str, Any] = field(default_factory=dict)
    data_files: Dict[str, str] = field(default_factory=dict)
    tables: Dict[str, DataTable] = field(default_factory=dict, repr=False)
    plots: List[PlotSpec] = field(default_factory=list, repr=False)
    stage_signals: Dict[str, Signal] = field(default_factory=dict, repr=False)

    @property
    def failed_checks(self) -> List[InvariantCheck]:
        return [c for c in self.checks if not c.passed and c.hard]

    @property
    def flagged_checks(self) -> List[InvariantCheck]:
        return [c for c in self.checks if not c.passed and not c.hard]

    @property
    def passed(self) -> bool:
        return not self.failed_checks

    def check(self, name: str) -> InvariantCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(f"Unknown check: {name}")

    def raise_on_violation(self) -> None:
        for c in self.flagged_checks:
            logger.warning("%s: soft check %s flagged (value=%s, bound %s)", self.experiment, c.name, c.value, c.bound)
        if self.failed_checks:
            for c in self.failed_checks:
                logger.error("%s: check %s failed (value=%s, bound %s)", self.experiment, c.name, c.value, c.bound)
            raise InvariantViolation(self.experiment, self.failed_checks)

    def to_dict(self) -> Dict[str, Any]:
        return _sanitize({
            "experiment": self.experiment,
            "config": self.config,
            "points": self.points,
            "summary": self.summary,
            "checks": [asdict(c) for c in self.checks],
            "passed": self.passed,
            "data_files": self.data_files,
            "provenance": self.provenance,
        })


def _sanitize(value: Any) -> Any:
    """Plain JSON types only; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): _sanitize(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_sanitize(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_sanitize(v) for v in value.tolist()]
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        value = float(value)
        return value if math.isfinite(value) else None
    return value


def save_report(report: ExperimentReport, out_dir: Union[str, Path], dump_stages: bool = False) -> Path:
    """Write report.json, the CSV tables, the plot manifest and optional stage dumps."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    for name, table in report.tables.items():
        report.data_files[name] = table.to_csv(out_dir / f"{name}.csv").name

    if dump_stages:
        stage_dir = out_dir / "stages"
        for name, s in report.stage_signals.items():
            write_csv(s, stage_dir / f"{name}.csv")
            write_binary(s, stage_dir / f"{name}.bin")
            report.data_files[f"stage_{name}"] = f"stages/{name}.csv"

    manifest = [dict(asdict(p), file=report.data_files.get(p.table)) for p in report.plots
                if p.table in report.data_files]
    with open(out_dir / MANIFEST_FILE, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, ensure_ascii=False)
    report.data_files["plot_manifest"] = MANIFEST_FILE

    path = out_dir / REPORT_FILE
    with open(path, "w", encoding="utf-8") as f:
        json.dump(report.to_dict(), f, indent=2, ensure_ascii=False)
    logger.info("report written to %s", path)
    return path


def load_report(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
