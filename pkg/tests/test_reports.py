import json
import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))
from cinf_lab.core.reports import (
    MANIFEST_FILE,
    REPORT_FILE,
    DataTable,
    ExperimentReport,
    PlotSpec,
    check_at_least,
    check_at_most,
    check_greater,
    check_true,
    check_within,
    load_report,
    provenance,
    save_report,
)
from cinf_lab.core.signal_core import Signal
from cinf_lab.core.signal_io import read_binary
from cinf_lab.errors import InvariantViolation


def sample_report():
    report = ExperimentReport("caf-chirp", {"seed": 3}, provenance=provenance(3))
    report.points.append({"snr_db": np.float64(12.5), "lag": np.int64(0), "peak": math.inf})
    report.summary["finite"] = np.array([1.0, np.nan])
    report.checks.append(check_greater("gain", 2.0, 0.0))
    report.checks.append(check_at_most("monotone", 1.0, 0.5, hard=False))
    report.tables["trace"] = DataTable.from_columns(t=[0.0, 1.0, 2.0], y=[1.0, -1.0, 0.5])
    report.plots.append(PlotSpec("trace", "t", ["y"], "Trace"))
    report.plots.append(PlotSpec("absent", "t", ["y"], "Never written"))
    report.stage_signals["V"] = Signal(np.array([0.25, -0.5]), 1e6)
    return report


def test_check_helpers():
    assert check_within("w", 0.52, 0.5, 0.05).passed
    assert not check_within("w", math.nan, 0.5, 0.05).passed
    assert check_within("w", 0.52, 0.5, 0.05).bound == "0.5 ± 0.05"
    assert check_at_least("a", 1.0, 1.0).passed
    assert not check_greater("g", 1.0, 1.0).passed
    assert check_at_most("m", 1.0, 1.0).passed
    assert not check_true("t", False, "all lags zero").passed


def test_soft_checks_do_not_fail_the_report():
    report = sample_report()
    assert report.passed
    assert [c.name for c in report.flagged_checks] == ["monotone"]
    report.raise_on_violation()


def test_hard_failure_raises():
    report = sample_report()
    report.checks.append(check_at_least("no_harm", -1.0, 0.0))
    assert not report.passed
    with pytest.raises(InvariantViolation) as info:
        report.raise_on_violation()
    assert info.value.experiment == "caf-chirp"
    assert [c.name for c in info.value.failed] == ["no_harm"]
    with pytest.raises(KeyError):
        report.check("missing")


def test_to_dict_is_plain_json():
    data = sample_report().to_dict()
    assert data["points"][0] == {"snr_db": 12.5, "lag": 0, "peak": None}
    assert data["summary"]["finite"] == [1.0, None]
    assert data["passed"] is True
    assert data["provenance"]["seed"] == 3
    json.dumps(data, allow_nan=False)


def test_save_report_bundle(tmp_path):
    path = save_report(sample_report(), tmp_path / "run", dump_stages=True)
    assert path.name == REPORT_FILE
    data = load_report(path)
    assert data["data_files"]["trace"] == "trace.csv"
    assert data["data_files"]["stage_V"] == "stages/V.csv"
    assert (tmp_path / "run" / "trace.csv").read_text().splitlines()[0] == "t,y"

    manifest = json.loads((tmp_path / "run" / MANIFEST_FILE).read_text(encoding="utf-8"))
    assert [entry["table"] for entry in manifest] == ["trace"]
    assert manifest[0]["file"] == "trace.csv"

    stage = read_binary(tmp_path / "run" / "stages" / "V.bin")
    assert stage.samples.tolist() == [0.25, -0.5]


def test_stage_dump_is_optional(tmp_path):
    save_report(sample_report(), tmp_path / "run")
    assert not (tmp_path / "run" / "stages").exists()
