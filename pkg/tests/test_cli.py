import json
import sys
from pathlib import Path

import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))
from cinf_lab.cli import EXIT_CONFIG, EXIT_INVARIANT, EXIT_OK, main
from cinf_lab.config import default_scenario, save_scenario
from cinf_lab.core.reports import REPORT_FILE
from cinf_lab.lab_logging import configure_logging


def test_single_experiment_writes_report(tmp_path):
    out = tmp_path / "clip"
    code = main(["clipping", "--out", str(out), "--seed", "3", "--dump-stages", "--results-dir", str(tmp_path)])
    assert code == EXIT_OK
    report = json.loads((out / REPORT_FILE).read_text(encoding="utf-8"))
    assert report["passed"] is True
    assert report["config"]["seed"] == 3
    assert (out / "stages" / "V.csv").exists()


def test_bad_config_exits_with_config_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"experiment": "clipping", "unknown": 1}), encoding="utf-8")
    assert main(["clipping", "--config", str(path), "--results-dir", str(tmp_path)]) == EXIT_CONFIG


def test_config_for_another_experiment_is_rejected(tmp_path):
    path = save_scenario(default_scenario("clipping"), tmp_path / "clipping.json")
    assert main(["caf-chirp", "--config", str(path), "--results-dir", str(tmp_path)]) == EXIT_CONFIG


@pytest.mark.parametrize("experiment, section, override", [
    ("clipping", "waveform", {"n_subcarriers": 1000}),
    ("caf-chirp", "pipeline", {"high_edge_hz": 5000.0}),
])
def test_scenarios_that_cannot_be_built_exit_with_config_code(tmp_path, experiment, section, override):
    data = default_scenario(experiment).model_dump(mode="json")
    data[section].update(override)
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    assert main([experiment, "--config", str(path), "--results-dir", str(tmp_path)]) == EXIT_CONFIG


def test_failed_hard_check_exits_with_invariant_code(tmp_path):
    cfg = default_scenario("bandwidth-sweep")
    data = cfg.model_dump(mode="json")
    data["duration"] = 0.1
    data["checks"]["sigma_slope"] = 2.0
    data["checks"]["sigma_slope_tolerance"] = 0.0
    path = tmp_path / "strict.json"
    path.write_text(json.dumps(data), encoding="utf-8")
    out = tmp_path / "strict"
    code = main(["bandwidth-sweep", "--config", str(path), "--out", str(out), "--results-dir", str(tmp_path)])
    assert code == EXIT_INVARIANT
    report = json.loads((out / REPORT_FILE).read_text(encoding="utf-8"))
    assert report["passed"] is False


def test_quick_suite_writes_summary(tmp_path):
    assert main(["suite", "quick", "--results-dir", str(tmp_path)]) == EXIT_OK
    summaries = list(tmp_path.glob("suite_summary_quick_*.json"))
    assert len(summaries) == 1
    summary = json.loads(summaries[0].read_text(encoding="utf-8"))
    assert summary["protocols_run"] == 3
    assert summary["passed"] == 3


def test_json_logs_to_file(tmp_path):
    log_file = tmp_path / "lab.log"
    logger = configure_logging("debug", json_format=True, log_file=str(log_file))
    logger.info("hello")
    for handler in logger.handlers:
        handler.flush()
    assert json.loads(log_file.read_text(encoding="utf-8").splitlines()[-1])["message"] == "hello"


def test_version_flag(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    assert "cinf_lab" in capsys.readouterr().out
