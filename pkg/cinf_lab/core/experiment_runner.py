#!/usr/bin/env python3
"""
Experiment Runner - Protocols, suites and report persistence
Part of the CINF Lab outlier-noise mitigation infrastructure

Each protocol pairs a named demonstration with its default scenario file.
The runner resolves the scenario (file, override seed), runs the pure
experiment, writes the report bundle under results/<experiment>_<seed>/ and
raises InvariantViolation afterwards if a hard check failed.
"""

import datetime
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Union

from cinf_lab.config import RESULTS_DIR, ScenarioConfig, load_scenario, scenario_path
from cinf_lab.core.experiments import (
    run_bandwidth_sweep,
    run_caf_chirp_demo,
    run_capacity_sweep,
    run_clipping_demo,
    run_cucaracha_demo,
    run_delta_sigma_demo,
)
from cinf_lab.core.reports import ExperimentReport, save_report
from cinf_lab.errors import ConfigError

logger = logging.getLogger(__name__)


@dataclass
class ExperimentProtocol:
    """A named demonstration and where its default scenario lives."""
    name: str
    description: str
    run: Callable[[ScenarioConfig], ExperimentReport]
    scenario_file: Path


@dataclass
class ExperimentOutcome:
    protocol: str
    report: Optional[ExperimentReport]
    report_path: Optional[Path]
    error: Optional[str] = None

    @property
    def passed(self) -> bool:
        return self.report is not None and self.error is None and self.report.passed


class ExperimentRunner:
    """
    Runs the lab's demonstrations and archives their reports.

    Protocol groups:
    - Bandwidth: how observation bandwidth hides or exposes outliers
    - CAF: linear vs complementary ADiC paths, SNR and capacity
    - Structure: delta-sigma and clipping amplitude statistics
    - Spectral: PSD reshaping by an ADiC
    """

    SUITES: Dict[str, List[str]] = {
        "acceptance": ["bandwidth-sweep", "caf-chirp", "capacity-sweep", "delta-sigma", "clipping", "cucaracha"],
        "quick": ["caf-chirp", "clipping", "cucaracha"],
        "sweeps": ["bandwidth-sweep", "capacity-sweep"],
    }

    def __init__(self, results_dir: Union[str, Path, None] = None):
        self.results_dir = Path(results_dir) if results_dir else RESULTS_DIR
        self.results_dir.mkdir(parents=True, exist_ok=True)
        self.protocols = self._load_protocols()

    def _load_protocols(self) -> Dict[str, ExperimentProtocol]:
        protocols = {}

        protocols["bandwidth-sweep"] = ExperimentProtocol(
            name="Observation Bandwidth Sweep",
            description="Gaussian sigma, pulse peaks and kurtosis of an impulsive mixture vs lowpass bandwidth",
            run=run_bandwidth_sweep,
            scenario_file=scenario_path("bandwidth-sweep"),
        )
        protocols["caf-chirp"] = ExperimentProtocol(
            name="CAF Chirp Demonstration",
            description="Chirp in thermal + impulsive noise through linear and CAF paths, stages I-V",
            run=run_caf_chirp_demo,
            scenario_file=scenario_path("caf-chirp"),
        )
        protocols["capacity-sweep"] = ExperimentProtocol(
            name="Capacity Sweep",
            description="Baseband SNR and capacity gain vs outlier-to-thermal power ratio at 10 and 30 dB",
            run=run_capacity_sweep,
            scenario_file=scenario_path("capacity-sweep"),
        )
        protocols["delta-sigma"] = ExperimentProtocol(
            name="Delta-Sigma Contrast",
            description="Two-level modulator outputs, Gaussian vs impulsive in a narrow band",
            run=run_delta_sigma_demo,
            scenario_file=scenario_path("delta-sigma"),
        )
        protocols["clipping"] = ExperimentProtocol(
            name="Clipping Distortion",
            description="OFDM clipping distortion as outlier noise and its CAF repair",
            run=run_clipping_demo,
            scenario_file=scenario_path("clipping"),
        )
        protocols["cucaracha"] = ExperimentProtocol(
            name="Spectral Reshaping",
            description="PSD of shaped impulsive noise before and after a feedback ADiC",
            run=run_cucaracha_demo,
            scenario_file=scenario_path("cucaracha"),
        )
        return protocols

    def resolve_config(self, protocol_name: str, config_path: Union[str, Path, None] = None,
                       seed: Optional[int] = None) -> ScenarioConfig:
        if protocol_name not in self.protocols:
            raise ValueError(f"Unknown protocol: {protocol_name}")
        protocol = self.protocols[protocol_name]
        cfg = load_scenario(config_path or protocol.scenario_file)
        if cfg.experiment != protocol_name:
            raise ConfigError(f"scenario is for '{cfg.experiment}', not '{protocol_name}'")
        return cfg.with_overrides(seed=seed)

    def run_experiment(self, protocol_name: str, config: Optional[ScenarioConfig] = None,
                       config_path: Union[str, Path, None] = None, seed: Optional[int] = None,
                       out_dir: Union[str, Path, None] = None, dump_stages: bool = False,
                       strict: bool = True) -> ExperimentOutcome:
        """
        Run one protocol and save its report bundle.

        Args:
            protocol_name: Key of the protocol to run
            config: Validated scenario; overrides config_path
            config_path: Scenario file; defaults to the protocol's shipped scenario
            seed: Replaces the scenario's master seed
            out_dir: Report directory; defaults to results/<protocol>_seed<seed>
            dump_stages: Also write intermediate signals as CSV and binary
            strict: Raise InvariantViolation after saving when a hard check fails
        """
        if protocol_name not in self.protocols:
            raise ValueError(f"Unknown protocol: {protocol_name}")
        protocol = self.protocols[protocol_name]
        cfg = config.with_overrides(seed=seed) if config else self.resolve_config(protocol_name, config_path, seed)

        print(f"🧪 Running {protocol.name}")
        print(f"📋 {protocol.description}")

        report = protocol.run(cfg)
        path = self._save_result(report, out_dir or self.results_dir / f"{protocol_name}_seed{cfg.seed}",
                                 dump_stages)

        for check in report.checks:
            mark = "✅" if check.passed else ("❌" if check.hard else "⚠️ ")
            print(f"   {mark} {check.name}: {_format_value(check.value)} (bound {check.bound})")
        print(f"✅ Experiment complete: {path}")

        if strict:
            report.raise_on_violation()
        return ExperimentOutcome(protocol_name, report, path)

    def _save_result(self, report: ExperimentReport, out_dir: Union[str, Path], dump_stages: bool) -> Path:
        return save_report(report, out_dir, dump_stages)

    def run_experiment_suite(self, suite_name: str = "acceptance", seed: Optional[int] = None,
                             dump_stages: bool = False) -> Dict[str, ExperimentOutcome]:
        if suite_name not in self.SUITES:
            raise ValueError(f"Unknown suite: {suite_name}")

        outcomes: Dict[str, ExperimentOutcome] = {}
        suite_protocols = self.SUITES[suite_name]
        print(f"🧪 Running {suite_name} experiment suite")
        print(f"📋 {len(suite_protocols)} protocols")

        for protocol_name in suite_protocols:
            try:
                outcomes[protocol_name] = self.run_experiment(protocol_name, seed=seed, dump_stages=dump_stages,
                                                              strict=False)
            except Exception as e:
                logger.exception("protocol %s failed", protocol_name)
                print(f"❌ Failed to run {protocol_name}: {e}")
                outcomes[protocol_name] = ExperimentOutcome(protocol_name, None, None, str(e))

        self._generate_suite_summary(outcomes, suite_name)
        return outcomes

    def _generate_suite_summary(self, outcomes: Dict[str, ExperimentOutcome], suite_name: str) -> Path:
        summary = {
            "suite_name": suite_name,
            "timestamp": datetime.datetime.now().isoformat(),
            "protocols_run": len(outcomes),
            "passed": sum(1 for o in outcomes.values() if o.passed),
            "protocol_summaries": {},
        }
        for name, outcome in outcomes.items():
            entry = {"passed": outcome.passed, "error": outcome.error,
                     "report": str(outcome.report_path) if outcome.report_path else None}
            if outcome.report is not None:
                entry["failed_checks"] = [c.name for c in outcome.report.failed_checks]
                entry["flagged_checks"] = [c.name for c in outcome.report.flagged_checks]
            summary["protocol_summaries"][name] = entry

        summary_filepath = self.results_dir / f"suite_summary_{suite_name}_{datetime.date.today().isoformat()}.json"
        with open(summary_filepath, "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, ensure_ascii=False)

        print("\n📊 Suite Summary:")
        print(f"   Protocols run: {summary['protocols_run']}")
        print(f"   Passed: {summary['passed']}")
        return summary_filepath


def _format_value(value: Optional[float]) -> str:
    return "-" if value is None else f"{value:.4g}"
