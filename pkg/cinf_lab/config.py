#!/usr/bin/env python3
"""
Config - Scenario models and loading
Part of the CINF Lab outlier-noise mitigation infrastructure

A scenario fully describes one experiment run: waveform, noise mixture,
pipeline settings, sweep axes, check tolerances and the master seed. Files
are JSON or YAML and are validated into pydantic models; the validated
model is echoed into every report so a run can be regenerated from it.
"""

import json
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from cinf_lab.errors import ConfigError

load_dotenv()

# ── CONFIG ───────────────────────────────────────────────
SCENARIO_DIR = Path(__file__).parent / "scenarios"
RESULTS_DIR = Path(os.getenv("CINF_RESULTS_DIR", "results"))
MAX_SAMPLES = 10_000_000
EXPERIMENTS = ("bandwidth-sweep", "caf-chirp", "capacity-sweep", "delta-sigma", "clipping", "cucaracha")
# ─────────────────────────────────────────────────────────

ExperimentName = Literal["bandwidth-sweep", "caf-chirp", "capacity-sweep", "delta-sigma", "clipping", "cucaracha"]


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class WaveformConfig(_Model):
    kind: Literal["chirp", "ofdm", "tone", "none"] = "chirp"
    amplitude: float = Field(1.0, ge=0)
    phase: float = 0.0
    # chirp
    f_start: float = Field(2.5e3, gt=0)
    f_end: float = Field(50e3, gt=0)
    # tone
    frequency: float = Field(1e3, gt=0)
    # ofdm
    n_subcarriers: int = 1024
    symbol_count: int = Field(64, ge=1)
    constellation_order: Literal[4, 16, 64] = 4
    active_fraction: float = Field(0.25, gt=0, le=1)
    first_subcarrier: int = Field(32, ge=1)
    cyclic_prefix: int = Field(0, ge=0)

    @property
    def max_frequency(self) -> float:
        if self.kind == "chirp":
            return max(self.f_start, self.f_end)
        return self.frequency

    @model_validator(mode="after")
    def _check_ofdm(self) -> "WaveformConfig":
        n = self.n_subcarriers
        if n < 4 or n & (n - 1):
            raise ValueError(f"n_subcarriers must be a power of two >= 4, got {n}")
        if self.kind == "ofdm":
            active = max(1, int(round(self.active_fraction * (n // 2 - 1))))
            if self.first_subcarrier + active > n // 2:
                raise ValueError(f"active bins {self.first_subcarrier}..{self.first_subcarrier + active - 1} "
                                 f"exceed the usable range 1..{n // 2 - 1}")
            if self.cyclic_prefix > n:
                raise ValueError(f"cyclic_prefix must not exceed n_subcarriers, got {self.cyclic_prefix}")
        return self


class GaussianNoiseConfig(_Model):
    """Thermal noise; snr_db (signal band) takes precedence over an absolute sigma."""
    sigma: float = Field(0.0, ge=0)
    snr_db: Optional[float] = None
    lowpass_hz: Optional[float] = Field(None, gt=0)
    lowpass_order: int = Field(4, ge=2, le=8)


class PulseShapeConfig(_Model):
    design: Literal["delta", "first_order_lowpass", "bessel_lowpass", "fir_lowpass", "differentiator"] = "delta"
    corner_hz: Optional[float] = Field(None, gt=0)
    order: int = Field(4, ge=2, le=8)
    n_taps: int = Field(101, ge=1)
    peak: Optional[float] = Field(None, gt=0)  # rescale the pulse so its peak equals this

    @model_validator(mode="after")
    def _check_taps(self) -> "PulseShapeConfig":
        if self.design == "fir_lowpass" and self.n_taps % 2 == 0:
            raise ValueError(f"pulse n_taps must be odd, got {self.n_taps}")
        return self


class ImpulsiveNoiseConfig(_Model):
    enabled: bool = True
    arrival_rate: float = Field(5000.0, gt=0)  # events per second
    distribution: Literal["fixed", "exponential", "pareto"] = "fixed"
    amplitude: float = Field(1.0, ge=0)
    amplitude_sigmas: Optional[float] = Field(None, ge=0)  # amplitude in thermal sigmas, overrides amplitude
    polarity: Literal["positive", "bipolar"] = "positive"
    tail_index: float = Field(2.5, gt=1)
    pulse: PulseShapeConfig = PulseShapeConfig()


class PipelineConfig(_Model):
    caf_enabled: bool = True
    low_edge_hz: Optional[float] = Field(None, gt=0)  # None = derived from the waveform
    high_edge_hz: Optional[float] = Field(None, gt=0)
    n_taps: int = Field(511, ge=3)
    beta: float = Field(3.0, gt=0)
    gain_fraction: Optional[float] = Field(0.05, gt=0)
    initial_scale: float = Field(1.0, gt=0)
    tau: Optional[float] = Field(None, gt=0)
    settle: Optional[int] = Field(None, ge=0)  # None = n_taps
    # full digital front end
    digital_front_end: bool = False
    front_end_corner_hz: Optional[float] = Field(None, gt=0)
    front_end_order: int = Field(4, ge=2, le=8)
    clip_level: Optional[float] = Field(None, gt=0)
    agc_setpoint: Optional[float] = Field(None, gt=0)
    agc_rate: float = Field(1e-3, gt=0)
    agc_quantile: float = Field(0.75, gt=0, lt=1)
    delta_sigma_order: Optional[Literal[1, 2]] = None
    full_scale: float = Field(1.0, gt=0)
    pre_caf_length: int = Field(4, ge=1)
    pre_caf_stages: int = Field(3, ge=1)
    decimation_factor: int = Field(1, ge=1)
    decimation_taps: int = Field(255, ge=1)

    @model_validator(mode="after")
    def _check_taps(self) -> "PipelineConfig":
        if self.n_taps % 2 == 0:
            raise ValueError(f"n_taps must be odd for a linear-phase pair, got {self.n_taps}")
        return self


class SweepConfig(_Model):
    bandwidths_hz: List[float] = Field(default_factory=list)
    taps_per_bandwidth: float = Field(8.0, gt=0)
    outlier_to_thermal_db: List[float] = Field(default_factory=list)
    thermal_snr_db: List[float] = Field(default_factory=lambda: [10.0, 30.0])

    @model_validator(mode="after")
    def _check_grid(self) -> "SweepConfig":
        if any(b <= 0 for b in self.bandwidths_hz):
            raise ValueError("bandwidths_hz must be positive")
        if len(set(self.bandwidths_hz)) != len(self.bandwidths_hz):
            raise ValueError("bandwidths_hz contains duplicates")
        return self


class AnalysisConfig(_Model):
    narrowband_hz: Tuple[float, float] = (2e3, 5e3)
    narrowband_taps: int = Field(2001, ge=3)
    clip_fraction: float = Field(0.7, gt=0)
    band_margin: float = Field(0.2, ge=0, lt=1)
    psd_segment: int = Field(4096, ge=16)
    psd_bands: int = Field(16, ge=2)
    adic_corner_hz: Optional[float] = Field(None, gt=0)  # tau = 1/(2*pi*corner) for a standalone ADiC
    shaping_corner_hz: Optional[float] = Field(None, gt=0)
    shaping_order: int = Field(4, ge=2, le=8)
    dither_sigma: float = Field(0.0, ge=0)
    histogram_bins: int = Field(101, ge=2)


class CheckConfig(_Model):
    no_harm_db: float = Field(0.1, ge=0)
    capacity_tolerance: float = Field(0.01, ge=0)
    sigma_slope: float = 0.5
    sigma_slope_tolerance: float = Field(0.05, ge=0)
    pulse_slope: float = 1.0
    pulse_slope_tolerance: float = Field(0.1, ge=0)
    pileup_kurtosis_tolerance: float = Field(0.5, ge=0)
    impulsive_kurtosis_min: float = 10.0
    two_level_kurtosis_tolerance: float = Field(0.05, ge=0)
    gaussian_kurtosis_tolerance: float = Field(0.5, ge=0)
    impulsive_narrowband_kurtosis_min: float = 6.0
    allpass_psd_tolerance: float = Field(1e-9, ge=0)
    residual_growth_tolerance: float = Field(0.01, ge=0)  # relative, stopband leak of the repair


class ScenarioConfig(_Model):
    experiment: ExperimentName
    description: str = ""
    seed: int = Field(0, ge=0)
    sample_rate: float = Field(1e6, gt=0)
    duration: float = Field(0.1, gt=0)
    waveform: WaveformConfig = WaveformConfig()
    gaussian: GaussianNoiseConfig = GaussianNoiseConfig()
    impulsive: ImpulsiveNoiseConfig = ImpulsiveNoiseConfig()
    pipeline: PipelineConfig = PipelineConfig()
    sweep: SweepConfig = SweepConfig()
    analysis: AnalysisConfig = AnalysisConfig()
    checks: CheckConfig = CheckConfig()

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def nyquist(self) -> float:
        return self.sample_rate / 2.0

    @model_validator(mode="after")
    def _check_scale(self) -> "ScenarioConfig":
        if self.n_samples > MAX_SAMPLES:
            raise ValueError(f"{self.n_samples} samples exceeds the desk-scale limit of {MAX_SAMPLES}")
        if self.waveform.kind in ("chirp", "tone") and self.waveform.max_frequency >= self.nyquist:
            raise ValueError(f"waveform frequency {self.waveform.max_frequency} Hz is not below Nyquist")
        if any(b >= self.nyquist for b in self.sweep.bandwidths_hz):
            raise ValueError("bandwidths_hz must lie below Nyquist")
        low, high = self.pipeline.low_edge_hz, self.pipeline.high_edge_hz
        if low is not None and high is not None and not low < high < self.nyquist:
            raise ValueError(f"pipeline edges must satisfy low < high < Nyquist, got ({low}, {high})")
        return self

    def with_overrides(self, seed: Optional[int] = None) -> "ScenarioConfig":
        if seed is None:
            return self
        return self.model_copy(update={"seed": seed})

    def component_seed(self, offset: int) -> int:
        """Generator seeds derive from the master seed: seed, seed + 1, ..."""
        return self.seed + offset


def _read_mapping(path: Path) -> dict:
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def parse_scenario(data: dict, source: str = "<dict>") -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"{source}: invalid scenario\n{e}") from e


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    """Load and validate a JSON or YAML scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Scenario file not found: {path}")
    try:
        data = _read_mapping(path)
    except (json.JSONDecodeError, yaml.YAMLError, UnicodeDecodeError) as e:
        raise ConfigError(f"{path}: cannot parse scenario: {e}") from e
    return parse_scenario(data, str(path))


def scenario_path(experiment: str) -> Path:
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"Unknown experiment: {experiment}")
    return SCENARIO_DIR / f"{experiment.replace('-', '_')}.json"


def default_scenario(experiment: str) -> ScenarioConfig:
    return load_scenario(scenario_path(experiment))


def save_scenario(config: ScenarioConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(config.model_dump(mode="json"), f, indent=2, ensure_ascii=False)
    return path
