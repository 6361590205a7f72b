#!/usr/bin/env python3
"""
CAF Pipeline - Complementary ADiC filtering and the digital front end
Part of the CINF Lab outlier-noise mitigation infrastructure

Stages of the complementary arrangement:

    I   input
    II  bandpass(I)            signal band, untouched
    III bandstop(I)            excess band, carries the outlier structure
    IV  ADiC(III)              outliers replaced by the clipping level
    V   II + IV                output, delayed by D against I

The digital front end chains an optional wideband front-end filter, a VGA
under robust AGC, a clipper, a 1-bit delta-sigma modulator, a pre-CAF
reconstruction filter, the CAF and a decimator. Any stage may be bypassed.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
import numpy.typing as npt

from cinf_lab.core.linear_filters import ComplementaryPair, FilterKernel, apply, design_complementary_pair
from cinf_lab.core.nonlinear_core import (
    AdicResult,
    FeedbackAdic,
    QtfState,
    hard_clip,
    qtf_step,
    snapshot_type,
)
from cinf_lab.core.signal_core import Signal, add, decimate, delay, scale
from cinf_lab.errors import CinfError, SignalMismatchError, StageError

logger = logging.getLogger(__name__)

# ── CONFIG ───────────────────────────────────────────────
CAF_DEFAULT_BETA = 3.0  # Gaussian excess-band noise is blanked ~2e-6 of the time
CAF_DEFAULT_GAIN_FRACTION = 0.05
CAF_DEFAULT_INITIAL_SCALE = 1.0
AGC_DEFAULT_QUANTILE = 0.75
AGC_DEFAULT_RATE = 1e-3  # eta, per sample
AGC_DEFAULT_STEP_FRACTION = 0.01  # tracker step / setpoint
# ─────────────────────────────────────────────────────────


# ── CAF ──────────────────────────────────────────────────

@dataclass(frozen=True, eq=False)
class CafConfig:
    """Complementary pair plus the ADiC settings for the excess-band path."""
    pair: ComplementaryPair
    tau: Optional[float] = None  # seconds; None = 1/(2*pi*low_edge)
    beta: float = CAF_DEFAULT_BETA
    gain_fraction: Optional[float] = CAF_DEFAULT_GAIN_FRACTION
    initial_scale: float = CAF_DEFAULT_INITIAL_SCALE
    step_gain: Optional[float] = None
    enabled: bool = True

    @property
    def effective_tau(self) -> float:
        if self.tau is not None:
            return self.tau
        return 1.0 / (2.0 * math.pi * self.pair.low_edge)

    @property
    def delay(self) -> int:
        return self.pair.delay

    @property
    def f_c(self) -> float:
        """High-frequency edge of the bandstop notch."""
        return self.pair.high_edge

    def make_adic(self, record_telemetry: bool = False) -> FeedbackAdic:
        # the bandstop output is a D-sample transient before the signal arrives
        return FeedbackAdic(self.effective_tau, self.beta, self.gain_fraction, self.initial_scale,
                            self.step_gain, record_telemetry=record_telemetry,
                            holdoff=self.delay, training=self.delay)

    def with_enabled(self, enabled: bool) -> "CafConfig":
        return CafConfig(self.pair, self.tau, self.beta, self.gain_fraction, self.initial_scale,
                         self.step_gain, enabled)

    def describe(self) -> Dict[str, Any]:
        return {
            "low_edge_hz": self.pair.low_edge,
            "high_edge_hz": self.pair.high_edge,
            "rate_hz": self.pair.rate,
            "n_taps": int(self.pair.bandpass.coefficients.size),
            "delay_samples": self.delay,
            "tau_s": self.effective_tau,
            "beta": self.beta,
            "gain_fraction": self.gain_fraction,
            "initial_scale": self.initial_scale,
            "enabled": self.enabled,
        }


def build_caf_config(low_edge: float, high_edge: float, rate: float, n_taps: int = 511,
                     **adic: Any) -> CafConfig:
    return CafConfig(design_complementary_pair(low_edge, high_edge, rate, n_taps), **adic)


def chirp_caf_edges(max_signal_frequency: float) -> Tuple[float, float]:
    """high_edge at the chirp's top frequency, low_edge at a fifth of it."""
    return max_signal_frequency / 5.0, max_signal_frequency


@dataclass
class CafStages:
    input: Signal  # I
    bandpass: Signal  # II
    bandstop: Signal  # III
    adic: Signal  # IV
    output: Signal  # V
    adic_result: Optional[AdicResult] = None

    @property
    def blank_duty(self) -> float:
        return self.adic_result.blank_duty if self.adic_result is not None else 0.0

    def as_dict(self) -> Dict[str, Signal]:
        return {"I": self.input, "II": self.bandpass, "III": self.bandstop, "IV": self.adic, "V": self.output}


def caf_stages(input: Signal, config: CafConfig, record_telemetry: bool = False) -> CafStages:
    pair = config.pair
    if input.sample_rate != pair.rate:
        raise SignalMismatchError(f"input rate {input.sample_rate} Hz does not match pair design rate {pair.rate} Hz")

    bandpass = apply(pair.bandpass, input)
    bandstop = apply(pair.bandstop, input)

    if not config.enabled:
        return CafStages(input, bandpass, bandstop, bandstop, delay(input, pair.delay))

    result = config.make_adic(record_telemetry).process(bandstop)
    logger.debug("CAF: blanked %d of %d excess-band samples", result.blanked_count, len(input))
    return CafStages(input, bandpass, bandstop, result.output, add(bandpass, result.output), result)


def caf_process(input: Signal, config: CafConfig) -> Signal:
    """Stage V of the complementary arrangement."""
    return caf_stages(input, config).output


# ── delta-sigma modulator ────────────────────────────────

@snapshot_type
@dataclass(frozen=True)
class DeltaSigmaState:
    """Error-feedback 1-bit modulator with NTF (1 - z^-1)^order."""
    order: int = 2
    integrator_states: Tuple[float, ...] = (0.0, 0.0)  # past quantisation errors, newest first
    input_full_scale: float = 1.0
    quantizer_levels: Tuple[float, float] = (-1.0, 1.0)

    def __post_init__(self):
        if self.order not in (1, 2):
            raise ValueError(f"delta-sigma order must be 1 or 2, got {self.order}")
        if len(self.integrator_states) != self.order:
            raise ValueError(f"order {self.order} needs {self.order} states, got {len(self.integrator_states)}")
        if not all(math.isfinite(v) for v in self.integrator_states):
            raise ValueError("delta-sigma states must be finite")
        if not self.input_full_scale > 0:
            raise ValueError(f"input_full_scale must be positive, got {self.input_full_scale}")
        object.__setattr__(self, "integrator_states", tuple(float(v) for v in self.integrator_states))
        object.__setattr__(self, "quantizer_levels", tuple(float(v) for v in self.quantizer_levels))

    @classmethod
    def initial(cls, order: int = 2, input_full_scale: float = 1.0) -> "DeltaSigmaState":
        return cls(order, (0.0,) * order, input_full_scale)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DeltaSigmaState":
        return cls(int(data["order"]), tuple(data["integrator_states"]), float(data["input_full_scale"]),
                   tuple(data.get("quantizer_levels", (-1.0, 1.0))))


@dataclass
class DeltaSigmaResult:
    output: Signal  # two-valued
    state: DeltaSigmaState
    saturation_count: int  # samples with |input| > full scale


def run_delta_sigma(input: Signal, state: Optional[DeltaSigmaState] = None) -> DeltaSigmaResult:
    state = state or DeltaSigmaState.initial()
    full_scale = state.input_full_scale
    low, high = state.quantizer_levels
    u = (input.samples / full_scale).tolist()
    out = [0.0] * len(u)
    saturated = int(np.count_nonzero(np.abs(input.samples) > full_scale))

    if state.order == 2:
        e1, e2 = state.integrator_states
        for i, x in enumerate(u):
            w = x - 2.0 * e1 + e2
            v = high if w >= 0 else low
            e2, e1 = e1, v - w
            out[i] = v
        new_states = (e1, e2)
    else:
        (e1,) = state.integrator_states
        for i, x in enumerate(u):
            w = x - e1
            v = high if w >= 0 else low
            e1 = v - w
            out[i] = v
        new_states = (e1,)

    if saturated:
        logger.warning("delta-sigma: %d of %d input samples beyond full scale %g", saturated, len(u), full_scale)
    new_state = DeltaSigmaState(state.order, new_states, full_scale, state.quantizer_levels)
    return DeltaSigmaResult(input.with_samples(out, "delta_sigma"), new_state, saturated)


def delta_sigma_modulate(input: Signal, state: Optional[DeltaSigmaState] = None) -> Signal:
    """1-bit output stream at the input rate; levels represent -/+ full scale."""
    return run_delta_sigma(input, state).output


# ── robust AGC ───────────────────────────────────────────

@snapshot_type
@dataclass(frozen=True)
class AgcState:
    """VGA gain steered so a quantile of |clipper output| sits at setpoint."""
    gain: float
    setpoint: float
    envelope_tracker: QtfState
    adaptation_rate: float = AGC_DEFAULT_RATE  # eta
    clip_level: float = 1.0  # V_c

    def __post_init__(self):
        if not (self.gain > 0 and math.isfinite(self.gain)):
            raise ValueError(f"gain must be positive and finite, got {self.gain}")
        if not self.setpoint > 0:
            raise ValueError(f"setpoint must be positive, got {self.setpoint}")
        if self.adaptation_rate < 0:
            raise ValueError(f"adaptation_rate must be nonnegative, got {self.adaptation_rate}")
        if not self.clip_level > 0:
            raise ValueError(f"clip_level must be positive, got {self.clip_level}")

    @classmethod
    def initial(cls, setpoint: float, clip_level: float = 1.0, gain: float = 1.0,
                adaptation_rate: float = AGC_DEFAULT_RATE, quantile: float = AGC_DEFAULT_QUANTILE,
                step_fraction: float = AGC_DEFAULT_STEP_FRACTION) -> "AgcState":
        tracker = QtfState(quantile, step_fraction * setpoint, setpoint)
        return cls(gain, setpoint, tracker, adaptation_rate, clip_level)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AgcState":
        return cls(float(data["gain"]), float(data["setpoint"]), QtfState.from_dict(data["envelope_tracker"]),
                   float(data["adaptation_rate"]), float(data["clip_level"]))


def agc_step(state: AgcState, x: float) -> Tuple[AgcState, float]:
    """VGA output G*x (before clipping); gain and tracker updated from the clipped value."""
    x = float(x)
    y = state.gain * x
    tracker, estimate = qtf_step(state.envelope_tracker, abs(hard_clip(y, state.clip_level)))
    error = min(max((state.setpoint - estimate) / state.setpoint, -1.0), 1.0)
    gain = state.gain * math.exp(state.adaptation_rate * error)
    return AgcState(gain, state.setpoint, tracker, state.adaptation_rate, state.clip_level), y


@dataclass
class AgcResult:
    output: Signal  # VGA output G*x
    clipped: Signal  # clipper output
    gains: npt.NDArray[np.float64]  # gain applied at each sample
    state: AgcState
    clip_count: int

    @property
    def clip_rate(self) -> float:
        return self.clip_count / len(self.output) if len(self.output) else 0.0


def run_agc(input: Signal, state: AgcState) -> AgcResult:
    """agc_step over a whole signal."""
    gain = state.gain
    setpoint = state.setpoint
    v_c = state.clip_level
    eta = state.adaptation_rate
    q_term = 2.0 * state.envelope_tracker.q - 1.0
    mu = state.envelope_tracker.step_gain
    estimate = state.envelope_tracker.estimate

    xs = input.samples.tolist()
    out = [0.0] * len(xs)
    clipped = [0.0] * len(xs)
    gains = np.empty(len(xs))
    clip_count = 0
    for i, x in enumerate(xs):
        y = gain * x
        c = min(max(y, -v_c), v_c)
        if c != y:
            clip_count += 1
        level = abs(c)
        estimate += mu * (((level > estimate) - (level < estimate)) + q_term)
        gains[i] = gain
        out[i] = y
        clipped[i] = c
        error = min(max((setpoint - estimate) / setpoint, -1.0), 1.0)
        gain *= math.exp(eta * error)

    new_state = AgcState(gain, setpoint, QtfState(state.envelope_tracker.q, mu, estimate), eta, v_c)
    return AgcResult(input.with_samples(out, "vga"), input.with_samples(clipped, "clipper"), gains,
                     new_state, clip_count)


# ── digital front end ────────────────────────────────────

@dataclass(frozen=True, eq=False)
class FrontEndChain:
    """Stage configuration; None bypasses a stage."""
    front_end: Optional[FilterKernel] = None  # wideband anti-aliasing, e.g. Bessel-like
    agc: Optional[AgcState] = None
    clip_level: Optional[float] = None  # V_c when no AGC is present
    delta_sigma: Optional[DeltaSigmaState] = None
    pre_caf: Optional[FilterKernel] = None  # reconstructs a multi-level signal from the 1-bit stream
    caf: Optional[CafConfig] = None
    decimation_factor: int = 1
    decimation_kernel: Optional[FilterKernel] = None

    @property
    def effective_clip_level(self) -> Optional[float]:
        if self.agc is not None:
            return self.agc.clip_level
        return self.clip_level


@dataclass
class FrontEndResult:
    output: Signal
    gains: Optional[npt.NDArray[np.float64]] = None
    clip_count: int = 0
    saturation_count: int = 0
    caf: Optional[CafStages] = None
    stage_signals: Dict[str, Signal] = field(default_factory=dict)

    @property
    def blank_duty(self) -> float:
        return self.caf.blank_duty if self.caf is not None else 0.0


def _run_stage(name: str, fn: Callable[..., Any], *args: Any) -> Any:
    try:
        return fn(*args)
    except (CinfError, ValueError) as e:
        raise StageError(name, e) from e


def _decimate(s: Signal, chain: FrontEndChain) -> Signal:
    if chain.decimation_factor == 1 and chain.decimation_kernel is None:
        return s
    kernel = chain.decimation_kernel or FilterKernel.identity()
    return decimate(s, chain.decimation_factor, kernel)


def digital_front_end(input: Signal, chain: FrontEndChain) -> FrontEndResult:
    """front end -> VGA/AGC -> clipper -> delta-sigma -> pre-CAF -> CAF -> decimation."""
    stages: Dict[str, Signal] = {"input": input}
    x = input
    gains = None
    clip_count = saturation_count = 0

    if chain.front_end is not None:
        x = _run_stage("front_end", apply, chain.front_end, x)
        stages["front_end"] = x

    if chain.agc is not None:
        agc = _run_stage("agc", run_agc, x, chain.agc)
        gains = agc.gains
        clip_count = agc.clip_count
        x = agc.clipped
        stages["vga"] = agc.output
        stages["clipper"] = x
    elif chain.clip_level is not None:
        v_c = chain.clip_level
        clipped = _run_stage("clipper", lambda s: s.with_samples(np.clip(s.samples, -v_c, v_c)), x)
        clip_count = int(np.count_nonzero(clipped.samples != x.samples))
        x = clipped
        stages["clipper"] = x

    if chain.delta_sigma is not None:
        modulated = _run_stage("delta_sigma", run_delta_sigma, x, chain.delta_sigma)
        saturation_count = modulated.saturation_count
        x = scale(modulated.output, chain.delta_sigma.input_full_scale)
        stages["delta_sigma"] = modulated.output

    if chain.pre_caf is not None:
        x = _run_stage("pre_caf", apply, chain.pre_caf, x)
        stages["pre_caf"] = x

    caf = None
    if chain.caf is not None:
        caf = _run_stage("caf", caf_stages, x, chain.caf)
        x = caf.output
        stages["caf"] = x

    x = _run_stage("decimation", _decimate, x, chain)
    stages["output"] = x
    return FrontEndResult(x, gains, clip_count, saturation_count, caf, stages)


def linear_reference(clean: Signal, chain: FrontEndChain, gain: float = 1.0) -> Signal:
    """Ideal linear counterpart of the chain: fixed gain, no clipper or modulator, CAF as pure delay."""
    x = clean
    if chain.front_end is not None:
        x = apply(chain.front_end, x)
    x = scale(x, gain)
    if chain.pre_caf is not None:
        x = apply(chain.pre_caf, x)
    if chain.caf is not None:
        x = delay(x, chain.caf.delay)
    return _decimate(x, chain)
