#!/usr/bin/env python3
"""
Nonlinear Core - Blanking, quantile tracking and differential clipping
Part of the CINF Lab outlier-noise mitigation infrastructure

The intermittently nonlinear primitives. Every operation does O(1) work and
keeps O(1) state per sample:

- blank / hard_clip: memoryless maps
- qtf_step: quantile tracking filter Q <- Q + mu*(sign(x - Q) + 2q - 1)
- tukey_fences: [Q1 - beta*IQR, Q3 + beta*IQR] from two trackers
- adic_step: feedback ADiC, outliers of x - chi are replaced by chi
- basic_adic_step: outliers of x are replaced by the quartile mid-range

Pure step functions take and return frozen states. FeedbackAdic and
BasicAdic run the same recurrences over whole Signals with plain local
floats and can resume from a returned state.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, Type, Union

import numpy as np
import numpy.typing as npt

from cinf_lab.core.signal_core import Signal
from cinf_lab.errors import DiscretizationError

logger = logging.getLogger(__name__)

# ── CONFIG ───────────────────────────────────────────────
DEFAULT_BETA = 1.5
DEFAULT_GAIN_FRACTION = 0.05  # mu = gain_fraction * IQR
DEFAULT_MIN_STEP = 1e-12
DEFAULT_INITIAL_SCALE = 1.0
# ─────────────────────────────────────────────────────────

_SNAPSHOT_TYPES: Dict[str, Type] = {}


def snapshot_type(cls):
    """Register a state class for save/load_state_snapshot."""
    _SNAPSHOT_TYPES[cls.__name__] = cls
    return cls


def _sign(value: float) -> int:
    value = float(value)
    return (value > 0) - (value < 0)


# ── blanking ─────────────────────────────────────────────

@dataclass(frozen=True)
class BlankingRange:
    alpha_minus: float
    alpha_plus: float

    def __post_init__(self):
        lo, hi = float(self.alpha_minus), float(self.alpha_plus)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("blanking range bounds must not be NaN")
        if math.isfinite(lo) != math.isfinite(hi):
            raise ValueError(f"blanking range bounds must be both finite or both infinite, got [{lo}, {hi}]")
        if not math.isfinite(lo) and not (lo < 0 < hi):
            raise ValueError(f"infinite blanking range must be (-inf, +inf), got [{lo}, {hi}]")
        object.__setattr__(self, "alpha_minus", lo)
        object.__setattr__(self, "alpha_plus", hi)

    @classmethod
    def unbounded(cls) -> "BlankingRange":
        return cls(-math.inf, math.inf)

    @property
    def inverted(self) -> bool:
        """Transient startup condition (Q3 < Q1); consumers blank everything."""
        return self.alpha_minus > self.alpha_plus

    @property
    def unbounded_range(self) -> bool:
        return math.isinf(self.alpha_minus)

    def contains(self, x: float) -> bool:
        return not self.inverted and self.alpha_minus <= x <= self.alpha_plus


def blank(x: float, blanking_range: BlankingRange) -> float:
    """x inside the closed range, 0 otherwise."""
    return x if blanking_range.contains(x) else 0.0


def hard_clip(x: float, v_c: float) -> float:
    if not v_c > 0:
        raise ValueError(f"clip level must be positive, got {v_c}")
    return min(max(x, -v_c), v_c)


def hard_clip_signal(s: Signal, v_c: float) -> Signal:
    if not v_c > 0:
        raise ValueError(f"clip level must be positive, got {v_c}")
    return s.with_samples(np.clip(s.samples, -v_c, v_c))


# ── quantile tracking ────────────────────────────────────

@snapshot_type
@dataclass(frozen=True)
class QtfState:
    """One quantile tracker."""
    q: float  # target quantile, (0, 1)
    step_gain: float  # mu_T, per-sample step
    estimate: float  # Q_q

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"quantile must lie in (0, 1), got {self.q}")
        if not (self.step_gain > 0 and math.isfinite(self.step_gain)):
            raise ValueError(f"step gain must be positive and finite, got {self.step_gain}")
        if not math.isfinite(self.estimate):
            raise ValueError(f"tracker estimate must be finite, got {self.estimate}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "QtfState":
        return cls(float(data["q"]), float(data["step_gain"]), float(data["estimate"]))


def qtf_step(state: QtfState, x: float) -> Tuple[QtfState, float]:
    """One update of the tracker; returns the new state and its estimate."""
    x = float(x)
    estimate = state.estimate + state.step_gain * (_sign(x - state.estimate) + (2.0 * state.q - 1.0))
    return QtfState(state.q, state.step_gain, estimate), estimate


@snapshot_type
@dataclass(frozen=True)
class TukeyFenceTracker:
    """First and third quartile trackers plus the fence scale beta.

    With gain_fraction set, both trackers step by max(gain_fraction*IQR,
    min_step) computed from the estimates before each update; with
    gain_fraction None each tracker keeps its own fixed step_gain.
    """
    q1_tracker: QtfState
    q3_tracker: QtfState
    beta: float = DEFAULT_BETA
    gain_fraction: Optional[float] = DEFAULT_GAIN_FRACTION
    min_step: float = DEFAULT_MIN_STEP

    def __post_init__(self):
        if math.isnan(self.beta) or self.beta < 0:
            raise ValueError(f"beta must be >= 0 (inf allowed), got {self.beta}")
        if self.gain_fraction is not None and not self.gain_fraction > 0:
            raise ValueError(f"gain_fraction must be positive or None, got {self.gain_fraction}")
        if not self.min_step > 0:
            raise ValueError(f"min_step must be positive, got {self.min_step}")

    @classmethod
    def initial(cls, center: float, scale: float = DEFAULT_INITIAL_SCALE, beta: float = DEFAULT_BETA,
                gain_fraction: Optional[float] = DEFAULT_GAIN_FRACTION,
                step_gain: Optional[float] = None,
                min_step: float = DEFAULT_MIN_STEP) -> "TukeyFenceTracker":
        """Trackers at center -/+ scale."""
        if not scale > 0:
            raise ValueError(f"initial scale must be positive, got {scale}")
        if step_gain is None:
            step_gain = max((gain_fraction or DEFAULT_GAIN_FRACTION) * 2.0 * scale, min_step)
        return cls(QtfState(0.25, step_gain, center - scale),
                   QtfState(0.75, step_gain, center + scale),
                   beta, gain_fraction, min_step)

    @property
    def iqr(self) -> float:
        return self.q3_tracker.estimate - self.q1_tracker.estimate

    @property
    def mid_range(self) -> float:
        return 0.5 * (self.q1_tracker.estimate + self.q3_tracker.estimate)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TukeyFenceTracker":
        return cls(QtfState.from_dict(data["q1_tracker"]), QtfState.from_dict(data["q3_tracker"]),
                   float(data["beta"]), data.get("gain_fraction"),
                   float(data.get("min_step", DEFAULT_MIN_STEP)))


def tukey_fences(tracker: TukeyFenceTracker) -> BlankingRange:
    """[Q1 - beta*(Q3 - Q1), Q3 + beta*(Q3 - Q1)]; beta = inf gives (-inf, inf)."""
    if math.isinf(tracker.beta):
        return BlankingRange.unbounded()
    q1 = tracker.q1_tracker.estimate
    q3 = tracker.q3_tracker.estimate
    iqr = q3 - q1
    return BlankingRange(q1 - tracker.beta * iqr, q3 + tracker.beta * iqr)


def fence_tracker_step(tracker: TukeyFenceTracker, x: float) -> TukeyFenceTracker:
    q1_state, q3_state = tracker.q1_tracker, tracker.q3_tracker
    if tracker.gain_fraction is not None:
        step = max(tracker.gain_fraction * tracker.iqr, tracker.min_step)
        q1_state = QtfState(q1_state.q, step, q1_state.estimate)
        q3_state = QtfState(q3_state.q, step, q3_state.estimate)
    q1_state, _ = qtf_step(q1_state, x)
    q3_state, _ = qtf_step(q3_state, x)
    return TukeyFenceTracker(q1_state, q3_state, tracker.beta, tracker.gain_fraction, tracker.min_step)


# ── ADiC states and steps ────────────────────────────────

@snapshot_type
@dataclass(frozen=True)
class AdicState:
    """Feedback ADiC: time constant, clipping level chi, trackers on x - chi."""
    tau: float  # seconds
    chi: float
    range_source: TukeyFenceTracker
    sample_count: int = 0

    def __post_init__(self):
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        if not math.isfinite(self.chi):
            raise ValueError(f"chi must be finite, got {self.chi}")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AdicState":
        return cls(float(data["tau"]), float(data["chi"]),
                   TukeyFenceTracker.from_dict(data["range_source"]), int(data.get("sample_count", 0)))


@snapshot_type
@dataclass(frozen=True)
class BasicAdicState:
    """Basic ADiC: quartile trackers on the input itself."""
    tracker: TukeyFenceTracker
    sample_count: int = 0

    @property
    def q1_tracker(self) -> QtfState:
        return self.tracker.q1_tracker

    @property
    def q3_tracker(self) -> QtfState:
        return self.tracker.q3_tracker

    @property
    def beta(self) -> float:
        return self.tracker.beta

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "BasicAdicState":
        return cls(TukeyFenceTracker.from_dict(data["tracker"]), int(data.get("sample_count", 0)))


def _check_discretization(dt: float, tau: float) -> float:
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    ratio = dt / tau
    if ratio > 1.0:
        raise DiscretizationError(f"dt/tau = {ratio:.4g} > 1: forward-Euler update is unstable")
    return ratio


def adic_step(state: AdicState, x: float, dt: float) -> Tuple[AdicState, float]:
    """One forward-Euler step of the feedback ADiC."""
    k = _check_discretization(dt, state.tau)
    x = float(x)
    d = x - state.chi
    tracker = fence_tracker_step(state.range_source, d)
    if tukey_fences(tracker).contains(d):
        return AdicState(state.tau, state.chi + k * d, tracker, state.sample_count + 1), x
    return AdicState(state.tau, state.chi, tracker, state.sample_count + 1), state.chi


def basic_adic_step(state: BasicAdicState, x: float) -> Tuple[BasicAdicState, float]:
    x = float(x)
    tracker = fence_tracker_step(state.tracker, x)
    y = x if tukey_fences(tracker).contains(x) else tracker.mid_range
    return BasicAdicState(tracker, state.sample_count + 1), y


# ── streaming processors ─────────────────────────────────

@dataclass
class AdicTelemetry:
    """Per-sample record of one ADiC run."""
    sample_index: npt.NDArray[np.int64]
    in_range: npt.NDArray[np.bool_]
    inverted: npt.NDArray[np.bool_]
    chi: npt.NDArray[np.float64]  # replacement level (mid-range for the basic ADiC)
    alpha_minus: npt.NDArray[np.float64]
    alpha_plus: npt.NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.sample_index.size)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        table = np.column_stack([self.sample_index, self.in_range.astype(int), self.inverted.astype(int),
                                 self.chi, self.alpha_minus, self.alpha_plus])
        np.savetxt(path, table, delimiter=",", comments="",
                   header="sample_index,in_range,inverted,chi,alpha_minus,alpha_plus",
                   fmt=["%d", "%d", "%d", "%.17g", "%.17g", "%.17g"])
        return path


@dataclass
class AdicResult:
    output: Signal
    state: Any  # AdicState | BasicAdicState
    blanked_count: int
    inverted_count: int
    telemetry: Optional[AdicTelemetry] = None

    @property
    def blank_duty(self) -> float:
        """Fraction of samples replaced."""
        n = len(self.output)
        return self.blanked_count / n if n else 0.0


class _TelemetryBuffer:
    def __init__(self, n: int, start: int):
        self.index = np.arange(start, start + n, dtype=np.int64)
        self.in_range = np.zeros(n, dtype=bool)
        self.inverted = np.zeros(n, dtype=bool)
        self.chi = np.zeros(n)
        self.lo = np.zeros(n)
        self.hi = np.zeros(n)

    def freeze(self) -> AdicTelemetry:
        return AdicTelemetry(self.index, self.in_range, self.inverted, self.chi, self.lo, self.hi)


class _FenceLoop:
    """Unpacked tracker variables shared by both streaming processors."""

    def __init__(self, tracker: TukeyFenceTracker):
        self.q1 = tracker.q1_tracker.estimate
        self.q3 = tracker.q3_tracker.estimate
        self.mu1 = tracker.q1_tracker.step_gain
        self.mu3 = tracker.q3_tracker.step_gain
        self.c1 = 2.0 * tracker.q1_tracker.q - 1.0
        self.c3 = 2.0 * tracker.q3_tracker.q - 1.0
        self.template = tracker

    def pack(self, q1: float, q3: float, mu1: float, mu3: float) -> TukeyFenceTracker:
        t = self.template
        return TukeyFenceTracker(QtfState(t.q1_tracker.q, mu1, q1), QtfState(t.q3_tracker.q, mu3, q3),
                                 t.beta, t.gain_fraction, t.min_step)


class FeedbackAdic:
    """
    Feedback ADiC over whole signals.

    chi follows a first-order lowpass of the input while x - chi stays inside
    the Tukey fences of its own trackers; outside, the output holds chi and
    chi stops moving. beta = inf turns the filter into an exact identity.

    The first holdoff samples pass through with the trackers frozen (a filter
    transient upstream), the next training samples pass through while the
    trackers adapt; blanking starts after both. Counts follow the global
    sample index, so chunked processing matches one pass.
    """

    def __init__(self, tau: float, beta: float = DEFAULT_BETA,
                 gain_fraction: Optional[float] = DEFAULT_GAIN_FRACTION,
                 initial_scale: float = DEFAULT_INITIAL_SCALE,
                 step_gain: Optional[float] = None,
                 min_step: float = DEFAULT_MIN_STEP,
                 record_telemetry: bool = False,
                 holdoff: int = 0,
                 training: int = 0):
        if not tau > 0:
            raise ValueError(f"tau must be positive, got {tau}")
        if holdoff < 0 or training < 0:
            raise ValueError(f"holdoff and training must be >= 0, got {holdoff}, {training}")
        self.tau = tau
        self.beta = beta
        self.gain_fraction = gain_fraction
        self.initial_scale = initial_scale
        self.step_gain = step_gain
        self.min_step = min_step
        self.record_telemetry = record_telemetry
        self.holdoff = int(holdoff)
        self.training = int(training)

    def initial_state(self, first_sample: float) -> AdicState:
        """chi at the first sample, difference trackers at 0 -/+ initial_scale."""
        tracker = TukeyFenceTracker.initial(0.0, self.initial_scale, self.beta, self.gain_fraction,
                                            self.step_gain, self.min_step)
        return AdicState(self.tau, float(first_sample), tracker)

    def process(self, s: Signal, state: Optional[AdicState] = None) -> AdicResult:
        k = _check_discretization(1.0 / s.sample_rate, self.tau if state is None else state.tau)
        if len(s) == 0:
            return AdicResult(s.with_samples([]), state, 0, 0,
                              _TelemetryBuffer(0, 0).freeze() if self.record_telemetry else None)
        if state is None:
            state = self.initial_state(s.samples[0])

        loop = _FenceLoop(state.range_source)
        q1, q3, mu1, mu3, c1, c3 = loop.q1, loop.q3, loop.mu1, loop.mu3, loop.c1, loop.c3
        beta = state.range_source.beta
        gf = state.range_source.gain_fraction
        min_step = state.range_source.min_step
        unbounded = math.isinf(beta)
        chi = state.chi

        xs = s.samples.tolist()
        out = [0.0] * len(xs)
        blanked = inverted_count = 0
        tel = _TelemetryBuffer(len(xs), state.sample_count) if self.record_telemetry else None
        lo, hi = -math.inf, math.inf
        adapt_from = self.holdoff - state.sample_count
        judge_from = adapt_from + self.training

        for i, x in enumerate(xs):
            d = x - chi
            if i < adapt_from:
                out[i] = x
                chi += k * d
                if tel is not None:
                    tel.in_range[i] = True
                    tel.chi[i] = chi
                    tel.lo[i] = lo
                    tel.hi[i] = hi
                continue
            if gf is not None:
                mu1 = gf * (q3 - q1)
                if mu1 < min_step:
                    mu1 = min_step
                mu3 = mu1
            q1 += mu1 * (((d > q1) - (d < q1)) + c1)
            q3 += mu3 * (((d > q3) - (d < q3)) + c3)
            inverted = False
            if not unbounded and i >= judge_from:
                iqr = q3 - q1
                lo = q1 - beta * iqr
                hi = q3 + beta * iqr
                inverted = lo > hi
            if not inverted and lo <= d <= hi:
                out[i] = x
                chi += k * d
                in_range = True
            else:
                out[i] = chi
                blanked += 1
                inverted_count += inverted
                in_range = False
            if tel is not None:
                tel.in_range[i] = in_range
                tel.inverted[i] = inverted
                tel.chi[i] = chi
                tel.lo[i] = lo
                tel.hi[i] = hi

        if inverted_count:
            logger.debug("feedback ADiC: %d samples blanked by inverted fences", inverted_count)

        new_state = AdicState(state.tau, chi, loop.pack(q1, q3, mu1, mu3), state.sample_count + len(xs))
        return AdicResult(s.with_samples(out), new_state, blanked, inverted_count,
                          tel.freeze() if tel is not None else None)


class BasicAdic:
    """Replaces samples outside the Tukey fences of x with the quartile mid-range."""

    def __init__(self, beta: float = DEFAULT_BETA,
                 gain_fraction: Optional[float] = DEFAULT_GAIN_FRACTION,
                 initial_scale: float = DEFAULT_INITIAL_SCALE,
                 step_gain: Optional[float] = None,
                 min_step: float = DEFAULT_MIN_STEP,
                 record_telemetry: bool = False):
        self.beta = beta
        self.gain_fraction = gain_fraction
        self.initial_scale = initial_scale
        self.step_gain = step_gain
        self.min_step = min_step
        self.record_telemetry = record_telemetry

    def initial_state(self, first_sample: float) -> BasicAdicState:
        return BasicAdicState(TukeyFenceTracker.initial(float(first_sample), self.initial_scale, self.beta,
                                                        self.gain_fraction, self.step_gain, self.min_step))

    def process(self, s: Signal, state: Optional[BasicAdicState] = None) -> AdicResult:
        if len(s) == 0:
            return AdicResult(s.with_samples([]), state, 0, 0,
                              _TelemetryBuffer(0, 0).freeze() if self.record_telemetry else None)
        if state is None:
            state = self.initial_state(s.samples[0])

        loop = _FenceLoop(state.tracker)
        q1, q3, mu1, mu3, c1, c3 = loop.q1, loop.q3, loop.mu1, loop.mu3, loop.c1, loop.c3
        beta = state.tracker.beta
        gf = state.tracker.gain_fraction
        min_step = state.tracker.min_step
        unbounded = math.isinf(beta)

        xs = s.samples.tolist()
        out = [0.0] * len(xs)
        blanked = inverted_count = 0
        tel = _TelemetryBuffer(len(xs), state.sample_count) if self.record_telemetry else None
        lo, hi = -math.inf, math.inf

        for i, x in enumerate(xs):
            if gf is not None:
                mu1 = gf * (q3 - q1)
                if mu1 < min_step:
                    mu1 = min_step
                mu3 = mu1
            q1 += mu1 * (((x > q1) - (x < q1)) + c1)
            q3 += mu3 * (((x > q3) - (x < q3)) + c3)
            inverted = False
            if not unbounded:
                iqr = q3 - q1
                lo = q1 - beta * iqr
                hi = q3 + beta * iqr
                inverted = lo > hi
            mid = 0.5 * (q1 + q3)
            if not inverted and lo <= x <= hi:
                out[i] = x
                in_range = True
            else:
                out[i] = mid
                blanked += 1
                inverted_count += inverted
                in_range = False
            if tel is not None:
                tel.in_range[i] = in_range
                tel.inverted[i] = inverted
                tel.chi[i] = mid
                tel.lo[i] = lo
                tel.hi[i] = hi

        if inverted_count:
            logger.debug("basic ADiC: %d samples blanked by inverted fences", inverted_count)

        new_state = BasicAdicState(loop.pack(q1, q3, mu1, mu3), state.sample_count + len(xs))
        return AdicResult(s.with_samples(out), new_state, blanked, inverted_count,
                          tel.freeze() if tel is not None else None)


# ── snapshots ────────────────────────────────────────────

def save_state_snapshot(state: Any, path: Union[str, Path]) -> Path:
    """Write a registered state dataclass as JSON ({"type", "state"})."""
    kind = type(state).__name__
    if kind not in _SNAPSHOT_TYPES:
        raise ValueError(f"Unknown snapshot type: {kind}")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump({"type": kind, "state": asdict(state)}, f, indent=2, ensure_ascii=False)
    return path


def load_state_snapshot(path: Union[str, Path]) -> Any:
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    kind = payload.get("type")
    if kind not in _SNAPSHOT_TYPES:
        raise ValueError(f"Unknown snapshot type: {kind}")
    builder: Callable[[Dict[str, Any]], Any] = _SNAPSHOT_TYPES[kind].from_dict
    return builder(payload["state"])
