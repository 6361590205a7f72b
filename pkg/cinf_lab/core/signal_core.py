#!/usr/bin/env python3
"""
Signal Core - Sample sequences and elementwise plumbing
Part of the CINF Lab outlier-noise mitigation infrastructure

A Signal is an immutable, uniformly sampled, real-valued sequence plus its
sample rate. Every stage of the lab consumes and produces Signals; all
operations here are pure and return new values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Sequence, Union

import numpy as np
import numpy.typing as npt

from cinf_lab.errors import SignalMismatchError

if TYPE_CHECKING:
    from cinf_lab.core.linear_filters import FilterKernel

ArrayLike = Union[Sequence[float], npt.NDArray[np.float64]]


@dataclass(frozen=True)
class TimeGrid:
    """Start time and sample spacing of a Signal (derived, never stored twice)."""
    start_time: float  # seconds
    step: float  # seconds, = 1/sample_rate

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError(f"time step must be positive, got {self.step}")

    def times(self, n_samples: int) -> npt.NDArray[np.float64]:
        return self.start_time + self.step * np.arange(n_samples, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class Signal:
    """Uniformly sampled real-valued sample sequence."""
    samples: npt.NDArray[np.float64]
    sample_rate: float  # Hz
    start_time: float = 0.0  # seconds
    label: str = field(default="", compare=False)

    def __post_init__(self):
        data = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if not (math.isfinite(self.sample_rate) and self.sample_rate > 0):
            raise ValueError(f"sample_rate must be positive and finite, got {self.sample_rate}")
        if data.size and not np.all(np.isfinite(data)):
            raise ValueError("signal samples must be finite (NaN/inf rejected)")
        data.setflags(write=False)
        object.__setattr__(self, "samples", data)
        object.__setattr__(self, "sample_rate", float(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def grid(self) -> TimeGrid:
        return TimeGrid(self.start_time, 1.0 / self.sample_rate)

    def times(self) -> npt.NDArray[np.float64]:
        return self.grid.times(len(self))

    def with_samples(self, samples: ArrayLike, label: str = "") -> "Signal":
        """Same rate and start time, new samples."""
        return Signal(samples, self.sample_rate, self.start_time, label or self.label)


def zeros(n_samples: int, sample_rate: float) -> Signal:
    return Signal(np.zeros(int(n_samples)), sample_rate)


def zeros_like(s: Signal) -> Signal:
    return s.with_samples(np.zeros(len(s)))


def _check_compatible(a: Signal, b: Signal) -> None:
    if len(a) != len(b):
        raise SignalMismatchError(f"length mismatch: {len(a)} vs {len(b)}")
    if a.sample_rate != b.sample_rate:
        raise SignalMismatchError(f"sample rate mismatch: {a.sample_rate} vs {b.sample_rate}")


def add(a: Signal, b: Signal) -> Signal:
    """Elementwise sum of two signals with equal length and rate."""
    _check_compatible(a, b)
    return a.with_samples(a.samples + b.samples)


def subtract(a: Signal, b: Signal) -> Signal:
    _check_compatible(a, b)
    return a.with_samples(a.samples - b.samples)


def negate(s: Signal) -> Signal:
    return s.with_samples(-s.samples)


def scale(s: Signal, factor: float) -> Signal:
    return s.with_samples(factor * s.samples)


def concatenate(a: Signal, b: Signal) -> Signal:
    if a.sample_rate != b.sample_rate:
        raise SignalMismatchError(f"sample rate mismatch: {a.sample_rate} vs {b.sample_rate}")
    return a.with_samples(np.concatenate([a.samples, b.samples]))


def delay(s: Signal, n_samples: int) -> Signal:
    """Shift right by n_samples, zero-filling the front; length preserved."""
    n_samples = int(n_samples)
    if n_samples < 0:
        raise ValueError(f"delay must be nonnegative, got {n_samples}")
    out = np.zeros(len(s))
    if n_samples < len(s):
        out[n_samples:] = s.samples[:len(s) - n_samples]
    return s.with_samples(out)


def decimate(s: Signal, factor: int, anti_alias: "FilterKernel") -> Signal:
    """Filter with anti_alias, then keep every factor-th sample."""
    factor = int(factor)
    if factor < 1:
        raise ValueError(f"decimation factor must be >= 1, got {factor}")

    output_nyquist = s.sample_rate / factor / 2.0
    cutoff = anti_alias.metadata.get("cutoff_hz", anti_alias.metadata.get("corner_hz"))
    if factor > 1 and cutoff is not None and float(np.max(cutoff)) >= output_nyquist:
        raise ValueError(
            f"anti-alias cutoff {cutoff} Hz is not below output Nyquist {output_nyquist} Hz")

    filtered = anti_alias.lfilter(s.samples) if len(s) else s.samples
    return Signal(filtered[::factor], s.sample_rate / factor, s.start_time, s.label)
