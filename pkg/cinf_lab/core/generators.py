#!/usr/bin/env python3
"""
Generators - Seedable waveform and noise synthesis
Part of the CINF Lab outlier-noise mitigation infrastructure

Every generator is a pure function of (spec, rate, duration): the same
inputs give bit-identical samples. Randomness comes from
numpy.random.default_rng(spec.seed).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import numpy.typing as npt

from cinf_lab.core.linear_filters import FORM_FIR, FilterKernel, apply, is_allpass
from cinf_lab.core.signal_core import Signal
from cinf_lab.errors import FilterDesignError

logger = logging.getLogger(__name__)

AMPLITUDE_DISTRIBUTIONS = ("fixed", "exponential", "pareto")
POLARITIES = ("positive", "bipolar")
CONSTELLATION_ORDERS = (4, 16, 64)


def _sample_count(rate: float, duration: float) -> int:
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    if duration < 0:
        raise ValueError(f"duration must be nonnegative, got {duration}")
    return int(round(duration * rate))


def _check_frequency(freq: float, rate: float, name: str) -> None:
    if not 0 < freq < rate / 2.0:
        raise ValueError(f"{name} = {freq} Hz must lie in (0, {rate / 2.0}) Hz")


@dataclass(frozen=True)
class ChirpSpec:
    f_start: float  # Hz
    f_end: float  # Hz
    duration: float  # seconds
    amplitude: float = 1.0
    phase: float = 0.0  # radians at t = 0

    def validate(self, rate: float) -> None:
        _check_frequency(self.f_start, rate, "f_start")
        _check_frequency(self.f_end, rate, "f_end")
        if not self.duration > 0:
            raise ValueError(f"chirp duration must be positive, got {self.duration}")


@dataclass(frozen=True)
class OfdmSpec:
    n_subcarriers: int  # FFT size, power of two
    symbol_count: int
    constellation_order: int = 4  # square QAM
    active_fraction: float = 1.0  # of the usable bins 1 .. N/2-1
    seed: int = 0
    first_subcarrier: int = 1
    cyclic_prefix: int = 0  # samples of padding per symbol
    amplitude: float = 1.0  # target rms

    @property
    def active_count(self) -> int:
        return max(1, int(round(self.active_fraction * (self.n_subcarriers // 2 - 1))))

    def validate(self) -> None:
        n = self.n_subcarriers
        if n < 4 or n & (n - 1):
            raise ValueError(f"n_subcarriers must be a power of two >= 4, got {n}")
        if self.symbol_count < 1:
            raise ValueError(f"symbol_count must be >= 1, got {self.symbol_count}")
        if self.constellation_order not in CONSTELLATION_ORDERS:
            raise ValueError(f"constellation_order must be one of {CONSTELLATION_ORDERS}")
        if not 0 < self.active_fraction <= 1:
            raise ValueError(f"active_fraction must lie in (0, 1], got {self.active_fraction}")
        if self.first_subcarrier < 1 or self.first_subcarrier + self.active_count > n // 2:
            raise ValueError(
                f"active bins {self.first_subcarrier}..{self.first_subcarrier + self.active_count - 1} "
                f"exceed the usable range 1..{n // 2 - 1}")
        if self.cyclic_prefix < 0 or self.cyclic_prefix > n:
            raise ValueError(f"cyclic_prefix must lie in [0, {n}], got {self.cyclic_prefix}")
        if self.amplitude < 0:
            raise ValueError(f"amplitude must be nonnegative, got {self.amplitude}")


@dataclass(frozen=True, eq=False)
class ImpulsiveNoiseSpec:
    arrival_rate: float  # lambda, events per second
    amplitude_distribution: str = "fixed"  # fixed | exponential | pareto
    pulse_shape: Optional[FilterKernel] = None  # None = unit delta
    seed: int = 0
    amplitude: float = 1.0  # scale of the amplitude draw
    polarity: str = "positive"  # positive | bipolar; pareto is always two-sided
    tail_index: float = 2.5

    def __post_init__(self):
        if not self.arrival_rate > 0:
            raise ValueError(f"arrival_rate must be positive, got {self.arrival_rate}")
        if self.amplitude_distribution not in AMPLITUDE_DISTRIBUTIONS:
            raise ValueError(f"Unknown amplitude distribution: {self.amplitude_distribution}")
        if self.polarity not in POLARITIES:
            raise ValueError(f"Unknown polarity: {self.polarity}")
        if not self.tail_index > 1:
            raise ValueError(f"tail_index must exceed 1 for a finite mean, got {self.tail_index}")


@dataclass(frozen=True)
class GaussianNoiseSpec:
    sigma: float
    seed: int = 0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError(f"sigma must be nonnegative, got {self.sigma}")


@dataclass(frozen=True)
class ImpulseEvents:
    """Event sample indices (sorted) and signed amplitudes."""
    indices: npt.NDArray[np.int64]
    amplitudes: npt.NDArray[np.float64]

    def __len__(self) -> int:
        return int(self.indices.size)


# ── deterministic waveforms ──────────────────────────────

def gen_linear_chirp(spec: ChirpSpec, rate: float) -> Signal:
    """A*sin(phase + 2*pi*(f0*t + (f1 - f0)*t^2/(2T)))."""
    spec.validate(rate)
    t = np.arange(_sample_count(rate, spec.duration)) / rate
    sweep = (spec.f_end - spec.f_start) / (2.0 * spec.duration)
    phase = spec.phase + 2.0 * np.pi * (spec.f_start * t + sweep * t * t)
    return Signal(spec.amplitude * np.sin(phase), rate, label="chirp")


def gen_tone(freq: float, amplitude: float, rate: float, duration: float, phase: float = 0.0) -> Signal:
    _check_frequency(freq, rate, "freq")
    t = np.arange(_sample_count(rate, duration)) / rate
    return Signal(amplitude * np.sin(phase + 2.0 * np.pi * freq * t), rate, label="tone")


def _qam_symbols(rng: np.random.Generator, order: int, shape) -> npt.NDArray[np.complex128]:
    m = int(round(math.sqrt(order)))
    levels = 2.0 * np.arange(m) - (m - 1)
    i = levels[rng.integers(0, m, size=shape)]
    q = levels[rng.integers(0, m, size=shape)]
    return (i + 1j * q) / math.sqrt(2.0 * (m * m - 1) / 3.0)


def gen_ofdm_burst(spec: OfdmSpec, rate: float) -> Signal:
    """Real passband OFDM from conjugate-symmetric subcarrier loading, rms = amplitude."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_subcarriers
    bins = np.arange(spec.first_subcarrier, spec.first_subcarrier + spec.active_count)

    spectrum = np.zeros((spec.symbol_count, n // 2 + 1), dtype=np.complex128)
    spectrum[:, bins] = _qam_symbols(rng, spec.constellation_order, (spec.symbol_count, bins.size))
    symbols = np.fft.irfft(spectrum, n=n, axis=1)
    if spec.cyclic_prefix:
        symbols = np.concatenate([symbols[:, n - spec.cyclic_prefix:], symbols], axis=1)

    waveform = symbols.reshape(-1)
    rms = math.sqrt(float(np.mean(waveform * waveform)))
    return Signal(waveform * (spec.amplitude / rms), rate, label="ofdm")


# ── noise processes ──────────────────────────────────────

def draw_impulse_events(spec: ImpulsiveNoiseSpec, rate: float, duration: float) -> ImpulseEvents:
    """Poisson arrivals quantised to the nearest sample, with amplitude draws."""
    n = _sample_count(rate, duration)
    rng = np.random.default_rng(spec.seed)
    count = int(rng.poisson(spec.arrival_rate * duration))
    times = rng.uniform(0.0, duration, count)

    if spec.amplitude_distribution == "fixed":
        amplitudes = np.full(count, float(spec.amplitude))
    elif spec.amplitude_distribution == "exponential":
        amplitudes = rng.exponential(spec.amplitude, count)
    else:
        amplitudes = spec.amplitude * (1.0 + rng.pareto(spec.tail_index, count))
        amplitudes *= rng.choice([-1.0, 1.0], size=count)
    if spec.polarity == "bipolar" and spec.amplitude_distribution != "pareto":
        amplitudes *= rng.choice([-1.0, 1.0], size=count)

    if n == 0:
        return ImpulseEvents(np.zeros(0, dtype=np.int64), np.zeros(0))
    indices = np.minimum(np.rint(times * rate).astype(np.int64), n - 1)
    order = np.argsort(indices, kind="stable")
    return ImpulseEvents(indices[order], amplitudes[order])


def render_events(events: ImpulseEvents, n_samples: int, rate: float,
                  pulse_shape: Optional[FilterKernel] = None) -> Signal:
    """Place each event's pulse; coincident events add."""
    x = np.zeros(n_samples)
    if pulse_shape is None or n_samples == 0:
        np.add.at(x, events.indices, events.amplitudes)
        return Signal(x, rate, label="impulsive")

    if pulse_shape.form == FORM_FIR:
        taps = pulse_shape.coefficients
        for index, amplitude in zip(events.indices.tolist(), events.amplitudes.tolist()):
            stop = min(n_samples, index + taps.size)
            x[index:stop] += amplitude * taps[:stop - index]
        return Signal(x, rate, label="impulsive")

    np.add.at(x, events.indices, events.amplitudes)
    return Signal(pulse_shape.lfilter(x), rate, label="impulsive")


def gen_impulsive_noise(spec: ImpulsiveNoiseSpec, rate: float, duration: float) -> Signal:
    events = draw_impulse_events(spec, rate, duration)
    logger.debug("impulsive noise: %d events over %.4g s (lambda=%g/s)", len(events), duration,
                 spec.arrival_rate)
    return render_events(events, _sample_count(rate, duration), rate, spec.pulse_shape)


def gen_gaussian_noise(spec: GaussianNoiseSpec, rate: float, duration: float) -> Signal:
    n = _sample_count(rate, duration)
    if spec.sigma == 0:
        return Signal(np.zeros(n), rate, label="gaussian")
    rng = np.random.default_rng(spec.seed)
    return Signal(spec.sigma * rng.standard_normal(n), rate, label="gaussian")


# ── spectral ambiguity ───────────────────────────────────

def disperse_impulse_to_chirp(s: Signal, dispersion: FilterKernel) -> Signal:
    """Pass s through an allpass; magnitude spectrum kept, energy spread in time."""
    if not is_allpass(dispersion):
        raise FilterDesignError("dispersion kernel is not allpass")
    return apply(dispersion, s)


def morph_event_train(events: Signal, response: FilterKernel) -> Signal:
    """Convolve an event train with a first- or second-order response."""
    if response.order > 2:
        raise FilterDesignError(f"morphing responses are limited to order 2, got order {response.order}")
    return apply(response, events)
