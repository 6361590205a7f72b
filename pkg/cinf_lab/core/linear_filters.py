#!/usr/bin/env python3
"""
Linear Filters - Kernel design, application and group-delay accounting
Part of the CINF Lab outlier-noise mitigation infrastructure

A FilterKernel is either a cascade of second-order recursive sections (scipy
"sos" layout) or a finite impulse response. Designs cover the first-order
lowpass of the feedback ADiC, Bessel-like wideband front ends, Kaiser
windowed-sinc lowpass and bandpass filters, exactly complementary
bandpass/bandstop pairs, moving-average cascades and dispersive allpasses.
Kernels are immutable; apply() carries per-call state only.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import signal as sps
from scipy.optimize import brentq

from cinf_lab.core.signal_core import Signal
from cinf_lab.errors import FilterDesignError

logger = logging.getLogger(__name__)

FORM_SOS = "sos"
FORM_FIR = "fir"
FFT_APPLY_MIN_TAPS = 128  # longer FIR kernels use overlap-add convolution
DEFAULT_KAISER_BETA = 6.0
ALLPASS_TOLERANCE = 1e-3
FLAT_DELAY_TOLERANCE = 0.03  # delay drop that ends a Bessel-like passband
MAX_DELAY_RIPPLE = 0.05

FloatArray = npt.NDArray[np.float64]


def _poly_response(coefficients: FloatArray, omega: FloatArray) -> npt.NDArray[np.complex128]:
    """Evaluate sum_k c[k] exp(-j*omega*k) on a grid of digital frequencies."""
    k = np.arange(len(coefficients))
    return np.exp(-1j * np.outer(omega, k)) @ coefficients


def _poly_delay(coefficients: FloatArray, omega: float) -> float:
    """Group delay contribution (samples) of one polynomial in z^-1."""
    k = np.arange(len(coefficients))
    z = np.exp(-1j * omega * k)
    return float(np.real(np.sum(k * coefficients * z) / np.sum(coefficients * z)))


def _section_degree(section: FloatArray) -> int:
    degree = 0
    for poly in (section[:3], section[3:]):
        nonzero = np.flatnonzero(poly)
        if nonzero.size:
            degree = max(degree, int(nonzero[-1]))
    return degree


@dataclass(frozen=True, eq=False)
class FilterKernel:
    """A linear filter with queryable group delay."""
    form: str  # "sos" | "fir"
    coefficients: FloatArray  # (n_sections, 6) for sos, 1-D taps for fir
    nominal_group_delay: float = 0.0  # samples
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        coefficients = np.array(self.coefficients, dtype=np.float64, copy=True)
        if not np.all(np.isfinite(coefficients)):
            raise FilterDesignError("kernel coefficients must be finite")

        if self.form == FORM_FIR:
            coefficients = coefficients.reshape(-1)
            if coefficients.size == 0:
                raise FilterDesignError("FIR kernel needs at least one tap")
        elif self.form == FORM_SOS:
            coefficients = np.atleast_2d(coefficients)
            if coefficients.ndim != 2 or coefficients.shape[1] != 6 or coefficients.shape[0] == 0:
                raise FilterDesignError(f"sos coefficients must have shape (n, 6), got {coefficients.shape}")
            if np.any(coefficients[:, 3] == 0):
                raise FilterDesignError("sos section with a0 = 0")
            coefficients = coefficients / coefficients[:, 3:4]
        else:
            raise FilterDesignError(f"Unknown kernel form: {self.form}")

        coefficients.setflags(write=False)
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "metadata", dict(self.metadata))

        if self.form == FORM_SOS and not self.is_stable():
            raise FilterDesignError(
                f"unstable recursive kernel: max pole radius {np.max(np.abs(self.poles())):.6f}")

    # ── construction helpers ──────────────────────────────
    @classmethod
    def identity(cls) -> "FilterKernel":
        return cls(FORM_FIR, np.array([1.0]), 0.0, {"design": "identity"})

    @classmethod
    def from_taps(cls, taps: Sequence[float], **metadata: Any) -> "FilterKernel":
        kernel = cls(FORM_FIR, np.asarray(taps, dtype=np.float64), 0.0, metadata)
        if kernel.is_linear_phase:
            return cls(FORM_FIR, kernel.coefficients, (kernel.coefficients.size - 1) / 2.0, metadata)
        return kernel

    # ── properties ────────────────────────────────────────
    @property
    def taps(self) -> FloatArray:
        if self.form != FORM_FIR:
            raise FilterDesignError("taps are only defined for FIR kernels")
        return self.coefficients

    @property
    def order(self) -> int:
        if self.form == FORM_FIR:
            return int(self.coefficients.size - 1)
        return sum(_section_degree(section) for section in self.coefficients)

    @property
    def is_linear_phase(self) -> bool:
        if self.form != FORM_FIR:
            return False
        taps = self.coefficients
        tol = 1e-12 * max(float(np.max(np.abs(taps))), 1e-300)
        return bool(np.allclose(taps, taps[::-1], rtol=0, atol=tol)
                    or np.allclose(taps, -taps[::-1], rtol=0, atol=tol))

    def poles(self) -> npt.NDArray[np.complex128]:
        if self.form == FORM_FIR:
            return np.zeros(0, dtype=np.complex128)
        roots = [np.roots(np.trim_zeros(section[3:], "b")) for section in self.coefficients]
        return np.concatenate(roots) if roots else np.zeros(0, dtype=np.complex128)

    def is_stable(self) -> bool:
        poles = self.poles()
        return bool(poles.size == 0 or np.max(np.abs(poles)) < 1.0)

    # ── evaluation ────────────────────────────────────────
    def lfilter(self, x: FloatArray) -> FloatArray:
        """Causal filtering with zero initial state; output length equals input length."""
        x = np.asarray(x, dtype=np.float64)
        if x.size == 0:
            return x.copy()
        if self.form == FORM_SOS:
            return sps.sosfilt(np.array(self.coefficients), x)
        if self.coefficients.size > FFT_APPLY_MIN_TAPS:
            return sps.oaconvolve(x, self.coefficients)[:x.size]
        return sps.lfilter(np.array(self.coefficients), [1.0], x)

    def frequency_response(self, freqs: Union[float, Sequence[float], FloatArray],
                           rate: float) -> npt.NDArray[np.complex128]:
        omega = 2.0 * np.pi * np.atleast_1d(np.asarray(freqs, dtype=np.float64)) / rate
        if self.form == FORM_FIR:
            return _poly_response(self.coefficients, omega)
        response = np.ones(omega.size, dtype=np.complex128)
        for section in self.coefficients:
            response *= _poly_response(section[:3], omega) / _poly_response(section[3:], omega)
        return response

    def dc_gain(self) -> float:
        return float(np.real(self.frequency_response(0.0, 1.0)[0]))

    # ── serialisation ─────────────────────────────────────
    def to_dict(self) -> Dict[str, Any]:
        return {
            "form": self.form,
            "coefficients": self.coefficients.tolist(),
            "nominal_group_delay": float(self.nominal_group_delay),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FilterKernel":
        return cls(
            form=data["form"],
            coefficients=np.asarray(data["coefficients"], dtype=np.float64),
            nominal_group_delay=float(data.get("nominal_group_delay", 0.0)),
            metadata=data.get("metadata", {}),
        )


@dataclass(frozen=True, eq=False)
class ComplementaryPair:
    """Linear-phase bandpass and its tap-level bandstop complement."""
    bandpass: FilterKernel
    bandstop: FilterKernel
    delay: int  # shared group delay D, samples
    low_edge: float  # Hz
    high_edge: float  # Hz
    rate: float  # Hz

    def to_dict(self) -> Dict[str, Any]:
        return {
            "bandpass": self.bandpass.to_dict(),
            "bandstop": self.bandstop.to_dict(),
            "delay": self.delay,
            "low_edge": self.low_edge,
            "high_edge": self.high_edge,
            "rate": self.rate,
        }


# ── designs ──────────────────────────────────────────────

def _check_corner(corner: float, rate: float, name: str = "corner") -> None:
    if not (rate > 0 and 0 < corner < rate / 2.0):
        raise FilterDesignError(f"{name} must lie in (0, rate/2) = (0, {rate / 2.0}), got {corner}")


def _check_odd_taps(n_taps: int) -> None:
    if n_taps < 1 or n_taps % 2 == 0:
        raise FilterDesignError(f"n_taps must be an odd positive integer, got {n_taps}")


def _average_delay(kernel: FilterKernel, f_high: float, rate: float, points: int = 32) -> float:
    freqs = np.linspace(0.0, f_high, points, endpoint=False)
    return float(np.mean([group_delay(kernel, f, rate) for f in freqs]))


def _with_nominal_delay(kernel: FilterKernel, f_high: float, rate: float) -> FilterKernel:
    return FilterKernel(kernel.form, kernel.coefficients,
                        _average_delay(kernel, f_high, rate), kernel.metadata)


def design_first_order_lowpass(corner: float, rate: float) -> FilterKernel:
    """Single-pole lowpass, unit DC gain, exact -3 dB at corner."""
    _check_corner(corner, rate)
    c = math.cos(2.0 * math.pi * corner / rate)
    pole = (2.0 - c) - math.sqrt((2.0 - c) ** 2 - 1.0)
    kernel = FilterKernel(FORM_SOS, np.array([[1.0 - pole, 0.0, 0.0, 1.0, -pole, 0.0]]), 0.0,
                          {"design": "first_order_lowpass", "corner_hz": corner,
                           "rate_hz": rate, "pole": pole})
    return _with_nominal_delay(kernel, corner, rate)


def _prototype_edge(order: int) -> Tuple[float, float]:
    """Passband edge and -3 dB frequency of the delay-normalised Bessel prototype, rad/s.

    The edge is the -3 dB point unless the group delay has already dropped by
    FLAT_DELAY_TOLERANCE there (orders 2 and 3), in which case it is that point.
    """
    b, a = sps.bessel(order, 1.0, btype="low", analog=True, output="ba", norm="delay")
    da = np.polyder(a)

    def magnitude_sq(w: float) -> float:
        return float(np.abs(np.polyval(b, 1j * w) / np.polyval(a, 1j * w)) ** 2)

    def delay(w: float) -> float:
        return float(np.real(np.polyval(da, 1j * w) / np.polyval(a, 1j * w)))

    w_3db = brentq(lambda w: magnitude_sq(w) - 0.5, 1e-6, 50.0)
    w_flat = brentq(lambda w: delay(w) / delay(0.0) - (1.0 - FLAT_DELAY_TOLERANCE), 1e-6, 50.0)
    return min(w_3db, w_flat), w_3db


def design_bessel_like_lowpass(corner: float, order: int, rate: float) -> FilterKernel:
    """Analog Bessel prototype mapped to the z-plane by matched poles, DC gain 1.

    corner is the edge of the flat-delay passband: the -3 dB frequency for
    order >= 4, lower for orders 2 and 3 (their -3 dB point sits past the flat
    part of the delay curve and is recorded as cutoff_hz).
    """
    _check_corner(corner, rate)
    if not 2 <= int(order) <= 8:
        raise FilterDesignError(f"Bessel-like order must be within 2..8, got {order}")

    w_edge, w_3db = _prototype_edge(int(order))
    _, analog_poles, _ = sps.bessel(int(order), 1.0, btype="low", analog=True, output="zpk", norm="delay")
    analog_poles = analog_poles * (2.0 * np.pi * corner / w_edge)
    digital_poles = np.exp(analog_poles / rate)
    sos = sps.zpk2sos(np.array([]), digital_poles, 1.0)

    dc = np.prod(np.sum(sos[:, :3], axis=1) / np.sum(sos[:, 3:], axis=1))
    sos[0, :3] /= dc

    kernel = FilterKernel(FORM_SOS, sos, 0.0,
                          {"design": "bessel_like_lowpass", "corner_hz": corner,
                           "cutoff_hz": corner * w_3db / w_edge, "order": int(order), "rate_hz": rate})
    delays = [group_delay(kernel, f, rate) for f in np.linspace(0.0, corner, 33)]
    ripple = (max(delays) - min(delays)) / float(np.mean(delays))
    if ripple >= MAX_DELAY_RIPPLE:
        logger.warning("Bessel-like order %d at %.6g Hz / %.6g Hz: passband delay ripple %.3f; "
                       "the corner is too close to the rate for a matched-pole design", order, corner, rate, ripple)
    return FilterKernel(FORM_SOS, kernel.coefficients, _average_delay(kernel, corner, rate),
                        dict(kernel.metadata, delay_ripple=ripple))


def design_fir_lowpass(cutoff: float, rate: float, n_taps: int,
                       kaiser_beta: float = DEFAULT_KAISER_BETA) -> FilterKernel:
    """Kaiser windowed-sinc lowpass with unit DC gain."""
    _check_corner(cutoff, rate, "cutoff")
    _check_odd_taps(n_taps)
    taps = sps.firwin(n_taps, cutoff, window=("kaiser", kaiser_beta), fs=rate)
    return FilterKernel(FORM_FIR, taps, (n_taps - 1) / 2.0,
                        {"design": "fir_lowpass", "cutoff_hz": cutoff, "rate_hz": rate,
                         "n_taps": n_taps, "kaiser_beta": kaiser_beta})


def design_complementary_pair(low_edge: float, high_edge: float, rate: float, n_taps: int,
                              kaiser_beta: float = DEFAULT_KAISER_BETA) -> ComplementaryPair:
    """Windowed-sinc bandpass plus bandstop = delayed delta - bandpass."""
    if not (rate > 0 and 0 < low_edge < high_edge < rate / 2.0):
        raise FilterDesignError(
            f"edges must satisfy 0 < low < high < rate/2, got ({low_edge}, {high_edge}) at {rate} Hz")
    _check_odd_taps(n_taps)
    if n_taps < 3:
        raise FilterDesignError("a bandpass needs at least 3 taps")

    bandpass_taps = sps.firwin(n_taps, [low_edge, high_edge], pass_zero=False,
                               window=("kaiser", kaiser_beta), fs=rate)
    delay = (n_taps - 1) // 2
    bandstop_taps = -bandpass_taps
    bandstop_taps[delay] = 1.0 - bandpass_taps[delay]

    design = {"low_edge_hz": low_edge, "high_edge_hz": high_edge, "rate_hz": rate,
              "n_taps": n_taps, "kaiser_beta": kaiser_beta}
    bandpass = FilterKernel(FORM_FIR, bandpass_taps, float(delay),
                            {"design": "complementary_bandpass", **design})
    bandstop = FilterKernel(FORM_FIR, bandstop_taps, float(delay),
                            {"design": "complementary_bandstop", **design})
    return ComplementaryPair(bandpass, bandstop, delay, low_edge, high_edge, rate)


def design_moving_average_cascade(length: int, stages: int = 3) -> FilterKernel:
    """Cascade of normalised boxcars (sinc^stages response)."""
    if length < 1 or stages < 1:
        raise FilterDesignError(f"length and stages must be >= 1, got {length}, {stages}")
    box = np.ones(int(length)) / int(length)
    taps = np.array([1.0])
    for _ in range(int(stages)):
        taps = np.convolve(taps, box)
    return FilterKernel(FORM_FIR, taps, (taps.size - 1) / 2.0,
                        {"design": "moving_average_cascade", "length": int(length),
                         "stages": int(stages)})


def design_differentiator() -> FilterKernel:
    """First difference x[n] - x[n-1]."""
    return FilterKernel(FORM_FIR, np.array([1.0, -1.0]), 0.5, {"design": "differentiator"})


def design_dispersive_allpass(n_sections: int, coefficient: float, rate: float) -> FilterKernel:
    """Cascade of first-order allpasses (a + z^-1)/(1 + a z^-1).

    Group delay is monotone in frequency, so an impulse comes out as a chirp
    with the same magnitude spectrum.
    """
    if n_sections < 1:
        raise FilterDesignError(f"n_sections must be >= 1, got {n_sections}")
    a = float(coefficient)
    if not abs(a) < 1.0:
        raise FilterDesignError(f"allpass coefficient must satisfy |a| < 1, got {a}")

    sections = [[a * a, 2.0 * a, 1.0, 1.0, 2.0 * a, a * a]] * (n_sections // 2)
    if n_sections % 2:
        sections.append([a, 1.0, 0.0, 1.0, a, 0.0])
    kernel = FilterKernel(FORM_SOS, np.array(sections), 0.0,
                          {"design": "dispersive_allpass", "n_sections": int(n_sections),
                           "coefficient": a, "rate_hz": rate, "allpass": True})
    return _with_nominal_delay(kernel, rate / 2.0, rate)


def design_matched_inverse(kernel: FilterKernel) -> FilterKernel:
    """Exact inverse 1/H(z) of a minimum-phase kernel."""
    if kernel.form == FORM_FIR:
        sections = sps.tf2sos([1.0], np.array(kernel.coefficients))
    else:
        sections = np.array([np.concatenate([section[3:], section[:3]])
                             for section in kernel.coefficients])
    if np.any(sections[:, 3] == 0):
        raise FilterDesignError("kernel has a zero leading numerator coefficient; no causal inverse")
    try:
        inverse = FilterKernel(FORM_SOS, sections, 0.0,
                               {"design": "matched_inverse", "of": kernel.metadata.get("design", "")})
    except FilterDesignError as e:
        raise FilterDesignError(f"kernel is not minimum phase, inverse unstable: {e}") from e
    return FilterKernel(FORM_SOS, inverse.coefficients, -kernel.nominal_group_delay, inverse.metadata)


# ── application and analysis ─────────────────────────────

def apply(kernel: FilterKernel, s: Signal) -> Signal:
    """Causal filtering with zero initial state; length preserved."""
    return s.with_samples(kernel.lfilter(s.samples))


def apply_zero_phase(kernel: FilterKernel, s: Signal) -> Signal:
    """Forward pass, then the same kernel run backwards; both with zero state."""
    forward = kernel.lfilter(s.samples)
    backward = kernel.lfilter(forward[::-1])[::-1]
    return s.with_samples(backward)


def group_delay(kernel: FilterKernel, freq: float, rate: float) -> float:
    """-dphi/domega of the kernel at freq, in samples."""
    if not 0 <= freq < rate / 2.0:
        raise ValueError(f"freq must lie in [0, rate/2), got {freq}")
    if kernel.is_linear_phase:
        return (kernel.coefficients.size - 1) / 2.0

    omega = 2.0 * math.pi * freq / rate
    if kernel.form == FORM_FIR:
        return _poly_delay(kernel.coefficients, omega)
    return float(sum(_poly_delay(section[:3], omega) - _poly_delay(section[3:], omega)
                     for section in kernel.coefficients))


def is_allpass(kernel: FilterKernel, tolerance: float = ALLPASS_TOLERANCE, points: int = 512) -> bool:
    freqs = np.linspace(0.0, 0.5, points, endpoint=False)
    magnitude = np.abs(kernel.frequency_response(freqs, 1.0))
    return bool(np.max(np.abs(magnitude - 1.0)) <= tolerance)


def save_kernel(kernel: FilterKernel, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(kernel.to_dict(), f, indent=2, ensure_ascii=False)
    return path


def load_kernel(path: Union[str, Path]) -> FilterKernel:
    with open(path, "r", encoding="utf-8") as f:
        return FilterKernel.from_dict(json.load(f))


def kernel_from_config(design: str, rate: float, corner: Optional[float] = None,
                       order: int = 4, n_taps: int = 101) -> FilterKernel:
    """Build a kernel from the small design vocabulary used in scenario files."""
    if design in ("delta", "identity"):
        return FilterKernel.identity()
    if design == "first_order_lowpass":
        return design_first_order_lowpass(corner, rate)
    if design == "bessel_lowpass":
        return design_bessel_like_lowpass(corner, order, rate)
    if design == "fir_lowpass":
        return design_fir_lowpass(corner, rate, n_taps)
    if design == "differentiator":
        return design_differentiator()
    raise FilterDesignError(f"Unknown kernel design: {design}")
