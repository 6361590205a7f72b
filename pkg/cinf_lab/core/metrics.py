#!/usr/bin/env python3
"""
Metrics - PSD, moments, baseband SNR and capacity
Part of the CINF Lab outlier-noise mitigation infrastructure

Kurtosis is the scalar Gaussianity measure (Gaussian = 3, two-level = 1,
sparse spikes >> 3). Baseband SNR aligns the processed signal to the
clean reference by cross-correlation before measuring the residual.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
import numpy.typing as npt
from scipy import signal as sps

from cinf_lab.core.signal_core import Signal
from cinf_lab.errors import AlignmentError, SignalMismatchError

logger = logging.getLogger(__name__)

SNR_CAP_DB = 200.0
DEFAULT_MAX_LAG = 64

Band = Tuple[float, float]


def rms(x: Union[Signal, npt.NDArray[np.float64]]) -> float:
    samples = x.samples if isinstance(x, Signal) else np.asarray(x, dtype=np.float64)
    if samples.size == 0:
        return 0.0
    return math.sqrt(float(np.mean(samples * samples)))


def db(power_ratio: float) -> float:
    return 10.0 * math.log10(power_ratio) if power_ratio > 0 else -math.inf


# ── spectra ──────────────────────────────────────────────

@dataclass
class PsdEstimate:
    frequencies: npt.NDArray[np.float64]  # Hz
    densities: npt.NDArray[np.float64]  # power / Hz, one-sided
    segment_length: int
    overlap: float  # fraction of segment_length
    window: str
    sample_rate: float  # Hz

    @property
    def resolution(self) -> float:
        return self.sample_rate / self.segment_length

    def band_power(self, low: float, high: float) -> float:
        """Integrated density over low <= f < high."""
        mask = (self.frequencies >= low) & (self.frequencies < high)
        return float(np.sum(self.densities[mask]) * self.resolution)

    def total_power(self) -> float:
        return float(np.sum(self.densities) * self.resolution)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        np.savetxt(path, np.column_stack([self.frequencies, self.densities]), delimiter=",",
                   header="frequency_hz,density", comments="", fmt="%.17g")
        return path


def psd_welch(s: Signal, segment_length: int, overlap_fraction: float = 0.5,
              window: str = "hann") -> PsdEstimate:
    """Averaged windowed periodograms, one-sided, per-segment mean removed."""
    if not 1 <= segment_length <= len(s):
        raise ValueError(f"segment_length must lie in [1, {len(s)}], got {segment_length}")
    if not 0 <= overlap_fraction < 1:
        raise ValueError(f"overlap_fraction must lie in [0, 1), got {overlap_fraction}")
    freqs, densities = sps.welch(s.samples, fs=s.sample_rate, window=window, nperseg=segment_length,
                                 noverlap=int(overlap_fraction * segment_length),
                                 return_onesided=True, scaling="density")
    return PsdEstimate(freqs, densities, segment_length, overlap_fraction, window, s.sample_rate)


def band_limit(s: Signal, band: Band) -> Signal:
    """Brickwall band limiting by zeroing FFT bins outside [low, high]."""
    low, high = band
    if not 0 <= low < high:
        raise ValueError(f"invalid band ({low}, {high})")
    if len(s) == 0:
        return s
    spectrum = np.fft.rfft(s.samples)
    freqs = np.fft.rfftfreq(len(s), 1.0 / s.sample_rate)
    spectrum[(freqs < low) | (freqs > high)] = 0.0
    return s.with_samples(np.fft.irfft(spectrum, n=len(s)))


# ── amplitude statistics ─────────────────────────────────

def kurtosis(s: Signal) -> float:
    """Standardised fourth moment (population form)."""
    if len(s) < 4:
        raise ValueError(f"kurtosis needs at least 4 samples, got {len(s)}")
    centred = s.samples - np.mean(s.samples)
    m2 = float(np.mean(centred ** 2))
    if m2 == 0:
        raise ValueError("kurtosis undefined for zero-variance input")
    return float(np.mean(centred ** 4)) / (m2 * m2)


def crest_factor(s: Signal) -> float:
    """Peak magnitude over rms."""
    level = rms(s)
    if level == 0:
        raise ValueError("crest factor undefined for an all-zero signal")
    return float(np.max(np.abs(s.samples))) / level


@dataclass
class HistogramEstimate:
    edges: npt.NDArray[np.float64]
    counts: npt.NDArray[np.int64]

    @property
    def centers(self) -> npt.NDArray[np.float64]:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def density(self) -> npt.NDArray[np.float64]:
        total = self.counts.sum()
        widths = np.diff(self.edges)
        return self.counts / (total * widths) if total else np.zeros_like(widths)

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        table = np.column_stack([self.edges[:-1], self.edges[1:], self.counts, self.density])
        np.savetxt(path, table, delimiter=",", header="bin_low,bin_high,count,density", comments="",
                   fmt=["%.17g", "%.17g", "%d", "%.17g"])
        return path


def amplitude_histogram(s: Signal, bins: int = 101,
                        value_range: Optional[Tuple[float, float]] = None) -> HistogramEstimate:
    counts, edges = np.histogram(s.samples, bins=bins, range=value_range)
    return HistogramEstimate(edges, counts.astype(np.int64))


# ── SNR and capacity ─────────────────────────────────────

@dataclass
class SnrReport:
    snr_db: float  # capped at SNR_CAP_DB
    signal_power: float
    noise_power: float
    band: Band  # Hz
    lag: int = 0  # samples the processed signal trails the reference

    def to_dict(self) -> dict:
        return {"snr_db": self.snr_db, "signal_power": self.signal_power,
                "noise_power": self.noise_power, "band": list(self.band), "lag": self.lag}


def find_lag(processed: Signal, reference: Signal, band: Band, max_lag: int = DEFAULT_MAX_LAG) -> int:
    """Integer lag maximising the band-limited cross-correlation, within +/- max_lag."""
    p = band_limit(processed, band).samples
    r = band_limit(reference, band).samples
    corr = sps.correlate(p, r, mode="full", method="fft")
    lags = sps.correlation_lags(p.size, r.size, mode="full")
    window = np.abs(lags) <= 2 * max_lag
    lag = int(lags[window][np.argmax(corr[window])])
    if abs(lag) > max_lag:
        raise AlignmentError(f"correlation peak at lag {lag} lies outside +/-{max_lag}")
    return lag


def baseband_snr(processed: Signal, clean_reference: Signal, band: Band,
                 max_lag: Optional[int] = DEFAULT_MAX_LAG, settle: int = 0) -> SnrReport:
    """
    SNR of processed against the clean reference inside band.

    max_lag=None skips the alignment search (lag 0). The first settle
    samples after alignment are excluded from both powers.
    """
    if processed.sample_rate != clean_reference.sample_rate:
        raise SignalMismatchError(
            f"sample rate mismatch: {processed.sample_rate} vs {clean_reference.sample_rate}")
    if len(processed) != len(clean_reference):
        raise SignalMismatchError(f"length mismatch: {len(processed)} vs {len(clean_reference)}")

    lag = 0 if max_lag is None else find_lag(processed, clean_reference, band, max_lag)
    n = len(processed)
    if lag >= 0:
        p, r = processed.samples[lag:], clean_reference.samples[:n - lag]
    else:
        p, r = processed.samples[:n + lag], clean_reference.samples[-lag:]
    p, r = p[settle:], r[settle:]
    if r.size == 0:
        raise ValueError("nothing left to measure after alignment and settle")

    ref_band = band_limit(clean_reference.with_samples(r), band).samples
    err_band = band_limit(clean_reference.with_samples(p - r), band).samples
    signal_power = float(np.mean(ref_band * ref_band))
    noise_power = float(np.mean(err_band * err_band))
    if signal_power == 0:
        raise ValueError(f"reference carries no power in band {band}")

    if noise_power == 0 or signal_power / noise_power >= 10.0 ** (SNR_CAP_DB / 10.0):
        snr_db = SNR_CAP_DB
    else:
        snr_db = 10.0 * math.log10(signal_power / noise_power)
    return SnrReport(snr_db, signal_power, noise_power, (float(band[0]), float(band[1])), lag)


def shannon_capacity(snr_db: float, bandwidth: float) -> float:
    """B*log2(1 + SNR) in bits per second."""
    if not bandwidth > 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    # log2(1 + 2**a) without forming 2**a
    return bandwidth * float(np.logaddexp2(0.0, snr_db / 10.0 * math.log2(10.0)))
