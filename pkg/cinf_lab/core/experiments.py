#!/usr/bin/env python3
"""
Experiments - The named outlier-noise demonstrations
Part of the CINF Lab outlier-noise mitigation infrastructure

Each run_* function is pure: a validated ScenarioConfig goes in, an
ExperimentReport comes out, nothing touches the filesystem. All randomness
derives from cfg.seed, so a report regenerates from its embedded config.

    bandwidth-sweep   how narrowing the observation band hides outliers
    caf-chirp         linear vs CAF path on a chirp in thermal + impulsive noise
    capacity-sweep    baseband SNR and capacity gain vs outlier-to-thermal ratio
    delta-sigma       1-bit outputs alike, narrowband amplitude structure not
    clipping          clipping distortion as outlier interference, CAF repair
    cucaracha         PSD reshaping by an ADiC on strongly shaped noise
"""

import logging
import math
from typing import Any, Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy.integrate import trapezoid
from tqdm import tqdm

from cinf_lab.config import ScenarioConfig
from cinf_lab.core.caf_pipeline import (
    AgcState,
    CafConfig,
    DeltaSigmaState,
    FrontEndChain,
    build_caf_config,
    caf_stages,
    chirp_caf_edges,
    digital_front_end,
    linear_reference,
    run_delta_sigma,
)
from cinf_lab.core.generators import (
    ChirpSpec,
    GaussianNoiseSpec,
    ImpulseEvents,
    ImpulsiveNoiseSpec,
    OfdmSpec,
    gen_gaussian_noise,
    gen_impulsive_noise,
    gen_linear_chirp,
    gen_ofdm_burst,
    gen_tone,
    render_events,
)
from cinf_lab.core.linear_filters import (
    FORM_FIR,
    FilterKernel,
    apply,
    design_bessel_like_lowpass,
    design_complementary_pair,
    design_fir_lowpass,
    design_moving_average_cascade,
    kernel_from_config,
)
from cinf_lab.core.metrics import (
    amplitude_histogram,
    band_limit,
    baseband_snr,
    crest_factor,
    db,
    kurtosis,
    psd_welch,
    rms,
    shannon_capacity,
)
from cinf_lab.core.nonlinear_core import FeedbackAdic, hard_clip_signal
from cinf_lab.core.reports import (
    DataTable,
    ExperimentReport,
    PlotSpec,
    check_at_least,
    check_at_most,
    check_greater,
    check_true,
    check_within,
    provenance,
)
from cinf_lab.core.signal_core import Signal, add, delay, subtract, zeros
from cinf_lab.errors import ConfigError

logger = logging.getLogger(__name__)

# ── CONFIG ───────────────────────────────────────────────
SEED_GAUSSIAN = 0
SEED_IMPULSIVE = 1
SEED_WAVEFORM = 2
SEED_BACKGROUND = 3
EXCERPT_SAMPLES = 20_000  # rows of time-domain traces written to CSV
PULSE_SPAN = 8192  # samples used to measure a recursive pulse shape
# ─────────────────────────────────────────────────────────

Band = Tuple[float, float]


# ── scenario building blocks ─────────────────────────────

def _new_report(cfg: ScenarioConfig) -> ExperimentReport:
    return ExperimentReport(cfg.experiment, cfg.model_dump(mode="json"), provenance=provenance(cfg.seed))


def build_waveform(cfg: ScenarioConfig) -> Signal:
    w = cfg.waveform
    if w.kind == "chirp":
        return gen_linear_chirp(ChirpSpec(w.f_start, w.f_end, cfg.duration, w.amplitude, w.phase), cfg.sample_rate)
    if w.kind == "tone":
        return gen_tone(w.frequency, w.amplitude, cfg.sample_rate, cfg.duration, w.phase)
    if w.kind == "ofdm":
        return gen_ofdm_burst(_ofdm_spec(cfg), cfg.sample_rate)
    return zeros(cfg.n_samples, cfg.sample_rate)


def _ofdm_spec(cfg: ScenarioConfig) -> OfdmSpec:
    w = cfg.waveform
    spec = OfdmSpec(w.n_subcarriers, w.symbol_count, w.constellation_order, w.active_fraction,
                    cfg.component_seed(SEED_WAVEFORM), w.first_subcarrier, w.cyclic_prefix, w.amplitude)
    try:
        spec.validate()
    except ValueError as e:
        raise ConfigError(str(e)) from e
    return spec


def signal_band(cfg: ScenarioConfig) -> Band:
    """Band occupied by the waveform of interest."""
    w = cfg.waveform
    if w.kind == "ofdm":
        spec = _ofdm_spec(cfg)
        spacing = cfg.sample_rate / spec.n_subcarriers
        return spec.first_subcarrier * spacing, (spec.first_subcarrier + spec.active_count - 1) * spacing
    if w.kind in ("chirp", "tone"):
        return 0.0, w.max_frequency
    raise ConfigError(f"waveform kind '{w.kind}' has no signal band")


def _scaled_kernel(kernel: FilterKernel, gain: float) -> FilterKernel:
    coefficients = np.array(kernel.coefficients, dtype=np.float64)
    if kernel.form == FORM_FIR:
        coefficients = coefficients * gain
    else:
        coefficients[0, :3] *= gain
    return FilterKernel(kernel.form, coefficients, kernel.nominal_group_delay, dict(kernel.metadata, gain=gain))


def impulse_response(kernel: FilterKernel, length: int = PULSE_SPAN) -> np.ndarray:
    if kernel.form == FORM_FIR:
        return np.array(kernel.coefficients, dtype=np.float64)
    unit = np.zeros(length)
    unit[0] = 1.0
    return kernel.lfilter(unit)


def build_pulse_shape(cfg: ScenarioConfig) -> Optional[FilterKernel]:
    pulse = cfg.impulsive.pulse
    if pulse.design == "delta" and pulse.peak is None:
        return None
    kernel = kernel_from_config(pulse.design, cfg.sample_rate, pulse.corner_hz, pulse.order, pulse.n_taps)
    if pulse.peak is not None:
        kernel = _scaled_kernel(kernel, pulse.peak / float(np.max(np.abs(impulse_response(kernel)))))
    return kernel


def _pulse_band_energy(pulse: Optional[FilterKernel], band: Band, rate: float, points: int = 2048) -> float:
    """Fraction of a unit event's energy that lands inside band (one-sided)."""
    low, high = band
    if pulse is None:
        return 2.0 * (high - low) / rate
    freqs = np.linspace(low, high, points)
    response = np.abs(pulse.frequency_response(freqs, rate)) ** 2
    return 2.0 * float(trapezoid(response, freqs)) / rate


def _amplitude_second_moment(distribution: str, tail_index: float) -> float:
    if distribution == "fixed":
        return 1.0
    if distribution == "exponential":
        return 2.0
    if tail_index <= 2:
        raise ConfigError(f"pareto tail_index {tail_index} <= 2 has no finite outlier power")
    return tail_index / (tail_index - 2.0)


def thermal_sigma(cfg: ScenarioConfig, clean: Signal, band: Band) -> float:
    """White-noise sigma realising gaussian.snr_db inside band, else gaussian.sigma."""
    g = cfg.gaussian
    if g.snr_db is None:
        return g.sigma
    return _sigma_for_snr(rms(clean) ** 2, g.snr_db, band, cfg.sample_rate)


def _sigma_for_snr(signal_power: float, snr_db: float, band: Band, rate: float) -> float:
    band_fraction = 2.0 * (band[1] - band[0]) / rate
    return math.sqrt(signal_power / 10.0 ** (snr_db / 10.0) / band_fraction)


def _impulsive_spec(cfg: ScenarioConfig, amplitude: float, pulse: Optional[FilterKernel]) -> ImpulsiveNoiseSpec:
    i = cfg.impulsive
    return ImpulsiveNoiseSpec(i.arrival_rate, i.distribution, pulse, cfg.component_seed(SEED_IMPULSIVE),
                              amplitude, i.polarity, i.tail_index)


def _impulsive_noise(cfg: ScenarioConfig, amplitude: float, pulse: Optional[FilterKernel]) -> Signal:
    if not cfg.impulsive.enabled or amplitude == 0:
        return zeros(cfg.n_samples, cfg.sample_rate)
    return gen_impulsive_noise(_impulsive_spec(cfg, amplitude, pulse), cfg.sample_rate, cfg.duration)


def _impulsive_amplitude(cfg: ScenarioConfig, sigma: float) -> float:
    i = cfg.impulsive
    return i.amplitude_sigmas * sigma if i.amplitude_sigmas is not None else i.amplitude


def build_caf(cfg: ScenarioConfig, edges: Band, rate: Optional[float] = None) -> CafConfig:
    p = cfg.pipeline
    low = p.low_edge_hz if p.low_edge_hz is not None else edges[0]
    high = p.high_edge_hz if p.high_edge_hz is not None else edges[1]
    rate = rate or cfg.sample_rate
    if not 0 < low < high < rate / 2.0:
        raise ConfigError(f"CAF edges ({low:g}, {high:g}) Hz must satisfy 0 < low < high < {rate / 2.0:g} Hz")
    return build_caf_config(low, high, rate, p.n_taps, tau=p.tau, beta=p.beta,
                            gain_fraction=p.gain_fraction, initial_scale=p.initial_scale,
                            enabled=p.caf_enabled)


def _tail(s: Signal, start: int) -> Signal:
    return s.with_samples(s.samples[start:])


def _slope(x: List[float], y: List[float]) -> float:
    """Least-squares log-log slope."""
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def _excerpt(start: int, n: int) -> slice:
    return slice(start, min(n, start + EXCERPT_SAMPLES))


def _progress(items: List[Any], desc: str) -> Any:
    return tqdm(items, desc=desc, unit="pt", leave=False)


# ── bandwidth sweep ──────────────────────────────────────

def run_bandwidth_sweep(cfg: ScenarioConfig) -> ExperimentReport:
    """Lowpass a fixed Gaussian + impulsive mixture at each bandwidth of the grid."""
    bandwidths = sorted(cfg.sweep.bandwidths_hz)
    if len(bandwidths) < 2:
        raise ConfigError("bandwidth sweep needs at least two bandwidths")

    rate = cfg.sample_rate
    amplitude = cfg.impulsive.amplitude
    pulse = build_pulse_shape(cfg)
    gaussian = gen_gaussian_noise(GaussianNoiseSpec(cfg.gaussian.sigma, cfg.component_seed(SEED_GAUSSIAN)),
                                  rate, cfg.duration)
    impulsive = gen_impulsive_noise(_impulsive_spec(cfg, amplitude, pulse), rate, cfg.duration)
    mixture = add(gaussian, impulsive)
    span = PULSE_SPAN + int(cfg.sweep.taps_per_bandwidth * rate / bandwidths[0]) + 1
    isolated = render_events(ImpulseEvents(np.array([0]), np.array([amplitude])), span, rate, pulse)

    report = _new_report(cfg)
    bins = cfg.analysis.histogram_bins
    for bw in _progress(bandwidths, "bandwidth sweep"):
        n_taps = int(round(cfg.sweep.taps_per_bandwidth * rate / bw)) | 1
        if n_taps >= len(mixture):
            raise ConfigError(f"bandwidth {bw} Hz needs {n_taps} taps, more than the {len(mixture)} samples")
        kernel = design_fir_lowpass(bw, rate, n_taps)
        g = _tail(apply(kernel, gaussian), n_taps)
        imp = _tail(apply(kernel, impulsive), n_taps)
        mix = _tail(apply(kernel, mixture), n_taps)
        peak = float(np.max(np.abs(apply(kernel, isolated).samples)))
        sigma_mix = rms(mix.samples - np.mean(mix.samples))
        point = {
            "bandwidth_hz": bw,
            "n_taps": n_taps,
            "gaussian_sigma": rms(g),
            "impulsive_kurtosis": kurtosis(imp),
            "isolated_pulse_peak": peak,
            "mixture_sigma": sigma_mix,
            "mixture_kurtosis": kurtosis(mix),
            "mixture_peak_to_sigma": float(np.max(np.abs(mix.samples - np.mean(mix.samples)))) / sigma_mix,
        }
        report.points.append(point)
        report.tables[f"histogram_{int(bw)}hz"] = _histogram_table(mix, bins)
        logger.info("bandwidth %.6g Hz: sigma=%.4g kurtosis=%.3g", bw, point["gaussian_sigma"],
                    point["mixture_kurtosis"])

    col = {k: [p[k] for p in report.points] for k in report.points[0]}
    sigma_slope = _slope(col["bandwidth_hz"], col["gaussian_sigma"])
    pulse_slope = _slope(col["bandwidth_hz"], col["isolated_pulse_peak"])
    report.summary = {
        "sigma_slope": sigma_slope,
        "pulse_peak_slope": pulse_slope,
        "bandwidth_to_rate_min": bandwidths[0] / cfg.impulsive.arrival_rate,
        "bandwidth_to_rate_max": bandwidths[-1] / cfg.impulsive.arrival_rate,
    }
    c = cfg.checks
    report.checks = [
        check_within("sigma_sqrt_bandwidth", sigma_slope, c.sigma_slope, c.sigma_slope_tolerance),
        check_within("pulse_peak_proportional", pulse_slope, c.pulse_slope, c.pulse_slope_tolerance),
        check_within("pileup_gaussianization", col["impulsive_kurtosis"][0], 3.0, c.pileup_kurtosis_tolerance),
        check_at_least("impulsive_at_wide_band", col["impulsive_kurtosis"][-1], c.impulsive_kurtosis_min),
    ]
    report.tables["bandwidth_sweep"] = DataTable.from_columns(**col)
    report.plots = [
        PlotSpec("bandwidth_sweep", "bandwidth_hz", ["gaussian_sigma", "isolated_pulse_peak"],
                 "Noise sigma and pulse peak vs bandwidth", log_x=True, log_y=True),
        PlotSpec("bandwidth_sweep", "bandwidth_hz", ["impulsive_kurtosis", "mixture_kurtosis"],
                 "Kurtosis vs bandwidth", log_x=True, log_y=True),
    ] + [PlotSpec(name, "bin_low", ["density"], name, kind="step") for name in report.tables
         if name.startswith("histogram_")]
    return report


def _histogram_table(s: Signal, bins: int) -> DataTable:
    h = amplitude_histogram(s, bins)
    return DataTable.from_columns(bin_low=h.edges[:-1], bin_high=h.edges[1:], count=h.counts, density=h.density)


# ── chirp scenarios: CAF vs linear ───────────────────────

def _chirp_point(clean: Signal, noisy: Signal, caf: CafConfig, band: Band, settle: int,
                 keep: bool = False) -> Tuple[Dict[str, Any], Dict[str, Signal]]:
    """Linear path (pure delay D) against the CAF path, both scored on the same reference."""
    stages = caf_stages(noisy, caf)
    d = caf.delay
    reference = delay(clean, d)
    linear = delay(noisy, d)

    snr_linear = baseband_snr(linear, reference, band, settle=settle)
    snr_caf = baseband_snr(stages.output, reference, band, settle=settle)
    start = d + settle
    delta_linear = band_limit(_tail(subtract(linear, reference), start), band)
    delta_caf = band_limit(_tail(subtract(stages.output, reference), start), band)
    bandwidth = band[1] - band[0]

    point = {
        "snr_linear_db": snr_linear.snr_db,
        "snr_caf_db": snr_caf.snr_db,
        "snr_gain_db": snr_caf.snr_db - snr_linear.snr_db,
        "lag_linear": snr_linear.lag,
        "lag_caf": snr_caf.lag,
        "capacity_linear_bps": shannon_capacity(snr_linear.snr_db, bandwidth),
        "capacity_caf_bps": shannon_capacity(snr_caf.snr_db, bandwidth),
        "delta_rms_linear": rms(delta_linear),
        "delta_rms_caf": rms(delta_caf),
        "blank_duty": stages.blank_duty,
        "excess_band_kurtosis": kurtosis(_tail(stages.bandstop, start)),
    }
    point["capacity_gain"] = point["capacity_caf_bps"] / point["capacity_linear_bps"] - 1.0

    signals: Dict[str, Signal] = {}
    if keep:
        signals = dict(stages.as_dict(), reference=reference, linear=linear)
        signals["delta_linear"] = subtract(linear, reference)
        signals["delta_caf"] = subtract(stages.output, reference)
    return point, signals


def _build_front_end(cfg: ScenarioConfig, caf: Optional[CafConfig]) -> FrontEndChain:
    p = cfg.pipeline
    rate = cfg.sample_rate
    front_end = (design_bessel_like_lowpass(p.front_end_corner_hz, p.front_end_order, rate)
                 if p.front_end_corner_hz else None)
    agc = None
    if p.agc_setpoint is not None:
        agc = AgcState.initial(p.agc_setpoint, clip_level=p.clip_level or p.full_scale, adaptation_rate=p.agc_rate,
                               quantile=p.agc_quantile)
    delta_sigma = DeltaSigmaState.initial(p.delta_sigma_order, p.full_scale) if p.delta_sigma_order else None
    pre_caf = design_moving_average_cascade(p.pre_caf_length, p.pre_caf_stages) if delta_sigma else None
    decimation_kernel = None
    if p.decimation_factor > 1:
        decimation_kernel = design_fir_lowpass(0.4 * rate / p.decimation_factor, rate, p.decimation_taps | 1)
    return FrontEndChain(front_end, agc, p.clip_level, delta_sigma, pre_caf, caf, p.decimation_factor,
                         decimation_kernel)


def _front_end_point(cfg: ScenarioConfig, clean: Signal, noisy: Signal, caf: CafConfig,
                     band: Band) -> Dict[str, Any]:
    """Both paths through the full digital front end; CAF off means a pure delay of D."""
    chain = _build_front_end(cfg, caf)
    off = _build_front_end(cfg, caf.with_enabled(False))
    on_result = digital_front_end(noisy, chain)
    off_result = digital_front_end(noisy, off)
    gain = float(np.mean(on_result.gains)) if on_result.gains is not None else 1.0
    reference = linear_reference(clean, chain, gain)
    settle = cfg.pipeline.settle if cfg.pipeline.settle is not None else cfg.pipeline.n_taps
    settle //= cfg.pipeline.decimation_factor
    snr_off = baseband_snr(off_result.output, reference, band, settle=settle)
    snr_on = baseband_snr(on_result.output, reference, band, settle=settle)
    return {
        "front_end_snr_linear_db": snr_off.snr_db,
        "front_end_snr_caf_db": snr_on.snr_db,
        "front_end_snr_gain_db": snr_on.snr_db - snr_off.snr_db,
        "front_end_clip_count": on_result.clip_count,
        "front_end_saturation_count": on_result.saturation_count,
        "front_end_blank_duty": on_result.blank_duty,
        "front_end_mean_gain": gain,
    }


def run_caf_chirp_demo(cfg: ScenarioConfig) -> ExperimentReport:
    """Chirp + thermal + impulsive noise through the linear and CAF paths; a thermal-only control runs too."""
    clean = build_waveform(cfg)
    edges = chirp_caf_edges(cfg.waveform.max_frequency)
    caf = build_caf(cfg, edges)
    band = (0.0, caf.f_c)
    settle = cfg.pipeline.settle if cfg.pipeline.settle is not None else cfg.pipeline.n_taps

    sigma = thermal_sigma(cfg, clean, band)
    thermal = gen_gaussian_noise(GaussianNoiseSpec(sigma, cfg.component_seed(SEED_GAUSSIAN)),
                                 cfg.sample_rate, cfg.duration)
    amplitude = _impulsive_amplitude(cfg, sigma)
    impulsive = _impulsive_noise(cfg, amplitude, build_pulse_shape(cfg))
    control_input = add(clean, thermal)
    noisy = add(control_input, impulsive)

    report = _new_report(cfg)
    control, _ = _chirp_point(clean, control_input, caf, band, settle)
    point, signals = _chirp_point(clean, noisy, caf, band, settle, keep=True)
    control.update(label="control", impulsive_amplitude=0.0)
    point.update(label="scenario", impulsive_amplitude=amplitude)
    if cfg.pipeline.digital_front_end:
        point.update(_front_end_point(cfg, clean, noisy, caf, band))
    report.points = [control, point]
    report.stage_signals = signals

    has_outliers = cfg.impulsive.enabled and amplitude > 0
    report.summary = {
        "thermal_sigma": sigma,
        "impulsive_amplitude": amplitude,
        "caf": caf.describe(),
        "band_hz": list(band),
        "snr_linear_db": point["snr_linear_db"],
        "snr_caf_db": point["snr_caf_db"],
        "snr_gain_db": point["snr_gain_db"],
        "blank_duty": point["blank_duty"],
        "input_kurtosis": kurtosis(noisy),
    }
    c = cfg.checks
    report.checks = [
        check_at_most("no_harm", abs(control["snr_gain_db"]), c.no_harm_db),
        check_true("paired_alignment", all(p[k] == 0 for p in report.points for k in ("lag_linear", "lag_caf")),
                   "clean component aligned at lag 0 on both paths"),
    ]
    if has_outliers:
        report.checks += [
            check_greater("caf_snr_gain", point["snr_gain_db"], 0.0),
            check_true("delta_rms_reduced", point["delta_rms_caf"] < point["delta_rms_linear"],
                       "rms(delta CAF) < rms(delta linear)"),
        ]

    n = len(clean)
    window = _excerpt(caf.delay + settle, n)
    report.tables["delta_traces"] = DataTable.from_columns(
        time_s=clean.times()[window],
        reference=signals["reference"].samples[window],
        delta_linear=signals["delta_linear"].samples[window],
        delta_caf=signals["delta_caf"].samples[window],
    )
    report.tables["stages"] = DataTable.from_columns(
        time_s=clean.times()[window], **{f"stage_{k}": v.samples[window] for k, v in caf_stages_dict(signals).items()})
    segment = min(cfg.analysis.psd_segment, n)
    psd_in = psd_welch(noisy, segment)
    report.tables["psd"] = DataTable.from_columns(
        frequency_hz=psd_in.frequencies, input=psd_in.densities,
        linear=psd_welch(signals["linear"], segment).densities,
        caf=psd_welch(signals["V"], segment).densities)
    report.plots = [
        PlotSpec("delta_traces", "time_s", ["delta_linear", "delta_caf"], "Residual vs delayed clean chirp"),
        PlotSpec("stages", "time_s", ["stage_I", "stage_II", "stage_III", "stage_IV", "stage_V"], "CAF stages"),
        PlotSpec("psd", "frequency_hz", ["input", "linear", "caf"], "Power spectral density", log_y=True),
    ]
    return report


def caf_stages_dict(signals: Dict[str, Signal]) -> Dict[str, Signal]:
    return {k: signals[k] for k in ("I", "II", "III", "IV", "V")}


# ── capacity sweep ───────────────────────────────────────

def run_capacity_sweep(cfg: ScenarioConfig) -> ExperimentReport:
    """Baseband SNR and capacity of both paths over outlier-to-thermal ratio, per thermal SNR."""
    if not cfg.sweep.thermal_snr_db:
        raise ConfigError("capacity sweep needs at least one thermal SNR")
    ratios: List[Optional[float]] = [None] + list(cfg.sweep.outlier_to_thermal_db)

    clean = build_waveform(cfg)
    caf = build_caf(cfg, chirp_caf_edges(cfg.waveform.max_frequency))
    band = (0.0, caf.f_c)
    settle = cfg.pipeline.settle if cfg.pipeline.settle is not None else cfg.pipeline.n_taps
    pulse = build_pulse_shape(cfg)
    signal_power = rms(clean) ** 2
    unit_energy = _pulse_band_energy(pulse, band, cfg.sample_rate)
    moment = _amplitude_second_moment(cfg.impulsive.distribution, cfg.impulsive.tail_index)
    events_per_sample = cfg.impulsive.arrival_rate / cfg.sample_rate
    unit_thermal = gen_gaussian_noise(GaussianNoiseSpec(1.0, cfg.component_seed(SEED_GAUSSIAN)),
                                      cfg.sample_rate, cfg.duration)

    report = _new_report(cfg)
    grid = [(snr, ratio) for snr in cfg.sweep.thermal_snr_db for ratio in ratios]
    for snr, ratio in _progress(grid, "capacity sweep"):
        sigma = _sigma_for_snr(signal_power, snr, band, cfg.sample_rate)
        thermal_band_power = signal_power / 10.0 ** (snr / 10.0)
        amplitude = 0.0
        if ratio is not None:
            outlier_power = thermal_band_power * 10.0 ** (ratio / 10.0)
            amplitude = math.sqrt(outlier_power / (events_per_sample * moment * unit_energy))
        impulsive = _impulsive_noise(cfg, amplitude, pulse)
        noisy = add(add(clean, unit_thermal.with_samples(sigma * unit_thermal.samples)), impulsive)
        point, _ = _chirp_point(clean, noisy, caf, band, settle)
        point.update(thermal_snr_db=snr, outlier_to_thermal_db=ratio, impulsive_amplitude=amplitude,
                     control=ratio is None)
        report.points.append(point)
        logger.info("thermal %g dB, outlier/thermal %s dB: gain %.3g dB", snr, ratio, point["snr_gain_db"])

    c = cfg.checks
    tol = c.capacity_tolerance
    for snr in cfg.sweep.thermal_snr_db:
        series = [p for p in report.points if p["thermal_snr_db"] == snr]
        controls = [p for p in series if p["control"]]
        swept = [p for p in series if not p["control"]]
        for p in controls:
            report.checks.append(check_at_most(f"no_harm_{snr:g}db", abs(p["snr_gain_db"]), c.no_harm_db))
            report.checks.append(check_at_most(f"control_capacity_gain_{snr:g}db", abs(p["capacity_gain"]), tol))
        report.checks.append(check_at_least(f"capacity_gain_nonnegative_{snr:g}db",
                                            min(p["capacity_gain"] for p in series), -tol))
        gains = [p["capacity_gain"] for p in swept]
        report.checks.append(check_true(f"capacity_gain_monotone_{snr:g}db",
                                        all(b >= a - tol for a, b in zip(gains, gains[1:])),
                                        "gain nondecreasing in outlier-to-thermal ratio", hard=False))

    report.summary = {
        "caf": caf.describe(),
        "band_hz": list(band),
        "max_capacity_gain": max(p["capacity_gain"] for p in report.points),
        "max_snr_gain_db": max(p["snr_gain_db"] for p in report.points),
    }
    rows = [p for p in report.points if not p["control"]]
    if rows:
        report.tables["capacity_sweep"] = DataTable.from_columns(**{
            k: [p[k] for p in rows] for k in ("thermal_snr_db", "outlier_to_thermal_db", "snr_linear_db",
                                              "snr_caf_db", "capacity_linear_bps", "capacity_caf_bps",
                                              "capacity_gain", "blank_duty")})
        report.plots = [PlotSpec("capacity_sweep", "outlier_to_thermal_db", ["capacity_gain"],
                                 "Relative capacity gain of CAF over linear", kind="scatter")]
    return report


# ── delta-sigma contrast ─────────────────────────────────

def _modulate(x: Signal, cfg: ScenarioConfig) -> Tuple[Signal, int]:
    p = cfg.pipeline
    result = run_delta_sigma(x, DeltaSigmaState.initial(p.delta_sigma_order or 2, p.full_scale))
    return result.output, result.saturation_count


def run_delta_sigma_demo(cfg: ScenarioConfig) -> ExperimentReport:
    """Gaussian-driven and impulsive-driven 1-bit modulators seen raw and through a narrow bandpass."""
    rate, duration = cfg.sample_rate, cfg.duration
    g = cfg.gaussian
    white = gen_gaussian_noise(GaussianNoiseSpec(1.0, cfg.component_seed(SEED_GAUSSIAN)), rate, duration)
    if g.lowpass_hz:
        white = apply(design_bessel_like_lowpass(g.lowpass_hz, g.lowpass_order, rate), white)
    gaussian = white.with_samples(white.samples * (g.sigma / rms(white)))
    if cfg.pipeline.clip_level is not None:
        gaussian = hard_clip_signal(gaussian, cfg.pipeline.clip_level)

    dither = gen_gaussian_noise(GaussianNoiseSpec(cfg.analysis.dither_sigma, cfg.component_seed(SEED_BACKGROUND)),
                                rate, duration)
    impulsive = add(_impulsive_noise(cfg, cfg.impulsive.amplitude, build_pulse_shape(cfg)), dither)

    low, high = cfg.analysis.narrowband_hz
    narrowband = design_complementary_pair(low, high, rate, cfg.analysis.narrowband_taps).bandpass
    skip = cfg.analysis.narrowband_taps
    levels = set(DeltaSigmaState.initial().quantizer_levels)

    report = _new_report(cfg)
    outputs: Dict[str, Signal] = {}
    for name, drive in _progress([("gaussian", gaussian), ("impulsive", impulsive)], "delta-sigma"):
        raw, saturated = _modulate(drive, cfg)
        filtered = _tail(apply(narrowband, raw), skip)
        outputs[name] = raw
        report.points.append({
            "drive": name,
            "input_kurtosis": kurtosis(drive),
            "raw_kurtosis": kurtosis(raw),
            "raw_two_valued": set(np.unique(raw.samples).tolist()) <= levels,
            "raw_mean": float(np.mean(raw.samples)),
            "narrowband_kurtosis": kurtosis(filtered),
            "narrowband_rms": rms(filtered),
            "saturation_count": saturated,
        })
        report.tables[f"histogram_{name}_narrowband"] = _histogram_table(filtered, cfg.analysis.histogram_bins)
        report.tables[f"histogram_{name}_input"] = _histogram_table(drive, cfg.analysis.histogram_bins)

    by_drive = {p["drive"]: p for p in report.points}
    c = cfg.checks
    report.checks = [
        check_true("raw_two_valued", all(p["raw_two_valued"] for p in report.points), "outputs on the two quantizer levels"),
        check_within("raw_kurtosis_gaussian", by_drive["gaussian"]["raw_kurtosis"], 1.0,
                     c.two_level_kurtosis_tolerance),
        check_within("raw_kurtosis_impulsive", by_drive["impulsive"]["raw_kurtosis"], 1.0,
                     c.two_level_kurtosis_tolerance),
        check_within("narrowband_gaussian", by_drive["gaussian"]["narrowband_kurtosis"], 3.0,
                     c.gaussian_kurtosis_tolerance),
        check_greater("narrowband_impulsive", by_drive["impulsive"]["narrowband_kurtosis"],
                      c.impulsive_narrowband_kurtosis_min),
    ]
    report.summary = {
        "narrowband_hz": [low, high],
        "kurtosis_contrast": by_drive["impulsive"]["narrowband_kurtosis"] - by_drive["gaussian"]["narrowband_kurtosis"],
    }
    segment = min(cfg.analysis.psd_segment, cfg.n_samples)
    psd_g = psd_welch(outputs["gaussian"], segment)
    report.tables["psd_raw"] = DataTable.from_columns(
        frequency_hz=psd_g.frequencies, gaussian=psd_g.densities,
        impulsive=psd_welch(outputs["impulsive"], segment).densities)
    report.stage_signals = {f"{k}_modulated": v for k, v in outputs.items()}
    report.plots = [PlotSpec("psd_raw", "frequency_hz", ["gaussian", "impulsive"], "Modulator output PSD",
                             log_x=True, log_y=True)]
    report.plots += [PlotSpec(name, "bin_low", ["density"], name, kind="step") for name in report.tables
                     if name.startswith("histogram_")]
    return report


# ── clipping distortion ──────────────────────────────────

def run_clipping_demo(cfg: ScenarioConfig) -> ExperimentReport:
    """Clip a waveform, show the distortion is outlier noise, and repair it with the CAF."""
    clean = build_waveform(cfg)
    peak = float(np.max(np.abs(clean.samples)))
    level = cfg.analysis.clip_fraction * peak
    report = _new_report(cfg)
    report.summary = {"peak": peak, "clip_level": level, "clean_crest_factor": crest_factor(clean)}

    clipped = hard_clip_signal(clean, level)
    distortion = subtract(clipped, clean)
    if level >= peak:
        report.summary.update(degenerate=True, clip_rate=0.0, distortion_rms=rms(distortion))
        report.checks = [check_true("no_distortion", not np.any(distortion.samples),
                                    "clip level >= peak leaves the waveform intact")]
        return report

    band = signal_band(cfg)
    margin = cfg.analysis.band_margin
    edges = ((1.0 - margin) * band[0], min((1.0 + margin) * band[1], 0.98 * clean.sample_rate / 2.0))
    if edges[0] <= 0:
        raise ConfigError("clipping demo needs a waveform band away from DC")
    caf = build_caf(cfg, edges)
    stages = caf_stages(clipped, caf)
    # ADiC corrections go back through the bandstop so none of them lands in the signal band
    correction = apply(caf.pair.bandstop, subtract(stages.adic, stages.bandstop))
    d = 2 * caf.delay
    restored = add(delay(clipped, d), correction)

    settle = cfg.pipeline.settle if cfg.pipeline.settle is not None else cfg.pipeline.n_taps
    start = d + settle
    reference = delay(clean, d)
    restored_residual = _tail(subtract(restored, reference), start)
    clipped_residual = _tail(delay(distortion, d), start)

    in_band_restored = rms(band_limit(restored_residual, band))
    in_band_clipped = rms(band_limit(clipped_residual, band))
    point = {
        "clip_rate": float(np.mean(distortion.samples != 0)),
        "clipped_kurtosis": kurtosis(clipped),
        "distortion_kurtosis": kurtosis(distortion),
        "clipped_crest_factor": crest_factor(clipped),
        "residual_rms_clipped": rms(clipped_residual),
        "residual_rms_restored": rms(restored_residual),
        "in_band_residual_rms_clipped": in_band_clipped,
        "in_band_residual_rms_restored": in_band_restored,
        "in_band_improvement_db": db((in_band_clipped / in_band_restored) ** 2) if in_band_restored else math.inf,
        "blank_duty": stages.blank_duty,
    }
    report.points = [point]
    report.summary.update(degenerate=False, signal_band_hz=list(band), caf=caf.describe(), **point)
    report.checks = [
        check_at_most("clipped_not_super_gaussian", point["clipped_kurtosis"], 3.0),
        check_greater("distortion_super_gaussian", point["distortion_kurtosis"], 3.0),
        check_greater("distortion_vs_clipped_kurtosis", point["distortion_kurtosis"] - point["clipped_kurtosis"], 0.0),
        check_at_most("in_band_residual_not_increased", in_band_restored / in_band_clipped,
                      1.0 + cfg.checks.residual_growth_tolerance),
        check_at_most("residual_not_increased", point["residual_rms_restored"] / point["residual_rms_clipped"], 1.0,
                      hard=False),
    ]

    window = _excerpt(start, len(clean))
    report.tables["clipping_traces"] = DataTable.from_columns(
        time_s=clean.times()[window],
        clean=reference.samples[window],
        clipped=delay(clipped, d).samples[window],
        distortion=delay(distortion, d).samples[window],
        restored=restored.samples[window],
    )
    report.tables["histogram_clipped"] = _histogram_table(clipped, cfg.analysis.histogram_bins)
    report.tables["histogram_distortion"] = _histogram_table(distortion, cfg.analysis.histogram_bins)
    segment = min(cfg.analysis.psd_segment, len(clean))
    psd_clean = psd_welch(clean, segment)
    report.tables["psd"] = DataTable.from_columns(
        frequency_hz=psd_clean.frequencies, clean=psd_clean.densities,
        clipped=psd_welch(clipped, segment).densities, distortion=psd_welch(distortion, segment).densities,
        restored=psd_welch(restored, segment).densities)
    report.stage_signals = dict(stages.as_dict(), clean=clean, distortion=distortion, restored=restored)
    report.plots = [
        PlotSpec("clipping_traces", "time_s", ["clean", "clipped", "distortion", "restored"], "Clipping and repair"),
        PlotSpec("histogram_clipped", "bin_low", ["density"], "Clipped signal amplitudes", kind="step"),
        PlotSpec("histogram_distortion", "bin_low", ["density"], "Distortion amplitudes", kind="step", log_y=True),
        PlotSpec("psd", "frequency_hz", ["clean", "clipped", "distortion", "restored"], "PSD", log_y=True),
    ]
    return report


# ── efecto cucaracha ─────────────────────────────────────

def _band_powers(psd_before, psd_after, n_bands: int, nyquist: float) -> List[Dict[str, float]]:
    width = nyquist / n_bands
    rows = []
    for k in range(n_bands):
        low, high = k * width, (k + 1) * width
        before, after = psd_before.band_power(low, high), psd_after.band_power(low, high)
        rows.append({"band_low_hz": low, "band_high_hz": high, "before": before, "after": after,
                     "change_db": db(after / before) if before > 0 else math.inf})
    return rows


def run_cucaracha_demo(cfg: ScenarioConfig) -> ExperimentReport:
    """Lowpass-shaped impulsive + background noise through a feedback ADiC, PSD before and after."""
    rate, duration = cfg.sample_rate, cfg.duration
    a = cfg.analysis
    if a.shaping_corner_hz is None or a.adic_corner_hz is None:
        raise ConfigError("cucaracha demo needs analysis.shaping_corner_hz and analysis.adic_corner_hz")

    background = gen_gaussian_noise(GaussianNoiseSpec(cfg.gaussian.sigma, cfg.component_seed(SEED_GAUSSIAN)),
                                    rate, duration)
    raw = add(background, _impulsive_noise(cfg, cfg.impulsive.amplitude, build_pulse_shape(cfg)))
    shaping = design_bessel_like_lowpass(a.shaping_corner_hz, a.shaping_order, rate)
    noise = _tail(apply(shaping, raw), cfg.pipeline.n_taps)

    p = cfg.pipeline
    tau = p.tau or 1.0 / (2.0 * math.pi * a.adic_corner_hz)
    active = FeedbackAdic(tau, p.beta, p.gain_fraction, p.initial_scale).process(noise)
    allpass = FeedbackAdic(tau, math.inf, p.gain_fraction, p.initial_scale).process(noise)

    segment = min(a.psd_segment, len(noise))
    before = psd_welch(noise, segment)
    after = psd_welch(active.output, segment)
    control = psd_welch(allpass.output, segment)
    bands = _band_powers(before, after, a.psd_bands, rate / 2.0)

    loud = max(range(len(bands)), key=lambda k: bands[k]["before"])
    median = float(np.median([b["before"] for b in bands]))
    quiet = [k for k, b in enumerate(bands) if b["before"] < median]
    quiet_rise = max(bands[k]["after"] / bands[k]["before"] for k in quiet)
    allpass_change = float(np.max(np.abs(control.densities - before.densities) /
                                  np.maximum(before.densities, np.finfo(float).tiny)))

    report = _new_report(cfg)
    report.points = bands
    report.summary = {
        "loud_band": [bands[loud]["band_low_hz"], bands[loud]["band_high_hz"]],
        "loud_band_change_db": bands[loud]["change_db"],
        "max_quiet_band_rise_db": db(quiet_rise),
        "decreased_bands": sum(b["after"] < b["before"] for b in bands),
        "increased_bands": sum(b["after"] > b["before"] for b in bands),
        "blank_duty": active.blank_duty,
        "input_kurtosis": kurtosis(noise),
        "output_kurtosis": kurtosis(active.output),
        "allpass_max_relative_change": allpass_change,
    }
    c = cfg.checks
    report.checks = [
        check_at_most("allpass_psd_unchanged", allpass_change, c.allpass_psd_tolerance),
        check_true("loud_band_decreased", bands[loud]["after"] < bands[loud]["before"],
                   "band power after < before in the loudest band"),
        check_greater("quiet_band_increased", quiet_rise, 1.0),
    ]
    report.tables["psd"] = DataTable.from_columns(frequency_hz=before.frequencies, before=before.densities,
                                                  after=after.densities, allpass=control.densities)
    report.tables["band_powers"] = DataTable.from_columns(**{k: [b[k] for b in bands] for k in bands[0]})
    report.stage_signals = {"noise": noise, "adic": active.output}
    report.plots = [
        PlotSpec("psd", "frequency_hz", ["before", "after", "allpass"], "PSD before and after ADiC", log_y=True),
        PlotSpec("band_powers", "band_low_hz", ["change_db"], "Band power change", kind="step"),
    ]
    return report


EXPERIMENT_FUNCTIONS: Dict[str, Callable[[ScenarioConfig], ExperimentReport]] = {
    "bandwidth-sweep": run_bandwidth_sweep,
    "caf-chirp": run_caf_chirp_demo,
    "capacity-sweep": run_capacity_sweep,
    "delta-sigma": run_delta_sigma_demo,
    "clipping": run_clipping_demo,
    "cucaracha": run_cucaracha_demo,
}


def run(cfg: ScenarioConfig) -> ExperimentReport:
    try:
        fn = EXPERIMENT_FUNCTIONS[cfg.experiment]
    except KeyError:
        raise ConfigError(f"Unknown experiment: {cfg.experiment}") from None
    return fn(cfg)
