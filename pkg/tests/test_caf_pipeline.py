import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))
from cinf_lab.core.caf_pipeline import (
    AgcState,
    DeltaSigmaState,
    FrontEndChain,
    agc_step,
    build_caf_config,
    caf_process,
    caf_stages,
    chirp_caf_edges,
    digital_front_end,
    linear_reference,
    run_agc,
    run_delta_sigma,
)
from cinf_lab.core.generators import (
    ImpulsiveNoiseSpec,
    OfdmSpec,
    gen_impulsive_noise,
    gen_ofdm_burst,
    gen_tone,
)
from cinf_lab.core.linear_filters import (
    design_bessel_like_lowpass,
    design_fir_lowpass,
    design_moving_average_cascade,
)
from cinf_lab.core.metrics import band_limit, baseband_snr, rms
from cinf_lab.core.nonlinear_core import load_state_snapshot, save_state_snapshot
from cinf_lab.core.signal_core import Signal, add, delay
from cinf_lab.errors import SignalMismatchError, StageError

RATE = 1e6


def impulsive_input(n=100_000, seed=5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    where = rng.choice(np.arange(1000, n), size=200, replace=False)
    x[where] += 100.0 * rng.choice([-1.0, 1.0], size=200)
    return Signal(x, RATE)


def test_chirp_edges_and_defaults():
    assert chirp_caf_edges(50e3) == (10e3, 50e3)
    cfg = build_caf_config(10e3, 50e3, RATE, 511)
    assert cfg.delay == 255
    assert cfg.f_c == 50e3
    assert cfg.effective_tau == pytest.approx(1.0 / (2 * math.pi * 10e3))
    assert cfg.describe()["n_taps"] == 511
    assert not cfg.with_enabled(False).enabled


def test_stages_reconstruct_delayed_input_when_fences_are_unbounded():
    s = impulsive_input(20_000)
    stages = caf_stages(s, build_caf_config(10e3, 50e3, RATE, 511, beta=math.inf))
    assert np.array_equal(stages.adic.samples, stages.bandstop.samples)
    assert np.allclose(stages.output.samples, delay(s, 255).samples, atol=1e-9)
    assert set(stages.as_dict()) == {"I", "II", "III", "IV", "V"}
    assert stages.blank_duty == 0.0


def test_outlier_free_input_comes_out_as_a_pure_delay():
    tones = add(gen_tone(20e3, 1.0, RATE, 0.05), gen_tone(150e3, 0.5, RATE, 0.05))
    cfg = build_caf_config(10e3, 50e3, RATE, 511)
    stages = caf_stages(tones, cfg)
    assert stages.adic_result.blanked_count == 0
    err = stages.output.samples - delay(tones, cfg.delay).samples
    assert np.sqrt(np.mean(err ** 2)) < 1e-12


def test_caf_does_not_blank_while_the_bandstop_settles():
    s = Signal(np.random.default_rng(0).standard_normal(100_000), RATE)
    cfg = build_caf_config(10e3, 50e3, RATE, 511)
    stages = caf_stages(s, cfg, record_telemetry=True)
    tel = stages.adic_result.telemetry
    assert tel.in_range[: 2 * cfg.delay + 200].all()
    assert stages.blank_duty < 5e-4


def test_disabled_caf_is_a_pure_delay():
    s = impulsive_input(5000)
    cfg = build_caf_config(10e3, 50e3, RATE, 101, enabled=False)
    stages = caf_stages(s, cfg)
    assert np.array_equal(stages.output.samples, delay(s, 50).samples)
    assert stages.adic_result is None
    assert stages.blank_duty == 0.0


def test_rate_mismatch():
    with pytest.raises(SignalMismatchError):
        caf_process(Signal(np.zeros(100), 2e6), build_caf_config(10e3, 50e3, RATE, 101))


def test_caf_removes_outlier_power_from_low_band():
    s = impulsive_input()
    cfg = build_caf_config(10e3, 50e3, RATE, 511)
    linear = band_limit(delay(s, cfg.delay), (0.0, 8e3))
    caf = band_limit(caf_process(s, cfg), (0.0, 8e3))
    assert rms(caf) ** 2 < 0.5 * rms(linear) ** 2


def test_caf_keeps_in_band_structure():
    rng = np.random.default_rng(1)
    tone = gen_tone(20e3, 1.0, RATE, 0.05)
    noisy = add(tone, Signal(0.1 * rng.standard_normal(len(tone)), RATE))
    cfg = build_caf_config(10e3, 50e3, RATE, 511)
    report = baseband_snr(caf_process(noisy, cfg), delay(tone, cfg.delay), (10e3, 50e3), max_lag=None,
                          settle=cfg.delay)
    linear = baseband_snr(delay(noisy, cfg.delay), delay(tone, cfg.delay), (10e3, 50e3), max_lag=None,
                          settle=cfg.delay)
    assert report.snr_db == pytest.approx(linear.snr_db, abs=0.1)


def test_delta_sigma_two_level_and_mean_preserving():
    s = Signal(np.full(100_000, 0.3), RATE)
    for order in (1, 2):
        result = run_delta_sigma(s, DeltaSigmaState.initial(order))
        assert set(result.output.samples.tolist()) == {-1.0, 1.0}
        assert np.mean(result.output.samples) == pytest.approx(0.3, abs=1e-3)
        assert result.saturation_count == 0


def test_delta_sigma_resumes_from_state():
    s = gen_tone(3e3, 0.5, RATE, 0.01)
    whole = run_delta_sigma(s)
    first = run_delta_sigma(s.with_samples(s.samples[:4000]))
    second = run_delta_sigma(s.with_samples(s.samples[4000:]), first.state)
    assert np.array_equal(np.concatenate([first.output.samples, second.output.samples]), whole.output.samples)
    assert second.state == whole.state


def test_delta_sigma_state(tmp_path):
    with pytest.raises(ValueError):
        DeltaSigmaState.initial(3)
    result = run_delta_sigma(Signal(np.array([0.2, 1.5, -2.0, 0.1]), RATE))
    assert result.saturation_count == 2
    assert load_state_snapshot(save_state_snapshot(result.state, tmp_path / "ds.json")) == result.state


def test_agc_gain_scales_inversely_with_input_level():
    rng = np.random.default_rng(2)
    x = rng.standard_normal(200_000)
    quiet = run_agc(Signal(x, RATE), AgcState.initial(0.3))
    loud = run_agc(Signal(2.0 * x, RATE), AgcState.initial(0.3))
    ratio = np.mean(loud.gains[100_000:]) / np.mean(quiet.gains[100_000:])
    assert ratio == pytest.approx(0.5, rel=0.02)


def test_agc_holds_clip_rate_low_on_ofdm():
    s = gen_ofdm_burst(OfdmSpec(1024, 64, active_fraction=0.25, first_subcarrier=32, seed=3), RATE)
    result = run_agc(s, AgcState.initial(0.3, clip_level=1.0, gain=0.3))
    assert result.clip_rate < 0.01
    assert np.max(np.abs(result.clipped.samples)) <= 1.0


def test_agc_step_matches_run_agc():
    rng = np.random.default_rng(4)
    s = Signal(rng.standard_normal(2000), RATE)
    state = AgcState.initial(0.3, adaptation_rate=1e-2)
    result = run_agc(s, state)
    outputs = []
    for x in s.samples:
        state, y = agc_step(state, x)
        outputs.append(y)
    assert outputs == result.output.samples.tolist()
    assert state.gain == result.state.gain


def test_front_end_bypass_is_identity():
    s = gen_tone(1e3, 0.5, RATE, 0.001)
    result = digital_front_end(s, FrontEndChain())
    assert np.array_equal(result.output.samples, s.samples)
    assert set(result.stage_signals) == {"input", "output"}


def test_delta_sigma_front_end_reaches_high_baseband_snr():
    rate = 1.28e6
    clean = gen_tone(6e3, 0.5, rate, 0.05)
    chain = FrontEndChain(
        delta_sigma=DeltaSigmaState.initial(2),
        pre_caf=design_moving_average_cascade(8, 3),
        decimation_factor=32,
        decimation_kernel=design_fir_lowpass(12e3, rate, 801),
    )
    result = digital_front_end(clean, chain)
    reference = linear_reference(clean, chain)
    assert result.output.sample_rate == 40e3
    assert set(np.unique(result.stage_signals["delta_sigma"].samples)) == {-1.0, 1.0}
    snr = baseband_snr(result.output, reference, (0.0, 10e3), max_lag=None, settle=50)
    assert snr.snr_db > 40.0


def test_caf_in_front_end_removes_clipped_pulses():
    rate = 200e3
    duration = 0.5
    clean = gen_tone(500.0, 0.3, rate, duration)
    rng = np.random.default_rng(9)
    pulses = gen_impulsive_noise(
        ImpulsiveNoiseSpec(200.0, amplitude=4.0, polarity="bipolar", seed=6,
                           pulse_shape=design_bessel_like_lowpass(50e3, 4, rate)),
        rate, duration)
    noisy = add(add(clean, pulses), Signal(0.01 * rng.standard_normal(len(clean)), rate))
    caf = build_caf_config(1e3, 5e3, rate, 1001)
    decimation = design_fir_lowpass(6e3, rate, 201)

    snrs = {}
    for enabled in (True, False):
        chain = FrontEndChain(clip_level=0.9, caf=caf.with_enabled(enabled), decimation_factor=10,
                              decimation_kernel=decimation)
        result = digital_front_end(noisy, chain)
        snrs[enabled] = baseband_snr(result.output, linear_reference(clean, chain), (0.0, 600.0),
                                     max_lag=None, settle=100).snr_db
        assert result.clip_count > 0
    assert snrs[True] > snrs[False] + 3.0


def test_front_end_wraps_stage_failures():
    chain = FrontEndChain(caf=build_caf_config(1e3, 5e3, 100e3, 101))
    with pytest.raises(StageError) as info:
        digital_front_end(Signal(np.zeros(1000), 200e3), chain)
    assert info.value.stage == "caf"
    assert isinstance(info.value.cause, SignalMismatchError)
