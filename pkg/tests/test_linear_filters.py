import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))
from cinf_lab.core.linear_filters import (
    FilterKernel,
    apply,
    apply_zero_phase,
    design_bessel_like_lowpass,
    design_complementary_pair,
    design_differentiator,
    design_dispersive_allpass,
    design_fir_lowpass,
    design_first_order_lowpass,
    design_matched_inverse,
    design_moving_average_cascade,
    group_delay,
    is_allpass,
    kernel_from_config,
    load_kernel,
    save_kernel,
)
from cinf_lab.core.signal_core import Signal, add, delay
from cinf_lab.errors import FilterDesignError

RATE = 1e6


def _noise(n=100_000, seed=0):
    return Signal(np.random.default_rng(seed).standard_normal(n), RATE)


def test_complementary_pair_reconstructs_delayed_input():
    pair = design_complementary_pair(10e3, 50e3, RATE, 511)
    assert pair.delay == 255
    x = _noise()
    total = add(apply(pair.bandpass, x), apply(pair.bandstop, x))
    error = total.samples - delay(x, pair.delay).samples
    assert np.max(np.abs(error)) < 1e-12 * np.sqrt(np.mean(x.samples ** 2))


def test_complementary_taps_sum_to_delayed_delta():
    pair = design_complementary_pair(10e3, 50e3, RATE, 101)
    taps = pair.bandpass.taps + pair.bandstop.taps
    expected = np.zeros(101)
    expected[50] = 1.0
    assert np.array_equal(taps, expected)


def test_complementary_pair_rejects_bad_edges():
    with pytest.raises(FilterDesignError):
        design_complementary_pair(50e3, 10e3, RATE, 511)
    with pytest.raises(FilterDesignError):
        design_complementary_pair(10e3, 600e3, RATE, 511)
    with pytest.raises(FilterDesignError):
        design_complementary_pair(10e3, 50e3, RATE, 510)


def test_first_order_lowpass_corner_and_dc():
    kernel = design_first_order_lowpass(10e3, RATE)
    assert kernel.dc_gain() == pytest.approx(1.0, abs=1e-12)
    assert abs(kernel.frequency_response(10e3, RATE)[0]) == pytest.approx(1.0 / math.sqrt(2.0), rel=1e-9)


def test_bessel_like_lowpass_unit_dc_and_order():
    kernel = design_bessel_like_lowpass(20e3, 4, RATE)
    assert kernel.form == "sos"
    assert kernel.order == 4
    assert kernel.dc_gain() == pytest.approx(1.0, abs=1e-9)
    assert kernel.metadata["cutoff_hz"] == pytest.approx(20e3)
    with pytest.raises(FilterDesignError):
        design_bessel_like_lowpass(20e3, 9, RATE)


@pytest.mark.parametrize("order", range(2, 9))
def test_bessel_like_passband_delay_is_flat(order):
    corner = 10e3
    kernel = design_bessel_like_lowpass(corner, order, RATE)
    delays = [group_delay(kernel, f, RATE) for f in np.linspace(0.0, corner, 41)]
    assert (max(delays) - min(delays)) / np.mean(delays) < 0.05
    assert kernel.metadata["delay_ripple"] < 0.05
    assert kernel.metadata["cutoff_hz"] >= corner


@pytest.mark.parametrize("order", range(2, 9))
def test_bessel_like_step_overshoot_below_one_percent(order):
    kernel = design_bessel_like_lowpass(10e3, order, RATE)
    step = apply(kernel, Signal(np.ones(20_000), RATE)).samples
    assert np.max(step) - 1.0 < 0.01
    assert step[-1] == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("order", range(2, 9))
def test_bessel_like_passband_tone_within_one_db(order):
    corner = 10e3
    kernel = design_bessel_like_lowpass(corner, order, RATE)
    t = np.arange(20_000) / RATE
    tone = Signal(np.sin(2.0 * np.pi * (corner / 2.0) * t), RATE)
    out = apply(kernel, tone).samples[5000:]
    gain_db = 20.0 * math.log10(np.sqrt(np.mean(out ** 2)) / np.sqrt(np.mean(tone.samples[5000:] ** 2)))
    assert -1.0 < gain_db < 0.1


def test_low_order_bessel_corner_sits_below_its_3db_point():
    kernel = design_bessel_like_lowpass(10e3, 2, RATE)
    assert kernel.metadata["cutoff_hz"] > 1.5 * 10e3
    assert abs(kernel.frequency_response(kernel.metadata["cutoff_hz"], RATE)[0]) == pytest.approx(
        1.0 / math.sqrt(2.0), abs=0.02)


@pytest.mark.parametrize("make", [
    lambda: design_first_order_lowpass(10e3, RATE),
    lambda: design_bessel_like_lowpass(20e3, 4, RATE),
    lambda: design_bessel_like_lowpass(20e3, 3, RATE),
    lambda: design_dispersive_allpass(9, 0.5, RATE),
    lambda: design_matched_inverse(design_first_order_lowpass(10e3, RATE)),
])
def test_recursive_kernels_apply_with_read_only_coefficients(make):
    kernel = make()
    assert kernel.form == "sos"
    assert not kernel.coefficients.flags.writeable
    out = apply(kernel, Signal(np.ones(5000), RATE))
    assert len(out) == 5000
    assert np.all(np.isfinite(out.samples))
    zero_phase = apply_zero_phase(kernel, Signal(np.ones(500), RATE))
    assert np.all(np.isfinite(zero_phase.samples))


def test_fir_group_delay_is_exactly_half_length():
    kernel = design_fir_lowpass(50e3, RATE, 101)
    assert kernel.is_linear_phase
    assert group_delay(kernel, 0.0, RATE) == 50.0
    assert group_delay(kernel, 123e3, RATE) == 50.0
    with pytest.raises(ValueError):
        group_delay(kernel, RATE / 2.0, RATE)


def test_group_delay_of_plain_delay_line():
    kernel = FilterKernel("fir", np.array([0.0, 0.0, 0.0, 1.0]))
    assert group_delay(kernel, 1e3, RATE) == pytest.approx(3.0)


def test_long_and_short_fir_application_agree():
    taps = design_fir_lowpass(30e3, RATE, 301).taps
    x = _noise(5000)
    long_out = apply(FilterKernel.from_taps(taps), x).samples
    direct = np.convolve(x.samples, taps)[:5000]
    assert np.allclose(long_out, direct, atol=1e-12)


def test_moving_average_cascade():
    kernel = design_moving_average_cascade(4, 3)
    assert kernel.taps.size == 10
    assert kernel.taps.sum() == pytest.approx(1.0)
    assert kernel.nominal_group_delay == 4.5


def test_differentiator_and_allpass():
    assert design_differentiator().taps.tolist() == [1.0, -1.0]
    allpass = design_dispersive_allpass(5, 0.6, RATE)
    assert is_allpass(allpass)
    assert not is_allpass(design_first_order_lowpass(10e3, RATE))
    assert group_delay(allpass, 0.0, RATE) != pytest.approx(group_delay(allpass, 200e3, RATE))


def test_matched_inverse_undoes_minimum_phase_kernel():
    kernel = design_first_order_lowpass(20e3, RATE)
    inverse = design_matched_inverse(kernel)
    x = _noise(2000)
    restored = apply(inverse, apply(kernel, x))
    assert np.allclose(restored.samples, x.samples, atol=1e-9)


def test_matched_inverse_rejects_non_minimum_phase():
    with pytest.raises(FilterDesignError):
        design_matched_inverse(FilterKernel.from_taps([1.0, -2.0]))


def test_unstable_sections_rejected():
    with pytest.raises(FilterDesignError):
        FilterKernel("sos", np.array([[1.0, 0.0, 0.0, 1.0, -1.5, 0.0]]))


def test_zero_phase_application_has_no_delay():
    kernel = design_first_order_lowpass(5e3, RATE)
    x = Signal(np.sin(2 * np.pi * 1e3 * np.arange(20000) / RATE), RATE)
    y = apply_zero_phase(kernel, x)
    mid = slice(5000, 15000)
    lag = np.argmax(np.correlate(y.samples[mid], x.samples[mid], mode="full")) - (10000 - 1)
    assert lag == 0


def test_kernel_json_round_trip(tmp_path):
    kernel = design_bessel_like_lowpass(20e3, 4, RATE)
    back = load_kernel(save_kernel(kernel, tmp_path / "k.json"))
    assert back.form == kernel.form
    assert np.array_equal(back.coefficients, kernel.coefficients)
    assert back.nominal_group_delay == kernel.nominal_group_delay
    assert back.metadata["corner_hz"] == 20e3


def test_kernel_from_config_vocabulary():
    assert kernel_from_config("delta", RATE).taps.tolist() == [1.0]
    assert kernel_from_config("fir_lowpass", RATE, 10e3, n_taps=31).taps.size == 31
    with pytest.raises(FilterDesignError):
        kernel_from_config("chebyshev", RATE, 10e3)
