import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))
from cinf_lab.core.linear_filters import design_fir_lowpass, FilterKernel
from cinf_lab.core.signal_core import (
    Signal,
    add,
    concatenate,
    decimate,
    delay,
    negate,
    scale,
    subtract,
    zeros,
    zeros_like,
)
from cinf_lab.errors import SignalMismatchError


def test_signal_is_read_only_copy():
    data = np.array([1.0, 2.0, 3.0])
    s = Signal(data, 10.0)
    data[0] = 99.0
    assert s.samples[0] == 1.0
    with pytest.raises(ValueError):
        s.samples[0] = 5.0


def test_signal_rejects_non_finite_and_bad_rate():
    with pytest.raises(ValueError):
        Signal(np.array([1.0, np.nan]), 10.0)
    with pytest.raises(ValueError):
        Signal(np.array([1.0, np.inf]), 10.0)
    with pytest.raises(ValueError):
        Signal(np.array([1.0]), 0.0)


def test_time_grid():
    s = Signal(np.zeros(4), 4.0, start_time=1.0)
    assert s.duration == 1.0
    assert s.grid.step == 0.25
    assert s.times().tolist() == [1.0, 1.25, 1.5, 1.75]


def test_add_subtract_negate_scale():
    a = Signal([1.0, 2.0, 3.0], 8.0)
    b = Signal([0.5, 0.5, 0.5], 8.0)
    assert add(a, b).samples.tolist() == [1.5, 2.5, 3.5]
    assert subtract(a, b).samples.tolist() == [0.5, 1.5, 2.5]
    assert negate(a).samples.tolist() == [-1.0, -2.0, -3.0]
    assert scale(a, 2.0).samples.tolist() == [2.0, 4.0, 6.0]
    assert zeros_like(a).samples.tolist() == [0.0, 0.0, 0.0]


def test_add_rejects_mismatch():
    a = zeros(3, 8.0)
    with pytest.raises(SignalMismatchError):
        add(a, zeros(4, 8.0))
    with pytest.raises(SignalMismatchError):
        add(a, zeros(3, 16.0))
    with pytest.raises(ValueError):
        subtract(a, zeros(3, 16.0))


def test_delay():
    s = Signal([1.0, 2.0, 3.0, 4.0], 1.0)
    assert delay(s, 0).samples.tolist() == [1.0, 2.0, 3.0, 4.0]
    assert delay(s, 2).samples.tolist() == [0.0, 0.0, 1.0, 2.0]
    assert delay(s, 10).samples.tolist() == [0.0] * 4
    with pytest.raises(ValueError):
        delay(s, -1)


def test_concatenate():
    a = Signal([1.0], 2.0)
    b = Signal([2.0, 3.0], 2.0)
    assert concatenate(a, b).samples.tolist() == [1.0, 2.0, 3.0]
    with pytest.raises(SignalMismatchError):
        concatenate(a, Signal([1.0], 3.0))


def test_decimate_keeps_every_nth_sample():
    s = Signal(np.arange(10.0), 100.0)
    out = decimate(s, 3, FilterKernel.identity())
    assert out.sample_rate == pytest.approx(100.0 / 3)
    assert out.samples.tolist() == [0.0, 3.0, 6.0, 9.0]


def test_decimate_rejects_cutoff_above_output_nyquist():
    s = zeros(100, 1000.0)
    kernel = design_fir_lowpass(200.0, 1000.0, 31)
    with pytest.raises(ValueError):
        decimate(s, 4, kernel)
    assert len(decimate(s, 2, kernel)) == 50
