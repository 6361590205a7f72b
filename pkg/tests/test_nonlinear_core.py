import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.append(str(Path(__file__).resolve().parents[1]))
from cinf_lab.core.nonlinear_core import (
    AdicState,
    BasicAdic,
    BasicAdicState,
    BlankingRange,
    FeedbackAdic,
    QtfState,
    TukeyFenceTracker,
    adic_step,
    basic_adic_step,
    blank,
    fence_tracker_step,
    hard_clip,
    hard_clip_signal,
    load_state_snapshot,
    qtf_step,
    save_state_snapshot,
    tukey_fences,
)
from cinf_lab.core.signal_core import Signal
from cinf_lab.errors import DiscretizationError

RATE = 1e6


def noisy_signal(n=100_000, seed=3, impulses=100, height=50.0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal(n)
    where = rng.choice(np.arange(2000, n), size=impulses, replace=False)
    x[where] += height * rng.choice([-1.0, 1.0], size=impulses)
    return Signal(x, RATE)


def test_blank_is_closed_interval():
    r = BlankingRange(-1.0, 2.0)
    assert blank(2.0, r) == 2.0
    assert blank(-1.0, r) == -1.0
    assert blank(2.0001, r) == 0.0
    assert blank(-3.0, r) == 0.0
    assert blank(1e300, BlankingRange.unbounded()) == 1e300


def test_inverted_range_blanks_everything():
    r = BlankingRange(1.0, -1.0)
    assert r.inverted
    assert blank(0.0, r) == 0.0
    assert blank(0.5, r) == 0.0


def test_blanking_range_validation():
    with pytest.raises(ValueError):
        BlankingRange(-math.inf, 3.0)
    with pytest.raises(ValueError):
        BlankingRange(float("nan"), 1.0)


def test_hard_clip():
    assert hard_clip(5.0, 2.0) == 2.0
    assert hard_clip(-5.0, 2.0) == -2.0
    assert hard_clip(1.0, 2.0) == 1.0
    with pytest.raises(ValueError):
        hard_clip(1.0, 0.0)
    s = hard_clip_signal(Signal(np.array([-3.0, 0.5, 3.0]), RATE), 1.0)
    assert s.samples.tolist() == [-1.0, 0.5, 1.0]


def test_qtf_step_by_hand():
    state = QtfState(0.75, 0.1, 0.0)
    assert qtf_step(state, 1.0)[1] == pytest.approx(0.15)
    assert qtf_step(state, -1.0)[1] == pytest.approx(-0.05)
    assert qtf_step(state, 0.0)[1] == pytest.approx(0.05)
    with pytest.raises(ValueError):
        QtfState(1.0, 0.1, 0.0)


def test_tukey_fences_by_hand():
    tracker = TukeyFenceTracker.initial(0.0, 1.0, beta=1.5)
    fences = tukey_fences(tracker)
    assert (fences.alpha_minus, fences.alpha_plus) == (-4.0, 4.0)
    assert tukey_fences(TukeyFenceTracker.initial(0.0, 1.0, beta=math.inf)).unbounded_range


def test_fence_tracker_step_uses_iqr_proportional_gain():
    tracker = fence_tracker_step(TukeyFenceTracker.initial(0.0, 1.0, gain_fraction=0.05), 0.0)
    assert tracker.q1_tracker.estimate == pytest.approx(-0.95)
    assert tracker.q3_tracker.estimate == pytest.approx(0.95)
    assert tracker.q1_tracker.step_gain == pytest.approx(0.1)


@pytest.mark.parametrize("q", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("draw,iqr", [("uniform", 0.5), ("normal", 1.3490)])
def test_qtf_tracks_sliding_window_quantile(draw, iqr, q):
    rng = np.random.default_rng(21)
    n, settle, window = 150_000, 30_000, 10_000
    x = rng.uniform(0.0, 1.0, n) if draw == "uniform" else rng.standard_normal(n)
    state = QtfState(q, 1e-3, 0.0)
    estimates = np.empty(n)
    for i, v in enumerate(x):
        state, estimates[i] = qtf_step(state, v)
    ends = range(settle + window, n + 1, window)
    oracle = np.mean([np.quantile(np.sort(x[k - window:k]), q) for k in ends])
    tracked = np.mean(estimates[settle:])
    assert abs(tracked - oracle) <= 0.02 * iqr


def test_step_functions_accept_numpy_scalars():
    sample = np.array([1.0, 0.25])
    state, estimate = qtf_step(QtfState(0.5, 0.1, 0.0), sample[0])
    assert estimate == pytest.approx(0.1)
    assert type(state.estimate) is float

    tracker = TukeyFenceTracker.initial(0.0, 1.0)
    assert fence_tracker_step(tracker, sample[1]) == fence_tracker_step(tracker, 0.25)
    adic = AdicState(1e-4, 0.0, tracker)
    assert adic_step(adic, sample[1], 1e-6) == adic_step(adic, 0.25, 1e-6)
    basic = BasicAdicState(tracker)
    assert basic_adic_step(basic, sample[0]) == basic_adic_step(basic, 1.0)


def test_unbounded_fences_give_exact_identity():
    s = noisy_signal(20_000)
    for adic in (FeedbackAdic(tau=1e-4, beta=math.inf), BasicAdic(beta=math.inf)):
        result = adic.process(s)
        assert np.array_equal(result.output.samples, s.samples)
        assert result.blanked_count == 0


def test_feedback_adic_removes_outliers():
    s = noisy_signal()
    result = FeedbackAdic(tau=1e-4, beta=3.0).process(s)
    assert np.max(np.abs(result.output.samples)) < 10.0
    assert result.blanked_count >= 100
    assert result.blank_duty < 0.01


def test_basic_adic_removes_outliers():
    s = noisy_signal()
    result = BasicAdic(beta=3.0).process(s)
    assert np.max(np.abs(result.output.samples)) < 10.0
    assert result.blank_duty < 0.01


def test_chunked_processing_matches_single_pass():
    s = noisy_signal(40_000)
    adic = FeedbackAdic(tau=1e-4, beta=3.0)
    whole = adic.process(s)
    first = adic.process(s.with_samples(s.samples[:15_000]))
    second = adic.process(s.with_samples(s.samples[15_000:]), first.state)
    joined = np.concatenate([first.output.samples, second.output.samples])
    assert np.array_equal(joined, whole.output.samples)
    assert second.state == whole.state
    assert second.state.sample_count == 40_000


@pytest.mark.parametrize("split", [100, 250, 2_000])
def test_holdoff_and_training_pass_through_and_survive_chunking(split):
    s = noisy_signal(10_000)
    x = s.samples.copy()
    x[50] = x[300] = 80.0
    s = s.with_samples(x)
    adic = FeedbackAdic(tau=1e-4, beta=3.0, holdoff=200, training=200, record_telemetry=True)
    whole = adic.process(s)
    assert np.array_equal(whole.output.samples[:400], x[:400])
    assert whole.telemetry.in_range[:400].all()
    first = adic.process(s.with_samples(x[:split]))
    second = adic.process(s.with_samples(x[split:]), first.state)
    assert np.array_equal(np.concatenate([first.output.samples, second.output.samples]),
                          whole.output.samples)
    assert second.state == whole.state
    with pytest.raises(ValueError):
        FeedbackAdic(tau=1e-4, holdoff=-1)


def test_streaming_processors_match_step_functions():
    s = noisy_signal(3000, impulses=10)
    dt = 1.0 / RATE

    adic = FeedbackAdic(tau=5e-5, beta=2.0)
    result = adic.process(s)
    state = adic.initial_state(s.samples[0])
    stepped = []
    for x in s.samples.tolist():
        state, y = adic_step(state, x, dt)
        stepped.append(y)
    assert stepped == result.output.samples.tolist()
    assert state.chi == result.state.chi

    basic = BasicAdic(beta=2.0)
    result = basic.process(s)
    basic_state = basic.initial_state(s.samples[0])
    stepped = []
    for x in s.samples.tolist():
        basic_state, y = basic_adic_step(basic_state, x)
        stepped.append(y)
    assert stepped == result.output.samples.tolist()


def test_discretization_guard():
    with pytest.raises(DiscretizationError):
        FeedbackAdic(tau=1e-7).process(Signal(np.zeros(10), RATE))
    state = FeedbackAdic(tau=1e-7).initial_state(0.0)
    with pytest.raises(DiscretizationError):
        adic_step(state, 1.0, 1e-6)


def test_startup_inversion_blanks_to_mid_range():
    tracker = TukeyFenceTracker(QtfState(0.25, 1e-9, 1.0), QtfState(0.75, 1e-9, -1.0), 1.5, None)
    result = BasicAdic().process(Signal(np.array([0.5, -0.3, 2.0]), RATE), BasicAdicState(tracker))
    assert result.inverted_count == 3
    assert result.blanked_count == 3
    assert np.all(np.abs(result.output.samples) < 1e-6)


def test_telemetry(tmp_path):
    s = noisy_signal(5000, impulses=20)
    result = FeedbackAdic(tau=1e-4, beta=3.0, record_telemetry=True).process(s)
    tel = result.telemetry
    assert len(tel) == 5000
    assert int(np.sum(~tel.in_range)) == result.blanked_count
    assert np.all(tel.alpha_minus <= tel.alpha_plus)
    assert tel.to_csv(tmp_path / "tel.csv").read_text().startswith("sample_index,in_range")


def test_state_snapshot_round_trip(tmp_path):
    s = noisy_signal(5000, impulses=20)
    feedback = FeedbackAdic(tau=1e-4, beta=3.0).process(s).state
    basic = BasicAdic(beta=3.0).process(s).state
    assert isinstance(feedback, AdicState)
    assert load_state_snapshot(save_state_snapshot(feedback, tmp_path / "feedback.json")) == feedback
    assert load_state_snapshot(save_state_snapshot(basic, tmp_path / "basic.json")) == basic
    with pytest.raises(ValueError):
        save_state_snapshot(object(), tmp_path / "bad.json")
