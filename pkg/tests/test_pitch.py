import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speechhmm.audio import AudioBuffer, SignalSpec, synthesize
from speechhmm.pitch import (
    PitchParams,
    estimate_f0,
    estimate_f0_peakpick,
    estimate_f0_xcorr,
    median_abs_error,
    normalized_xcorr,
)


def sine(f0, dur=1.0, amp=1.0, **kw):
    return synthesize(SignalSpec("sine", f0, dur, amp, **kw))


def test_normalized_xcorr_matches_direct():
    x = np.random.default_rng(0).normal(size=300)
    W = 100
    for lag in (0, 5, 77, 199):
        a, b = x[:W], x[lag : lag + W]
        ref = a @ b / math.sqrt((a @ a) * (b @ b))
        assert normalized_xcorr(x, [lag], W)[0] == pytest.approx(ref, rel=1e-12)


def test_xcorr_100hz():
    track = estimate_f0_xcorr(sine(100))
    assert track.voiced.all()
    assert np.all(np.abs(track.f0_hz - 100) <= 1)


def test_xcorr_200hz():
    track = estimate_f0_xcorr(sine(200))
    assert track.voiced.all()
    assert np.all(np.abs(track.f0_hz - 200) <= 2)
    assert np.all(track.correlation >= 0.99)


@pytest.mark.parametrize("f0", [80, 100, 150, 250, 400])
def test_xcorr_pure_sines_within_one_percent(f0):
    assert median_abs_error(estimate_f0_xcorr(sine(f0)), f0) < 0.01 * f0


@pytest.mark.parametrize("method", ["xcorr", "peakpick"])
def test_silence_unvoiced(method):
    track = estimate_f0(AudioBuffer(np.zeros(16000), 16000), method)
    assert len(track) > 0
    assert not track.voiced.any()


def test_peakpick_100hz():
    track = estimate_f0_peakpick(sine(100))
    assert track.voiced.all()
    assert np.all(np.abs(track.f0_hz - 100) <= 2)


def test_noisy_contrast():
    buf = sine(100, amp=0.7, noise_amplitude=0.3, seed=11)
    xc = median_abs_error(estimate_f0_xcorr(buf), 100)
    pp = median_abs_error(estimate_f0_peakpick(buf), 100)
    assert xc <= pp


def test_times_increasing_and_centered():
    track = estimate_f0_xcorr(sine(120, dur=0.5))
    assert np.all(np.diff(track.time_s) > 0)
    assert track.time_s[0] == pytest.approx(0.02)
    assert len(track) == 1 + (8000 - 640) // 160


def test_time_shift_by_whole_periods():
    base = sine(100, dur=1.2)
    for k in (1, 3):
        shifted = AudioBuffer(base.samples[160 * k :], 16000)
        a = estimate_f0_xcorr(base)
        b = estimate_f0_xcorr(shifted)
        # a shift of 160 samples is one hop; frame t of b sees frame t + k of a
        n = len(b)
        assert np.array_equal(a.voiced[k : k + n], b.voiced)
        rel = np.abs(a.f0_hz[k : k + n] - b.f0_hz) / a.f0_hz[k : k + n]
        assert np.all(rel < 0.005)


@settings(max_examples=30, deadline=None)
@given(st.floats(60, 700), st.floats(0.1, 1.0), st.integers(0, 1000), st.floats(0, 0.5))
def test_estimates_stay_in_band(f0, amp, seed, noise):
    amp = min(amp, 1 - noise)
    buf = synthesize(SignalSpec("harmonic_stack", f0, 0.2, amp, seed=seed, noise_amplitude=noise, n_harmonics=3))
    params = PitchParams()
    for method in ("xcorr", "peakpick"):
        track = estimate_f0(buf, method, params)
        f = track.f0_hz[track.voiced]
        assert np.all((f >= params.f0_min) & (f <= params.f0_max))
        if method == "xcorr":
            assert np.all(track.correlation[track.voiced] >= params.voicing_threshold)
        assert np.all(np.abs(track.correlation) <= 1)


def test_param_validation():
    with pytest.raises(ValueError, match="two periods"):
        PitchParams(frame_ms=20, f0_min=75)
    with pytest.raises(ValueError):
        PitchParams(f0_min=500, f0_max=100)
    with pytest.raises(ValueError):
        estimate_f0(sine(100), "cepstrum")
    with pytest.raises(ValueError):
        estimate_f0_xcorr(sine(100, dur=0.02))


def test_csv_format():
    buf = AudioBuffer(np.concatenate([np.zeros(1600), sine(100, dur=0.2).samples]), 16000)
    text = estimate_f0_xcorr(buf).to_csv()
    lines = text.splitlines()
    assert lines[0] == "time_s,f0_hz,correlation"
    assert lines[1].split(",")[1] == "NaN"
    assert float(lines[-1].split(",")[1]) == pytest.approx(100, abs=1)


def test_xcorr_bounded_at_exact_period_lag():
    # 700 Hz at 16 kHz repeats exactly every 160 samples
    buf = synthesize(SignalSpec("harmonic_stack", 700.0, 0.2, 1.0, n_harmonics=3))
    for method in ("xcorr", "peakpick"):
        assert np.all(np.abs(estimate_f0(buf, method).correlation) <= 1)
