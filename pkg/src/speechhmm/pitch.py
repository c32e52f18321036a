"""Frame-wise F0 estimation by waveform matching and by peak picking."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio import AudioBuffer
from .dsp import frame_signal

METHODS = ("xcorr", "peakpick")


@dataclass(frozen=True)
class PitchParams:
    frame_ms: float = 40.0
    hop_ms: float = 10.0
    f0_min: float = 75.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.45
    # xcorr: earliest peak within this much of the best correlation wins
    octave_tolerance: float = 0.05
    # peakpick: both peaks must exceed this fraction of the frame maximum
    peak_threshold: float = 0.1

    def __post_init__(self):
        if not 0 < self.f0_min < self.f0_max:
            raise ValueError("need 0 < f0_min < f0_max")
        if self.hop_ms <= 0:
            raise ValueError("hop must be positive")
        if self.frame_ms < 2000.0 / self.f0_min:
            raise ValueError(
                f"a {self.frame_ms} ms frame cannot hold two periods of {self.f0_min} Hz "
                f"(need >= {2000.0 / self.f0_min:.3f} ms)"
            )


@dataclass(frozen=True)
class PitchTrack:
    time_s: np.ndarray
    f0_hz: np.ndarray
    correlation: np.ndarray

    def __len__(self):
        return self.time_s.size

    @property
    def voiced(self) -> np.ndarray:
        return ~np.isnan(self.f0_hz)

    def to_csv(self) -> str:
        lines = ["time_s,f0_hz,correlation"]
        for t, f, r in zip(self.time_s, self.f0_hz, self.correlation):
            f_txt = "NaN" if math.isnan(f) else repr(float(f))
            lines.append(f"{float(t)!r},{f_txt},{float(r)!r}")
        return "\n".join(lines) + "\n"

    def write_csv(self, path) -> None:
        Path(path).write_text(self.to_csv(), encoding="utf-8")


def _frames(audio: AudioBuffer, params: PitchParams):
    sr = audio.sample_rate_hz
    L = int(round(params.frame_ms * sr / 1000))
    H = max(1, int(round(params.hop_ms * sr / 1000)))
    if L < 2 * sr / params.f0_min:
        raise ValueError("analysis frame is shorter than two periods of f0_min")
    if len(audio) < L:
        raise ValueError(f"audio of {len(audio)} samples is shorter than one {L}-sample frame")
    frames = frame_signal(audio.samples, L, H).frames
    times = (np.arange(frames.shape[0]) * H + L / 2) / sr
    return frames, times


def _lag_range(sr: int, params: PitchParams):
    return math.ceil(sr / params.f0_max), math.floor(sr / params.f0_min)


def _parabolic(left: float, mid: float, right: float):
    """Vertex offset and height of the parabola through three equally spaced points."""
    denom = left - 2 * mid + right
    if denom >= 0:
        return 0.0, mid
    offset = 0.5 * (left - right) / denom
    return offset, mid - 0.25 * (left - right) * offset


def normalized_xcorr(frame, lags, width: int) -> np.ndarray:
    """Correlation of frame[:width] with frame[lag:lag+width], normalized by both energies."""
    x = np.asarray(frame, dtype=np.float64)
    lags = np.asarray(lags)
    segs = sliding_window_view(x, width)[lags]
    ref = x[:width]
    num = segs @ ref
    den = np.sqrt(np.dot(ref, ref) * np.einsum("ij,ij->i", segs, segs))
    out = np.zeros(lags.size)
    ok = den > 0
    # exact-period lags can round a hair past +-1
    out[ok] = np.clip(num[ok] / den[ok], -1.0, 1.0)
    return out


def _lobe_peaks(r):
    """Index of the maximum of each positive lobe of r, ignoring the padded ends.

    Taking one peak per lobe keeps noise ripple on a single correlation hump
    from posing as an earlier period candidate.
    """
    inner = np.arange(1, r.size - 1)
    positive = r[inner] > 0
    peaks = []
    start = None
    for k, pos in zip(inner, positive):
        if pos and start is None:
            start = k
        elif not pos and start is not None:
            peaks.append(start + int(np.argmax(r[start:k])))
            start = None
    if start is not None:
        peaks.append(start + int(np.argmax(r[start : r.size - 1])))
    # a lobe maximum sitting on a rising or falling edge of the range is not a true peak
    return np.array(
        [p for p in peaks if r[p] > r[p - 1] and r[p] >= r[p + 1]], dtype=np.int64
    )


def _xcorr_frame(frame, sr, params, lag_lo, lag_hi):
    width = frame.size - lag_hi - 1
    lags = np.arange(lag_lo - 1, lag_hi + 2)
    r = normalized_xcorr(frame, lags, width)
    peaks = _lobe_peaks(r)
    if peaks.size == 0:
        return math.nan, float(np.max(r[1:-1]))
    best = r[peaks].max()
    if best < params.voicing_threshold:
        return math.nan, float(best)
    chosen = peaks[r[peaks] >= best - params.octave_tolerance][0]
    offset, height = _parabolic(r[chosen - 1], r[chosen], r[chosen + 1])
    height = float(np.clip(height, -1.0, 1.0))
    f0 = sr / (lags[chosen] + offset)
    if not params.f0_min <= f0 <= params.f0_max or height < params.voicing_threshold:
        return math.nan, height
    return f0, height


def estimate_f0_xcorr(audio: AudioBuffer, params: PitchParams | None = None) -> PitchTrack:
    """Per frame, the lag maximizing normalized cross-correlation gives the period."""
    params = params or PitchParams()
    frames, times = _frames(audio, params)
    sr = audio.sample_rate_hz
    lag_lo, lag_hi = _lag_range(sr, params)
    f0 = np.empty(len(times))
    corr = np.empty(len(times))
    for t, frame in enumerate(frames):
        f0[t], corr[t] = _xcorr_frame(frame, sr, params, lag_lo, lag_hi)
    return PitchTrack(times, f0, corr)


def _local_maxima(x):
    n = np.arange(1, x.size - 1)
    return n[(x[n] > x[n - 1]) & (x[n] >= x[n + 1])]


def _peakpick_frame(frame, sr, params, lag_lo, lag_hi):
    top = frame.max()
    if top <= 0:
        return math.nan, 0.0
    peaks = _local_maxima(frame)
    if peaks.size < 2:
        return math.nan, 0.0
    first = peaks[np.argmax(frame[peaks])]
    dist = np.abs(peaks - first)
    partners = peaks[(dist >= lag_lo) & (dist <= lag_hi)]
    if partners.size == 0:
        return math.nan, 0.0
    second = partners[np.argmax(frame[partners])]
    floor = params.peak_threshold * top
    if frame[first] <= floor or frame[second] <= floor:
        return math.nan, 0.0

    def refined(i):
        return i + _parabolic(frame[i - 1], frame[i], frame[i + 1])[0]

    period = abs(refined(second) - refined(first))
    width = frame.size - lag_hi - 1
    lag = int(round(period))
    corr = float(normalized_xcorr(frame, [lag], width)[0]) if lag <= lag_hi + 1 else 0.0
    f0 = sr / period
    if not params.f0_min <= f0 <= params.f0_max:
        return math.nan, corr
    return f0, corr


def estimate_f0_peakpick(audio: AudioBuffer, params: PitchParams | None = None) -> PitchTrack:
    """Period from the spacing of the two largest waveform peaks in each frame.

    The second peak is sought between one shortest and one longest admissible
    period away from the largest peak. ``correlation`` reports the normalized
    cross-correlation at the rounded period; it plays no part in voicing.
    """
    params = params or PitchParams()
    frames, times = _frames(audio, params)
    sr = audio.sample_rate_hz
    lag_lo, lag_hi = _lag_range(sr, params)
    f0 = np.empty(len(times))
    corr = np.empty(len(times))
    for t, frame in enumerate(frames):
        f0[t], corr[t] = _peakpick_frame(frame, sr, params, lag_lo, lag_hi)
    return PitchTrack(times, f0, corr)


def estimate_f0(audio: AudioBuffer, method: str = "xcorr", params: PitchParams | None = None) -> PitchTrack:
    if method == "xcorr":
        return estimate_f0_xcorr(audio, params)
    if method == "peakpick":
        return estimate_f0_peakpick(audio, params)
    raise ValueError(f"unknown pitch method {method!r}; choose from {METHODS}")


def median_abs_error(track: PitchTrack, true_f0: float) -> float:
    """Median |f0 - true| over all frames; unvoiced frames count as missing the target entirely."""
    err = np.where(track.voiced, np.abs(track.f0_hz - true_f0), true_f0)
    return float(np.median(err))
