"""Pre-emphasis, framing, windowing and radix-2 power spectra."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

WINDOW_KINDS = ("rectangular", "hamming")


@dataclass(frozen=True)
class FrameMatrix:
    frames: np.ndarray
    frame_len_samples: int
    hop_samples: int
    sample_rate_hz: int | None = None

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]


@dataclass(frozen=True)
class PowerSpectrum:
    bins: np.ndarray
    n_fft: int
    sample_rate_hz: int | None = None


def pre_emphasize(samples, alpha: float = 0.97) -> np.ndarray:
    """First-order high-pass: y[0] = x[0], y[n] = x[n] - alpha * x[n-1]."""
    if not 0 <= alpha < 1:
        raise ValueError(f"pre-emphasis coefficient must lie in [0, 1), got {alpha}")
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot pre-emphasize an empty signal")
    y = x.copy()
    y[1:] = x[1:] - alpha * x[:-1]
    return y


def n_frames_for(n_samples: int, frame_len: int, hop: int) -> int:
    return 1 + (n_samples - frame_len) // hop


def frame_signal(samples, frame_len_samples: int, hop_samples: int,
                 sample_rate_hz: int | None = None) -> FrameMatrix:
    """Split a signal into overlapping frames; a short trailing remainder is dropped."""
    x = np.asarray(samples, dtype=np.float64)
    L, H = int(frame_len_samples), int(hop_samples)
    if L <= 0 or H <= 0:
        raise ValueError("frame length and hop must be positive")
    if x.size < L:
        raise ValueError(f"signal of {x.size} samples is shorter than one {L}-sample frame")
    T = n_frames_for(x.size, L, H)
    idx = np.arange(T)[:, None] * H + np.arange(L)[None, :]
    return FrameMatrix(x[idx], L, H, sample_rate_hz)


def window(kind: str, length: int) -> np.ndarray:
    if kind == "rectangular":
        return np.ones(length)
    if kind == "hamming":
        if length == 1:
            return np.ones(1)
        n = np.arange(length)
        return 0.54 - 0.46 * np.cos(2 * np.pi * n / (length - 1))
    raise ValueError(f"unknown window {kind!r}; choose from {WINDOW_KINDS}")


def apply_window(frame, kind: str = "hamming") -> np.ndarray:
    """Multiply a frame (or a stack of frames along the last axis) by a window."""
    frame = np.asarray(frame, dtype=np.float64)
    return frame * window(kind, frame.shape[-1])


def is_power_of_two(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


def _bit_reversed(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


def fft(x) -> np.ndarray:
    """Iterative decimation-in-time radix-2 FFT along the last axis."""
    a = np.asarray(x, dtype=np.complex128)
    n = a.shape[-1]
    if not is_power_of_two(n):
        raise ValueError(f"transform length {n} is not a power of two")
    lead = a.shape[:-1]
    a = a[..., _bit_reversed(n)]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = a.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        a = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return a


def power_spectra(frames, n_fft: int) -> np.ndarray:
    """|X[k]|^2 for k = 0..n_fft/2 of each zero-padded row of ``frames``."""
    frames = np.asarray(frames, dtype=np.float64)
    if not is_power_of_two(n_fft):
        raise ValueError(f"n_fft={n_fft} is not a power of two")
    L = frames.shape[-1]
    if n_fft < L:
        raise ValueError(f"n_fft={n_fft} is smaller than the frame length {L}")
    padded = np.zeros(frames.shape[:-1] + (n_fft,))
    padded[..., :L] = frames
    X = fft(padded)[..., : n_fft // 2 + 1]
    return X.real ** 2 + X.imag ** 2


def power_spectrum(frame, n_fft: int, sample_rate_hz: int | None = None) -> PowerSpectrum:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 1:
        raise ValueError("power_spectrum expects a single frame; use power_spectra for stacks")
    return PowerSpectrum(power_spectra(frame, n_fft), n_fft, sample_rate_hz)
