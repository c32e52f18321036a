"""WAV ingestion and deterministic test-signal synthesis."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

PCM_SCALE = 32768.0


class WavError(ValueError):
    """Base class for WAV decoding problems."""


class WavFormatError(WavError):
    """Not a RIFF/WAVE file, or required chunks missing."""


class WavEncodingError(WavError):
    """Encoding other than 16-bit integer PCM."""


class WavChannelError(WavError):
    """More than one channel."""


class WavTruncatedError(WavError):
    """A chunk claims more bytes than the file holds."""


@dataclass(frozen=True)
class AudioBuffer:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64).reshape(-1)
        if samples.size == 0:
            raise ValueError("audio buffer must contain at least one sample")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        if np.any(np.abs(samples) > 1.0):
            raise ValueError("audio samples must lie in [-1, 1]")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self):
        return self.samples.size

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def scaled(self, gain: float) -> "AudioBuffer":
        return AudioBuffer(self.samples * gain, self.sample_rate_hz)


def _iter_chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        chunk_id, size = struct.unpack_from("<4sI", data, pos)
        body_start = pos + 8
        if body_start + size > len(data):
            raise WavTruncatedError(
                f"chunk {chunk_id!r} declares {size} bytes but only "
                f"{len(data) - body_start} remain"
            )
        yield chunk_id, data[body_start : body_start + size]
        # chunks are word aligned
        pos = body_start + size + (size & 1)
    if pos < len(data):
        raise WavTruncatedError(f"{len(data) - pos} trailing bytes do not form a chunk header")


def decode_wav(data: bytes) -> AudioBuffer:
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise WavFormatError("not a RIFF/WAVE stream")
    fmt = None
    payload = None
    for chunk_id, body in _iter_chunks(data):
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise WavTruncatedError("fmt chunk shorter than 16 bytes")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            payload = body
    if fmt is None:
        raise WavFormatError("missing fmt chunk")
    if payload is None:
        raise WavFormatError("missing data chunk")
    audio_format, channels, sample_rate, _, _, bits = fmt
    if audio_format != 1 or bits != 16:
        raise WavEncodingError(
            f"only 16-bit PCM is supported (format tag {audio_format}, {bits} bits)"
        )
    if channels != 1:
        raise WavChannelError(f"expected mono audio, found {channels} channels")
    if len(payload) % 2:
        raise WavTruncatedError("data chunk holds an odd number of bytes")
    ints = np.frombuffer(payload, dtype="<i2")
    samples = np.clip(ints.astype(np.float64) / PCM_SCALE, -1.0, 1.0)
    return AudioBuffer(samples, sample_rate)


def read_wav(path) -> AudioBuffer:
    """Read a mono 16-bit PCM WAV file, scaling samples by 1/32768."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such WAV file: {path}")
    return decode_wav(path.read_bytes())


def encode_pcm16(samples) -> np.ndarray:
    samples = np.asarray(samples, dtype=np.float64)
    return np.clip(np.round(samples * PCM_SCALE), -32768, 32767).astype("<i2")


def encode_wav(audio: AudioBuffer) -> bytes:
    payload = encode_pcm16(audio.samples).tobytes()
    sr = audio.sample_rate_hz
    fmt = struct.pack("<HHIIHH", 1, 1, sr, sr * 2, 2, 16)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        body += b"\x00"
    return b"RIFF" + struct.pack("<I", len(body)) + body


def write_wav(path, audio: AudioBuffer) -> None:
    Path(path).write_bytes(encode_wav(audio))


SIGNAL_KINDS = ("sine", "harmonic_stack", "white_noise")


@dataclass(frozen=True)
class SignalSpec:
    """Recipe for a synthetic test signal.

    ``noise_amplitude`` adds seeded uniform noise on top of a tonal kind;
    the peak of the result is bounded by ``amplitude + noise_amplitude``.
    """

    kind: str = "sine"
    f0_hz: float = 100.0
    duration_s: float = 1.0
    amplitude: float = 1.0
    seed: int = 0
    sample_rate_hz: int = 16000
    n_harmonics: int = 5
    noise_amplitude: float = 0.0


def _uniform_noise(n: int, amplitude: float, seed: int) -> np.ndarray:
    # PCG64 via default_rng; frozen for golden tests
    rng = np.random.default_rng(seed)
    return rng.uniform(-amplitude, amplitude, size=n)


def synthesize(spec: SignalSpec) -> AudioBuffer:
    if spec.kind not in SIGNAL_KINDS:
        raise ValueError(f"unknown signal kind {spec.kind!r}; choose from {SIGNAL_KINDS}")
    if spec.duration_s <= 0:
        raise ValueError("duration must be positive")
    if not 0 <= spec.amplitude <= 1:
        raise ValueError("amplitude must lie in [0, 1]")
    if spec.noise_amplitude < 0 or spec.amplitude + spec.noise_amplitude > 1:
        raise ValueError("amplitude + noise_amplitude must not exceed 1")
    sr = int(spec.sample_rate_hz)
    if sr <= 0:
        raise ValueError("sample rate must be positive")
    n = int(round(spec.duration_s * sr))
    if n < 1:
        raise ValueError("duration is shorter than one sample")
    t = np.arange(n) / sr

    if spec.kind == "white_noise":
        return AudioBuffer(_uniform_noise(n, spec.amplitude, spec.seed), sr)

    if not 0 < spec.f0_hz < sr / 2:
        raise ValueError(
            f"f0 {spec.f0_hz} Hz must lie below the Nyquist frequency {sr / 2} Hz"
        )
    if spec.kind == "sine":
        x = spec.amplitude * np.sin(2 * np.pi * spec.f0_hz * t)
    else:
        if spec.n_harmonics < 1:
            raise ValueError("need at least one harmonic")
        if spec.n_harmonics * spec.f0_hz >= sr / 2:
            raise ValueError("highest harmonic would alias above Nyquist")
        x = np.zeros(n)
        for k in range(1, spec.n_harmonics + 1):
            x += np.sin(2 * np.pi * k * spec.f0_hz * t) / k
        peak = np.max(np.abs(x))
        x = x * (spec.amplitude / peak) if peak > 0 else x
    if spec.noise_amplitude > 0:
        x = x + _uniform_noise(n, spec.noise_amplitude, spec.seed)
    return AudioBuffer(np.clip(x, -1.0, 1.0), sr)
