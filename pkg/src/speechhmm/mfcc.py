"""Mel-frequency cepstral features: 12 cepstra + log energy, with deltas (39 columns)."""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import dsp
from .audio import AudioBuffer

N_STATIC = 13
N_FEATURES = 39


def _next_pow2(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


@dataclass(frozen=True)
class FeatureConfig:
    """Every front-end parameter. ``n_fft`` and ``fmax_hz`` default from the rate."""

    sample_rate_hz: int = 16000
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    pre_emphasis_alpha: float = 0.97
    n_fft: int | None = None
    n_filters: int = 26
    n_ceps: int = 12
    delta_window: int = 2
    log_floor: float = 1e-10
    fmin_hz: float = 0.0
    fmax_hz: float | None = None
    window: str = "hamming"

    def __post_init__(self):
        sr = int(self.sample_rate_hz)
        if sr <= 0:
            raise ValueError("sample rate must be positive")
        object.__setattr__(self, "sample_rate_hz", sr)
        if self.frame_ms <= 0 or self.hop_ms <= 0:
            raise ValueError("frame and hop durations must be positive")
        if self.n_fft is None:
            object.__setattr__(self, "n_fft", _next_pow2(self.frame_len_samples))
        if not dsp.is_power_of_two(self.n_fft) or self.n_fft < self.frame_len_samples:
            raise ValueError(
                f"n_fft={self.n_fft} must be a power of two >= {self.frame_len_samples}"
            )
        if self.fmax_hz is None:
            object.__setattr__(self, "fmax_hz", sr / 2)
        if not 0 <= self.fmin_hz < self.fmax_hz <= sr / 2:
            raise ValueError("need 0 <= fmin_hz < fmax_hz <= sample_rate/2")
        if self.n_filters < 1 or self.n_ceps < 1 or self.n_ceps > self.n_filters:
            raise ValueError("need 1 <= n_ceps <= n_filters")
        if self.n_ceps != 12:
            # the 39-column layout is fixed
            raise ValueError("feature layout requires n_ceps = 12")
        if self.delta_window < 1:
            raise ValueError("delta window must be >= 1")
        if self.log_floor <= 0:
            raise ValueError("log floor must be positive")
        if not 0 <= self.pre_emphasis_alpha < 1:
            raise ValueError("pre-emphasis coefficient must lie in [0, 1)")
        if self.window not in dsp.WINDOW_KINDS:
            raise ValueError(f"unknown window {self.window!r}")

    @property
    def frame_len_samples(self) -> int:
        return int(round(self.frame_ms * self.sample_rate_hz / 1000))

    @property
    def hop_samples(self) -> int:
        return int(round(self.hop_ms * self.sample_rate_hz / 1000))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureConfig":
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class MelFilterBank:
    weights: np.ndarray
    center_freqs_hz: np.ndarray
    edge_bins: np.ndarray
    fmin_hz: float
    fmax_hz: float

    @property
    def n_filters(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class FeatureMatrix:
    rows: np.ndarray
    config: FeatureConfig

    def __post_init__(self):
        rows = np.asarray(self.rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != N_FEATURES:
            raise ValueError(f"feature rows must be T x {N_FEATURES}, got {rows.shape}")
        if not np.all(np.isfinite(rows)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "rows", rows)

    @property
    def n_frames(self) -> int:
        return self.rows.shape[0]

    @property
    def static(self) -> np.ndarray:
        return self.rows[:, :N_STATIC]

    @property
    def cepstra(self) -> np.ndarray:
        return self.rows[:, :12]

    @property
    def log_energy(self) -> np.ndarray:
        return self.rows[:, 12]

    @property
    def deltas(self) -> np.ndarray:
        return self.rows[:, N_STATIC : 2 * N_STATIC]

    @property
    def delta_deltas(self) -> np.ndarray:
        return self.rows[:, 2 * N_STATIC :]


def hz_to_mel(f_hz):
    f = np.asarray(f_hz, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency must be nonnegative")
    m = 2595.0 * np.log10(1.0 + f / 700.0)
    return float(m) if m.ndim == 0 else m


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    if np.any(m < 0):
        raise ValueError("mel value must be nonnegative")
    f = 700.0 * (10.0 ** (m / 2595.0) - 1.0)
    return float(f) if f.ndim == 0 else f


def mel_filterbank(n_filters: int, n_fft: int, sample_rate_hz: int,
                   fmin_hz: float = 0.0, fmax_hz: float | None = None) -> MelFilterBank:
    """Triangular filters on mel-spaced edges snapped to the nearest DFT bin."""
    sr, F = sample_rate_hz, n_filters
    fmax_hz = sr / 2 if fmax_hz is None else fmax_hz
    if F < 1:
        raise ValueError("need at least one filter")
    if not dsp.is_power_of_two(n_fft):
        raise ValueError(f"n_fft={n_fft} is not a power of two")
    if fmax_hz > sr / 2:
        raise ValueError("fmax exceeds the Nyquist frequency")
    if not 0 <= fmin_hz < fmax_hz:
        raise ValueError("need 0 <= fmin_hz < fmax_hz")
    mels = np.linspace(hz_to_mel(fmin_hz), hz_to_mel(fmax_hz), F + 2)
    edges_hz = mel_to_hz(mels)
    edge_bins = np.round(edges_hz * n_fft / sr).astype(int)
    if np.any(np.diff(edge_bins) <= 0):
        raise ValueError(
            f"{F} filters are too many for n_fft={n_fft}: adjacent filter edges "
            "collapse onto the same DFT bin"
        )
    k = np.arange(n_fft // 2 + 1)
    weights = np.zeros((F, k.size))
    for i in range(F):
        lo, mid, hi = edge_bins[i : i + 3]
        rising = (k - lo) / (mid - lo)
        falling = (hi - k) / (hi - mid)
        weights[i] = np.clip(np.minimum(rising, falling), 0.0, None)
    return MelFilterBank(weights, edges_hz[1:-1], edge_bins, fmin_hz, fmax_hz)


def build_mel_filterbank(config: FeatureConfig) -> MelFilterBank:
    return mel_filterbank(config.n_filters, config.n_fft, config.sample_rate_hz,
                          config.fmin_hz, config.fmax_hz)


def apply_filterbank(spectrum, bank: MelFilterBank) -> np.ndarray:
    bins = spectrum.bins if isinstance(spectrum, dsp.PowerSpectrum) else np.asarray(spectrum)
    if bins.shape[-1] != bank.weights.shape[1]:
        raise ValueError(
            f"spectrum has {bins.shape[-1]} bins, filterbank expects {bank.weights.shape[1]}"
        )
    return bins @ bank.weights.T


def log_compress(energies, log_floor: float = 1e-10) -> np.ndarray:
    return np.log(np.maximum(np.asarray(energies, dtype=np.float64), log_floor))


def dct_matrix(n_in: int, n_out: int | None = None) -> np.ndarray:
    """Rows j = 0..n_out-1 of the orthonormal DCT-II on ``n_in`` points."""
    n_out = n_in if n_out is None else n_out
    j = np.arange(n_out)[:, None]
    i = np.arange(n_in)[None, :]
    m = np.cos(np.pi * j * (i + 0.5) / n_in)
    scale = np.full((n_out, 1), np.sqrt(2.0 / n_in))
    scale[0] = np.sqrt(1.0 / n_in)
    return m * scale


def cepstral_transform(log_energies, n_ceps: int = 12) -> np.ndarray:
    """Coefficients c1..c_n_ceps of the orthonormal DCT-II; c0 is dropped."""
    x = np.asarray(log_energies, dtype=np.float64)
    F = x.shape[-1]
    if n_ceps > F:
        raise ValueError(f"cannot take {n_ceps} cepstra from {F} filter energies")
    return x @ dct_matrix(F, n_ceps + 1)[1:].T


def frame_log_energy(frame, log_floor: float = 1e-10) -> np.ndarray | float:
    frame = np.asarray(frame, dtype=np.float64)
    e = np.log(np.maximum(np.sum(frame ** 2, axis=-1), log_floor))
    return float(e) if np.ndim(e) == 0 else e


def compute_deltas(features, window: int = 2) -> np.ndarray:
    """Regression deltas over +-window frames with replicated edge frames."""
    c = np.asarray(features, dtype=np.float64)
    squeeze = c.ndim == 1
    if squeeze:
        c = c[:, None]
    if c.shape[0] == 0:
        raise ValueError("cannot take deltas of an empty sequence")
    if window < 1:
        raise ValueError("delta window must be >= 1")
    T = c.shape[0]
    padded = np.pad(c, ((window, window), (0, 0)), mode="edge")
    d = np.zeros_like(c)
    for n in range(1, window + 1):
        d += n * (padded[window + n : window + n + T] - padded[window - n : window - n + T])
    d /= 2 * sum(n * n for n in range(1, window + 1))
    return d[:, 0] if squeeze else d


def extract_features(audio: AudioBuffer, config: FeatureConfig | None = None) -> FeatureMatrix:
    if config is None:
        config = FeatureConfig(sample_rate_hz=audio.sample_rate_hz)
    if audio.sample_rate_hz != config.sample_rate_hz:
        raise ValueError(
            f"audio is sampled at {audio.sample_rate_hz} Hz but the feature "
            f"configuration expects {config.sample_rate_hz} Hz"
        )
    emphasized = dsp.pre_emphasize(audio.samples, config.pre_emphasis_alpha)
    frames = dsp.frame_signal(
        emphasized, config.frame_len_samples, config.hop_samples, config.sample_rate_hz
    ).frames
    energy = frame_log_energy(frames, config.log_floor)
    spectra = dsp.power_spectra(dsp.apply_window(frames, config.window), config.n_fft)
    bank = build_mel_filterbank(config)
    ceps = cepstral_transform(log_compress(apply_filterbank(spectra, bank), config.log_floor),
                              config.n_ceps)
    static = np.column_stack([ceps, np.atleast_1d(energy)])
    delta = compute_deltas(static, config.delta_window)
    delta2 = compute_deltas(delta, config.delta_window)
    return FeatureMatrix(np.hstack([static, delta, delta2]), config)


CSV_HEADER = (
    [f"c{i}" for i in range(1, 13)]
    + ["logE"]
    + [f"d{i}" for i in range(1, 14)]
    + [f"dd{i}" for i in range(1, 14)]
)


def features_to_csv(features: FeatureMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in features.rows:
        writer.writerow([repr(float(v)) for v in row])
    return buf.getvalue()


def write_feature_csv(path, features: FeatureMatrix) -> None:
    Path(path).write_text(features_to_csv(features), encoding="utf-8")


def read_feature_csv(path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != CSV_HEADER:
            raise ValueError("unexpected feature CSV header")
        return np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
