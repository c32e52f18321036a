"""Command-line entry point: ``speechhmm {features,train,recognize,pitch,synth}``.

Settings resolve in three layers, later winning: built-in defaults, a flat
``key = value`` file passed with ``--config``, then command-line flags.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import audio as audio_mod
from .mfcc import FeatureConfig, extract_features, features_to_csv
from .pitch import METHODS, PitchParams, estimate_f0
from .recognizer import (
    HmmConfig,
    load_corpus,
    load_model_set,
    recognize,
    save_model_set,
    train_word_models,
)


@dataclass
class CliConfig:
    # feature front-end; sample_rate_hz None means "take it from the audio"
    sample_rate_hz: int | None = None
    frame_ms: float = 25.0
    hop_ms: float = 10.0
    pre_emphasis_alpha: float = 0.97
    n_fft: int | None = None
    n_filters: int = 26
    delta_window: int = 2
    log_floor: float = 1e-10
    fmin_hz: float = 0.0
    fmax_hz: float | None = None
    window: str = "hamming"
    # word models
    n_states: int = 5
    max_iters: int = 20
    tol: float = 1e-4
    seed: int = 0
    variance_floor: float = 1e-3
    # pitch
    pitch_frame_ms: float = 40.0
    pitch_hop_ms: float = 10.0
    f0_min: float = 75.0
    f0_max: float = 500.0
    voicing_threshold: float = 0.45

    def feature_config(self, sample_rate_hz: int) -> FeatureConfig:
        if self.sample_rate_hz is not None and self.sample_rate_hz != sample_rate_hz:
            raise ValueError(
                f"audio is sampled at {sample_rate_hz} Hz but sample_rate_hz is set to "
                f"{self.sample_rate_hz}"
            )
        return FeatureConfig(
            sample_rate_hz=sample_rate_hz,
            frame_ms=self.frame_ms,
            hop_ms=self.hop_ms,
            pre_emphasis_alpha=self.pre_emphasis_alpha,
            n_fft=self.n_fft,
            n_filters=self.n_filters,
            delta_window=self.delta_window,
            log_floor=self.log_floor,
            fmin_hz=self.fmin_hz,
            fmax_hz=self.fmax_hz,
            window=self.window,
        )

    def hmm_config(self) -> HmmConfig:
        return HmmConfig(self.n_states, self.max_iters, self.tol, self.seed, self.variance_floor)

    def pitch_params(self) -> PitchParams:
        return PitchParams(
            frame_ms=self.pitch_frame_ms,
            hop_ms=self.pitch_hop_ms,
            f0_min=self.f0_min,
            f0_max=self.f0_max,
            voicing_threshold=self.voicing_threshold,
        )


_FIELD_TYPES = {
    "sample_rate_hz": int, "n_fft": int, "n_filters": int, "delta_window": int,
    "n_states": int, "max_iters": int, "seed": int, "window": str,
}
FEATURE_KEYS = ("sample_rate_hz", "frame_ms", "hop_ms", "pre_emphasis_alpha", "n_fft",
                "n_filters", "delta_window", "log_floor", "fmin_hz", "fmax_hz", "window")
HMM_KEYS = ("n_states", "max_iters", "tol", "seed", "variance_floor")
PITCH_KEYS = ("pitch_frame_ms", "pitch_hop_ms", "f0_min", "f0_max", "voicing_threshold")


def _convert(key: str, text: str):
    return _FIELD_TYPES.get(key, float)(text)


def parse_config_file(path) -> dict:
    known = {f.name for f in fields(CliConfig)}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ValueError(f"{path}:{lineno}: unknown setting {key!r}")
        values[key] = _convert(key, value)
    return values


def resolve_config(args: argparse.Namespace) -> CliConfig:
    values = {}
    if getattr(args, "config", None):
        values.update(parse_config_file(args.config))
    for f in fields(CliConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return CliConfig(**values)


def _add_settings(parser, keys):
    group = parser.add_argument_group("settings (override --config)")
    for key in keys:
        group.add_argument("--" + key.replace("_", "-"), dest=key, type=_FIELD_TYPES.get(key, float),
                           default=None, metavar=key.upper())


def _err(msg: str) -> None:
    print(f"error: {msg}", file=sys.stderr)


def cmd_features(args) -> int:
    cfg = resolve_config(args)
    buf = audio_mod.read_wav(args.input)
    feats = extract_features(buf, cfg.feature_config(buf.sample_rate_hz))
    text = features_to_csv(feats)
    Path(args.output).write_text(text, encoding="utf-8")
    print(f"{feats.n_frames} frames x {feats.rows.shape[1]} features -> {args.output}",
          file=sys.stderr)
    return 0


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    corpus = load_corpus(args.manifest)
    if len(corpus) == 0:
        raise ValueError(f"manifest {args.manifest} lists no clips")
    rates = {e.audio.sample_rate_hz for e in corpus}
    if len(rates) != 1:
        raise ValueError(f"manifest mixes sample rates {sorted(rates)}")
    models = train_word_models(corpus, cfg.feature_config(rates.pop()), cfg.hmm_config())
    save_model_set(args.model_dir, models)
    print("label\tclips\titerations\tfinal_log_likelihood")
    for label in models.labels:
        meta = models.training_meta[label]
        print(f"{label}\t{meta['n_clips']}\t{meta['n_iter']}\t{meta['final_log_likelihood']!r}")
    return 0


def cmd_recognize(args) -> int:
    models = load_model_set(args.model_dir)
    buf = audio_mod.read_wav(args.input)
    transcript = recognize(buf, models, args.min_margin)
    if args.json:
        print(json.dumps(transcript.to_dict(), sort_keys=True))
        return 0
    print(transcript.label)
    if args.verbose:
        for label in sorted(transcript.scores):
            print(f"{label}\t{transcript.scores[label]!r}")
    return 0


def cmd_pitch(args) -> int:
    cfg = resolve_config(args)
    buf = audio_mod.read_wav(args.input)
    track = estimate_f0(buf, args.method, cfg.pitch_params())
    Path(args.output).write_text(track.to_csv(), encoding="utf-8")
    print(f"{len(track)} frames, {int(track.voiced.sum())} voiced -> {args.output}", file=sys.stderr)
    return 0


def _signal_spec(args, **over) -> audio_mod.SignalSpec:
    params = dict(
        kind=args.kind,
        f0_hz=args.f0,
        duration_s=args.duration,
        amplitude=args.amplitude,
        seed=args.seed,
        sample_rate_hz=args.sample_rate,
        n_harmonics=args.harmonics,
        noise_amplitude=args.noise,
    )
    params.update(over)
    return audio_mod.SignalSpec(**params)


def write_corpus(root, f0s, clips_per_class, heldout_per_class, make_clip, labels=None):
    """Write ``wav/<label>/*.wav`` plus manifest.tsv, train.tsv and test.tsv under ``root``.

    ``make_clip(f0, seed_offset)`` returns one AudioBuffer. The last
    ``heldout_per_class`` clips of each class go to test.tsv.
    """
    root = Path(root)
    if heldout_per_class >= clips_per_class:
        raise ValueError("every class needs at least one training clip")
    labels = labels or [f"tone{int(f0) if float(f0).is_integer() else f0}" for f0 in f0s]
    if len(labels) != len(f0s) or len(set(labels)) != len(labels):
        raise ValueError("need one distinct label per class")
    clips = []
    for c, (label, f0) in enumerate(zip(labels, f0s)):
        for i in range(clips_per_class):
            rel = f"wav/{label}/{label}_{i:02d}.wav"
            clips.append((label, rel, make_clip(f0, c * 1000 + i), i >= clips_per_class - heldout_per_class))
    all_lines, train, test = [], [], []
    for label, rel, buf, heldout in clips:
        path = root / rel
        path.parent.mkdir(parents=True, exist_ok=True)
        audio_mod.write_wav(path, buf)
        line = f"{label}\t{rel}\n"
        all_lines.append(line)
        (test if heldout else train).append(line)
    (root / "manifest.tsv").write_text("".join(all_lines), encoding="utf-8")
    (root / "train.tsv").write_text("".join(train), encoding="utf-8")
    (root / "test.tsv").write_text("".join(test), encoding="utf-8")
    return len(clips)


def cmd_synth(args) -> int:
    if (args.output is None) == (args.corpus is None):
        raise ValueError("give exactly one of OUTPUT or --corpus DIR")
    if args.output is not None:
        buf = audio_mod.synthesize(_signal_spec(args))
        audio_mod.write_wav(args.output, buf)
        print(f"{len(buf)} samples at {buf.sample_rate_hz} Hz -> {args.output}", file=sys.stderr)
        return 0
    f0s = [float(v) for v in args.f0s.split(",")]
    labels = args.labels.split(",") if args.labels else None
    lo, hi = (float(v) for v in args.gain_range.split(","))
    if not 0 < lo <= hi:
        raise ValueError("gain range must satisfy 0 < low <= high")

    def make_clip(f0, seed_offset):
        seed = args.seed * 100_003 + seed_offset
        buf = audio_mod.synthesize(_signal_spec(args, f0_hz=f0, seed=seed))
        # recording gain on tone and noise together, log-uniform in [lo, hi]
        gain = lo * (hi / lo) ** np.random.default_rng([seed, 1]).uniform()
        if gain * np.max(np.abs(buf.samples)) > 1:
            raise ValueError("gain range drives the corpus into clipping")
        return buf.scaled(gain)

    n = write_corpus(args.corpus, f0s, args.clips_per_class, args.heldout_per_class, make_clip, labels)
    print(f"{n} clips in {len(f0s)} classes -> {args.corpus}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="speechhmm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("features", help="write the 39-column MFCC CSV for a WAV file")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--config")
    _add_settings(p, FEATURE_KEYS)
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("train", help="train one HMM per label from a manifest")
    p.add_argument("manifest")
    p.add_argument("model_dir")
    p.add_argument("--config")
    _add_settings(p, FEATURE_KEYS + HMM_KEYS)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("recognize", help="print the best-scoring label for a WAV file")
    p.add_argument("input")
    p.add_argument("model_dir")
    p.add_argument("-v", "--verbose", action="store_true", help="also print one score line per label")
    p.add_argument("--json", action="store_true", help="print the full transcript as JSON")
    p.add_argument("--min-margin", type=float, default=None,
                   help="print <unk> when the best score leads by less than this")
    p.set_defaults(func=cmd_recognize)

    p = sub.add_parser("pitch", help="write a time_s,f0_hz,correlation CSV")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--method", choices=METHODS, default="xcorr")
    p.add_argument("--config")
    _add_settings(p, PITCH_KEYS)
    p.set_defaults(func=cmd_pitch)

    p = sub.add_parser("synth", help="write a synthetic WAV or a labeled corpus")
    p.add_argument("output", nargs="?")
    p.add_argument("--corpus", metavar="DIR")
    p.add_argument("--kind", choices=audio_mod.SIGNAL_KINDS, default=None)
    p.add_argument("--f0", type=float, default=100.0)
    p.add_argument("--duration", type=float, default=None)
    p.add_argument("--amplitude", type=float, default=None)
    p.add_argument("--noise", type=float, default=None)
    p.add_argument("--harmonics", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--f0s", default="110,180,250,330,420", help="corpus class f0 values (Hz)")
    p.add_argument("--labels", default=None, help="comma-separated corpus labels")
    p.add_argument("--gain-range", default="0.3,1.1", metavar="LOW,HIGH",
                   help="per-clip recording gain for corpus mode, log-uniform")
    p.add_argument("--clips-per-class", type=int, default=12)
    p.add_argument("--heldout-per-class", type=int, default=2)
    p.set_defaults(func=cmd_synth)
    return parser


def _fill_synth_defaults(args) -> None:
    corpus = args.corpus is not None
    if args.amplitude is None:
        args.amplitude = 0.4 if corpus else 1.0
    if args.noise is None:
        args.noise = 0.05 if corpus else 0.0
    if args.kind is None:
        args.kind = "harmonic_stack" if corpus else "sine"
    if args.duration is None:
        args.duration = 0.5 if corpus else 1.0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "synth":
        _fill_synth_defaults(args)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        _err(str(exc))
        return 1


if __name__ == "__main__":
    sys.exit(main())
