"""Isolated-word recognition: one left-to-right Gaussian HMM per word."""

from __future__ import annotations

import hashlib
import json
import re
import warnings
from collections import defaultdict
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import hmm
from .audio import AudioBuffer, read_wav
from .mfcc import N_FEATURES, FeatureConfig, FeatureMatrix, extract_features

UNKNOWN_LABEL = "<unk>"
CONFIG_FILENAME = "config.json"


class RecognizerError(ValueError):
    pass


@dataclass(frozen=True)
class HmmConfig:
    n_states: int = 5
    max_iters: int = 20
    tol: float = 1e-4
    seed: int = 0
    variance_floor: float = hmm.DEFAULT_VARIANCE_FLOOR

    def __post_init__(self):
        if self.n_states < 1 or self.max_iters < 1 or not self.tol > 0:
            raise ValueError("n_states and max_iters must be >= 1 and tol > 0")


@dataclass(frozen=True)
class CorpusEntry:
    label: str
    audio: AudioBuffer
    source: str = "<memory>"


@dataclass
class LabeledCorpus:
    entries: list = field(default_factory=list)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def labels(self) -> list:
        return sorted({e.label for e in self.entries})

    def by_label(self) -> dict:
        groups = defaultdict(list)
        for e in self.entries:
            groups[e.label].append(e)
        return dict(sorted(groups.items()))

    def add(self, label: str, audio: AudioBuffer, source: str = "<memory>") -> None:
        self.entries.append(CorpusEntry(label, audio, source))


def read_manifest(path) -> list:
    """(label, wav path) pairs from a ``label<TAB>path`` file; relative paths
    resolve against the manifest's directory."""
    path = Path(path)
    base = path.parent
    pairs = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise RecognizerError(f"{path}:{lineno}: expected 'label<TAB>wav-path'")
        label, wav = parts
        wav_path = Path(wav)
        pairs.append((label, wav_path if wav_path.is_absolute() else base / wav_path))
    return pairs


def load_corpus(manifest_path) -> LabeledCorpus:
    corpus = LabeledCorpus()
    for label, wav in read_manifest(manifest_path):
        if not wav.is_file():
            raise FileNotFoundError(f"manifest {manifest_path} names a missing WAV file: {wav}")
        corpus.add(label, read_wav(wav), str(wav))
    return corpus


@dataclass(frozen=True)
class Transcript:
    label: str
    scores: dict
    margin: float

    def to_dict(self) -> dict:
        return {"label": self.label, "scores": dict(self.scores), "margin": self.margin}


@dataclass
class WordModelSet:
    models: dict
    feature_config: FeatureConfig
    hmm_config: HmmConfig = field(default_factory=HmmConfig)
    training_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.models:
            raise RecognizerError("a word model set needs at least one model")
        for label, model in self.models.items():
            em = model.emission
            if not isinstance(em, hmm.GaussianEmission) or em.dim != N_FEATURES:
                raise RecognizerError(f"model {label!r} must have {N_FEATURES}-dim Gaussian emissions")

    @property
    def labels(self) -> list:
        return sorted(self.models)

    def __len__(self):
        return len(self.models)


def _clip_features(entry: CorpusEntry, config: FeatureConfig, n_states: int) -> FeatureMatrix:
    try:
        feats = extract_features(entry.audio, config)
    except ValueError as exc:
        raise RecognizerError(f"clip {entry.source} ({entry.label}): {exc}") from exc
    if feats.n_frames < n_states:
        raise RecognizerError(
            f"clip {entry.source} ({entry.label}) yields {feats.n_frames} frames, "
            f"fewer than the {n_states} model states"
        )
    return feats


def train_word_models(corpus: LabeledCorpus, config: FeatureConfig,
                      hmm_config: HmmConfig | None = None) -> WordModelSet:
    hmm_config = hmm_config or HmmConfig()
    groups = corpus.by_label()
    if not groups:
        raise RecognizerError("training corpus is empty")
    features = {}
    for label, entries in groups.items():
        if len(entries) < 2:
            warnings.warn(f"label {label!r} has only {len(entries)} training clip", stacklevel=2)
        features[label] = [_clip_features(e, config, hmm_config.n_states) for e in entries]

    models, meta = {}, {}
    for label, feats in features.items():
        init = hmm.init_model(
            hmm_config.n_states,
            [f.rows for f in feats],
            topology="left_to_right",
            emission="gaussian",
            seed=hmm_config.seed,
            variance_floor=hmm_config.variance_floor,
        )
        result = hmm.baum_welch(init, [f.rows for f in feats], hmm_config.max_iters, hmm_config.tol)
        models[label] = result.model
        meta[label] = {
            "final_log_likelihood": result.log_likelihood_trace[-1],
            "n_iter": result.n_iter,
            "n_clips": len(feats),
            "log_likelihood_trace": list(result.log_likelihood_trace),
        }
    return WordModelSet(models, config, hmm_config, meta)


def score(features, model: hmm.HmmModel) -> float:
    """Forward log-likelihood divided by the number of frames."""
    rows = np.asarray(getattr(features, "rows", features), dtype=np.float64)
    try:
        ll = hmm.forward_log(model, rows).log_likelihood
    except hmm.HmmError as exc:
        raise RecognizerError(str(exc)) from exc
    return ll / rows.shape[0]


def recognize(audio: AudioBuffer, models: WordModelSet, min_margin: float | None = None) -> Transcript:
    if models is None or not models.models:
        raise RecognizerError("no word models to recognize against")
    feats = extract_features(audio, models.feature_config)
    scores = {label: score(feats, models.models[label]) for label in models.labels}
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    best_label, best = ranked[0]
    margin = best - ranked[1][1] if len(ranked) > 1 else 0.0
    if min_margin is not None and margin < min_margin:
        best_label = UNKNOWN_LABEL
    return Transcript(best_label, scores, margin)


@dataclass
class Evaluation:
    accuracy: float
    confusion: dict
    n_total: int
    n_correct: int
    unknown_labels: list

    def confusion_matrix(self, labels=None):
        """Dense counts; rows are true labels, columns predicted labels."""
        rows = sorted(self.confusion)
        cols = labels or sorted({p for r in self.confusion.values() for p in r})
        m = np.zeros((len(rows), len(cols)), dtype=np.int64)
        for i, r in enumerate(rows):
            for j, c in enumerate(cols):
                m[i, j] = self.confusion[r].get(c, 0)
        return rows, cols, m


def evaluate(models: WordModelSet, test_corpus: LabeledCorpus) -> Evaluation:
    if len(test_corpus) == 0:
        raise RecognizerError("test corpus is empty")
    confusion = defaultdict(lambda: defaultdict(int))
    correct = 0
    unknown = sorted({e.label for e in test_corpus} - set(models.models))
    if unknown:
        warnings.warn(f"test labels without a model (always counted wrong): {unknown}", stacklevel=2)
    for entry in test_corpus:
        predicted = recognize(entry.audio, models).label
        confusion[entry.label][predicted] += 1
        correct += predicted == entry.label
    confusion = {k: dict(v) for k, v in sorted(confusion.items())}
    return Evaluation(correct / len(test_corpus), confusion, len(test_corpus), correct, unknown)


def _model_filename(index: int, label: str) -> str:
    return f"{index:03d}_{re.sub(r'[^A-Za-z0-9_-]', '_', label)}.json"


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def save_model_set(directory, models: WordModelSet) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = {}
    for i, label in enumerate(models.labels):
        text = hmm.dumps_model(models.models[label])
        name = _model_filename(i, label)
        (directory / name).write_text(text, encoding="utf-8")
        entries[label] = {"file": name, "sha256": _digest(text)}
    doc = {
        "feature_config": models.feature_config.to_dict(),
        "hmm_config": asdict(models.hmm_config),
        "models": entries,
        "training_meta": models.training_meta,
    }
    doc["manifest_hash"] = _digest(json.dumps(doc, sort_keys=True))
    (directory / CONFIG_FILENAME).write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n",
                                             encoding="utf-8")


def load_model_set(directory) -> WordModelSet:
    directory = Path(directory)
    cfg_path = directory / CONFIG_FILENAME
    if not cfg_path.is_file():
        raise RecognizerError(f"{directory} has no {CONFIG_FILENAME}; not a model directory")
    try:
        doc = json.loads(cfg_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise RecognizerError(f"corrupt {cfg_path}: {exc}") from exc
    stored_hash = doc.pop("manifest_hash", None)
    if stored_hash != _digest(json.dumps(doc, sort_keys=True)):
        raise RecognizerError(f"{cfg_path} failed its consistency hash")
    models = {}
    for label, info in doc["models"].items():
        path = directory / info["file"]
        if not path.is_file():
            raise RecognizerError(f"model file for {label!r} is missing: {path}")
        text = path.read_text(encoding="utf-8")
        if _digest(text) != info["sha256"]:
            raise RecognizerError(f"model file {path} does not match the stored configuration")
        models[label] = hmm.model_from_dict(json.loads(text))
    if not models:
        raise RecognizerError(f"{directory} contains no word models")
    return WordModelSet(
        models,
        FeatureConfig.from_dict(doc["feature_config"]),
        HmmConfig(**doc["hmm_config"]),
        doc.get("training_meta", {}),
    )
