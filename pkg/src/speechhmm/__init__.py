"""MFCC front-end, HMM word models and pitch tracking for isolated-word recognition."""

from .audio import AudioBuffer, SignalSpec, read_wav, synthesize, write_wav
from .mfcc import FeatureConfig, FeatureMatrix, extract_features
from .hmm import HmmModel, baum_welch, forward_log, viterbi
from .recognizer import HmmConfig, WordModelSet, recognize, train_word_models
from .pitch import PitchParams, estimate_f0_peakpick, estimate_f0_xcorr

__all__ = [
    "AudioBuffer",
    "SignalSpec",
    "read_wav",
    "write_wav",
    "synthesize",
    "FeatureConfig",
    "FeatureMatrix",
    "extract_features",
    "HmmModel",
    "forward_log",
    "viterbi",
    "baum_welch",
    "HmmConfig",
    "WordModelSet",
    "train_word_models",
    "recognize",
    "PitchParams",
    "estimate_f0_xcorr",
    "estimate_f0_peakpick",
]
