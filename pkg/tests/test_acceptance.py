"""Exit criteria for the toolkit, one test per criterion.

Each test records a PASS/FAIL line that pytest prints in its terminal summary.
"""

import math
import time

import numpy as np
import pytest

from oracles import (
    baum_welch_step,
    dct_ii_naive,
    dft_matrix,
    enumerate_paths,
    filterbank_loop,
    random_stochastic,
)
from speechhmm import dsp, hmm
from speechhmm.audio import AudioBuffer, SignalSpec, read_wav, synthesize
from speechhmm.cli import main
from speechhmm.mfcc import (
    FeatureConfig,
    apply_filterbank,
    build_mel_filterbank,
    cepstral_transform,
    dct_matrix,
    extract_features,
)
from speechhmm.pitch import estimate_f0_peakpick, estimate_f0_xcorr, median_abs_error
from speechhmm.recognizer import load_model_set, read_manifest, recognize

CORPUS_F0S = (110, 180, 250, 330, 420)
SEED = 1234


def _cli(*argv):
    code = main([str(a) for a in argv])
    assert code == 0, f"command failed: {argv}"


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """synth --corpus -> train -> recognize every held-out clip, timed."""
    root = tmp_path_factory.mktemp("e2e")
    start = time.perf_counter()
    _cli("synth", "--corpus", root / "corpus", "--f0s", ",".join(map(str, CORPUS_F0S)),
         "--noise", 0.05, "--clips-per-class", 12, "--heldout-per-class", 2, "--seed", SEED)
    _cli("train", root / "corpus" / "train.tsv", root / "models", "--n-states", 5, "--seed", SEED)
    models = load_model_set(root / "models")
    heldout = [(label, read_wav(path)) for label, path in read_manifest(root / "corpus" / "test.tsv")]
    predictions = [recognize(buf, models).label for _, buf in heldout]
    elapsed = time.perf_counter() - start
    return dict(root=root, models=models, heldout=heldout, predictions=predictions, elapsed=elapsed)


def test_criterion_1_feature_shape(acceptance_report):
    inputs = [
        synthesize(SignalSpec("sine", 100, 1.0, 1.0)),
        synthesize(SignalSpec("harmonic_stack", 180, 0.3, 0.5, sample_rate_hz=8000)),
        synthesize(SignalSpec("white_noise", duration_s=0.5, amplitude=0.2, seed=3)),
        AudioBuffer(np.zeros(400), 16000),
        AudioBuffer(np.zeros(4000), 16000),
    ]
    ok = True
    for buf in inputs:
        feats = extract_features(buf, FeatureConfig(buf.sample_rate_hz))
        ok &= feats.rows.shape[1] == 39
        ok &= feats.static.shape[1] == 13 and feats.cepstra.shape[1] == 12
        ok &= feats.rows.shape[0] == 1 + (len(buf) - FeatureConfig(buf.sample_rate_hz).frame_len_samples) // FeatureConfig(buf.sample_rate_hz).hop_samples
    acceptance_report("1 feature shape", ok, "width 39 = 12 cepstra + logE + 13 d + 13 dd")
    assert ok


def test_criterion_2_transform_oracles(acceptance_report):
    rng = np.random.default_rng(2)
    worst_dft = worst_dct = worst_fb = 0.0
    for _ in range(100):
        N = 2 ** int(rng.integers(0, 11))
        x = rng.normal(size=N)
        ref = dft_matrix(x)
        worst_dft = max(worst_dft, np.max(np.abs(dsp.fft(x) - ref)) / np.max(np.abs(ref)))
    for _ in range(100):
        F = int(rng.integers(1, 65))
        x = rng.normal(size=F)
        n_ceps = int(rng.integers(1, F + 1)) if F > 1 else 1
        ref = dct_ii_naive(x, n_ceps + 1)[1:] if n_ceps < F else dct_ii_naive(x)[1:]
        got = cepstral_transform(x, n_ceps)[: ref.size]
        scale = max(np.max(np.abs(x)), 1.0)
        worst_dct = max(worst_dct, np.max(np.abs(got - ref), initial=0) / scale)
        full = dct_matrix(F) @ x
        worst_dct = max(worst_dct, np.max(np.abs(full - dct_ii_naive(x))) / scale)
    bank = build_mel_filterbank(FeatureConfig(16000))
    for _ in range(100):
        bins = rng.uniform(0, 1, size=257) * 10 ** rng.uniform(-3, 3)
        ref = filterbank_loop(bank.weights, bins)
        worst_fb = max(worst_fb, np.max(np.abs(apply_filterbank(bins, bank) - ref) / ref))
    ok = max(worst_dft, worst_dct, worst_fb) <= 1e-9
    acceptance_report("2 transform oracles", ok,
                      f"max rel err DFT {worst_dft:.2e}, DCT {worst_dct:.2e}, filterbank {worst_fb:.2e} (<= 1e-9)")
    assert ok


def test_criterion_3_parseval_orthonormality(acceptance_report):
    rng = np.random.default_rng(3)
    worst_parseval = worst_roundtrip = 0.0
    for _ in range(50):
        N = 2 ** int(rng.integers(1, 11))
        x = rng.normal(size=N)
        energy = np.sum(np.abs(dsp.fft(x)) ** 2)
        worst_parseval = max(worst_parseval, abs(energy - N * np.sum(x ** 2)) / (N * np.sum(x ** 2)))
    for _ in range(50):
        F = int(rng.integers(1, 65))
        x = rng.normal(size=F)
        M = dct_matrix(F)
        worst_roundtrip = max(worst_roundtrip, np.max(np.abs(M.T @ (M @ x) - x)))
    ok = worst_parseval <= 1e-6 and worst_roundtrip <= 1e-9
    acceptance_report("3 Parseval / orthonormality", ok,
                      f"Parseval rel {worst_parseval:.2e} (<= 1e-6), DCT round trip {worst_roundtrip:.2e} (<= 1e-9)")
    assert ok


def test_criterion_4_hmm_exactness(acceptance_report):
    rng = np.random.default_rng(4)
    worst_fwd = worst_vit = worst_ab = 0.0
    paths_ok = True
    for _ in range(200):
        S = int(rng.integers(1, 4))
        T = int(rng.integers(1, 7))
        V = int(rng.integers(1, 5))
        pi = random_stochastic(rng, 1, S)[0]
        A = random_stochastic(rng, S, S)
        B = random_stochastic(rng, S, V)
        obs = rng.integers(0, V, size=T).tolist()
        model = hmm.HmmModel.from_probabilities(pi, A, B)
        paths = enumerate_paths(pi, A, B, obs)
        fwd = hmm.forward_log(model, obs)
        vit = hmm.viterbi(model, obs)
        worst_fwd = max(worst_fwd, abs(fwd.log_likelihood - math.log(sum(paths.values()))))
        worst_vit = max(worst_vit, abs(vit.log_prob - math.log(max(paths.values()))))
        paths_ok &= abs(math.log(paths[tuple(vit.path)]) - vit.log_prob) <= 1e-9
        beta = hmm.backward_log(model, obs)
        worst_ab = max(worst_ab, np.max(np.abs(hmm.logsumexp(fwd.log_alpha + beta, axis=1) - fwd.log_likelihood)))
    ok = max(worst_fwd, worst_vit, worst_ab) <= 1e-9 and paths_ok
    acceptance_report("4 HMM exactness", ok,
                      f"forward {worst_fwd:.2e}, Viterbi {worst_vit:.2e}, alpha/beta {worst_ab:.2e} over 200 trials (<= 1e-9)")
    assert ok


def test_criterion_5_em(acceptance_report):
    rng = np.random.default_rng(5)
    worst_drop = 0.0
    for trial in range(50):
        if trial % 2 == 0:
            S, V = int(rng.integers(1, 5)), int(rng.integers(2, 6))
            model = hmm.HmmModel.from_probabilities(
                random_stochastic(rng, 1, S)[0], random_stochastic(rng, S, S), random_stochastic(rng, S, V))
            data = [rng.integers(0, V, size=int(rng.integers(2, 25))) for _ in range(int(rng.integers(1, 5)))]
        else:
            S, D = int(rng.integers(1, 5)), int(rng.integers(1, 4))
            data = [rng.normal(size=(int(rng.integers(S, 30)), D)) * rng.uniform(0.2, 3)
                    for _ in range(int(rng.integers(1, 4)))]
            model = hmm.init_model(S, data, topology=("left_to_right", "ergodic")[trial % 4 == 1])
        res = hmm.baum_welch(model, data, max_iters=20, tol=1e-300)
        worst_drop = max(worst_drop, -np.min(np.diff(res.log_likelihood_trace), initial=0.0))

    pi = np.array([0.55, 0.45])
    A = np.array([[0.7, 0.3], [0.2, 0.8]])
    B = np.array([[0.5, 0.3, 0.2], [0.1, 0.4, 0.5]])
    corpus = [[0, 1, 2, 2, 1, 0, 0], [2, 2, 1, 0], [1, 1, 0, 2, 2]]
    exp_pi, exp_A, exp_B = baum_welch_step(pi, A, B, corpus)
    got = hmm.baum_welch(hmm.HmmModel.from_probabilities(pi, A, B), corpus, max_iters=1, tol=1e-12).model
    oracle_err = max(np.max(np.abs(got.pi - exp_pi)), np.max(np.abs(got.A - exp_A)),
                     np.max(np.abs(np.exp(got.emission.log_B) - exp_B)))
    ok = worst_drop <= 1e-8 and oracle_err <= 1e-9
    acceptance_report("5 EM monotonicity + oracle", ok,
                      f"largest trace drop {worst_drop:.2e} (<= 1e-8), one-step oracle err {oracle_err:.2e} (<= 1e-9)")
    assert ok


def test_criterion_6_end_to_end(pipeline, acceptance_report):
    truth = [label for label, _ in pipeline["heldout"]]
    correct = sum(p == t for p, t in zip(pipeline["predictions"], truth))
    ok = len(truth) == 10 and correct >= 9 and pipeline["elapsed"] <= 60
    acceptance_report("6 end-to-end recognition", ok,
                      f"{correct}/{len(truth)} held-out clips correct (>= 9, target 10) in {pipeline['elapsed']:.1f} s (<= 60 s)")
    assert ok


def test_criterion_7_gain_robustness(pipeline, acceptance_report):
    mismatches = 0
    for (_, buf), base in zip(pipeline["heldout"], pipeline["predictions"]):
        for g in (0.5, 2.0):
            if recognize(buf.scaled(g), pipeline["models"]).label != base:
                mismatches += 1
    ok = mismatches == 0
    acceptance_report("7 gain robustness", ok, f"{mismatches} label changes under 0.5x / 2x gain (must be 0)")
    assert ok


def test_criterion_8_pitch(acceptance_report):
    rel_errors = {}
    for f0 in (80, 100, 150, 250, 400):
        track = estimate_f0_xcorr(synthesize(SignalSpec("sine", f0, 1.0, 1.0)))
        rel_errors[f0] = median_abs_error(track, f0) / f0
    noisy = synthesize(SignalSpec("sine", 100, 1.0, 0.7, seed=SEED, noise_amplitude=0.3))
    xc = median_abs_error(estimate_f0_xcorr(noisy), 100)
    pp = median_abs_error(estimate_f0_peakpick(noisy), 100)
    ok = all(e < 0.01 for e in rel_errors.values()) and xc <= pp
    worst = max(rel_errors.values())
    acceptance_report("8 pitch accuracy", ok,
                      f"worst pure-sine median rel err {worst:.2e} (< 1e-2); noisy median |err| xcorr {xc:.2f} Hz <= peak-pick {pp:.2f} Hz")
    assert ok


def test_criterion_9_determinism_persistence(pipeline, tmp_path, acceptance_report):
    root = pipeline["root"]
    _cli("synth", "--corpus", tmp_path / "corpus", "--f0s", ",".join(map(str, CORPUS_F0S)),
         "--noise", 0.05, "--clips-per-class", 12, "--heldout-per-class", 2, "--seed", SEED)
    same_corpus = all(
        (tmp_path / "corpus" / p.relative_to(root / "corpus")).read_bytes() == p.read_bytes()
        for p in (root / "corpus").rglob("*") if p.is_file()
    )
    _cli("train", tmp_path / "corpus" / "train.tsv", tmp_path / "models", "--n-states", 5, "--seed", SEED)
    same_models = all(
        (tmp_path / "models" / p.name).read_bytes() == p.read_bytes() for p in (root / "models").iterdir()
    )
    clip = next((root / "corpus" / "wav").rglob("*.wav"))
    _cli("features", clip, tmp_path / "a.csv")
    _cli("features", clip, tmp_path / "b.csv")
    same_csv = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    again = load_model_set(tmp_path / "models")
    same_transcripts = all(
        recognize(buf, again).to_dict() == recognize(buf, pipeline["models"]).to_dict()
        for _, buf in pipeline["heldout"]
    )
    worst = 0.0
    for label, model in pipeline["models"].models.items():
        hmm.save_model(tmp_path / "rt.json", model)
        back = hmm.load_model(tmp_path / "rt.json")
        for a, b in ((back.log_pi, model.log_pi), (back.log_A, model.log_A),
                     (back.emission.means, model.emission.means),
                     (back.emission.variances, model.emission.variances)):
            assert np.array_equal(np.isneginf(a), np.isneginf(b))
            fin = np.isfinite(b)
            worst = max(worst, np.max(np.abs(a[fin] - b[fin]), initial=0.0))
    ok = same_corpus and same_models and same_csv and same_transcripts and worst <= 1e-12
    acceptance_report("9 determinism & persistence", ok,
                      f"corpus {same_corpus}, models {same_models}, CSV {same_csv}, transcripts {same_transcripts}, "
                      f"round-trip err {worst:.1e} (<= 1e-12)")
    assert ok
