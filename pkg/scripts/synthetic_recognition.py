"""Synthetic isolated-word experiment: accuracy and gain robustness over several corpus seeds.

    python scripts/synthetic_recognition.py --seeds 0 1 2 --gain-range 0.3,1.1
"""

import argparse
import contextlib
import io
import tempfile
import time
from pathlib import Path

from speechhmm.audio import read_wav
from speechhmm.cli import main as cli
from speechhmm.recognizer import load_model_set, read_manifest, recognize


def run_once(seed, gain_range, n_states, workdir):
    with contextlib.redirect_stdout(io.StringIO()), contextlib.redirect_stderr(io.StringIO()):
        assert cli(["synth", "--corpus", str(workdir / "corpus"), "--seed", str(seed),
                    "--gain-range", gain_range]) == 0
        assert cli(["train", str(workdir / "corpus" / "train.tsv"), str(workdir / "models"),
                    "--seed", str(seed), "--n-states", str(n_states)]) == 0
    models = load_model_set(workdir / "models")
    correct = changed = total = 0
    for label, path in read_manifest(workdir / "corpus" / "test.tsv"):
        buf = read_wav(path)
        base = recognize(buf, models).label
        correct += base == label
        total += 1
        changed += sum(recognize(buf.scaled(g), models).label != base for g in (0.5, 2.0))
    return correct, total, changed


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(5)))
    ap.add_argument("--gain-range", default="0.3,1.1")
    ap.add_argument("--n-states", type=int, default=5)
    args = ap.parse_args()
    print("seed\taccuracy\tgain_label_changes\tseconds")
    for seed in args.seeds:
        start = time.perf_counter()
        with tempfile.TemporaryDirectory() as tmp:
            correct, total, changed = run_once(seed, args.gain_range, args.n_states, Path(tmp))
        print(f"{seed}\t{correct}/{total}\t{changed}/{2 * total}\t{time.perf_counter() - start:.1f}")


if __name__ == "__main__":
    main()
