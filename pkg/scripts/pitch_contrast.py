"""Median F0 error of waveform matching vs. peak picking on a noisy 100 Hz sine.

    python scripts/pitch_contrast.py --noise 0.0 0.1 0.2 0.3
"""

import argparse

from speechhmm.audio import SignalSpec, synthesize
from speechhmm.pitch import estimate_f0_peakpick, estimate_f0_xcorr, median_abs_error


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--f0", type=float, default=100.0)
    ap.add_argument("--noise", type=float, nargs="+", default=[0.0, 0.1, 0.2, 0.3, 0.4])
    ap.add_argument("--seeds", type=int, default=5)
    args = ap.parse_args()
    print("noise\txcorr_median_err_hz\tpeakpick_median_err_hz")
    for noise in args.noise:
        xc = pp = 0.0
        for seed in range(args.seeds):
            buf = synthesize(SignalSpec("sine", args.f0, 1.0, 1.0 - noise, seed=seed, noise_amplitude=noise))
            xc += median_abs_error(estimate_f0_xcorr(buf), args.f0)
            pp += median_abs_error(estimate_f0_peakpick(buf), args.f0)
        print(f"{noise:.2f}\t{xc / args.seeds:.3f}\t{pp / args.seeds:.3f}")


if __name__ == "__main__":
    main()
