"""Measurement error of the DSP layer on synthetic clips over a parameter grid.

    python3 scripts/dsp_accuracy_sweep.py --rate 16000
"""

import argparse

import numpy as np

from vocalsa.corpus import SynthSpec, synthesize_utterance
from vocalsa.features import extract_features


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rate", type=int, default=16000)
    ap.add_argument("--intensity", type=float, default=60.0, help="target level in dB")
    args = ap.parse_args()
    print(f"{'f0':>6} {'jitter':>7} {'shimmer':>7} | {'f0 err':>7} {'jit err':>8} {'shim err':>8} {'onset err':>9}")
    for f0 in (80.0, 120.0, 200.0, 300.0, 400.0):
        for jit in (0.0, 0.005, 0.01):
            for shim in (0.0, 0.05, 0.1):
                spec = SynthSpec(f0_hz=f0, intensity_db=args.intensity, jitter_frac=jit, shimmer_frac=shim,
                                 leading_silence_s=0.4, total_speech_s=1.0)
                v = extract_features(synthesize_utterance(spec, args.rate))
                errs = (v.mean_f0 - f0, v.jitter - 2 * jit, v.shimmer - 2 * shim, 1000 * (v.prompt_to_start - 0.4))
                print(f"{f0:6.0f} {jit:7.3f} {shim:7.2f} | {errs[0]:+7.2f} {errs[1]:+8.5f} {errs[2]:+8.4f} "
                      f"{errs[3]:+8.1f}ms" if np.all(np.isfinite(errs)) else f"{f0:6.0f} {jit:7.3f} {shim:7.2f} | n/a")


if __name__ == "__main__":
    main()
