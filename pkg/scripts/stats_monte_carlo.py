"""Sampling distribution of the group and paired statistics on calibrated corpora.

Runs the ``stats`` command's records over many generation seeds, using the
generation targets as features, and summarises F for the LSA/HSA intensity
comparison and Cohen's d for the paired refusal/consent intensity test.

    python3 scripts/stats_monte_carlo.py --seeds 200
"""

import argparse

import numpy as np

from vocalsa.cli import stats_records
from vocalsa.config import RunConfig
from vocalsa.simulate import CorpusSynthConfig, target_matrix


def pick(records, feature, statistic):
    return next(r for r in records if r["feature"] == feature and r["statistic"] == statistic)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=200)
    ap.add_argument("--speakers", type=int, default=64)
    ap.add_argument("--utterances", type=int, default=12, help="per utterance type")
    ap.add_argument("--effect", default="intensity", help="sa_effect / utt_effect of the generator")
    args = ap.parse_args()
    cfg = RunConfig()
    f_signed, d_paired = [], []
    for seed in range(args.seeds):
        matrix = target_matrix(CorpusSynthConfig(n_speakers=args.speakers, utterances_per_type=args.utterances,
                                                 sa_effect=args.effect, utt_effect=args.effect, seed=seed))
        records, _ = stats_records(matrix, cfg)
        f = pick(records, "intensity_mean", "F")
        # HSA speakers are quieter: a positive sign means the expected direction
        sign = 1.0 if f["means"]["LSA"] > f["means"]["HSA"] else -1.0
        f_signed.append(sign * f["value"])
        d_paired.append(pick(records, "intensity_mean", "t")["effect_size"])
    f_signed, d_paired = np.array(f_signed), np.array(d_paired)
    q = [5, 25, 50, 75, 95]
    print(f"signed F (intensity_mean, LSA vs HSA): percentiles {q} = {np.round(np.percentile(f_signed, q), 2)}")
    print(f"  expected direction in {np.mean(f_signed > 0):.1%} of {args.seeds} corpora")
    print(f"paired d (intensity_mean, refusal vs consent): mean {d_paired.mean():.3f} sd {d_paired.std(ddof=1):.3f}")


if __name__ == "__main__":
    main()
