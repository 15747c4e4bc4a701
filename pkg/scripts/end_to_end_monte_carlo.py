"""Pass rates of the end-to-end simulation checks across corpus seeds.

By default the generation targets stand in for extracted features (no audio),
which isolates the statistics and learning layers from DSP error and runs in
seconds per seed. ``--audio`` renders and extracts each corpus instead.

    python3 scripts/end_to_end_monte_carlo.py --seeds 20
"""

import argparse
import tempfile

import numpy as np

from vocalsa.corpus import parse_manifest
from vocalsa.evaluate import (
    EvalSettings,
    FoldSettings,
    cross_validate,
    plan_for,
    sa_labeled_set,
    split_by_utterance_eval,
    utterance_type_classification,
    whole_data_ranking,
)
from vocalsa.features import extract_corpus
from vocalsa.learn import ModelSpec
from vocalsa.simulate import TARGET_FEATURES, CorpusSynthConfig, synthesize_corpus, target_matrix

GP = ModelSpec.of("gp")


def labeled(cfg, audio):
    if not audio:
        return sa_labeled_set(target_matrix(cfg)).select_features(list(TARGET_FEATURES.values()))
    with tempfile.TemporaryDirectory() as tmp:
        synthesize_corpus(tmp, cfg)
        matrix, _ = extract_corpus(parse_manifest(f"{tmp}/manifest.csv"))
    return sa_labeled_set(matrix)


def speaker_null(data, folds, n, seed):
    speakers = np.unique(data.speakers)
    labels = np.array([data.y[data.speakers == s][0] for s in speakers])
    accs = []
    for i in range(n):
        relabel = dict(zip(speakers, np.random.default_rng([seed, i]).permutation(labels)))
        shuffled = data.with_labels(np.array([relabel[s] for s in data.speakers]))
        accs.append(cross_validate(shuffled, GP, plan_for(shuffled, folds)).accuracy)
    return float(np.mean(accs))


def run_seed(seed, args):
    base = dict(n_speakers=args.speakers, utterances_per_type=args.utterances, sa_effect="intensity",
                utt_effect="intensity", seed=seed)
    data = labeled(CorpusSynthConfig(**base), args.audio)
    folds = FoldSettings()
    ranking = whole_data_ranking(data, EvalSettings())
    real = cross_validate(data, GP, plan_for(data, folds))
    margin = real.accuracy - speaker_null(data, folds, args.permutations, seed)
    utt = utterance_type_classification(data, GP, folds)
    split = split_by_utterance_eval(labeled(CorpusSynthConfig(sa_target="refusal", **base), args.audio), GP, folds)
    return {
        "a": ranking.names[0] == "intensity_mean",
        "b": margin >= 3 * real.std["accuracy"],
        "c": utt.accuracy >= 0.60 and utt.roc.auc >= 0.65,
        "d": split["refusal"].accuracy >= split["consent"].accuracy,
        "rank": ranking.names.index("intensity_mean") + 1,
        "margin": margin,
        "utt_auc": utt.roc.auc,
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--speakers", type=int, default=64)
    ap.add_argument("--utterances", type=int, default=12, help="per utterance type")
    ap.add_argument("--permutations", type=int, default=5)
    ap.add_argument("--audio", action="store_true")
    args = ap.parse_args()
    rows = []
    for seed in range(args.seeds):
        r = run_seed(seed, args)
        rows.append(r)
        print(f"seed {seed:3d}  a={r['a']:d} (rank {r['rank']:2d})  b={r['b']:d} (margin {r['margin']:+.3f})  "
              f"c={r['c']:d} (AUC {r['utt_auc']:.3f})  d={r['d']:d}", flush=True)
    for key in "abcd":
        print(f"pass rate {key}: {np.mean([r[key] for r in rows]):.2f}")


if __name__ == "__main__":
    main()
