"""Acceptance criteria, each run at its stated tolerance.

Every test prints one PASS/FAIL line (also collected in the terminal
summary) before asserting, so a failing criterion is still reported with
its measured values.
"""

import itertools
import json
import math
import time

import numpy as np
import pytest

from conftest import speaker_corpus
from test_stats import f_tail_oracle, t_tail_oracle
from vocalsa.cli import main
from vocalsa.dsp import track_pitch
from vocalsa.corpus import SynthSpec, parse_manifest, synthesize_utterance
from vocalsa.evaluate import (
    EvalSettings,
    FoldSettings,
    cross_validate,
    make_folds,
    plan_for,
    roc_auc,
    sa_labeled_set,
    split_by_utterance_eval,
    utterance_type_classification,
    whole_data_ranking,
)
from vocalsa.features import extract_corpus, extract_features
from vocalsa.learn import ModelSpec, entropy_bits, fit_model, train_decision_tree, train_gp_classifier
from vocalsa.learn.knn import KNNClassifier
from vocalsa.learn.linear import logistic_objective
from vocalsa.learn.mlp import mlp_objective
from vocalsa.simulate import CorpusSynthConfig, synthesize_corpus
from vocalsa.stats import anova_oneway, paired_t, two_sample_t

GP = ModelSpec.of("gp")
NULL_PERMUTATIONS = 10


# 1. DSP oracles ------------------------------------------------------------------


def test_criterion_1_dsp_oracles(verdict):
    start = time.perf_counter()
    problems = []

    def clip(**kw):
        kw.setdefault("intensity_db", 60.0)
        kw.setdefault("total_speech_s", 1.0)
        return synthesize_utterance(SynthSpec(**kw), 16000)

    worst_f0 = 0.0
    for f0 in (100.0, 150.0, 200.0, 300.0):
        med = abs(np.nanmedian(track_pitch(clip(f0_hz=f0)).f0_hz) - f0)
        worst_f0 = max(worst_f0, med)
        if med > 2.0:
            problems.append(f"median f0 {f0}: off by {med:.2f}")
    worst_jit = 0.0
    for eps in (0.0, 0.0025, 0.005):
        err = abs(extract_features(clip(f0_hz=150.0, jitter_frac=eps)).jitter - 2 * eps)
        worst_jit = max(worst_jit, err)
        if err > 0.002:
            problems.append(f"jitter eps={eps}: off by {err:.4f}")
    worst_shim = 0.0
    for eps in (0.0, 0.025, 0.05):
        err = abs(extract_features(clip(f0_hz=150.0, shimmer_frac=eps)).shimmer - 2 * eps)
        worst_shim = max(worst_shim, err)
        if err > 0.01:
            problems.append(f"shimmer eps={eps}: off by {err:.4f}")
    worst_onset = 0.0
    for lead in (0.25, 0.5, 1.0):
        err = abs(extract_features(clip(f0_hz=180.0, leading_silence_s=lead)).prompt_to_start - lead)
        worst_onset = max(worst_onset, err)
        if err > 0.020:
            problems.append(f"prompt_to_start lead={lead}: off by {err:.3f}")
    for gap_ms in (60, 120, 170, 250):
        v = extract_features(clip(f0_hz=180.0, leading_silence_s=0.3, internal_pauses=((0.5, gap_ms / 1000),),
                                  total_speech_s=1.4))
        got = (v.silence_50, v.silence_100, v.silence_150, v.silence_200)
        want = tuple(float(gap_ms >= t) for t in (50, 100, 150, 200))
        if got != want:
            problems.append(f"silence counts gap={gap_ms}: {got} != {want}")
    elapsed = time.perf_counter() - start
    if elapsed >= 30:
        problems.append(f"runtime {elapsed:.1f} s")
    ok = verdict(
        "1 (DSP oracles)", not problems,
        f"max |f0 err| {worst_f0:.2f} Hz, max |jitter err| {worst_jit:.5f}, max |shimmer err| {worst_shim:.4f}, "
        f"max |onset err| {1000 * worst_onset:.1f} ms, {elapsed:.1f} s" + (f"; {problems}" if problems else ""),
    )
    assert ok, problems


# 2. Statistics oracles -------------------------------------------------------------


def test_criterion_2_statistics(verdict):
    a = anova_oneway([[1, 2, 3], [4, 5, 6]])
    t = paired_t([2, 3, 4], [1, 1, 1])
    checks = {
        "F": abs(a.f_value - 13.5) <= 1e-9,
        "eta2": abs(a.eta_squared - 13.5 / 17.5) <= 1e-9,
        "t": abs(t.t_value - 2 * math.sqrt(3)) <= 1e-9,
        "d": abs(t.cohens_d - 2.0) <= 1e-9,
        "p_F": abs(a.p_value - f_tail_oracle(13.5, 1, 4)) <= 1e-6,
        "p_t": abs(t.p_value - t_tail_oracle(t.t_value, 2)) <= 1e-6,
    }
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        x = rng.normal(0, 1, rng.integers(2, 25))
        y = rng.normal(rng.normal(), rng.uniform(0.5, 2), rng.integers(2, 25))
        f = anova_oneway([x, y]).f_value
        worst = max(worst, abs(f - two_sample_t(x, y).t_value ** 2) / max(1.0, f))
    checks["F=t^2"] = worst <= 1e-9
    failed = [k for k, v in checks.items() if not v]
    ok = verdict("2 (statistics oracles)", not failed,
                 f"F={a.f_value:.12g}, eta2={a.eta_squared:.6f}, t={t.t_value:.6f}, d={t.cohens_d:.12g}, "
                 f"p={a.p_value:.6f}, max rel |F-t^2| {worst:.1e}" + (f"; failed {failed}" if failed else ""))
    assert ok


# 3. Learner properties ------------------------------------------------------------


def _fd(fun, theta, h=1e-6):
    out = np.zeros_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = h
        out[i] = (fun(theta + e)[0] - fun(theta - e)[0]) / (2 * h)
    return out


def test_criterion_3_learners(verdict):
    rng = np.random.default_rng(3)
    X = rng.normal(size=(40, 4))
    y = (X[:, 0] + 0.7 * rng.normal(size=40) > 0).astype(int)
    theta = rng.normal(size=5)
    g = logistic_objective(theta, X, y, 0.1)[1]
    log_err = np.max(np.abs(g - _fd(lambda t: logistic_objective(t, X, y, 0.1), theta))) / np.max(np.abs(g))
    hidden = 5
    w = rng.normal(scale=0.5, size=hidden * 4 + 2 * hidden + 1)
    g = mlp_objective(w, X, y, hidden)[1]
    mlp_err = np.max(np.abs(g - _fd(lambda t: mlp_objective(t, X, y, hidden), w))) / np.max(np.abs(g))

    monotone = True
    for seed in range(10):
        r = np.random.default_rng(seed)
        m = train_gp_classifier(r.normal(size=(50, 3)), r.integers(0, 2, 50), length_scale=r.uniform(0.5, 2))
        monotone &= bool(np.all(np.diff(m.objectives) >= 0))

    pure_ok = True
    for seed in range(10):
        r = np.random.default_rng(100 + seed)
        tree = train_decision_tree(r.normal(size=(60, 3)), r.integers(0, 2, 60), min_leaf=1)
        for leaf in tree.root.leaves():
            if 0 in leaf.counts:
                pure_ok &= entropy_bits(leaf.counts) == 0.0 and leaf.entropy == 0.0

    Q = rng.normal(size=(50, 4))
    knn = KNNClassifier(X, y, k=5)
    oracle = [[i for _, i in sorted((float(np.sum((q - x) ** 2)), i) for i, x in enumerate(X))[:5]] for q in Q]
    knn_ok = knn.neighbors(Q).tolist() == oracle

    flips = {}
    for variant in ("logistic", "gp", "mlp"):
        p = fit_model(ModelSpec.of(variant), X, y).predict_proba(Q)
        q = fit_model(ModelSpec.of(variant), X, 1 - y).predict_proba(Q)
        flips[variant] = float(np.max(np.abs(p + q - 1)))
    flip_ok = flips["logistic"] <= 1e-5 and flips["gp"] <= 1e-8 and flips["mlp"] <= 1e-10

    ok = verdict(
        "3 (learner properties)",
        log_err <= 1e-6 and mlp_err <= 1e-4 and monotone and pure_ok and knn_ok and flip_ok,
        f"grad rel err logistic {log_err:.1e} MLP {mlp_err:.1e}; GP monotone {monotone}; pure leaves H=0 {pure_ok}; "
        f"kNN exact {knn_ok}; flip max dev {', '.join(f'{k} {v:.1e}' for k, v in flips.items())}",
    )
    assert ok


# 4. Evaluation properties ------------------------------------------------------------


def test_criterion_4_evaluation(verdict):
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(4, 50))
        y = rng.integers(0, 2, n)
        y[:2] = [0, 1]
        s = np.round(rng.normal(size=n), int(rng.integers(0, 3)))
        pos, neg = s[y == 1], s[y == 0]
        conc = sum(1.0 if p > q else 0.5 if p == q else 0.0 for p, q in itertools.product(pos, neg))
        worst = max(worst, abs(roc_auc(s, y).auc - conc / (pos.size * neg.size)))
    y4 = np.array([1, 1, 0, 0])
    fixed = (roc_auc([0.9, 0.8, 0.2, 0.1], y4).auc, roc_auc([0.9, 0.8, 0.2, 0.1], 1 - y4).auc,
             roc_auc([0.9, 0.3, 0.4, 0.1], y4).auc)

    folds_ok = True
    for i in range(1000):
        r = np.random.default_rng(10_000 + i)
        n_spk = int(r.integers(10, 40))
        k = int(r.integers(2, 11))
        lab = r.integers(0, 2, n_spk)
        reps = r.integers(1, 5, n_spk)
        speakers = np.repeat(np.arange(n_spk), reps).astype(str)
        yy = np.repeat(lab, reps)
        plan = make_folds(yy, speakers, k=k, seed=i)
        fold_of = np.array([plan.assignment[speakers == str(s)][0] for s in range(n_spk)])
        grouped = all(len(set(plan.assignment[speakers == str(s)].tolist())) == 1 for s in range(n_spk))
        balanced = all(np.ptp(np.bincount(fold_of[lab == c], minlength=k)) <= 1 for c in (0, 1))
        folds_ok &= grouped and balanced

    # shuffled-label null on a 63-speaker, 1-row-per-speaker corpus
    data = speaker_corpus(63, 1, d=8, informative=[0, 1], shift=1.5, seed=8)
    shuffled = data.with_labels(np.random.default_rng(2).permutation(data.y))
    res = cross_validate(shuffled, GP, plan_for(shuffled, FoldSettings()))
    null_ok = abs(res.accuracy - 0.5) <= 0.12 and abs(res.roc.auc - 0.5) <= 0.1
    # diagnostic only: spread of the same check over 200 permutations
    accs, aucs = [], []
    for i in range(200):
        perm = data.with_labels(np.random.default_rng(1000 + i).permutation(data.y))
        r = cross_validate(perm, GP, plan_for(perm, FoldSettings()))
        accs.append(r.accuracy)
        aucs.append(r.roc.auc)
    accs, aucs = np.array(accs), np.array(aucs)
    rate = np.mean((np.abs(accs - 0.5) <= 0.12) & (np.abs(aucs - 0.5) <= 0.1))

    ok = verdict(
        "4 (evaluation properties)",
        worst <= 1e-12 and fixed == (1.0, 0.0, 0.75) and folds_ok and null_ok,
        f"max |AUC - concordance| {worst:.1e}; fixtures {fixed}; 1000 fold plans valid {folds_ok}; "
        f"shuffled CV accuracy {res.accuracy:.3f}, AUC {res.roc.auc:.3f} (over 200 permutations: accuracy "
        f"{accs.mean():.3f} sd {accs.std():.3f}, AUC {aucs.mean():.3f} sd {aucs.std():.3f}, in band {rate:.0%})",
    )
    assert ok


# 5. End-to-end calibrated simulation -----------------------------------------------


def _build(tmp_path_factory, name, **kw):
    root = tmp_path_factory.mktemp(name)
    cfg = CorpusSynthConfig(n_speakers=64, utterances_per_type=12, sa_effect="intensity", utt_effect="intensity", **kw)
    synthesize_corpus(root, cfg)
    matrix, rejected = extract_corpus(parse_manifest(root / "manifest.csv"))
    return matrix, rejected


@pytest.fixture(scope="module")
def sim_corpus(tmp_path_factory):
    start = time.perf_counter()
    matrix, rejected = _build(tmp_path_factory, "sim")
    return matrix, rejected, time.perf_counter() - start


@pytest.fixture(scope="module")
def refusal_only_corpus(tmp_path_factory):
    matrix, _ = _build(tmp_path_factory, "sim_refusal", sa_target="refusal")
    return matrix


SUITE_START = time.perf_counter()


def test_criterion_5a_ranking(sim_corpus, verdict):
    matrix, rejected, build_s = sim_corpus
    data = sa_labeled_set(matrix)
    ranking = whole_data_ranking(data, EvalSettings())
    top = ranking.entries[:3]
    pos = ranking.names.index("intensity_mean") + 1
    ok = verdict(
        "5a (intensity_mean ranked first)", ranking.names[0] == "intensity_mean",
        f"{len(matrix)} rows, {len(rejected)} rejected, built in {build_s:.0f} s; intensity_mean ranked {pos} "
        f"(F {dict(ranking.entries)['intensity_mean']:.1f}); top 3 {[(n, round(f, 1)) for n, f in top]}",
    )
    assert ok


def test_criterion_5b_beats_null(sim_corpus, verdict):
    data = sa_labeled_set(sim_corpus[0])
    folds = FoldSettings()
    real = cross_validate(data, GP, plan_for(data, folds))
    speakers = np.unique(data.speakers)
    spk_label = {s: int(data.y[data.speakers == s][0]) for s in speakers}
    nulls = []
    for i in range(NULL_PERMUTATIONS):
        perm = np.random.default_rng(500 + i).permutation([spk_label[s] for s in speakers])
        relabel = dict(zip(speakers, perm))
        shuffled = data.with_labels(np.array([relabel[s] for s in data.speakers]))
        nulls.append(cross_validate(shuffled, GP, plan_for(shuffled, folds)).accuracy)
    null_mean, null_sd = float(np.mean(nulls)), float(np.std(nulls, ddof=1))
    margin = real.accuracy - null_mean
    need = 3 * real.std["accuracy"]
    z = margin / null_sd if null_sd > 0 else math.inf
    ok = verdict(
        "5b (GP beats shuffled null by >= 3 fold-std)", margin >= need,
        f"accuracy {real.accuracy:.3f} (fold std {real.std['accuracy']:.3f}, AUC {real.roc.auc:.3f}); "
        f"null mean {null_mean:.3f} over {NULL_PERMUTATIONS} speaker-label permutations; "
        f"margin {margin:.3f} vs required {need:.3f}; z vs null spread {z:.1f}",
    )
    assert ok


def test_criterion_5c_utterance_type(sim_corpus, verdict):
    data = sa_labeled_set(sim_corpus[0])
    res = utterance_type_classification(data, GP, FoldSettings())
    ok = verdict(
        "5c (utterance type accuracy >= 0.60, AUC >= 0.65)", res.accuracy >= 0.60 and res.roc.auc >= 0.65,
        f"accuracy {res.accuracy:.3f} (fold std {res.std['accuracy']:.3f}), AUC {res.roc.auc:.3f}",
    )
    assert ok


def test_criterion_5d_refusal_only(refusal_only_corpus, verdict):
    data = sa_labeled_set(refusal_only_corpus)
    res = split_by_utterance_eval(data, GP, FoldSettings())
    ref, con = res["refusal"].accuracy, res["consent"].accuracy
    elapsed = time.perf_counter() - SUITE_START
    ok = verdict(
        "5d (refusal-only SA accuracy >= consent-only)", ref >= con and elapsed < 600,
        f"refusal-only {ref:.3f}, consent-only {con:.3f}; acceptance module elapsed {elapsed:.0f} s (budget 600 s)",
    )
    assert ok


# 6. Determinism ------------------------------------------------------------------------


def test_criterion_6_determinism(tmp_path, verdict):
    def run(*argv):
        return main([str(a) for a in argv])

    small = ["--set", "synth_speakers=12", "--set", "synth_utterances_per_type=2"]
    outputs = {}
    differences = []
    for jobs in (1, 1, 2):
        out = tmp_path / "out"
        codes = [
            run("synth", "--out", out / "corpus", "--jobs", jobs, *small),
            run("extract", "--manifest", out / "corpus" / "manifest.csv", "--out", out / "x", "--jobs", jobs),
        ]
        feats = out / "x" / "features.csv"
        common = ["--features", feats, "--folds", 3, "--classifier", "logistic", "--jobs", jobs]
        for command in ("stats", "cv", "sweep", "transfer", "utt", "roc", "train"):
            codes.append(run(command, *common, "--out", out / command))
        codes.append(run("predict", "--features", feats, "--model", out / "train" / "model.json", "--out",
                         out / "predict", "--jobs", jobs))
        if any(codes):
            differences.append(f"exit codes {codes}")
        snapshot = {p.relative_to(out).as_posix(): p.read_bytes() for p in sorted(out.rglob("*")) if p.is_file()}
        if outputs:
            for key in sorted(set(outputs) | set(snapshot)):
                if outputs.get(key) != snapshot.get(key):
                    differences.append(f"{key} differs at jobs={jobs}")
        else:
            outputs = snapshot
        for p in sorted(out.rglob("*"), reverse=True):
            p.unlink() if p.is_file() else p.rmdir()
    reports = [k for k in outputs if k.endswith(".json")]
    embedded = all("config" in json.loads(outputs[k]) for k in reports if not k.endswith("model.json"))
    ok = verdict(
        "6 (determinism)", not differences and embedded,
        f"{len(outputs)} output files from 10 commands byte-identical across 2 reruns at --jobs 1 and --jobs 2"
        if not differences else f"differences: {differences[:5]}",
    )
    assert ok
