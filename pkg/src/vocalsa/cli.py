"""Command-line entry point.

Exit codes: 0 success, 1 input or I/O error, 2 analysis-time failure
(degenerate data, nothing extractable, failing fold).
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from typing import List, Optional

import numpy as np

from . import evaluate as ev
from .config import CLASSIFIER_CHOICES, RunConfig, load_config
from .corpus import atomic_write_bytes, parse_manifest
from .errors import AnalysisError, InputError, TooFewSamples, UntrainedModel, VocalError, ZeroVariance
from .features import FeatureMatrix, apply_outlier_policy, extract_corpus, read_feature_csv, write_feature_csv
from .learn.base import LabeledSet, TrainedModel
from .simulate import synthesize_corpus
from .stats import PairedTResult, anova_oneway, paired_t

REPORT_SCHEMA = 1
STATS_FEATURES = (
    "mean_f0",
    "std_f0",
    "intensity_mean",
    "intensity_std",
    "jitter",
    "shimmer",
    "relative_silence",
    "prompt_to_start",
)
PAIRED_FEATURES = ("std_f0", "intensity_mean", "intensity_std", "jitter", "shimmer")


# Output helpers ---------------------------------------------------------------------


def _clean(obj):
    """Make a structure JSON-safe: numpy scalars to Python, inf/nan to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        if math.isnan(v):
            return None
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, doc):
    text = json.dumps(_clean(doc), indent=1, sort_keys=True) + "\n"
    atomic_write_bytes(path, text.encode("utf-8"))


def write_csv(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([f"{v:.10g}" if isinstance(v, float) else v for v in r])
    atomic_write_bytes(path, buf.getvalue().encode("utf-8"))


def report(cfg: RunConfig, command: str, **body) -> dict:
    return {"schema": REPORT_SCHEMA, "command": command, "config": cfg.echo(), "seed": cfg.seed, **body}


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _log(msg: str):
    print(msg, file=sys.stderr)


# Loading ----------------------------------------------------------------------


def load_matrix(cfg: RunConfig) -> FeatureMatrix:
    """Feature matrix from ``features`` (CSV) or, failing that, by extracting ``manifest``."""
    if cfg.features:
        matrix = read_feature_csv(cfg.features)
    elif cfg.manifest:
        matrix, rejected = extract_corpus(parse_manifest(cfg.manifest), cfg.dsp_params(), cfg.worker_count())
        for rid, reason in rejected:
            _log(f"warning: {rid} rejected ({reason})")
        if len(matrix) == 0:
            raise AnalysisError("every utterance was rejected")
    else:
        raise InputError("give --features (CSV) or --manifest")
    if cfg.feature_subset:
        matrix = matrix.select_features(cfg.subset_names())
    return matrix


def eval_settings(cfg: RunConfig, top_k: Optional[int] = None) -> ev.EvalSettings:
    k = top_k if top_k is not None else (cfg.top_k or None)
    return ev.EvalSettings(
        fit_scope=cfg.fit_scope,
        rank_scope=cfg.fit_scope,
        outlier_k=cfg.outlier_k,
        winsorize=cfg.winsorize,
        top_k=k,
        jobs=cfg.worker_count(),
    )


def fold_settings(cfg: RunConfig) -> ev.FoldSettings:
    return ev.FoldSettings(cfg.folds, cfg.effective_fold_mode, cfg.stratified, cfg.seed)


def _primary(specs):
    names = [s.variant for s in specs]
    return specs[names.index("gp")] if "gp" in names else specs[0]


def _roc_files(cfg, results: dict, primary: str, stem: str = "roc"):
    for name, res in results.items():
        if res.roc is None:
            continue
        rows = [(float(a), float(b)) for a, b in zip(res.roc.fpr, res.roc.tpr)]
        if name == primary:
            write_csv(_out(cfg, f"{stem}.csv"), ["fpr", "tpr"], rows)
        if len(results) > 1:
            write_csv(_out(cfg, f"{stem}_{name}.csv"), ["fpr", "tpr"], rows)


def _collect_warnings(results: dict) -> List[str]:
    out = []
    for name in sorted(results):
        out.extend(f"{name}: {w}" for w in results[name].warnings)
    return out


# Commands -----------------------------------------------------------------------


def cmd_synth(cfg: RunConfig) -> int:
    metas = synthesize_corpus(cfg.out, cfg.synth_config(), jobs=cfg.worker_count())
    write_json(_out(cfg, "synth.json"), report(cfg, "synth", recordings=len(metas), synth=cfg.synth_config().to_dict()))
    _log(f"wrote {len(metas)} recordings and manifest.csv to {cfg.out}")
    return 0


def cmd_extract(cfg: RunConfig) -> int:
    if not cfg.manifest:
        raise InputError("extract needs --manifest")
    corpus = parse_manifest(cfg.manifest)
    matrix, rejected = extract_corpus(corpus, cfg.dsp_params(), cfg.worker_count())
    for rid, reason in rejected:
        _log(f"warning: {rid} rejected ({reason})")
    rej = [{"recording_id": rid, "reason": reason} for rid, reason in rejected]
    write_json(_out(cfg, "extract.json"), report(cfg, "extract", rows=len(matrix), rejected=rej))
    if len(matrix) == 0:
        _log("error: every utterance was rejected")
        return 2
    write_feature_csv(_out(cfg, "features.csv"), matrix)
    _log(f"wrote {len(matrix)} rows to {_out(cfg, 'features.csv')}")
    return 0


def _speaker_means(matrix: FeatureMatrix, rows=None):
    """Per-speaker NaN-ignoring means; returns (speakers, genders, groups, values)."""
    if rows is None:
        rows = np.ones(len(matrix), dtype=bool)
    speakers = matrix.speakers[rows]
    values = matrix.values[rows]
    row_genders = matrix.genders[rows]
    row_groups = matrix.sa_groups[rows]
    order = sorted(set(speakers.tolist()))
    out, genders, groups = [], [], []
    for s in order:
        sel = speakers == s
        block = values[sel]
        with np.errstate(all="ignore"):
            counts = np.isfinite(block).sum(axis=0)
            sums = np.nansum(block, axis=0)
            out.append(np.where(counts > 0, sums / np.maximum(counts, 1), np.nan))
        genders.append(row_genders[sel][0])
        groups.append(row_groups[sel][0])
    return np.array(order), np.array(genders), np.array(groups), np.array(out).reshape(len(order), -1)


def _anova_record(name, comparison, a, b, labels):
    a = a[np.isfinite(a)]
    b = b[np.isfinite(b)]
    res = anova_oneway([a, b])
    return {
        "feature": name,
        "comparison": comparison,
        "statistic": "F",
        "value": res.f_value,
        "effect_size": res.eta_squared,
        "effect_measure": "eta_squared",
        "p": res.p_value,
        "df": [res.df_between, res.df_within],
        "n": [int(a.size), int(b.size)],
        "means": {labels[0]: float(a.mean()), labels[1]: float(b.mean())},
        "sds": {labels[0]: float(a.std(ddof=1)), labels[1]: float(b.std(ddof=1))},
    }


def stats_records(matrix: FeatureMatrix, cfg: RunConfig):
    """Group ANOVAs on speaker means (LSA vs HSA) and paired refusal/consent t-tests."""
    cleaned, flagged = apply_outlier_policy(matrix, cfg.outlier_k, cfg.outlier_mode)
    records = []
    sa_rows = cleaned.sa_groups != "Excluded"
    spk, genders, groups, means = _speaker_means(cleaned, sa_rows)
    names = list(cleaned.feature_names)
    for name in STATS_FEATURES:
        if name not in names:
            continue
        col = means[:, names.index(name)]
        split = cfg.split_by_gender or name == "mean_f0"
        cells = [(f"LSA vs HSA ({g})", genders == g) for g in ("female", "male")] if split else [("LSA vs HSA", np.ones(len(spk), bool))]
        for label, sel in cells:
            a = col[sel & (groups == "LSA")]
            b = col[sel & (groups == "HSA")]
            try:
                records.append(_anova_record(name, label, a, b, ("LSA", "HSA")))
            except TooFewSamples as exc:
                raise TooFewSamples(f"{name} {label}: {exc}") from None
    # paired tests use every speaker with both utterance types
    utt = cleaned.utterance_types
    ref_spk, _, _, ref = _speaker_means(cleaned, utt == "refusal")
    con_spk, _, _, con = _speaker_means(cleaned, utt == "consent")
    both = sorted(set(ref_spk.tolist()) & set(con_spk.tolist()))
    if len(both) < 2:
        raise TooFewSamples("paired comparisons need >= 2 speakers with both refusal and consent utterances")
    ri = [ref_spk.tolist().index(s) for s in both]
    ci = [con_spk.tolist().index(s) for s in both]
    for name in PAIRED_FEATURES:
        if name not in names:
            continue
        j = names.index(name)
        a, b = ref[ri, j], con[ci, j]
        ok = np.isfinite(a) & np.isfinite(b)
        note = None
        try:
            res = paired_t(a[ok], b[ok])
        except ZeroVariance:
            res = PairedTResult(math.nan, math.nan, math.nan, int(ok.sum()) - 1)
            note = "zero variance of paired differences"
        records.append(
            {
                "feature": name,
                "comparison": "refusal vs consent (paired)",
                "statistic": "t",
                "value": res.t_value,
                "effect_size": res.cohens_d,
                "effect_measure": "cohens_d",
                "p": res.p_value,
                "df": res.df,
                "n": int(ok.sum()),
                "means": {"refusal": float(a[ok].mean()), "consent": float(b[ok].mean())},
                "sds": {"refusal": float(a[ok].std(ddof=1)), "consent": float(b[ok].std(ddof=1))},
            }
        )
        if note:
            records[-1]["note"] = note
    if cfg.shimmer_percent:
        for r in records:
            if r["feature"] == "shimmer":
                r["display_unit"] = "percent"
                r["means"] = {k: 100 * v for k, v in r["means"].items()}
                r["sds"] = {k: 100 * v for k, v in r["sds"].items()}
    return records, flagged


def cmd_stats(cfg: RunConfig) -> int:
    matrix = load_matrix(cfg)
    records, flagged = stats_records(matrix, cfg)
    excluded = [{"recording_id": matrix.metas[r].recording_id, "feature": f} for r, f in flagged]
    write_json(_out(cfg, "stats.json"), report(cfg, "stats", results=records, outliers=excluded))
    for r in records:
        _log(f"{r['feature']:>18s}  {r['comparison']:<28s} {r['statistic']}={r['value']:.3f}  p={r['p']:.4f}")
    return 0


def _sa_data(cfg) -> LabeledSet:
    return ev.sa_labeled_set(load_matrix(cfg))


def _run_cv(cfg, data: LabeledSet, specs, settings=None):
    settings = settings or eval_settings(cfg)
    plan = ev.plan_for(data, fold_settings(cfg))
    results = {s.variant: ev.cross_validate(data, s, plan, settings, cfg.seed) for s in specs}
    return plan, results


def cmd_cv(cfg: RunConfig) -> int:
    data = _sa_data(cfg)
    specs = cfg.model_specs()
    plan, results = _run_cv(cfg, data, specs)
    primary = _primary(specs).variant
    doc = report(
        cfg,
        "cv",
        fold_plan=plan.summary(),
        positive_label="HSA",
        models={k: v.to_dict() for k, v in sorted(results.items())},
        primary=primary,
        auc=None if results[primary].roc is None else results[primary].roc.auc,
        warnings=_collect_warnings(results),
    )
    write_json(_out(cfg, "report.json"), doc)
    _roc_files(cfg, results, primary)
    for name in sorted(results):
        r = results[name]
        auc = "n/a" if r.roc is None else f"{r.roc.auc:.3f}"
        _log(f"{name:>8s}  accuracy {r.mean['accuracy']:.3f} +- {r.std['accuracy']:.3f}  auc {auc}")
    return 0


def cmd_roc(cfg: RunConfig, scores_path: Optional[str] = None) -> int:
    if scores_path:
        with open(scores_path, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        try:
            scores = [float(r["score"]) for r in rows]
            labels = [int(r["label"]) for r in rows]
        except (KeyError, ValueError) as exc:
            raise InputError(f"{scores_path}: need numeric 'score' and 0/1 'label' columns ({exc})") from None
        roc = ev.roc_auc(scores, labels)
        write_json(_out(cfg, "roc.json"), report(cfg, "roc", source=os.path.basename(scores_path), auc=roc.auc, roc=roc.points()))
        write_csv(_out(cfg, "roc.csv"), ["fpr", "tpr"], [tuple(p) for p in roc.points()])
        _log(f"auc {roc.auc:.4f}")
        return 0
    data = _sa_data(cfg)
    specs = cfg.model_specs()
    plan, results = _run_cv(cfg, data, specs)
    primary = _primary(specs).variant
    aucs = {k: (None if v.roc is None else v.roc.auc) for k, v in sorted(results.items())}
    doc = report(
        cfg,
        "roc",
        fold_plan=plan.summary(),
        auc=aucs[primary],
        aucs=aucs,
        roc={k: (None if v.roc is None else v.roc.points()) for k, v in sorted(results.items())},
        warnings=_collect_warnings(results),
    )
    write_json(_out(cfg, "roc.json"), doc)
    _roc_files(cfg, results, primary)
    for k, a in aucs.items():
        _log(f"{k:>8s}  auc {a if a is None else round(a, 4)}")
    return 0


def cmd_sweep(cfg: RunConfig) -> int:
    data = _sa_data(cfg)
    specs = cfg.model_specs()
    plan = ev.plan_for(data, fold_settings(cfg))
    settings = eval_settings(cfg)
    sweeps = {s.variant: ev.sweep_feature_count(data, s, plan, settings, cfg.seed) for s in specs}
    per_gender = {}
    if cfg.split_by_gender:
        for g in sorted(set(data.genders.tolist())):
            sub = data.subset(data.genders == g)
            gplan = ev.plan_for(sub, fold_settings(cfg))
            per_gender[g] = {s.variant: ev.sweep_feature_count(sub, s, gplan, settings, cfg.seed).to_dict() for s in specs}
    primary = _primary(specs).variant
    doc = report(
        cfg,
        "sweep",
        fold_plan=plan.summary(),
        models={k: v.to_dict() for k, v in sorted(sweeps.items())},
        primary=primary,
        sweep=sweeps[primary].to_dict()["sweep"],
        per_gender=per_gender,
        ranking_scope="whole data" if cfg.paper_fidelity else "training rows of each fold",
    )
    write_json(_out(cfg, "report.json"), doc)
    write_csv(_out(cfg, "sweep.csv"), ["k", "mean_accuracy", "std_accuracy"], sweeps[primary].rows)
    if len(sweeps) > 1:
        for name, sw in sweeps.items():
            write_csv(_out(cfg, f"sweep_{name}.csv"), ["k", "mean_accuracy", "std_accuracy"], sw.rows)
    for k, m, s in sweeps[primary].rows:
        _log(f"k={k:2d}  {m:.3f} +- {s:.3f}")
    return 0


def cmd_transfer(cfg: RunConfig) -> int:
    data = _sa_data(cfg)
    specs = cfg.model_specs()
    settings = eval_settings(cfg)
    reports = {s.variant: ev.gender_configurations(data, s, fold_settings(cfg), settings, cfg.seed) for s in specs}
    primary = _primary(specs).variant
    doc = report(
        cfg,
        "transfer",
        models={k: v.to_dict() for k, v in sorted(reports.items())},
        primary=primary,
        transfer=reports[primary].transfer,
    )
    write_json(_out(cfg, "report.json"), doc)
    rows = []
    for name in sorted(reports):
        tr = reports[name].transfer
        for a in sorted(tr):
            for b in sorted(tr[a]):
                rows.append((name, a, b, float(tr[a][b])))
    write_csv(_out(cfg, "transfer.csv"), ["classifier", "train_gender", "test_gender", "accuracy"], rows)
    for r in rows:
        _log(f"{r[0]:>8s}  train {r[1]:<6s} test {r[2]:<6s} accuracy {r[3]:.3f}")
    return 0


def cmd_utt(cfg: RunConfig) -> int:
    matrix = load_matrix(cfg)
    data = ev.sa_labeled_set(matrix)
    specs = cfg.model_specs()
    settings = eval_settings(cfg)
    folds = fold_settings(cfg)
    # utterance type is predicted for every speaker, Excluded ones included
    all_rows = LabeledSet.from_matrix(matrix, np.zeros(len(matrix), dtype=int))
    utt = {s.variant: ev.utterance_type_classification(all_rows, s, folds, settings, cfg.seed) for s in specs}
    by_type = {s.variant: ev.split_by_utterance_eval(data, s, folds, settings, cfg.seed) for s in specs}
    primary = _primary(specs).variant
    doc = report(
        cfg,
        "utt",
        positive_label="refusal",
        models={k: v.to_dict() for k, v in sorted(utt.items())},
        primary=primary,
        auc=None if utt[primary].roc is None else utt[primary].roc.auc,
        sa_by_utterance={
            k: {kind: r.to_dict() for kind, r in sorted(v.items())} for k, v in sorted(by_type.items())
        },
        warnings=_collect_warnings(utt),
    )
    write_json(_out(cfg, "report.json"), doc)
    _roc_files(cfg, utt, primary)
    for name in sorted(utt):
        r = utt[name]
        s = by_type[name]
        _log(
            f"{name:>8s}  refusal-vs-consent accuracy {r.accuracy:.3f}  |  SA accuracy refusal-only "
            f"{s['refusal'].accuracy:.3f} consent-only {s['consent'].accuracy:.3f}"
        )
    return 0


def cmd_train(cfg: RunConfig) -> int:
    data = _sa_data(cfg)
    spec = _primary(cfg.model_specs())
    settings = eval_settings(cfg)
    model, _ = ev.fit_pipeline(data, np.arange(len(data)), spec, settings, cfg.seed)
    path = cfg.model or _out(cfg, "model.json")
    atomic_write_bytes(path, (model.to_json() + "\n").encode("utf-8"))
    _log(f"wrote {spec.variant} model to {path}")
    return 0


def cmd_predict(cfg: RunConfig) -> int:
    if not cfg.model:
        raise InputError("predict needs --model")
    with open(cfg.model, encoding="utf-8") as fh:
        model = TrainedModel.from_json(fh.read())
    matrix = load_matrix(cfg)
    missing = [n for n in model.feature_names if n not in matrix.feature_names]
    if missing:
        raise InputError(f"feature matrix lacks model features {missing}")
    X = matrix.select_features(model.feature_names).values
    if not np.all(np.isfinite(X)):
        raise InputError("feature matrix has missing values")
    scores = model.predict_proba(X, matrix.genders)
    rows = [
        (m.recording_id, float(s), model.positive_label if s >= 0.5 else "LSA")
        for m, s in zip(matrix.metas, scores)
    ]
    write_csv(_out(cfg, "predictions.csv"), ["recording_id", "score", "label"], rows)
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "extract": cmd_extract,
    "stats": cmd_stats,
    "cv": cmd_cv,
    "sweep": cmd_sweep,
    "transfer": cmd_transfer,
    "utt": cmd_utt,
    "roc": cmd_roc,
    "train": cmd_train,
    "predict": cmd_predict,
}

COMMAND_HELP = {
    "synth": "render a calibrated synthetic corpus with manifest",
    "extract": "extract the 18 features for every manifest recording",
    "stats": "LSA/HSA ANOVAs and paired refusal/consent t-tests",
    "cv": "cross-validated social anxiety classification",
    "sweep": "accuracy against the number of top-ranked features",
    "transfer": "mixed, gender-specific and cross-gender training",
    "utt": "refusal/consent classification and per-type SA accuracy",
    "roc": "ROC curve and AUC from CV or a score file",
    "train": "fit the full pipeline and save a model",
    "predict": "score a feature matrix with a saved model",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value config file")
    common.add_argument("--manifest", help="recording manifest CSV")
    common.add_argument("--features", help="feature matrix CSV (from extract)")
    common.add_argument("--model", help="model JSON path (train output / predict input)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int, help="worker processes (0 = all cores)")
    common.add_argument("--paper-fidelity", action="store_true", default=None,
                        help="whole-data normalization and ranking, per-recording folds")
    common.add_argument("--fold-mode", choices=("speaker", "recording"))
    common.add_argument("--folds", type=int)
    common.add_argument("--classifier", choices=CLASSIFIER_CHOICES)
    common.add_argument("--top-k", type=int, help="use the k top-ranked features (0 = all)")
    common.add_argument("--split-by-gender", action="store_true", default=None)
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key (repeatable)")

    parser = argparse.ArgumentParser(prog="vocalsa", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name, parents=[common], help=COMMAND_HELP[name])
        if name == "roc":
            p.add_argument("--scores", help="CSV with score,label columns (skips cross-validation)")
    return parser


def config_from_args(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise InputError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in ("manifest", "features", "model", "out", "seed", "jobs", "paper_fidelity", "fold_mode",
                "folds", "classifier", "top_k", "split_by_gender"):
        value = getattr(args, key)
        if value is not None:
            overrides[key] = value
    return load_config(args.config, overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.command == "roc":
            return cmd_roc(cfg, args.scores)
        return COMMANDS[args.command](cfg)
    except (InputError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        _log(f"error: {exc}")
        return 1
    except (AnalysisError, UntrainedModel) as exc:
        _log(f"error: {exc}")
        return 2
    except VocalError as exc:
        _log(f"error: {exc}")
        return 2


if __name__ == "__main__":
    sys.exit(main())
