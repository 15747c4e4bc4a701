"""Cross-validated evaluation: fold plans, metrics, ROC/AUC, feature-count
sweeps, gender configurations and utterance-type experiments."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional

import numpy as np

from .errors import (
    AnalysisError,
    LengthMismatch,
    MissingUtteranceLabels,
    SingleClass,
    TooFewGroups,
)
from .features import FeatureMatrix, fit_norm_stats_arrays, outlier_bounds
from .learn.base import LabeledSet, ModelSpec, TrainedModel, fit_model
from .stats import rank_features_anova

FOLD_MODES = ("per_speaker", "per_recording")


# Fold plans ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FoldPlan:
    k: int
    assignment: np.ndarray
    mode: str
    stratified: bool
    seed: int

    def split(self, fold: int):
        test = np.flatnonzero(self.assignment == fold)
        train = np.flatnonzero(self.assignment != fold)
        return train, test

    def summary(self) -> dict:
        sizes = np.bincount(self.assignment, minlength=self.k)
        return {"k": self.k, "mode": self.mode, "stratified": self.stratified, "seed": self.seed, "fold_sizes": sizes.tolist()}


@dataclass(frozen=True)
class FoldSettings:
    k: int = 10
    mode: str = "per_speaker"
    stratified: bool = True
    seed: int = 0


def _deal(units_pos, units_neg, k, rng, stratified):
    """Cyclic dealing of shuffled units; positives first, negatives continue
    the cycle so fold sizes also stay within one unit of each other."""
    if stratified:
        pos = list(rng.permutation(units_pos))
        neg = list(rng.permutation(units_neg))
        order = pos + neg
    else:
        order = list(rng.permutation(list(units_pos) + list(units_neg)))
    return {u: i % k for i, u in enumerate(order)}


def make_folds(y, groups=None, k: int = 10, mode: str = "per_speaker", stratified: bool = True, seed: int = 0) -> FoldPlan:
    """Deterministic (seeded) k-fold assignment.

    ``per_speaker`` keeps every row of a speaker in one fold and
    stratifies speakers by whether at least half their rows are positive.
    """
    y = np.asarray(y).astype(int)
    if mode not in FOLD_MODES:
        raise ValueError(f"fold mode must be one of {FOLD_MODES}")
    rng = np.random.default_rng(seed)
    n = y.size
    if mode == "per_recording":
        if n < k:
            raise TooFewGroups(f"{n} rows cannot fill {k} folds")
        units = np.arange(n)
        unit_label = y
        unit_of_row = units
    else:
        if groups is None:
            raise ValueError("per_speaker folds need speaker ids")
        groups = np.asarray(groups)
        units, unit_of_row = np.unique(groups, return_inverse=True)
        if units.size < k:
            raise TooFewGroups(f"{units.size} speakers cannot fill {k} folds")
        pos_frac = np.bincount(unit_of_row, weights=y, minlength=units.size) / np.bincount(unit_of_row, minlength=units.size)
        unit_label = (pos_frac >= 0.5).astype(int)
        units = np.arange(units.size)
    mapping = _deal(units[unit_label == 1], units[unit_label == 0], k, rng, stratified)
    assignment = np.array([mapping[u] for u in unit_of_row], dtype=int)
    return FoldPlan(k, assignment, mode, stratified, seed)


def plan_for(data: LabeledSet, settings: FoldSettings) -> FoldPlan:
    return make_folds(data.y, data.speakers, settings.k, settings.mode, settings.stratified, settings.seed)


# Metrics and ROC ----------------------------------------------------------------


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: Optional[float]
    recall: Optional[float]
    tp: int
    fp: int
    fn: int
    tn: int

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision": self.precision,
            "recall": self.recall,
            "confusion": {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn},
        }


def compute_metrics(predicted, actual) -> Metrics:
    """Accuracy, precision and recall with positive = 1.

    Precision is None without positive predictions; recall is None
    without actual positives.
    """
    p = np.asarray(predicted).astype(int)
    a = np.asarray(actual).astype(int)
    if p.shape != a.shape:
        raise LengthMismatch("predicted and actual label vectors differ in length")
    if p.size == 0:
        raise ValueError("need at least one prediction")
    tp = int(np.sum((p == 1) & (a == 1)))
    fp = int(np.sum((p == 1) & (a == 0)))
    fn = int(np.sum((p == 0) & (a == 1)))
    tn = int(np.sum((p == 0) & (a == 0)))
    precision = tp / (tp + fp) if tp + fp else None
    recall = tp / (tp + fn) if tp + fn else None
    return Metrics((tp + tn) / p.size, precision, recall, tp, fp, fn, tn)


@dataclass(frozen=True, eq=False)
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    auc: float

    def points(self):
        return [[float(a), float(b)] for a, b in zip(self.fpr, self.tpr)]


def roc_auc(scores, actual) -> RocCurve:
    """ROC over distinct score thresholds (descending) with trapezoid AUC.

    Equal scores are one threshold step, giving a diagonal segment.
    """
    s = np.asarray(scores, dtype=float)
    a = np.asarray(actual).astype(int)
    if s.shape != a.shape:
        raise LengthMismatch("scores and labels differ in length")
    n_pos = int(a.sum())
    n_neg = int(a.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC needs both classes")
    order = np.argsort(-s, kind="stable")
    s, a = s[order], a[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(a)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    auc = float(np.sum((fpr[1:] - fpr[:-1]) * (tpr[1:] + tpr[:-1]) / 2.0))
    return RocCurve(fpr, tpr, auc)


# Cross-validation -------------------------------------------------------------------


@dataclass(frozen=True)
class EvalSettings:
    """Leakage controls and preprocessing for one evaluation.

    ``fit_scope`` = "train" fits winsorization bounds, normalization
    statistics and the feature ranking on training rows only; "all" uses
    the whole dataset.
    """

    fit_scope: str = "train"
    rank_scope: str = "train"
    outlier_k: float = 3.0
    winsorize: bool = True
    top_k: Optional[int] = None
    jobs: int = 1


@dataclass
class FoldOutcome:
    fold: int
    test_rows: np.ndarray
    scores: Optional[np.ndarray]
    metrics: Optional[Metrics]
    features: tuple
    error: Optional[str] = None


@dataclass
class CVResult:
    folds: List[FoldOutcome]
    mean: Dict[str, Optional[float]]
    std: Dict[str, Optional[float]]
    roc: Optional[RocCurve]
    oof_scores: np.ndarray
    warnings: List[str] = field(default_factory=list)

    @property
    def accuracy(self) -> float:
        return self.mean["accuracy"]

    def to_dict(self) -> dict:
        return {
            "per_fold": [
                {
                    "fold": f.fold,
                    "n_test": int(f.test_rows.size),
                    "metrics": None if f.metrics is None else f.metrics.to_dict(),
                    "features": list(f.features),
                    "error": f.error,
                }
                for f in self.folds
            ],
            "mean": self.mean,
            "std": self.std,
            "auc": None if self.roc is None else self.roc.auc,
            "roc": None if self.roc is None else self.roc.points(),
            "warnings": list(self.warnings),
        }


def preprocess(X_fit, g_fit, settings: EvalSettings):
    """Winsorization bounds and per-gender normalization fitted on X_fit."""
    low = high = None
    if settings.winsorize:
        low, high = outlier_bounds(X_fit, settings.outlier_k)
        X_fit = np.clip(X_fit, low, high)
    stats = fit_norm_stats_arrays(X_fit, g_fit)
    return low, high, stats


def _apply(X, genders, low, high, stats):
    if low is not None:
        X = np.clip(X, low, high)
    return stats.transform(X, genders)


def _select(data: LabeledSet, Z_rank, y_rank, settings: EvalSettings):
    if settings.top_k is None or settings.top_k >= len(data.feature_names):
        return list(range(len(data.feature_names)))
    ranking = rank_features_anova(Z_rank, y_rank, data.feature_names)
    chosen = set(ranking.top(settings.top_k))
    return [j for j, name in enumerate(data.feature_names) if name in chosen]


def fit_pipeline(data: LabeledSet, rows, spec: ModelSpec, settings: EvalSettings, seed: int, full_rows=None):
    """Fit preprocessing + model on ``rows``; returns (TrainedModel, columns)."""
    fit_rows = rows if settings.fit_scope == "train" or full_rows is None else full_rows
    low, high, stats = preprocess(data.X[fit_rows], data.genders[fit_rows], settings)
    rank_rows = rows if settings.rank_scope == "train" or full_rows is None else full_rows
    Z_rank = _apply(data.X[rank_rows], data.genders[rank_rows], low, high, stats)
    cols = _select(data, Z_rank, data.y[rank_rows], settings)
    Z = _apply(data.X[rows], data.genders[rows], low, high, stats)[:, cols]
    model = fit_model(spec, Z, data.y[rows], seed=seed)
    names = tuple(data.feature_names[j] for j in cols)
    sub_stats = type(stats)({g: m[cols] for g, m in stats.means.items()}, {g: s[cols] for g, s in stats.stds.items()})
    trained = TrainedModel(
        model,
        sub_stats,
        names,
        None if low is None else low[cols],
        None if high is None else high[cols],
    )
    return trained, cols


def _run_fold(args):
    data, spec, plan, fold, settings, seed = args
    train, test = plan.split(fold)
    try:
        if test.size == 0:
            raise TooFewGroups(f"fold {fold} is empty")
        model, cols = fit_pipeline(data, train, spec, settings, seed + fold, full_rows=np.arange(len(data)))
        scores = model.predict_proba(data.X[test][:, cols], data.genders[test])
        metrics = compute_metrics(scores >= 0.5, data.y[test])
        return FoldOutcome(fold, test, scores, metrics, model.feature_names)
    except AnalysisError as exc:
        return FoldOutcome(fold, test, None, None, (), f"fold {fold} ({spec.variant}): {type(exc).__name__}: {exc}")


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    mean = float(np.mean(vals))
    std = float(np.std(vals, ddof=1)) if len(vals) > 1 else 0.0
    return mean, std


def _map(fn, tasks, jobs):
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            return list(pool.map(fn, tasks))
    return [fn(t) for t in tasks]


def cross_validate(
    data: LabeledSet, spec: ModelSpec, plan: FoldPlan, settings: EvalSettings = EvalSettings(), seed: int = 0
) -> CVResult:
    """k-fold CV; the ROC is computed from pooled out-of-fold scores.

    Folds that fail to train are reported in ``warnings`` and left out of
    the averages.
    """
    tasks = [(data, spec, plan, f, settings, seed) for f in range(plan.k)]
    folds = _map(_run_fold, tasks, settings.jobs)
    warnings = [f.error for f in folds if f.error]
    ok = [f for f in folds if f.metrics is not None]
    if not ok:
        raise AnalysisError("every fold failed: " + "; ".join(warnings))
    mean, std = {}, {}
    for key in ("accuracy", "precision", "recall"):
        mean[key], std[key] = _mean_std([getattr(f.metrics, key) for f in ok])
    missing_prec = sum(1 for f in ok if f.metrics.precision is None)
    if missing_prec:
        warnings.append(f"precision undefined in {missing_prec} fold(s) with no positive predictions")
    oof = np.full(len(data), np.nan)
    for f in ok:
        oof[f.test_rows] = f.scores
    scored = np.isfinite(oof)
    roc = None
    y_scored = data.y[scored]
    if y_scored.min() != y_scored.max():
        roc = roc_auc(oof[scored], y_scored)
    else:
        warnings.append("pooled ROC undefined: scored rows contain a single class")
    return CVResult(folds, mean, std, roc, oof, warnings)


# Feature-count sweep ------------------------------------------------------------


@dataclass
class SweepResult:
    rows: List[tuple]  # (k, mean accuracy, std accuracy)
    ranking: List[tuple]  # whole-data ranking, for reporting

    def to_dict(self) -> dict:
        return {"sweep": [[k, m, s] for k, m, s in self.rows], "ranking": [[n, f] for n, f in self.ranking]}


def whole_data_ranking(data: LabeledSet, settings: EvalSettings):
    low, high, stats = preprocess(data.X, data.genders, settings)
    Z = _apply(data.X, data.genders, low, high, stats)
    return rank_features_anova(Z, data.y, data.feature_names)


def sweep_feature_count(
    data: LabeledSet, spec: ModelSpec, plan: FoldPlan, settings: EvalSettings = EvalSettings(), seed: int = 0
) -> SweepResult:
    d = len(data.feature_names)
    rows = []
    for k in range(1, d + 1):
        res = cross_validate(data, spec, plan, replace(settings, top_k=k), seed)
        rows.append((k, res.mean["accuracy"], res.std["accuracy"]))
    ranking = whole_data_ranking(data, settings)
    return SweepResult(rows, [(n, float(f)) for n, f in ranking.entries])


# Gender configurations ------------------------------------------------------------


@dataclass
class GenderReport:
    unified: CVResult
    per_gender: Dict[str, CVResult]
    transfer: Dict[str, Dict[str, float]]

    def to_dict(self) -> dict:
        return {
            "unified": self.unified.to_dict(),
            "per_gender": {g: r.to_dict() for g, r in sorted(self.per_gender.items())},
            "transfer": self.transfer,
        }


def transfer_accuracy(data: LabeledSet, train_gender: str, test_gender: str, spec: ModelSpec, settings: EvalSettings, seed: int = 0) -> float:
    """Train on every row of one gender, test on every row of the other.

    Each side is winsorized and normalized with statistics fitted on its
    own rows, so the comparison is not an artefact of scale.
    """
    tr = np.flatnonzero(data.genders == train_gender)
    te = np.flatnonzero(data.genders == test_gender)
    model, cols = fit_pipeline(data, tr, spec, settings, seed)
    low, high, stats = preprocess(data.X[te], data.genders[te], settings)
    Z = _apply(data.X[te], data.genders[te], low, high, stats)[:, cols]
    scores = model.model.predict_proba(Z)
    return compute_metrics(scores >= 0.5, data.y[te]).accuracy


def gender_configurations(
    data: LabeledSet, spec: ModelSpec, folds: FoldSettings, settings: EvalSettings = EvalSettings(), seed: int = 0
) -> GenderReport:
    genders = sorted(set(data.genders.tolist()))
    if len(genders) != 2:
        raise TooFewGroups(f"need both genders, found {genders}")
    unified = cross_validate(data, spec, plan_for(data, folds), settings, seed)
    per_gender = {}
    for g in genders:
        sub = data.subset(data.genders == g)
        per_gender[g] = cross_validate(sub, spec, plan_for(sub, folds), settings, seed)
    transfer = {}
    for a in genders:
        transfer[a] = {}
        for b in genders:
            transfer[a][b] = per_gender[a].accuracy if a == b else transfer_accuracy(data, a, b, spec, settings, seed)
    return GenderReport(unified, per_gender, transfer)


# Utterance-type experiments -----------------------------------------------------------


def split_by_utterance_eval(
    data: LabeledSet, spec: ModelSpec, folds: FoldSettings, settings: EvalSettings = EvalSettings(), seed: int = 0
) -> Dict[str, CVResult]:
    """SA cross-validation run separately on refusal-only and consent-only rows."""
    if data.utterance_types is None:
        raise MissingUtteranceLabels("no utterance types attached")
    out = {}
    for kind in ("refusal", "consent"):
        rows = data.utterance_types == kind
        if not rows.any():
            raise MissingUtteranceLabels(f"no {kind} utterances")
        sub = data.subset(rows)
        out[kind] = cross_validate(sub, spec, plan_for(sub, folds), settings, seed)
    return out


def utterance_labeled_set(data: LabeledSet) -> LabeledSet:
    """Rows with a known utterance type, labelled 1 = refusal."""
    if data.utterance_types is None:
        raise MissingUtteranceLabels("no utterance types attached")
    known = np.isin(data.utterance_types, ("refusal", "consent"))
    if not known.any():
        raise MissingUtteranceLabels("no refusal/consent labels in the data")
    sub = data.subset(known)
    y = (sub.utterance_types == "refusal").astype(int)
    if y.min() == y.max():
        raise MissingUtteranceLabels("only one utterance type present")
    return sub.with_labels(y)


def utterance_type_classification(
    data: LabeledSet, spec: ModelSpec, folds: FoldSettings, settings: EvalSettings = EvalSettings(), seed: int = 0
) -> CVResult:
    sub = utterance_labeled_set(data)
    res = cross_validate(sub, spec, plan_for(sub, folds), settings, seed)
    dropped = len(data) - len(sub)
    if dropped:
        res.warnings.append(f"{dropped} row(s) with unknown utterance type dropped")
    return res


def sa_labeled_set(matrix: FeatureMatrix) -> LabeledSet:
    """Drop Excluded speakers; label 1 = HSA."""
    groups = matrix.sa_groups
    keep = groups != "Excluded"
    sub = matrix.subset(keep)
    return LabeledSet.from_matrix(sub, (sub.sa_groups == "HSA").astype(int))
