from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Dict, Optional, Sequence

import numpy as np

from ..errors import InputError
from ..features import FEATURE_NAMES, FeatureMatrix, NormStats

MODEL_SCHEMA = 1
VARIANTS = ("tree", "knn", "logistic", "gp", "gboost", "mlp")


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def log_loss(y, z) -> float:
    """Mean logistic loss for labels in {0, 1} and logits z."""
    y = np.asarray(y, dtype=float)
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


@dataclass(frozen=True, eq=False)
class LabeledSet:
    """Feature rows with binary labels (1 = HSA / refusal) and row metadata."""

    X: np.ndarray
    y: np.ndarray
    genders: np.ndarray
    speakers: np.ndarray
    utterance_types: Optional[np.ndarray] = None
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim != 2:
            raise ValueError("X must be 2-D")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", np.asarray(self.y).astype(int))
        object.__setattr__(self, "genders", np.asarray(self.genders))
        object.__setattr__(self, "speakers", np.asarray(self.speakers))
        if self.utterance_types is not None:
            object.__setattr__(self, "utterance_types", np.asarray(self.utterance_types))
        if not (len(self.y) == len(self.genders) == len(self.speakers) == X.shape[0]):
            raise ValueError("row metadata lengths differ from X")

    def __len__(self):
        return self.X.shape[0]

    def subset(self, rows) -> "LabeledSet":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        utt = None if self.utterance_types is None else self.utterance_types[rows]
        return LabeledSet(self.X[rows], self.y[rows], self.genders[rows], self.speakers[rows], utt, self.feature_names)

    def with_labels(self, y) -> "LabeledSet":
        return LabeledSet(self.X, y, self.genders, self.speakers, self.utterance_types, self.feature_names)

    def select_features(self, names: Sequence[str]) -> "LabeledSet":
        cols = [self.feature_names.index(n) for n in names]
        return LabeledSet(self.X[:, cols], self.y, self.genders, self.speakers, self.utterance_types, tuple(names))

    @classmethod
    def from_matrix(cls, matrix: FeatureMatrix, labels) -> "LabeledSet":
        return cls(
            matrix.values, labels, matrix.genders, matrix.speakers, matrix.utterance_types, matrix.feature_names
        )


class Classifier:
    """Binary classifier interface: ``predict_proba`` gives P(label = 1)."""

    variant = ""

    def predict_proba(self, X) -> np.ndarray:
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(int)

    def to_dict(self) -> dict:
        raise NotImplementedError

    @classmethod
    def from_dict(cls, data: dict) -> "Classifier":
        raise NotImplementedError


_REGISTRY: Dict[str, type] = {}


def register(cls):
    _REGISTRY[cls.variant] = cls
    return cls


def model_from_dict(data: dict) -> Classifier:
    try:
        cls = _REGISTRY[data["variant"]]
    except KeyError:
        raise InputError(f"unknown model variant {data.get('variant')!r}") from None
    return cls.from_dict(data)


@dataclass(frozen=True)
class ModelSpec:
    """Which learner to train and with which hyperparameters."""

    variant: str
    params: tuple = ()

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown classifier {self.variant!r}; choose from {', '.join(VARIANTS)}")
        object.__setattr__(self, "params", tuple(sorted(dict(self.params).items())))

    @classmethod
    def of(cls, variant: str, **params) -> "ModelSpec":
        return cls(variant, tuple(params.items()))

    def kwargs(self) -> dict:
        return dict(self.params)


def fit_model(spec: ModelSpec, X, y, seed: int = 0) -> Classifier:
    from . import boost, gp, knn, linear, mlp, tree

    kw = spec.kwargs()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    if spec.variant == "tree":
        return tree.train_decision_tree(X, y, **kw)
    if spec.variant == "knn":
        return knn.KNNClassifier(X, y, **kw)
    if spec.variant == "logistic":
        return linear.train_logistic(X, y, **kw)
    if spec.variant == "gp":
        return gp.train_gp_classifier(X, y, **kw)
    if spec.variant == "gboost":
        return boost.train_gboost(X, y, **kw)
    return mlp.train_mlp(X, y, seed=seed, **kw)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    """A fitted classifier bundled with the preprocessing it was fitted with."""

    model: Classifier
    norm_stats: NormStats
    feature_names: tuple
    clip_low: Optional[np.ndarray] = None
    clip_high: Optional[np.ndarray] = None
    positive_label: str = "HSA"

    def prepare(self, raw: np.ndarray, genders) -> np.ndarray:
        X = np.asarray(raw, dtype=float)
        if self.clip_low is not None:
            X = np.clip(X, self.clip_low, self.clip_high)
        return self.norm_stats.transform(X, genders)

    def predict_proba(self, raw, genders) -> np.ndarray:
        return self.model.predict_proba(self.prepare(raw, genders))

    def to_json(self) -> str:
        doc = {
            "schema": MODEL_SCHEMA,
            "variant": self.model.variant,
            "feature_names": list(self.feature_names),
            "positive_label": self.positive_label,
            "norm_stats": self.norm_stats.to_dict(),
            "clip_low": None if self.clip_low is None else np.asarray(self.clip_low).tolist(),
            "clip_high": None if self.clip_high is None else np.asarray(self.clip_high).tolist(),
            "model": self.model.to_dict(),
        }
        return json.dumps(doc, indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "TrainedModel":
        doc = json.loads(text)
        if doc.get("schema") != MODEL_SCHEMA:
            raise InputError(f"unsupported model schema {doc.get('schema')!r}")
        low = doc.get("clip_low")
        high = doc.get("clip_high")
        return cls(
            model_from_dict(doc["model"]),
            NormStats.from_dict(doc["norm_stats"]),
            tuple(doc["feature_names"]),
            None if low is None else np.array(low, dtype=float),
            None if high is None else np.array(high, dtype=float),
            doc.get("positive_label", "HSA"),
        )
