from __future__ import annotations

import numpy as np

from ..errors import EmptyTrainingSet
from .base import Classifier, register


@register
class KNNClassifier(Classifier):
    """k nearest neighbours (Euclidean); the score is the fraction of
    positive neighbours. Distance ties go to the lower training row."""

    variant = "knn"

    def __init__(self, X, y, k: int = 3):
        X = np.asarray(X, dtype=float)
        if X.shape[0] == 0:
            raise EmptyTrainingSet("kNN needs at least one training row")
        if not 1 <= k <= X.shape[0]:
            raise ValueError(f"k={k} must be between 1 and the training size {X.shape[0]}")
        self.X = X
        self.y = np.asarray(y).astype(int)
        self.k = int(k)

    def neighbors(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        d2 = ((Q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
        return np.argsort(d2, axis=1, kind="stable")[:, :self.k]

    def predict_proba(self, X) -> np.ndarray:
        return self.y[self.neighbors(X)].mean(axis=1)

    def to_dict(self) -> dict:
        return {"variant": self.variant, "k": self.k, "X": self.X.tolist(), "y": self.y.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "KNNClassifier":
        return cls(np.array(data["X"], dtype=float), np.array(data["y"]), data["k"])


def knn_predict(X_train, y_train, query, k: int = 3):
    """Label and positive-neighbour fraction for a single query vector."""
    score = float(KNNClassifier(X_train, y_train, k).predict_proba(query)[0])
    return int(score >= 0.5), score
