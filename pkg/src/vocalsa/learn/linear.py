"""L2-regularized logistic regression and the raw-feature gender classifier."""

from __future__ import annotations

import numpy as np

from ..errors import UntrainedModel
from .base import Classifier, register, sigmoid


def logistic_objective(theta, X, y, l2):
    """Mean logistic loss + l2/2 ||w||^2 and its gradient.

    ``theta`` is ``[w..., b]``; the bias is not penalized.
    """
    w, b = theta[:-1], theta[-1]
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * w @ w)
    resid = (sigmoid(z) - y) / X.shape[0]
    grad = np.concatenate([X.T @ resid + l2 * w, [resid.sum()]])
    return loss, grad


@register
class LogisticModel(Classifier):
    variant = "logistic"

    def __init__(self, w, b, iterations=0, grad_norm=0.0):
        self.w = np.asarray(w, dtype=float)
        self.b = float(b)
        self.iterations = iterations
        self.grad_norm = grad_norm

    def decision_function(self, X):
        return np.atleast_2d(np.asarray(X, dtype=float)) @ self.w + self.b

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "w": self.w.tolist(), "b": self.b}

    @classmethod
    def from_dict(cls, data: dict) -> "LogisticModel":
        return cls(data["w"], data["b"])


def train_logistic(X, y, l2: float = 1e-4, tol: float = 1e-6, max_iter: int = 10000) -> LogisticModel:
    """Full-batch gradient descent with Armijo backtracking."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = np.zeros(X.shape[1] + 1)
    loss, grad = logistic_objective(theta, X, y, l2)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < tol:
            break
        step = min(step * 2.0, 1e6)
        gg = float(grad @ grad)
        while True:
            cand = theta - step * grad
            new_loss, new_grad = logistic_objective(cand, X, y, l2)
            if new_loss <= loss - 0.5 * step * gg or step < 1e-12:
                break
            step *= 0.5
        theta, loss, grad = cand, new_loss, new_grad
    return LogisticModel(theta[:-1], theta[-1], it, float(np.max(np.abs(grad))))


class GenderClassifier:
    """Logistic regression on raw (unnormalized) features; positive = female.

    Raw features are standardized with the training mean/SD internally.
    """

    def __init__(self, l2: float = 1e-4):
        self.l2 = l2
        self.model = None

    def fit(self, X, genders) -> "GenderClassifier":
        X = np.asarray(X, dtype=float)
        y = (np.asarray(genders) == "female").astype(float)
        self.mean = X.mean(axis=0)
        sd = X.std(axis=0)
        self.sd = np.where(sd > 0, sd, 1.0)
        self.model = train_logistic((X - self.mean) / self.sd, y, l2=self.l2)
        return self

    def prob_female(self, X) -> np.ndarray:
        if self.model is None:
            raise UntrainedModel("gender classifier has not been fitted")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return self.model.predict_proba((X - self.mean) / self.sd)

    def predict(self, X) -> np.ndarray:
        return np.where(self.prob_female(X) >= 0.5, "female", "male")

    def classify(self, vector):
        """(gender, probability of that gender) for one raw feature vector."""
        values = vector.as_array() if hasattr(vector, "as_array") else np.asarray(vector, dtype=float)
        p = float(self.prob_female(values)[0])
        return ("female", p) if p >= 0.5 else ("male", 1.0 - p)
