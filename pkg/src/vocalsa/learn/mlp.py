"""One-hidden-layer tanh network with a logistic output."""

from __future__ import annotations

import numpy as np

from .base import Classifier, register, sigmoid


def unpack(theta, d, hidden):
    i = 0
    W1 = theta[i:i + hidden * d].reshape(hidden, d)
    i += hidden * d
    b1 = theta[i:i + hidden]
    i += hidden
    w2 = theta[i:i + hidden]
    b2 = theta[i + hidden]
    return W1, b1, w2, b2


def mlp_objective(theta, X, y, hidden, l2=0.0):
    """Mean logistic loss (+ l2/2 on weights) and the backprop gradient."""
    d = X.shape[1]
    W1, b1, w2, b2 = unpack(theta, d, hidden)
    H = np.tanh(X @ W1.T + b1)
    z = H @ w2 + b2
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (np.sum(W1 * W1) + w2 @ w2))
    dz = (sigmoid(z) - y) / X.shape[0]
    gw2 = H.T @ dz + l2 * w2
    gb2 = dz.sum()
    dH = np.outer(dz, w2) * (1.0 - H * H)
    gW1 = dH.T @ X + l2 * W1
    gb1 = dH.sum(axis=0)
    return loss, np.concatenate([gW1.ravel(), gb1, gw2, [gb2]])


@register
class MLPClassifier(Classifier):
    variant = "mlp"

    def __init__(self, theta, n_features, hidden, losses=()):
        self.theta = np.asarray(theta, dtype=float)
        self.n_features = int(n_features)
        self.hidden = int(hidden)
        self.losses = list(losses)

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        W1, b1, w2, b2 = unpack(self.theta, self.n_features, self.hidden)
        return np.tanh(X @ W1.T + b1) @ w2 + b2

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "theta": self.theta.tolist(), "n_features": self.n_features, "hidden": self.hidden}

    @classmethod
    def from_dict(cls, data: dict) -> "MLPClassifier":
        return cls(data["theta"], data["n_features"], data["hidden"])


def init_params(d, hidden, seed):
    """Hidden weights uniform in +-1/sqrt(d); output layer starts at zero."""
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d)
    W1 = rng.uniform(-bound, bound, size=(hidden, d))
    b1 = rng.uniform(-bound, bound, size=hidden)
    return np.concatenate([W1.ravel(), b1, np.zeros(hidden), [0.0]])


def train_mlp(X, y, hidden: int = 16, epochs: int = 500, seed: int = 0, learning_rate: float = 0.5, l2: float = 0.0):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta = init_params(X.shape[1], hidden, seed)
    losses = []
    for _ in range(int(epochs)):
        loss, grad = mlp_objective(theta, X, y, hidden, l2)
        losses.append(loss)
        theta = theta - learning_rate * grad
    return MLPClassifier(theta, X.shape[1], hidden, losses)
