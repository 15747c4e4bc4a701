"""Binary Gaussian-process classification with a logistic likelihood and
the Laplace approximation."""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

from ..errors import NonConvergence, SingularKernel
from .base import Classifier, register, sigmoid

JITTER = 1e-8


def rbf_kernel(A, B, length_scale=1.0, variance=1.0):
    A = np.asarray(A, dtype=float) / length_scale
    B = np.asarray(B, dtype=float) / length_scale
    d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return variance * np.exp(-0.5 * np.maximum(d2, 0.0))


def _log_lik(t, f):
    # t in {0,1}: log sigmoid(+-f)
    return float(np.sum(t * f - np.logaddexp(0.0, f)))


def _laplace_terms(K, f):
    pi = sigmoid(f)
    W = pi * (1.0 - pi)
    sw = np.sqrt(W)
    B = np.eye(K.shape[0]) + sw[:, None] * K * sw[None, :]
    try:
        L = cholesky(B, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularKernel(f"Cholesky of I + W^1/2 K W^1/2 failed: {exc}") from exc
    return pi, W, sw, L


@register
class GPClassifier(Classifier):
    variant = "gp"

    def __init__(self, X, t, f_hat, length_scale, variance, objectives=()):
        self.X = np.asarray(X, dtype=float)
        self.t = np.asarray(t, dtype=float)
        self.f_hat = np.asarray(f_hat, dtype=float)
        self.length_scale = float(length_scale)
        self.variance = float(variance)
        self.objectives = list(objectives)
        K = rbf_kernel(self.X, self.X, self.length_scale, self.variance) + JITTER * np.eye(len(self.X))
        pi, _, self._sw, self._L = _laplace_terms(K, self.f_hat)
        self._grad = self.t - pi

    def latent(self, X):
        """Predictive mean and variance of the latent function."""
        Ks = rbf_kernel(self.X, np.atleast_2d(X), self.length_scale, self.variance)
        mean = Ks.T @ self._grad
        v = solve_triangular(self._L, self._sw[:, None] * Ks, lower=True)
        var = np.maximum(self.variance - (v * v).sum(axis=0), 0.0)
        return mean, var

    def predict_proba(self, X) -> np.ndarray:
        mean, var = self.latent(X)
        # probit-style approximation of the logistic-Gaussian integral
        return sigmoid(mean / np.sqrt(1.0 + np.pi * var / 8.0))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "X": self.X.tolist(),
            "t": self.t.tolist(),
            "f_hat": self.f_hat.tolist(),
            "length_scale": self.length_scale,
            "variance": self.variance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GPClassifier":
        return cls(data["X"], data["t"], data["f_hat"], data["length_scale"], data["variance"])


def train_gp_classifier(
    X,
    y,
    length_scale=1.0,
    variance: float = 1.0,
    tol: float = 1e-8,
    max_iter: int = 100,
    max_rows: int = 5000,
) -> GPClassifier:
    """Find the posterior mode of the latent function by Newton iteration.

    Each Newton step is followed by step halving until the objective
    ``-a'f/2 + log p(y|f)`` does not decrease, so the recorded objective
    sequence is monotone. ``length_scale="auto"`` uses sqrt(n_features).
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(y, dtype=float)
    n = X.shape[0]
    if n > max_rows:
        raise ValueError(f"GP training set has {n} rows; cap is {max_rows}")
    if length_scale == "auto":
        length_scale = float(np.sqrt(X.shape[1]))
    K = rbf_kernel(X, X, length_scale, variance) + JITTER * np.eye(n)

    a = np.zeros(n)
    f = np.zeros(n)
    obj = _log_lik(t, f)
    objectives = [obj]
    for _ in range(max_iter):
        pi, W, sw, L = _laplace_terms(K, f)
        b = W * f + (t - pi)
        c = cho_solve((L, True), sw * (K @ b))
        a_new = b - sw * c
        da = a_new - a
        step = 1.0
        while True:
            a_try = a + step * da
            f_try = K @ a_try
            obj_try = -0.5 * a_try @ f_try + _log_lik(t, f_try)
            if obj_try >= obj or step < 1e-10:
                break
            step *= 0.5
        if obj_try < obj:
            break
        change = obj_try - obj
        a, f, obj = a_try, f_try, obj_try
        objectives.append(obj)
        if change < tol:
            return GPClassifier(X, t, f, length_scale, variance, objectives)
    else:
        raise NonConvergence(
            f"Laplace Newton iterations did not converge in {max_iter} steps",
            iterations=max_iter,
            residual=objectives[-1] - objectives[-2],
        )
    return GPClassifier(X, t, f, length_scale, variance, objectives)
