"""Gradient-boosted shallow regression trees under logistic loss."""

from __future__ import annotations

import numpy as np

from .base import Classifier, log_loss, register, sigmoid
from .tree import TreeNode, grow_regression_tree, leaf_assignments, predict_tree_values


def _leaf_loss(y, z):
    return float(np.sum(np.logaddexp(0.0, z) - y * z))


@register
class BoostedTrees(Classifier):
    variant = "gboost"

    def __init__(self, base_score, trees, learning_rate, train_losses=()):
        self.base_score = float(base_score)
        self.trees = list(trees)
        self.learning_rate = float(learning_rate)
        self.train_losses = list(train_losses)

    def decision_function(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        z = np.full(X.shape[0], self.base_score)
        for tree in self.trees:
            z += predict_tree_values(tree, X)
        return z

    def predict_proba(self, X) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def to_dict(self) -> dict:
        return {
            "variant": self.variant,
            "base_score": self.base_score,
            "learning_rate": self.learning_rate,
            "trees": [t.to_dict() for t in self.trees],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BoostedTrees":
        return cls(data["base_score"], [TreeNode.from_dict(t) for t in data["trees"]], data["learning_rate"])


def train_gboost(X, y, rounds: int = 100, depth: int = 2, learning_rate: float = 0.1) -> BoostedTrees:
    """Each round fits a depth-limited least-squares tree to the residuals
    ``y - p``, then sets every leaf to a damped Newton step. A leaf step
    that would raise that leaf's loss is halved until it does not, so the
    training loss never increases from one round to the next.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rate = float(np.clip(y.mean(), 1e-6, 1 - 1e-6))
    base = float(np.log(rate / (1 - rate)))
    z = np.full(X.shape[0], base)
    trees = []
    losses = [log_loss(y, z)]
    for _ in range(int(rounds)):
        p = sigmoid(z)
        resid = y - p
        tree = grow_regression_tree(X, resid, max_depth=depth)
        leaves, assign = leaf_assignments(tree, X)
        for k, leaf in enumerate(leaves):
            rows = assign == k
            g = resid[rows].sum()
            h = (p[rows] * (1 - p[rows])).sum()
            step = learning_rate * g / h if h > 1e-12 else 0.0
            before = _leaf_loss(y[rows], z[rows])
            for _ in range(60):
                if _leaf_loss(y[rows], z[rows] + step) <= before:
                    break
                step *= 0.5
            else:
                step = 0.0
            leaf.value = float(step)
            leaf.counts = (int(rows.sum()), 0)
        z = z + predict_tree_values(tree, X)
        trees.append(tree)
        losses.append(log_loss(y, z))
    return BoostedTrees(base, trees, learning_rate, losses)
