"""Entropy decision trees (classification) and squared-error regression
trees used as boosting base learners."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .base import Classifier, register

GAIN_EPS = 1e-12


def entropy_bits(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    total = counts.sum()
    if total == 0:
        return 0.0
    p = counts[counts > 0] / total
    h = float(-(p * np.log2(p)).sum())
    return 0.0 if h <= 0 else h


def _entropy_vec(pos, n):
    """Binary entropy (bits) for arrays of positive counts and sizes."""
    p = pos / n
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(np.where(p > 0, p * np.log2(p), 0.0) + np.where(p < 1, (1 - p) * np.log2(1 - p), 0.0))
    return h


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    counts: tuple = (0, 0)  # (negatives, positives) for classification leaves
    entropy: float = 0.0
    value: float = 0.0  # leaf output: P(positive) or a regression value
    gain: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"counts": list(self.counts), "entropy": self.entropy, "value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "gain": self.gain,
            "counts": list(self.counts),
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" not in d:
            return cls(counts=tuple(d["counts"]), entropy=d["entropy"], value=d["value"])
        return cls(
            feature=d["feature"],
            threshold=d["threshold"],
            gain=d.get("gain", 0.0),
            counts=tuple(d.get("counts", (0, 0))),
            left=cls.from_dict(d["left"]),
            right=cls.from_dict(d["right"]),
        )

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            yield from self.left.leaves()
            yield from self.right.leaves()

    def splits(self):
        if not self.is_leaf:
            yield self
            yield from self.left.splits()
            yield from self.right.splits()


def _predict_values(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0])
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, rows = stack.pop()
        if rows.size == 0:
            continue
        if nd.is_leaf:
            out[rows] = nd.value
            continue
        go_left = X[rows, nd.feature] <= nd.threshold
        stack.append((nd.left, rows[go_left]))
        stack.append((nd.right, rows[~go_left]))
    return out


def _best_entropy_split(X, y, min_leaf):
    n, d = X.shape
    parent = _entropy_vec(np.array([y.sum()], dtype=float), np.array([float(n)]))[0]
    best = (GAIN_EPS, None, None)
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs, ys = X[order, j], y[order]
        left_n = np.arange(1, n, dtype=float)
        left_pos = np.cumsum(ys)[:-1].astype(float)
        right_n = n - left_n
        right_pos = ys.sum() - left_pos
        valid = (xs[:-1] < xs[1:]) & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        gain = parent - (left_n / n) * _entropy_vec(left_pos, left_n) - (right_n / n) * _entropy_vec(right_pos, right_n)
        gain = np.where(valid, gain, -np.inf)
        i = int(np.argmax(gain))  # first (lowest threshold) among equal maxima
        if gain[i] > best[0] + GAIN_EPS:
            best = (float(gain[i]), j, 0.5 * (xs[i] + xs[i + 1]))
    return best


def _grow(X, y, depth, max_depth, min_leaf):
    counts = (int((y == 0).sum()), int((y == 1).sum()))
    node = TreeNode(counts=counts, entropy=entropy_bits(counts), value=counts[1] / max(1, sum(counts)))
    if node.entropy == 0.0 or (max_depth is not None and depth >= max_depth) or len(y) < 2 * min_leaf:
        return node
    gain, j, thr = _best_entropy_split(X, y, min_leaf)
    if j is None:
        return node
    mask = X[:, j] <= thr
    node.feature, node.threshold, node.gain = j, float(thr), gain
    node.left = _grow(X[mask], y[mask], depth + 1, max_depth, min_leaf)
    node.right = _grow(X[~mask], y[~mask], depth + 1, max_depth, min_leaf)
    return node


@register
class DecisionTree(Classifier):
    variant = "tree"

    def __init__(self, root: TreeNode):
        self.root = root

    def predict_proba(self, X) -> np.ndarray:
        return _predict_values(self.root, np.atleast_2d(np.asarray(X, dtype=float)))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "root": self.root.to_dict()}

    @classmethod
    def from_dict(cls, data: dict) -> "DecisionTree":
        return cls(TreeNode.from_dict(data["root"]))

    def render(self, feature_names: Optional[Sequence[str]] = None, labels=("LSA", "HSA")) -> str:
        """Indented text view of the tree with leaf counts and entropy."""
        lines = []

        def name(j):
            return feature_names[j] if feature_names is not None else f"x[{j}]"

        def walk(node, indent):
            pad = "  " * indent
            if node.is_leaf:
                lines.append(
                    f"{pad}leaf {labels[0]}={node.counts[0]} {labels[1]}={node.counts[1]} entropy={node.entropy:.3f}"
                )
                return
            lines.append(f"{pad}if {name(node.feature)} <= {node.threshold:.6g}:")
            walk(node.left, indent + 1)
            lines.append(f"{pad}else:  # {name(node.feature)} > {node.threshold:.6g}")
            walk(node.right, indent + 1)

        walk(self.root, 0)
        return "\n".join(lines)


def train_decision_tree(X, y, max_depth: Optional[int] = None, min_leaf: int = 2) -> DecisionTree:
    """Greedy information-gain tree.

    Candidate thresholds are midpoints between consecutive distinct values;
    a split must leave ``min_leaf`` rows on each side and have positive
    gain. Ties go to the lowest feature index, then the lowest threshold.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    return DecisionTree(_grow(X, y, 0, max_depth, max(1, int(min_leaf))))


# Regression trees for boosting -----------------------------------------------------


def _best_sse_split(X, r, min_leaf):
    n, d = X.shape
    total = r.sum()
    base = total * total / n
    best = (-np.inf, None, None)
    for j in range(d):
        order = np.argsort(X[:, j], kind="stable")
        xs, rs = X[order, j], r[order]
        left_n = np.arange(1, n, dtype=float)
        left_s = np.cumsum(rs)[:-1]
        right_n = n - left_n
        right_s = total - left_s
        valid = (xs[:-1] < xs[1:]) & (left_n >= min_leaf) & (right_n >= min_leaf)
        if not valid.any():
            continue
        gain = np.where(valid, left_s ** 2 / left_n + right_s ** 2 / right_n - base, -np.inf)
        i = int(np.argmax(gain))
        if gain[i] > best[0] + GAIN_EPS:
            best = (float(gain[i]), j, 0.5 * (xs[i] + xs[i + 1]))
    return best


def grow_regression_tree(X, r, max_depth: int, min_leaf: int = 1, depth: int = 0) -> TreeNode:
    """Least-squares tree on targets ``r``; zero-gain splits are allowed so
    interactions such as XOR remain reachable. Leaf values are filled in by
    the caller."""
    node = TreeNode(counts=(len(r), 0))
    if depth >= max_depth or len(r) < 2 * min_leaf:
        return node
    _, j, thr = _best_sse_split(X, r, min_leaf)
    if j is None:
        return node
    mask = X[:, j] <= thr
    node.feature, node.threshold = j, float(thr)
    node.left = grow_regression_tree(X[mask], r[mask], max_depth, min_leaf, depth + 1)
    node.right = grow_regression_tree(X[~mask], r[~mask], max_depth, min_leaf, depth + 1)
    return node


def leaf_assignments(node: TreeNode, X: np.ndarray):
    """Map each row to the id() of its leaf; returns (leaves, index array)."""
    leaves = list(node.leaves())
    ids = {id(leaf): k for k, leaf in enumerate(leaves)}
    out = np.empty(X.shape[0], dtype=int)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        nd, rows = stack.pop()
        if rows.size == 0:
            continue
        if nd.is_leaf:
            out[rows] = ids[id(nd)]
            continue
        go_left = X[rows, nd.feature] <= nd.threshold
        stack.append((nd.left, rows[go_left]))
        stack.append((nd.right, rows[~go_left]))
    return leaves, out


predict_tree_values = _predict_values
