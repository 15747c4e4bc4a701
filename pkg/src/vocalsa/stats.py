"""Hypothesis tests: one-way ANOVA, paired t-test and ANOVA-F feature ranking.

p-values come from the regularized incomplete beta function, evaluated
with a modified-Lentz continued fraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

from .errors import LengthMismatch, TooFewSamples, ZeroVariance

CF_TOL = 1e-15
CF_MAX_ITER = 10000
_TINY = 1e-300


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = _TINY if abs(d) < _TINY else d
    d = 1.0 / d
    h = d
    for m in range(1, CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < CF_TOL:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a, b > 0")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    log_front = a * math.log(x) + b * math.log1p(-x) - (math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def f_sf(f: float, df1: float, df2: float) -> float:
    """Upper tail P(F >= f) of the F distribution."""
    if f <= 0:
        return 1.0
    if math.isinf(f):
        return 0.0
    return betainc(df2 / 2.0, df1 / 2.0, df2 / (df2 + df1 * f))


def t_two_sided(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return betainc(df / 2.0, 0.5, df / (df + t * t))


@dataclass(frozen=True)
class AnovaResult:
    f_value: float
    eta_squared: float
    p_value: float
    df_between: int
    df_within: int


@dataclass(frozen=True)
class PairedTResult:
    t_value: float
    cohens_d: float
    p_value: float
    df: int


@dataclass(frozen=True)
class TwoSampleTResult:
    t_value: float
    p_value: float
    df: int


def anova_oneway(groups: Sequence[Sequence[float]]) -> AnovaResult:
    """One-way between-groups ANOVA.

    When every value is equal the statistic is defined as F = 0 (p = 1);
    zero within-group but nonzero between-group spread gives F = inf.
    """
    arrays = [np.asarray(g, dtype=float) for g in groups]
    if len(arrays) < 2 or any(a.size < 2 for a in arrays):
        raise TooFewSamples("ANOVA needs >= 2 groups with >= 2 values each")
    n = sum(a.size for a in arrays)
    k = len(arrays)
    grand = np.concatenate(arrays).mean()
    ss_between = float(sum(a.size * (a.mean() - grand) ** 2 for a in arrays))
    ss_within = float(sum(((a - a.mean()) ** 2).sum() for a in arrays))
    df_b, df_w = k - 1, n - k
    ss_total = ss_between + ss_within
    scale = max(1.0, float(np.abs(np.concatenate(arrays)).max()) ** 2 * n)
    if ss_between <= 1e-28 * scale:
        ss_between = 0.0
    if ss_total == 0.0 or ss_between == 0.0:
        return AnovaResult(0.0, 0.0, 1.0, df_b, df_w)
    if ss_within <= 1e-28 * scale:
        return AnovaResult(math.inf, 1.0, 0.0, df_b, df_w)
    f = (ss_between / df_b) / (ss_within / df_w)
    return AnovaResult(f, ss_between / ss_total, f_sf(f, df_b, df_w), df_b, df_w)


def paired_t(a: Sequence[float], b: Sequence[float]) -> PairedTResult:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise LengthMismatch(f"paired samples differ in length ({a.size} vs {b.size})")
    n = a.size
    if n < 2:
        raise TooFewSamples("paired t-test needs n >= 2")
    diff = a - b
    mean = diff.mean()
    sd = diff.std(ddof=1)
    if np.all(diff == 0):
        return PairedTResult(0.0, 0.0, 1.0, n - 1)
    if sd == 0:
        raise ZeroVariance("all paired differences are equal")
    t = mean / (sd / math.sqrt(n))
    return PairedTResult(float(t), float(mean / sd), t_two_sided(float(t), n - 1), n - 1)


def two_sample_t(a: Sequence[float], b: Sequence[float]) -> TwoSampleTResult:
    """Pooled-variance two-sample t-test."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise TooFewSamples("two-sample t-test needs >= 2 values per group")
    df = a.size + b.size - 2
    pooled = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / df
    if pooled == 0:
        raise ZeroVariance("both samples are constant")
    t = (a.mean() - b.mean()) / math.sqrt(pooled * (1 / a.size + 1 / b.size))
    return TwoSampleTResult(float(t), t_two_sided(float(t), df), df)


@dataclass(frozen=True)
class FeatureRanking:
    entries: Tuple[Tuple[str, float], ...]

    @property
    def names(self) -> List[str]:
        return [name for name, _ in self.entries]

    def top(self, k: int) -> List[str]:
        return self.names[:k]


def rank_features_anova(values, labels, feature_names: Sequence[str]) -> FeatureRanking:
    """Rank columns by the two-group ANOVA F between label classes.

    NaN cells are dropped per column. Ties keep the canonical column order.
    """
    values = np.asarray(values, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if labels.sum() < 2 or (~labels).sum() < 2:
        raise TooFewSamples("ranking needs >= 2 rows in each class")
    scores = []
    for j, name in enumerate(feature_names):
        col = values[:, j]
        ok = np.isfinite(col)
        res = anova_oneway([col[ok & labels], col[ok & ~labels]])
        scores.append((j, name, res.f_value))
    scores.sort(key=lambda item: (-item[2], item[0]))
    return FeatureRanking(tuple((name, f) for _, name, f in scores))
