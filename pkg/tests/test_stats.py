import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from vocalsa.cli import stats_records
from vocalsa.config import RunConfig
from vocalsa.errors import LengthMismatch, TooFewSamples, ZeroVariance
from vocalsa.simulate import CorpusSynthConfig, target_matrix
from vocalsa.stats import anova_oneway, betainc, f_sf, paired_t, rank_features_anova, t_two_sided, two_sample_t


def f_density(x, d1, d2):
    log = (
        0.5 * d1 * math.log(d1) + 0.5 * d2 * math.log(d2) + (0.5 * d1 - 1) * math.log(x)
        - 0.5 * (d1 + d2) * math.log(d2 + d1 * x)
        - (math.lgamma(d1 / 2) + math.lgamma(d2 / 2) - math.lgamma((d1 + d2) / 2))
    )
    return math.exp(log)


def t_density(x, df):
    c = math.lgamma((df + 1) / 2) - math.lgamma(df / 2) - 0.5 * math.log(df * math.pi)
    return math.exp(c - (df + 1) / 2 * math.log1p(x * x / df))


def f_tail_oracle(f, d1, d2):
    # integrate the density below f, which is finite even where the density has a pole at 0
    below, _ = quad(f_density, 0, f, args=(d1, d2), epsabs=1e-13, epsrel=1e-12, limit=200)
    return 1.0 - below


def t_tail_oracle(t, df):
    tail, _ = quad(t_density, abs(t), np.inf, args=(df,), epsabs=1e-13, epsrel=1e-12, limit=200)
    return 2 * tail


def test_anova_hand_fixture():
    res = anova_oneway([[1, 2, 3], [4, 5, 6]])
    assert abs(res.f_value - 13.5) < 1e-9
    assert abs(res.eta_squared - 13.5 / 17.5) < 1e-9
    assert (res.df_between, res.df_within) == (1, 4)
    assert abs(res.p_value - f_tail_oracle(13.5, 1, 4)) < 1e-6
    assert res.p_value == pytest.approx(0.0213, abs=5e-5)


def test_anova_identical_groups():
    res = anova_oneway([[1, 2, 3], [1, 2, 3]])
    assert res.f_value == 0.0 and res.eta_squared == 0.0 and res.p_value == 1.0


def test_anova_zero_within():
    res = anova_oneway([[1, 1], [2, 2]])
    assert math.isinf(res.f_value) and res.p_value == 0.0


def test_anova_too_small():
    with pytest.raises(TooFewSamples):
        anova_oneway([[1, 2], [3]])


def test_paired_hand_fixture():
    res = paired_t([2, 3, 4], [1, 1, 1])
    assert abs(res.t_value - 2 * math.sqrt(3)) < 1e-9
    assert abs(res.t_value - 3.4641) < 1e-4
    assert abs(res.cohens_d - 2.0) < 1e-9
    assert res.df == 2
    assert abs(res.p_value - t_tail_oracle(res.t_value, 2)) < 1e-6


def test_paired_equal_and_errors():
    res = paired_t([1, 2, 3], [1, 2, 3])
    assert (res.t_value, res.cohens_d, res.p_value) == (0.0, 0.0, 1.0)
    with pytest.raises(ZeroVariance):
        paired_t([2, 2, 2], [1, 1, 1])
    with pytest.raises(LengthMismatch):
        paired_t([1, 2], [1, 2, 3])


@pytest.mark.parametrize("f,d1,d2", [(0.5, 1, 10), (2.0, 2, 7), (3.83, 1, 61), (13.5, 1, 4), (40.0, 3, 30)])
def test_f_sf_matches_integration(f, d1, d2):
    assert abs(f_sf(f, d1, d2) - f_tail_oracle(f, d1, d2)) < 1e-6


@pytest.mark.parametrize("t,df", [(0.3, 3), (1.96, 100), (3.4641, 2), (11.33, 47), (-2.5, 9)])
def test_t_tail_matches_integration(t, df):
    assert abs(t_two_sided(t, df) - t_tail_oracle(t, df)) < 1e-6


@settings(max_examples=200, deadline=None)
@given(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0, 1))
def test_betainc_against_scipy(a, b, x):
    from scipy.special import betainc as ref

    assert abs(betainc(a, b, x) - ref(a, b, x)) < 1e-9


def test_f_equals_t_squared():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        na, nb = rng.integers(2, 30, 2)
        a = rng.normal(0, 1, na)
        b = rng.normal(rng.normal(), rng.uniform(0.3, 3), nb)
        f = anova_oneway([a, b])
        t = two_sample_t(a, b)
        assert abs(f.f_value - t.t_value ** 2) <= 1e-9 * max(1.0, f.f_value)
        assert abs(f.p_value - t.p_value) < 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, 100), min_size=3, max_size=12), st.lists(st.floats(-100, 100), min_size=3, max_size=12),
       st.floats(0.1, 10), st.floats(-50, 50))
def test_anova_affine_invariance(a, b, scale, shift):
    a, b = np.array(a), np.array(b)
    r1 = anova_oneway([a, b])
    r2 = anova_oneway([a * scale + shift, b * scale + shift])
    if math.isfinite(r1.f_value) and r1.f_value > 1e-6 and r1.f_value < 1e8:
        assert r2.f_value == pytest.approx(r1.f_value, rel=1e-6)
    r3 = anova_oneway([b, a])
    assert r3.f_value == pytest.approx(r1.f_value, rel=1e-9) or r1.f_value == r3.f_value
    assert 0.0 <= r1.eta_squared <= 1.0


def test_ranking_examples():
    rng = np.random.default_rng(0)
    y = np.array([0] * 10 + [1] * 10)
    a = np.where(y == 1, 10.0, 0.0) + rng.uniform(0, 1, 20)
    b = np.tile(np.arange(10.0), 2)
    values = np.column_stack([b, a])
    ranking = rank_features_anova(values, y, ["B", "A"])
    assert ranking.names == ["A", "B"]
    assert dict(ranking.entries)["B"] == 0.0
    perm = rng.permutation(20)
    assert rank_features_anova(values[perm], y[perm], ["B", "A"]).entries == ranking.entries


def _intensity_record(records, statistic):
    return next(r for r in records if r["feature"] == "intensity_mean" and r["statistic"] == statistic)


def test_group_intensity_monte_carlo():
    # HSA 52.34 vs LSA 54.82 dB, speaker SD about 4.5, 32 HSA / 31 LSA speakers
    signed = []
    for seed in range(200):
        cfg = CorpusSynthConfig(n_speakers=63, sa_effect="intensity", utt_effect="intensity", seed=seed)
        rec = _intensity_record(stats_records(target_matrix(cfg), RunConfig())[0], "F")
        assert rec["n"] == [31, 32]
        signed.append(rec["value"] * np.sign(rec["means"]["LSA"] - rec["means"]["HSA"]))
    assert 1.0 <= np.median(signed) <= 12.0
    assert np.mean(np.array(signed) > 0) > 0.8


def test_identical_groups_zero_f():
    cfg = CorpusSynthConfig(n_speakers=24, sa_effect="none", seed=3)
    m = target_matrix(cfg)
    flat = m.with_values(np.tile(m.values[0], (len(m), 1)))
    records, _ = stats_records(flat, RunConfig())
    assert all(r["value"] == 0.0 for r in records)


def test_constant_paired_difference_reported():
    cfg = CorpusSynthConfig(n_speakers=8, sa_effect="none", seed=3)
    m = target_matrix(cfg)
    col = m.feature_names.index("jitter")
    values = np.array(m.values)
    values[:, col] = np.where(m.utterance_types == "refusal", 0.02, 0.01)
    records, _ = stats_records(m.with_values(values), RunConfig())
    rec = next(r for r in records if r["feature"] == "jitter" and r["statistic"] == "t")
    assert math.isnan(rec["value"]) and rec["note"] == "zero variance of paired differences"


def test_paired_intensity_effect_size():
    cfg = CorpusSynthConfig(n_speakers=100, sa_effect="none", utt_effect="intensity", seed=0)
    rec = _intensity_record(stats_records(target_matrix(cfg), RunConfig())[0], "t")
    assert rec["means"]["refusal"] > rec["means"]["consent"]
    assert 0.7 <= rec["effect_size"] <= 1.4
