import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from vocalsa.corpus import RecordingMeta, SynthSpec, synthesize_utterance
from vocalsa.errors import DegenerateGenderGroup, TooFewRows, UnknownGender
from vocalsa.features import (
    FEATURE_NAMES,
    FeatureMatrix,
    FeatureVector,
    apply_outlier_policy,
    extract_features,
    fit_norm_stats_arrays,
    read_feature_csv,
    write_feature_csv,
)


def _clip(**kw):
    kw.setdefault("f0_hz", 180.0)
    kw.setdefault("intensity_db", 60.0)
    return synthesize_utterance(SynthSpec(**kw), 16000)


def test_feature_order():
    assert len(FEATURE_NAMES) == 18
    assert FEATURE_NAMES[:4] == ("min_f0", "max_f0", "mean_f0", "std_f0")
    assert FEATURE_NAMES[-3:] == ("prompt_to_start", "relative_silence", "duration")


def test_pause_example():
    v = extract_features(_clip(leading_silence_s=0.5, internal_pauses=((0.6, 0.12),), total_speech_s=1.4))
    assert v.prompt_to_start == pytest.approx(0.5, abs=0.02)
    assert v.duration == pytest.approx(1.4, abs=0.03)
    assert (v.silence_50, v.silence_100, v.silence_150, v.silence_200) == (1, 1, 0, 0)
    assert v.relative_silence == pytest.approx(0.12 / 1.4, abs=0.015)
    assert v.mean_f0 == pytest.approx(180.0, abs=1.0)


def test_periodic_clip_zero_perturbation():
    sr, f0 = 16000, 200.0
    v = extract_features(_clip(f0_hz=f0, total_speech_s=1.0))
    bound = 1.0 / (sr * (1.0 / f0))  # one-sample quantization over the mean period
    assert v.jitter <= bound
    assert v.shimmer <= bound


@pytest.mark.parametrize("eps", [0.0025, 0.005])
def test_jitter_closed_form(eps):
    v = extract_features(_clip(f0_hz=150.0, jitter_frac=eps, total_speech_s=1.0))
    assert abs(v.jitter - 2 * eps) <= 0.002


def test_shimmer_closed_form():
    v = extract_features(_clip(f0_hz=150.0, shimmer_frac=0.05, total_speech_s=1.0))
    assert abs(v.shimmer - 0.1) <= 0.01


@pytest.mark.parametrize("gap_ms,counts", [(60, (1, 0, 0, 0)), (120, (1, 1, 0, 0)), (170, (1, 1, 1, 0)),
                                          (250, (1, 1, 1, 1))])
def test_silence_counts(gap_ms, counts):
    v = extract_features(_clip(leading_silence_s=0.3, internal_pauses=((0.5, gap_ms / 1000),), total_speech_s=1.4))
    got = (v.silence_50, v.silence_100, v.silence_150, v.silence_200)
    assert got == counts
    assert list(got) == sorted(got, reverse=True)


def test_gain_invariance():
    clip = _clip(total_speech_s=0.8, jitter_frac=0.004, shimmer_frac=0.03)
    a = extract_features(clip).as_array()
    b = extract_features(clip.scaled(0.5)).as_array()
    level = [FEATURE_NAMES.index(n) for n in ("intensity_min", "intensity_max", "intensity_mean")]
    other = [i for i in range(18) if i not in level]
    assert np.allclose(b[level] - a[level], 20 * np.log10(0.5), atol=1e-6)
    assert np.allclose(a[other], b[other], rtol=1e-6, atol=1e-9)


def test_vector_roundtrip():
    v = FeatureVector.from_array(np.arange(18.0))
    assert np.array_equal(v.as_array(), np.arange(18.0))


# Outliers ---------------------------------------------------------------------


def _matrix(values, genders=None):
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    genders = genders or ["male"] * n
    metas = [RecordingMeta(f"r{i}", f"s{i}", genders[i], 10) for i in range(n)]
    names = FEATURE_NAMES[: values.shape[1]]
    return FeatureMatrix(tuple(metas), values, names)


def test_outlier_boundary_kept():
    # mean 10, population std 30, |100 - 10| / 30 = 3 exactly: not > 3
    m = _matrix(np.array([[0.0]] * 9 + [[100.0]]))
    out, report = apply_outlier_policy(m, 3.0)
    assert report == []
    assert not np.isnan(out.values).any()


def test_outlier_flagged_beyond():
    col = np.array([0.0] * 19 + [100.0])
    out, report = apply_outlier_policy(_matrix(col[:, None]), 3.0)
    assert report == [(19, "min_f0")]
    assert np.isnan(out.values[19, 0])
    clipped, _ = apply_outlier_policy(_matrix(col[:, None]), 3.0, mode="clip")
    mean, std = col.mean(), col.std()
    assert clipped.values[19, 0] == pytest.approx(mean + 3 * std)


def test_outlier_constant_column():
    out, report = apply_outlier_policy(_matrix(np.full((5, 2), 4.0)))
    assert report == []


def test_outlier_needs_rows():
    with pytest.raises(TooFewRows):
        apply_outlier_policy(_matrix(np.zeros((2, 1))))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-1e3, 1e3)))
def test_outlier_flags_match_definition(values):
    out, report = apply_outlier_policy(_matrix(values), 2.0)
    mean, std = values.mean(axis=0), values.std(axis=0)
    expect = np.abs(values - mean) > 2.0 * std
    # tolerate rounding exactly at the boundary
    near = np.isclose(np.abs(values - mean), 2.0 * std, rtol=1e-9, atol=1e-9)
    got = np.isnan(out.values)
    assert np.array_equal(got[~near], expect[~near])
    assert len(report) == int(got.sum())


# Normalization -------------------------------------------------------------


def test_norm_stats_hand():
    stats = fit_norm_stats_arrays(np.array([[2.0], [4.0]]), ["male", "male"])
    assert stats.means["male"][0] == 3.0
    assert stats.stds["male"][0] == pytest.approx(np.sqrt(2.0))
    z = stats.transform(np.array([[3.0], [3.0 + np.sqrt(2.0)]]), ["male", "male"])
    assert z[0, 0] == 0.0
    assert z[1, 0] == pytest.approx(1.0)


def test_norm_single_row_gender():
    with pytest.raises(DegenerateGenderGroup):
        fit_norm_stats_arrays(np.array([[1.0], [2.0], [3.0]]), ["male", "male", "female"])


def test_norm_degenerate_feature():
    stats = fit_norm_stats_arrays(np.array([[5.0, 1.0], [5.0, 2.0]]), ["female", "female"])
    assert stats.degenerate("female").tolist() == [True, False]
    z = stats.transform(np.array([[9.0, 1.5]]), ["female"])
    assert z[0, 0] == 0.0


def test_norm_unknown_gender():
    stats = fit_norm_stats_arrays(np.array([[1.0], [2.0]]), ["male", "male"])
    with pytest.raises(UnknownGender):
        stats.transform(np.array([[1.0]]), ["female"])


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (10, 4), elements=st.floats(-100, 100)))
def test_normalize_idempotent(values):
    genders = ["male"] * 5 + ["female"] * 5
    z1 = fit_norm_stats_arrays(values, genders).transform(values, genders)
    z2 = fit_norm_stats_arrays(z1, genders).transform(z1, genders)
    assert np.allclose(z1, z2, atol=1e-6)
    for g in ("male", "female"):
        rows = np.array(genders) == g
        assert np.allclose(z1[rows].mean(axis=0), 0.0, atol=1e-9)


def test_stats_serialization():
    stats = fit_norm_stats_arrays(np.array([[1.0, 2.0], [3.0, 5.0]]), ["male", "male"])
    back = type(stats).from_dict(stats.to_dict())
    assert np.array_equal(back.means["male"], stats.means["male"])


def test_feature_csv_roundtrip(tmp_path):
    m = _matrix(np.arange(36.0).reshape(2, 18))
    m = FeatureMatrix(m.metas, np.where(np.arange(36).reshape(2, 18) == 5, np.nan, m.values))
    write_feature_csv(tmp_path / "f.csv", m)
    back = read_feature_csv(tmp_path / "f.csv")
    assert back.feature_names == FEATURE_NAMES
    assert np.isnan(back.values[0, 5])
    assert np.allclose(np.nan_to_num(back.values), np.nan_to_num(m.values))
