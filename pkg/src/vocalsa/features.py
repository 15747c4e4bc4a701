"""The 18-feature utterance vector, outlier handling and per-gender
z-normalization."""

from __future__ import annotations

import csv
import io
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, fields
from typing import Dict, Sequence

import numpy as np

from .corpus import Corpus, RecordingMeta, atomic_write_bytes
from .dsp import (
    DEFAULT_PARAMS,
    DspParams,
    IntensityTrack,
    PeriodSequence,
    PitchTrack,
    Segmentation,
    _runs,
    analyze,
)
from .errors import (
    AnalysisError,
    DegenerateGenderGroup,
    MalformedManifest,
    NoVoicedRegion,
    TooFewRows,
    UnknownGender,
)

SILENCE_THRESHOLDS_MS = (50, 100, 150, 200)
VOICE_BREAK_MIN_S = 0.060


@dataclass(frozen=True)
class FeatureVector:
    min_f0: float
    max_f0: float
    mean_f0: float
    std_f0: float
    intensity_min: float
    intensity_max: float
    intensity_mean: float
    intensity_std: float
    jitter: float
    shimmer: float
    jitter_voice_breaks: float
    silence_50: float
    silence_100: float
    silence_150: float
    silence_200: float
    prompt_to_start: float
    relative_silence: float
    duration: float

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self), dtype=float)

    @classmethod
    def from_array(cls, values) -> "FeatureVector":
        return cls(*(float(v) for v in values))


FEATURE_NAMES = tuple(f.name for f in fields(FeatureVector))
META_COLUMNS = ("recording_id", "speaker_id", "gender", "lsas_score", "sa_group", "utterance_type")


def feature_index(name: str) -> int:
    return FEATURE_NAMES.index(name)


def _local_perturbation(sequences) -> float:
    """Mean absolute consecutive difference over the mean value, with
    differences taken only inside each sequence."""
    diffs = [np.abs(np.diff(s)) for s in sequences if len(s) >= 2]
    n = sum(d.size for d in diffs)
    if n == 0:
        raise NoVoicedRegion("fewer than two consecutive cycles")
    values = np.concatenate([s for s in sequences if len(s) >= 1])
    return float(sum(d.sum() for d in diffs) / n / values.mean())


def _sd(x) -> float:
    return float(np.std(x, ddof=1)) if len(x) >= 2 else 0.0


def compute_features(
    clip,
    seg: Segmentation,
    pitch: PitchTrack,
    intensity: IntensityTrack,
    periods: PeriodSequence,
) -> FeatureVector:
    onset, end = seg.speech_onset_s, seg.speech_end_s
    in_span = (pitch.times_s >= onset) & (pitch.times_s <= end)
    f0 = pitch.f0_hz[in_span & pitch.voiced]
    if f0.size == 0:
        raise NoVoicedRegion("no voiced frame inside the speech span")

    levels = intensity.levels_db
    speech_frames = seg.speech_frames
    if speech_frames is None:
        speech_frames = (levels >= seg.threshold_db) & (levels > intensity.floor_db)
    lv = levels[(intensity.times_s >= onset) & (intensity.times_s <= end) & speech_frames]
    if lv.size == 0:
        lv = levels[speech_frames]

    jitter = _local_perturbation([p for p, _ in periods.intervals])
    shimmer = _local_perturbation([a for _, a in periods.intervals])

    # unvoiced runs bounded by voiced frames on both sides, inside the span
    voiced_span = pitch.voiced & in_span
    breaks = 0
    idx = np.flatnonzero(voiced_span)
    if idx.size:
        inner = ~voiced_span[idx[0]:idx[-1] + 1]
        breaks = sum(1 for a, b in _runs(inner) if (b - a + 1) * pitch.hop_s >= VOICE_BREAK_MIN_S - 1e-9)

    gap_lengths = np.array([length for _, length in seg.silent_gaps])
    counts = [int(np.sum(gap_lengths >= k / 1000.0 - 1e-9)) for k in SILENCE_THRESHOLDS_MS]
    duration = end - onset
    rel = float(gap_lengths.sum() / duration) if duration > 0 else 0.0

    return FeatureVector(
        min_f0=float(f0.min()),
        max_f0=float(f0.max()),
        mean_f0=float(f0.mean()),
        std_f0=_sd(f0),
        intensity_min=float(lv.min()),
        intensity_max=float(lv.max()),
        intensity_mean=float(lv.mean()),
        intensity_std=_sd(lv),
        jitter=jitter,
        shimmer=shimmer,
        jitter_voice_breaks=float(breaks),
        silence_50=float(counts[0]),
        silence_100=float(counts[1]),
        silence_150=float(counts[2]),
        silence_200=float(counts[3]),
        prompt_to_start=float(onset),
        relative_silence=min(max(rel, 0.0), 1.0),
        duration=float(duration),
    )


def extract_features(clip, params: DspParams = DEFAULT_PARAMS) -> FeatureVector:
    intensity, seg, pitch, periods = analyze(clip, params)
    return compute_features(clip, seg, pitch, intensity, periods)


# Feature matrix ----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    """Rows of (meta, 18 features); missing values are NaN."""

    metas: tuple
    values: np.ndarray
    feature_names: tuple = FEATURE_NAMES

    def __post_init__(self):
        values = np.array(self.values, dtype=float, copy=True).reshape(len(self.metas), len(self.feature_names))
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "metas", tuple(self.metas))

    def __len__(self):
        return len(self.metas)

    @property
    def genders(self) -> np.ndarray:
        return np.array([m.gender for m in self.metas])

    @property
    def speakers(self) -> np.ndarray:
        return np.array([m.speaker_id for m in self.metas])

    @property
    def utterance_types(self) -> np.ndarray:
        return np.array([m.utterance_type for m in self.metas])

    @property
    def sa_groups(self) -> np.ndarray:
        return np.array([m.sa_group.value for m in self.metas])

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.feature_names.index(name)]

    def subset(self, rows) -> "FeatureMatrix":
        rows = np.asarray(rows)
        if rows.dtype == bool:
            rows = np.flatnonzero(rows)
        return FeatureMatrix(tuple(self.metas[i] for i in rows), self.values[rows], self.feature_names)

    def with_values(self, values) -> "FeatureMatrix":
        return FeatureMatrix(self.metas, values, self.feature_names)

    def select_features(self, names: Sequence[str]) -> "FeatureMatrix":
        cols = [self.feature_names.index(n) for n in names]
        return FeatureMatrix(self.metas, self.values[:, cols], tuple(names))

    def vector(self, row: int) -> FeatureVector:
        return FeatureVector.from_array(self.values[row])


def _fmt(v: float) -> str:
    return "" if not np.isfinite(v) else f"{v:.6g}"


def feature_csv_text(matrix: FeatureMatrix) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(META_COLUMNS + matrix.feature_names)
    for meta, row in zip(matrix.metas, matrix.values):
        writer.writerow(
            [meta.recording_id, meta.speaker_id, meta.gender, meta.lsas_score, meta.sa_group.value, meta.utterance_type]
            + [_fmt(v) for v in row]
        )
    return buf.getvalue()


def write_feature_csv(path, matrix: FeatureMatrix):
    atomic_write_bytes(path, feature_csv_text(matrix).encode("utf-8"))


def read_feature_csv(path) -> FeatureMatrix:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header[:len(META_COLUMNS)]) != META_COLUMNS:
            raise MalformedManifest(f"{path}: not a feature matrix CSV")
        names = tuple(header[len(META_COLUMNS):])
        metas, rows = [], []
        for line in reader:
            if not line:
                continue
            rid, spk, gender, score, _group, utt = line[:len(META_COLUMNS)]
            metas.append(RecordingMeta(rid, spk, gender, int(score), utt))
            rows.append([float(v) if v != "" else np.nan for v in line[len(META_COLUMNS):]])
    if not metas:
        raise TooFewRows(f"{path}: feature matrix has no rows")
    return FeatureMatrix(tuple(metas), np.array(rows, dtype=float), names)


def _extract_entry(args):
    entry, params = args
    try:
        clip = entry.load()
        return entry.meta, extract_features(clip, params), None
    except AnalysisError as exc:
        return entry.meta, None, f"{type(exc).__name__}: {exc}"


def extract_corpus(corpus: Corpus, params: DspParams = DEFAULT_PARAMS, jobs: int = 1):
    """Extract features for every entry; returns (matrix, rejections).

    Rejections are ``(recording_id, reason)`` for utterances without
    speech or voicing. Output order follows the corpus regardless of
    ``jobs``.
    """
    tasks = [(e, params) for e in corpus]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_entry, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        results = [_extract_entry(t) for t in tasks]
    metas, rows, rejected = [], [], []
    for meta, vec, reason in results:
        if vec is None:
            rejected.append((meta.recording_id, reason))
        else:
            metas.append(meta)
            rows.append(vec.as_array())
    values = np.array(rows, dtype=float).reshape(len(rows), len(FEATURE_NAMES))
    return FeatureMatrix(tuple(metas), values), rejected


# Outliers ---------------------------------------------------------------------


def outlier_bounds(values: np.ndarray, k: float = 3.0):
    """Per-column (low, high) = mean -+ k * population std, NaNs ignored."""
    with np.errstate(all="ignore"), warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN columns give NaN bounds
        mean = np.nanmean(values, axis=0)
        std = np.nanstd(values, axis=0)
    return mean - k * std, mean + k * std


def apply_outlier_policy(matrix: FeatureMatrix, k: float = 3.0, mode: str = "exclude_value"):
    """Flag values farther than k population SDs from their column mean.

    ``exclude_value`` turns them into NaN; ``clip`` winsorizes them to
    the bound. Returns ``(new_matrix, [(row, feature_name), ...])``.
    """
    if len(matrix) < 3:
        raise TooFewRows("outlier policy needs at least 3 rows")
    if mode not in ("exclude_value", "clip"):
        raise ValueError(f"unknown outlier mode {mode!r}")
    values = np.array(matrix.values)
    low, high = outlier_bounds(values, k)
    with np.errstate(invalid="ignore"):
        flagged = (values < low) | (values > high)
    report = [(int(r), matrix.feature_names[c]) for r, c in zip(*np.nonzero(flagged))]
    if mode == "exclude_value":
        values[flagged] = np.nan
    else:
        values = np.clip(values, low, high)
    return matrix.with_values(values), report


# Gender normalization -----------------------------------------------------------


@dataclass(frozen=True, eq=False)
class NormStats:
    """Per-gender feature means and sample SDs; zero-SD features are degenerate."""

    means: Dict[str, np.ndarray]
    stds: Dict[str, np.ndarray]

    def degenerate(self, gender: str) -> np.ndarray:
        return ~(self.stds[gender] > 0)

    def transform(self, values: np.ndarray, genders: Sequence[str]) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        out = np.empty_like(values)
        genders = np.asarray(genders)
        for g in np.unique(genders):
            if g not in self.means:
                raise UnknownGender(f"no normalization statistics for gender {g!r}")
            rows = genders == g
            std = self.stds[g]
            safe = np.where(std > 0, std, 1.0)
            z = (values[rows] - self.means[g]) / safe
            out[rows] = np.where(std > 0, z, 0.0)
        return out

    def to_dict(self) -> dict:
        return {g: {"mean": self.means[g].tolist(), "std": self.stds[g].tolist()} for g in sorted(self.means)}

    @classmethod
    def from_dict(cls, data: dict) -> "NormStats":
        return cls(
            {g: np.array(v["mean"], dtype=float) for g, v in data.items()},
            {g: np.array(v["std"], dtype=float) for g, v in data.items()},
        )


def fit_norm_stats_arrays(values: np.ndarray, genders: Sequence[str]) -> NormStats:
    values = np.asarray(values, dtype=float)
    genders = np.asarray(genders)
    means, stds = {}, {}
    for g in sorted(set(genders.tolist())):
        block = values[genders == g]
        if block.shape[0] < 2:
            raise DegenerateGenderGroup(f"gender {g!r} has {block.shape[0]} training row(s); need 2")
        mean = block.mean(axis=0)
        std = block.std(axis=0, ddof=1)
        # treat rounding-level spread as zero so identical rows are degenerate
        std = np.where(std <= 1e-12 * np.maximum(1.0, np.abs(mean)), 0.0, std)
        means[g], stds[g] = mean, std
    return NormStats(means, stds)


def fit_norm_stats(matrix: FeatureMatrix, rows=None) -> NormStats:
    if rows is None:
        rows = np.arange(len(matrix))
    sub = matrix.subset(rows)
    return fit_norm_stats_arrays(sub.values, sub.genders)


def normalize(matrix: FeatureMatrix, stats: NormStats) -> FeatureMatrix:
    return matrix.with_values(stats.transform(matrix.values, matrix.genders))
