"""Seeded synthetic corpora: speakers with gender-typical voices, LSAS
labels, refusal/consent utterances and optional group-level shifts.

Each speaker draws a baseline per parameter (between-speaker spread), and
each utterance adds its own deviation (within-speaker spread). Group and
utterance-type effects are added to the speaker or utterance targets before
the waveform is rendered.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace
from typing import Dict, List, Tuple

import numpy as np

from .corpus import (
    PITCH_MAX_HZ,
    PITCH_MIN_HZ,
    RecordingMeta,
    SynthSpec,
    synthesize_utterance,
    write_manifest,
    write_wav,
)
from .errors import InvalidSpec

# Per-gender speaker-level means and SDs of the generator targets.
VOICE_PRIORS: Dict[str, Dict[str, Tuple[float, float]]] = {
    "male": {
        "f0": (120.17, 16.10),
        "f0_std": (28.05, 10.71),
        "intensity": (53.61, 4.42),
        "intensity_std": (5.37, 0.99),
        "jitter": (0.01, 0.003),
        "shimmer": (0.13, 0.02),
        "prompt": (1.28, 0.37),
        "duration": (1.38, 0.29),
        "relative_silence": (0.06, 0.03),
    },
    "female": {
        "f0": (195.97, 23.64),
        "f0_std": (39.21, 8.40),
        "intensity": (54.53, 5.04),
        "intensity_std": (6.56, 1.18),
        "jitter": (0.02, 0.003),
        "shimmer": (0.11, 0.02),
        "prompt": (1.5, 1.22),
        "duration": (1.57, 0.49),
        "relative_silence": (0.06, 0.03),
    },
}

# HSA minus LSA differences of speaker means.
SA_SHIFTS = {
    "f0_female": 200.43 - 189.62,
    "f0_male": 117.12 - 123.02,
    "f0_std": 38.12 - 36.78,
    "intensity": 52.34 - 54.82,
    "intensity_std": 5.90 - 6.35,
    "jitter": 0.0,
    "shimmer": 0.12 - 0.11,
    "relative_silence": 0.06 - 0.05,
    "prompt": 1.43 - 1.39,
}

# Refusal minus consent differences of speaker means, with the paired
# effect size (mean difference / SD of differences) reported alongside.
UTTERANCE_SHIFTS = {
    "f0_std": (34.64 - 39.00, 0.43),
    "intensity": (54.81 - 53.06, 1.05),
    "intensity_std": (6.35 - 6.08, 0.32),
    "jitter": (0.015 - 0.016, 0.23),
    "shimmer": (0.11 - 0.12, 0.51),
}

# Within-speaker utterance SDs for parameters without a paired effect size.
DEFAULT_UTTERANCE_SD = {
    "f0": 0.05,  # relative
    "prompt": 0.25,  # relative
    "duration": 0.2,  # relative
    "relative_silence": 0.0,
}

SA_EFFECTS = ("none", "intensity", "all")
UTT_EFFECTS = ("none", "intensity", "all")
SHIFT_TARGETS = ("both", "refusal", "consent")
MEAN_PAUSE_S = 0.148  # 50 ms minimum plus an exponential tail of mean 98 ms
LSA_RANGE = (4, 30)
HSA_RANGE = (50, 107)
EXCLUDED_RANGE = (31, 49)


@dataclass(frozen=True)
class CorpusSynthConfig:
    """Generation settings for a synthetic corpus.

    ``sa_effect`` selects which HSA-vs-LSA differences are injected
    ("intensity" = mean intensity only, "all" = every reported difference);
    ``sa_target`` restricts them to one utterance type. ``utt_effect``
    does the same for refusal-vs-consent differences.
    """

    n_speakers: int = 64
    utterances_per_type: int = 12
    sample_rate_hz: int = 16000
    female_fraction: float = 0.5
    hsa_fraction: float = 0.5
    excluded_fraction: float = 0.0
    sa_effect: str = "all"
    sa_scale: float = 1.0
    sa_target: str = "both"
    utt_effect: str = "all"
    utt_scale: float = 1.0
    trailing_silence_s: float = 0.3
    seed: int = 0

    def validate(self):
        if self.n_speakers < 1 or self.utterances_per_type < 1:
            raise InvalidSpec("need at least one speaker and one utterance per type")
        if self.sample_rate_hz < 8000:
            raise InvalidSpec("sample rate must be at least 8000 Hz")
        for name in ("female_fraction", "hsa_fraction", "excluded_fraction"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidSpec(f"{name} must lie in [0, 1]")
        if self.sa_effect not in SA_EFFECTS or self.utt_effect not in UTT_EFFECTS:
            raise InvalidSpec(f"effects must be one of {SA_EFFECTS}")
        if self.sa_target not in SHIFT_TARGETS:
            raise InvalidSpec(f"sa_target must be one of {SHIFT_TARGETS}")

    def to_dict(self) -> dict:
        return asdict(self)


def utterance_sd(name: str) -> float:
    """Within-speaker SD implied by a paired effect size over
    ``2 x 12`` utterances: SD(diff of type means) = sigma * sqrt(2 / 12)."""
    gap, d = UTTERANCE_SHIFTS[name]
    return abs(gap) / d * math.sqrt(6.0)


def _speaker_sd(total_sd: float, utt_sd: float, n_utt: int) -> float:
    # Reported SDs are over speaker means, which already carry utterance noise.
    var = total_sd ** 2 - utt_sd ** 2 / n_utt
    return math.sqrt(max(var, (0.25 * total_sd) ** 2))


def _active(effect: str, name: str) -> bool:
    return effect == "all" or (effect == "intensity" and name == "intensity")


def _speaker_plan(cfg: CorpusSynthConfig):
    """Genders, SA groups and LSAS scores per speaker (seeded).

    Groups are assigned within each gender so both genders carry both groups.
    """
    rng = np.random.default_rng([cfg.seed, 0])
    n = cfg.n_speakers
    n_female = int(round(cfg.female_fraction * n))
    genders = np.array(["female"] * n_female + ["male"] * (n - n_female))[rng.permutation(n)]
    groups = np.empty(n, dtype=object)
    for g in ("female", "male"):
        idx = np.flatnonzero(genders == g)
        m = idx.size
        n_excl = int(round(cfg.excluded_fraction * m))
        n_hsa = int(round(cfg.hsa_fraction * (m - n_excl)))
        labels = np.array(["HSA"] * n_hsa + ["Excluded"] * n_excl + ["LSA"] * (m - n_hsa - n_excl), dtype=object)
        groups[idx] = labels[rng.permutation(m)]
    ranges = {"LSA": LSA_RANGE, "HSA": HSA_RANGE, "Excluded": EXCLUDED_RANGE}
    scores = np.array([int(rng.integers(ranges[g][0], ranges[g][1] + 1)) for g in groups])
    return genders, groups, scores


def _clip_spec_values(f0, glide):
    lo_room = f0 - (PITCH_MIN_HZ + 5)
    hi_room = (PITCH_MAX_HZ - 20) - f0
    return max(0.0, min(glide, 2 * lo_room, 2 * hi_room))


def _pauses(rng, span_s: float, rate: float):
    """Pause count ~ Poisson(rate); lengths 50 ms + exponential tail."""
    count = int(rng.poisson(max(rate, 0.0)))
    pauses = []
    for _ in range(count):
        length = 0.05 + rng.exponential(MEAN_PAUSE_S - 0.05)
        length = min(length, 0.4)
        for _attempt in range(20):
            onset = rng.uniform(0.15, span_s - length - 0.15) if span_s - length > 0.3 else None
            if onset is None:
                break
            if all(onset + length + 0.1 < a or onset > a + b + 0.1 for a, b in pauses):
                pauses.append((round(onset, 4), round(length, 4)))
                break
    return tuple(sorted(pauses))


def corpus_targets(cfg: CorpusSynthConfig) -> List[dict]:
    """Per-utterance generation targets (plus labels), fully seeded.

    Returned in manifest order: speaker by speaker, refusals then consents.
    """
    cfg.validate()
    genders, groups, scores = _speaker_plan(cfg)
    n_utt = 2 * cfg.utterances_per_type
    rows = []
    for s in range(cfg.n_speakers):
        rng = np.random.default_rng([cfg.seed, 1, s])
        gender = genders[s]
        prior = VOICE_PRIORS[gender]
        hsa = groups[s] == "HSA"

        def utt_sd(name):
            if name in UTTERANCE_SHIFTS:
                return utterance_sd(name)
            rel = DEFAULT_UTTERANCE_SD.get(name, 0.0)
            return rel * prior[name][0]

        base = {}
        for name, (mean, sd) in prior.items():
            base[name] = mean + _speaker_sd(sd, utt_sd(name), n_utt) * rng.standard_normal()

        def sa_shift(name):
            key = name
            if name == "f0":
                key = f"f0_{gender}"
            if not hsa or not _active(cfg.sa_effect, name) or key not in SA_SHIFTS:
                return 0.0
            return cfg.sa_scale * SA_SHIFTS[key]

        speaker_id = f"spk{s:03d}"
        for kind in ("refusal", "consent"):
            sa_here = cfg.sa_target in ("both", kind)
            for k in range(cfg.utterances_per_type):
                t = {}
                for name in prior:
                    sign = 0.5 if kind == "refusal" else -0.5
                    utt = 0.0
                    if name in UTTERANCE_SHIFTS and _active(cfg.utt_effect, name):
                        utt = sign * cfg.utt_scale * UTTERANCE_SHIFTS[name][0]
                    shift = sa_shift(name) if sa_here else 0.0
                    t[name] = base[name] + shift + utt + utt_sd(name) * rng.standard_normal()
                t["pause_seed"] = int(rng.integers(2 ** 31))
                rows.append(
                    {
                        "meta": RecordingMeta(
                            recording_id=f"{speaker_id}_{kind[0]}{k:02d}",
                            speaker_id=speaker_id,
                            gender=gender,
                            lsas_score=int(scores[s]),
                            utterance_type=kind,
                            source_path=f"audio/{speaker_id}_{kind[0]}{k:02d}.wav",
                        ),
                        "targets": t,
                    }
                )
    return rows


# generator target -> feature column it drives
TARGET_FEATURES = {
    "f0": "mean_f0",
    "f0_std": "std_f0",
    "intensity": "intensity_mean",
    "intensity_std": "intensity_std",
    "jitter": "jitter",
    "shimmer": "shimmer",
    "prompt": "prompt_to_start",
    "duration": "duration",
    "relative_silence": "relative_silence",
}


def target_matrix(cfg: CorpusSynthConfig):
    """Feature matrix holding the generation targets themselves (no audio).

    Columns without a direct target are NaN. Useful for cheap Monte-Carlo
    checks of the statistics layer.
    """
    from .features import FEATURE_NAMES, FeatureMatrix

    rows = corpus_targets(cfg)
    values = np.full((len(rows), len(FEATURE_NAMES)), np.nan)
    for i, r in enumerate(rows):
        for name, col in TARGET_FEATURES.items():
            values[i, FEATURE_NAMES.index(col)] = r["targets"][name]
    return FeatureMatrix(tuple(r["meta"] for r in rows), values)


def spec_from_targets(t: dict, trailing_silence_s: float = 0.3) -> SynthSpec:
    """Map feature-level targets onto a waveform specification."""
    f0 = float(np.clip(t["f0"], PITCH_MIN_HZ + 10, PITCH_MAX_HZ - 40))
    # a linear glide over uniform frames has SD = range / sqrt(12)
    glide = _clip_spec_values(f0, max(0.0, t["f0_std"]) * math.sqrt(12.0))
    duration = max(0.6, t["duration"])
    rng = np.random.default_rng(t["pause_seed"])
    rate = max(0.0, t["relative_silence"]) * duration / MEAN_PAUSE_S
    return SynthSpec(
        f0_hz=f0,
        jitter_frac=float(np.clip(t["jitter"], 0.001, 0.03)) / 2.0,
        shimmer_frac=float(np.clip(t["shimmer"], 0.01, 0.5)) / 2.0,
        intensity_db=float(np.clip(t["intensity"], 30.0, 72.0)),
        leading_silence_s=float(np.clip(t["prompt"], 0.15, 6.0)),
        internal_pauses=_pauses(rng, duration, rate),
        total_speech_s=duration,
        trailing_silence_s=trailing_silence_s,
        f0_glide_hz=glide,
        intensity_range_db=float(np.clip(t["intensity_std"], 0.0, 9.0)) * math.sqrt(12.0),
    )


def _render(args):
    out_dir, row, cfg = args
    spec = spec_from_targets(row["targets"], cfg.trailing_silence_s)
    try:
        clip = synthesize_utterance(spec, cfg.sample_rate_hz)
    except InvalidSpec:
        # the loudest ramps can clip; pull the level down until they fit
        for drop in range(1, 40):
            try:
                clip = synthesize_utterance(
                    SynthSpec(**{**spec.__dict__, "intensity_db": spec.intensity_db - drop}), cfg.sample_rate_hz
                )
                break
            except InvalidSpec:
                continue
        else:
            raise
    write_wav(os.path.join(out_dir, row["meta"].source_path), clip)
    return row["meta"].recording_id


def synthesize_corpus(out_dir, cfg: CorpusSynthConfig, jobs: int = 1) -> List[RecordingMeta]:
    """Write WAVs under ``out_dir/audio`` plus ``out_dir/manifest.csv``."""
    rows = corpus_targets(cfg)
    os.makedirs(os.path.join(out_dir, "audio"), exist_ok=True)
    tasks = [(out_dir, r, cfg) for r in rows]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            list(pool.map(_render, tasks, chunksize=16))
    else:
        for t in tasks:
            _render(t)
    metas = [replace(r["meta"], source_path=os.path.abspath(os.path.join(out_dir, r["meta"].source_path))) for r in rows]
    write_manifest(os.path.join(out_dir, "manifest.csv"), metas)
    return metas
