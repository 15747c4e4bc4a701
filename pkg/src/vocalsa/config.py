"""Run configuration: a flat ``key = value`` text file with ``#`` comments.

Every key has a default; command-line flags override file values. The
validated configuration is echoed into every report.
"""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, fields
from typing import Optional

from .dsp import DspParams
from .errors import InvalidSpec
from .learn.base import VARIANTS, ModelSpec
from .simulate import SA_EFFECTS, SHIFT_TARGETS, UTT_EFFECTS, CorpusSynthConfig

CLASSIFIER_CHOICES = VARIANTS + ("all",)
FOLD_MODE_CHOICES = ("speaker", "recording")
# execution-only keys: they never change results, so reports leave them out
EXECUTION_KEYS = ("jobs",)


@dataclass(frozen=True)
class RunConfig:
    # paths
    manifest: str = ""
    features: str = ""
    model: str = ""
    out: str = "out"
    # execution
    seed: int = 0
    jobs: int = 0  # 0 = all available cores
    # dsp
    pitch_floor_hz: float = 60.0
    pitch_ceil_hz: float = 500.0
    pitch_window_s: float = 0.04
    pitch_hop_s: float = 0.01
    voicing_threshold: float = 0.45
    octave_cost: float = 0.05
    intensity_window_s: float = 0.032
    intensity_hop_s: float = 0.01
    silence_floor_db: float = 0.0
    vad_offset_db: float = 10.0
    noise_window_s: float = 0.1
    hangover_s: float = 0.08
    period_search_frac: float = 0.2
    # evaluation
    fold_mode: str = "speaker"
    folds: int = 10
    stratified: bool = True
    paper_fidelity: bool = False
    outlier_mode: str = "exclude_value"
    outlier_k: float = 3.0
    winsorize: bool = True
    classifier: str = "gp"
    top_k: int = 0  # 0 = all features
    feature_subset: str = ""  # comma-separated names; empty = all 18
    split_by_gender: bool = False
    shimmer_percent: bool = False
    # learners
    tree_max_depth: int = 0  # 0 = unbounded
    tree_min_leaf: int = 2
    knn_k: int = 3
    logistic_l2: float = 1e-4
    gp_length_scale: float = 1.0
    gp_variance: float = 1.0
    gboost_rounds: int = 100
    gboost_depth: int = 2
    gboost_learning_rate: float = 0.1
    mlp_hidden: int = 16
    mlp_epochs: int = 500
    mlp_learning_rate: float = 0.5
    # synthetic corpus
    synth_speakers: int = 64
    synth_utterances_per_type: int = 12
    synth_sample_rate_hz: int = 16000
    synth_female_fraction: float = 0.5
    synth_hsa_fraction: float = 0.5
    synth_excluded_fraction: float = 0.0
    synth_sa_effect: str = "intensity"
    synth_sa_scale: float = 1.0
    synth_sa_target: str = "both"
    synth_utt_effect: str = "intensity"
    synth_utt_scale: float = 1.0

    def validate(self) -> "RunConfig":
        def need(cond, msg):
            if not cond:
                raise InvalidSpec(f"config: {msg}")

        need(self.classifier in CLASSIFIER_CHOICES, f"classifier must be one of {CLASSIFIER_CHOICES}")
        need(self.fold_mode in FOLD_MODE_CHOICES, f"fold_mode must be one of {FOLD_MODE_CHOICES}")
        need(self.outlier_mode in ("exclude_value", "clip"), "outlier_mode must be exclude_value or clip")
        need(self.folds >= 2, "folds must be >= 2")
        need(self.jobs >= 0, "jobs must be >= 0")
        need(0 < self.pitch_floor_hz < self.pitch_ceil_hz, "need 0 < pitch_floor_hz < pitch_ceil_hz")
        need(self.outlier_k > 0, "outlier_k must be positive")
        need(0 <= self.top_k <= 18, "top_k must lie in [0, 18]")
        need(self.synth_sa_effect in SA_EFFECTS and self.synth_utt_effect in UTT_EFFECTS, "unknown synth effect")
        need(self.synth_sa_target in SHIFT_TARGETS, f"synth_sa_target must be one of {SHIFT_TARGETS}")
        need(self.knn_k >= 1 and self.mlp_hidden >= 1 and self.gboost_depth >= 1, "learner sizes must be >= 1")
        if self.feature_subset:
            from .features import FEATURE_NAMES

            bad = [n for n in self.subset_names() if n not in FEATURE_NAMES]
            need(not bad, f"unknown features in feature_subset: {bad}")
        return self

    def subset_names(self):
        return tuple(n.strip() for n in self.feature_subset.split(",") if n.strip())

    def dsp_params(self) -> DspParams:
        return DspParams(
            pitch_window_s=self.pitch_window_s,
            pitch_hop_s=self.pitch_hop_s,
            pitch_floor_hz=self.pitch_floor_hz,
            pitch_ceil_hz=self.pitch_ceil_hz,
            voicing_threshold=self.voicing_threshold,
            octave_cost=self.octave_cost,
            intensity_window_s=self.intensity_window_s,
            intensity_hop_s=self.intensity_hop_s,
            silence_floor_db=self.silence_floor_db,
            vad_offset_db=self.vad_offset_db,
            vad_noise_window_s=self.noise_window_s,
            vad_hangover_s=self.hangover_s,
            period_search_frac=self.period_search_frac,
        )

    def synth_config(self) -> CorpusSynthConfig:
        return CorpusSynthConfig(
            n_speakers=self.synth_speakers,
            utterances_per_type=self.synth_utterances_per_type,
            sample_rate_hz=self.synth_sample_rate_hz,
            female_fraction=self.synth_female_fraction,
            hsa_fraction=self.synth_hsa_fraction,
            excluded_fraction=self.synth_excluded_fraction,
            sa_effect=self.synth_sa_effect,
            sa_scale=self.synth_sa_scale,
            sa_target=self.synth_sa_target,
            utt_effect=self.synth_utt_effect,
            utt_scale=self.synth_utt_scale,
            seed=self.seed,
        )

    def model_specs(self):
        names = VARIANTS if self.classifier == "all" else (self.classifier,)
        return [self.model_spec(n) for n in names]

    def model_spec(self, variant: str) -> ModelSpec:
        if variant == "tree":
            return ModelSpec.of("tree", max_depth=self.tree_max_depth or None, min_leaf=self.tree_min_leaf)
        if variant == "knn":
            return ModelSpec.of("knn", k=self.knn_k)
        if variant == "logistic":
            return ModelSpec.of("logistic", l2=self.logistic_l2)
        if variant == "gp":
            return ModelSpec.of("gp", length_scale=self.gp_length_scale, variance=self.gp_variance)
        if variant == "gboost":
            return ModelSpec.of(
                "gboost", rounds=self.gboost_rounds, depth=self.gboost_depth, learning_rate=self.gboost_learning_rate
            )
        return ModelSpec.of("mlp", hidden=self.mlp_hidden, epochs=self.mlp_epochs, learning_rate=self.mlp_learning_rate)

    @property
    def effective_fold_mode(self) -> str:
        return "per_recording" if self.paper_fidelity or self.fold_mode == "recording" else "per_speaker"

    @property
    def fit_scope(self) -> str:
        return "all" if self.paper_fidelity else "train"

    def worker_count(self) -> int:
        return self.jobs or os.cpu_count() or 1

    def echo(self) -> dict:
        """Configuration as embedded in reports (execution-only keys removed)."""
        return {k: v for k, v in sorted(dataclasses.asdict(self).items()) if k not in EXECUTION_KEYS}

    def to_text(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in sorted(dataclasses.asdict(self).items()))


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def coerce(name: str, raw, kind):
    """Convert a raw string to the declared type of ``name``."""
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise InvalidSpec(f"config: bad value {raw!r} for {name} (expected {kind.__name__})") from None
    return text


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise InvalidSpec(f"{origin}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise InvalidSpec(f"{origin}:{lineno}: unknown key {key!r}")
        values[key] = coerce(key, value, _TYPES[key])
    return values


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    values = {}
    if path:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config_text(fh.read(), path))
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in _TYPES:
            raise InvalidSpec(f"unknown config key {key!r}")
        values[key] = coerce(key, value, _TYPES[key])
    return RunConfig(**values).validate()
