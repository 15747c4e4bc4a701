"""Acoustic speech features and classifiers for social-anxiety screening."""

from .corpus import AudioClip, Corpus, RecordingMeta, SAGroup, SynthSpec, assign_group, load_wav, parse_manifest, synthesize_utterance
from .dsp import DEFAULT_PARAMS, DspParams, analyze
from .features import FEATURE_NAMES, FeatureMatrix, FeatureVector, extract_features

__version__ = "0.1.0"
