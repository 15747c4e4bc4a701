import numpy as np
import pytest

from vocalsa.features import FEATURE_NAMES
from vocalsa.learn.base import LabeledSet


def make_labeled(X, y, speakers=None, genders=None, utterance_types=None, names=None):
    X = np.asarray(X, dtype=float)
    n = X.shape[0]
    if speakers is None:
        speakers = np.array([f"s{i:03d}" for i in range(n)])
    if genders is None:
        genders = np.array(["female" if i % 2 else "male" for i in range(n)])
    names = names or (FEATURE_NAMES[: X.shape[1]] if X.shape[1] <= 18 else tuple(f"f{i}" for i in range(X.shape[1])))
    return LabeledSet(X, y, np.asarray(genders), np.asarray(speakers), utterance_types, tuple(names))


def speaker_corpus(n_speakers, rows_per_speaker, d, informative, shift, seed=0, speaker_sd=0.0):
    """Per-speaker labelled rows; ``informative`` columns move by ``shift`` for positives."""
    rng = np.random.default_rng(seed)
    spk_y = np.array([i % 2 for i in range(n_speakers)])
    genders = np.array(["female" if (i // 2) % 2 else "male" for i in range(n_speakers)])
    X, y, spk, gen = [], [], [], []
    for s in range(n_speakers):
        base = speaker_sd * rng.standard_normal(d)
        for _ in range(rows_per_speaker):
            row = base + rng.standard_normal(d)
            row[list(informative)] += shift * spk_y[s]
            X.append(row)
            y.append(spk_y[s])
            spk.append(f"spk{s:03d}")
            gen.append(genders[s])
    return make_labeled(np.array(X), np.array(y), np.array(spk), np.array(gen))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line per acceptance criterion and return the flag."""

    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  criterion {criterion}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
