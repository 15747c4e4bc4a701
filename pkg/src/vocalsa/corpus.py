"""Recording ingestion: WAV I/O, the label manifest, SA grouping and the
synthetic utterance generator used as a ground-truth oracle."""

from __future__ import annotations

import csv
import enum
import os
import tempfile
import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import (
    DuplicateId,
    InvalidSpec,
    MalformedManifest,
    MalformedWav,
    OutOfRange,
    UnsupportedFormat,
)

PCM_SCALE = 32768.0
LSAS_MAX = 144
LSA_MAX_SCORE = 30
HSA_MIN_SCORE = 50
MANIFEST_COLUMNS = ("recording_id", "speaker_id", "gender", "lsas_score", "utterance_type", "path")
GENDERS = ("male", "female")
UTTERANCE_TYPES = ("refusal", "consent", "unknown")


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise UnsupportedFormat("AudioClip must be mono (1-D samples)")
        if samples.size < 1:
            raise InvalidSpec("AudioClip needs at least one sample")
        if not np.all(np.isfinite(samples)) or np.max(np.abs(samples)) > 1.0:
            raise InvalidSpec("samples must be finite and within [-1, 1]")
        if int(self.sample_rate_hz) <= 0:
            raise InvalidSpec("sample rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def scaled(self, gain: float) -> "AudioClip":
        return AudioClip(self.samples * gain, self.sample_rate_hz)


class SAGroup(str, enum.Enum):
    LSA = "LSA"
    HSA = "HSA"
    EXCLUDED = "Excluded"


@dataclass(frozen=True)
class RecordingMeta:
    recording_id: str
    speaker_id: str
    gender: str
    lsas_score: int
    utterance_type: str = "unknown"
    source_path: str = ""

    def __post_init__(self):
        if not self.recording_id:
            raise MalformedManifest("empty recording_id")
        if self.gender not in GENDERS:
            raise MalformedManifest(f"bad gender token {self.gender!r}")
        if self.utterance_type not in UTTERANCE_TYPES:
            raise MalformedManifest(f"bad utterance_type token {self.utterance_type!r}")
        if not 0 <= int(self.lsas_score) <= LSAS_MAX:
            raise MalformedManifest(f"lsas_score {self.lsas_score} outside [0, {LSAS_MAX}]")

    @property
    def sa_group(self) -> SAGroup:
        return assign_group(self.lsas_score)


@dataclass(frozen=True)
class CorpusEntry:
    meta: RecordingMeta
    clip: Optional[AudioClip] = None

    def load(self) -> AudioClip:
        if self.clip is not None:
            return self.clip
        return load_wav(self.meta.source_path)


@dataclass(frozen=True)
class Corpus:
    entries: tuple

    def __post_init__(self):
        ids = [e.meta.recording_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise DuplicateId("recording ids must be unique within a corpus")
        object.__setattr__(self, "entries", tuple(self.entries))

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def assign_group(lsas_score: int) -> SAGroup:
    """LSA for scores <= 30, HSA for >= 50, Excluded in between."""
    if isinstance(lsas_score, bool) or int(lsas_score) != lsas_score:
        raise OutOfRange(f"LSAS score must be an integer, got {lsas_score!r}")
    if not 0 <= lsas_score <= LSAS_MAX:
        raise OutOfRange(f"LSAS score {lsas_score} outside [0, {LSAS_MAX}]")
    if lsas_score <= LSA_MAX_SCORE:
        return SAGroup.LSA
    if lsas_score >= HSA_MIN_SCORE:
        return SAGroup.HSA
    return SAGroup.EXCLUDED


# WAV I/O -------------------------------------------------------------------


def _open_wav(path):
    path = os.fspath(path)
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    try:
        handle = wave.open(path, "rb")
    except wave.Error as exc:
        if "unknown format" in str(exc):
            raise UnsupportedFormat(f"{path}: non-PCM codec ({exc})") from exc
        raise MalformedWav(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise MalformedWav(f"{path}: truncated header") from exc
    return handle


def _check_format(handle, path):
    if handle.getnchannels() != 1:
        raise UnsupportedFormat(f"{path}: {handle.getnchannels()} channels, expected mono")
    if handle.getsampwidth() != 2:
        raise UnsupportedFormat(f"{path}: {8 * handle.getsampwidth()}-bit samples, expected 16-bit")


def wav_sample_rate(path) -> int:
    """Read only the header and return the sample rate (format is validated)."""
    with _open_wav(path) as handle:
        _check_format(handle, path)
        return handle.getframerate()


def load_wav(path) -> AudioClip:
    with _open_wav(path) as handle:
        _check_format(handle, path)
        n_frames = handle.getnframes()
        rate = handle.getframerate()
        raw = handle.readframes(n_frames)
    if len(raw) != 2 * n_frames:
        raise MalformedWav(f"{path}: data chunk truncated ({len(raw)} of {2 * n_frames} bytes)")
    if n_frames == 0:
        raise MalformedWav(f"{path}: no samples")
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / PCM_SCALE
    return AudioClip(samples, rate)


def atomic_write_bytes(path, data: bytes):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def encode_pcm16(samples) -> np.ndarray:
    ints = np.round(np.asarray(samples) * PCM_SCALE)
    return np.clip(ints, -32768, 32767).astype("<i2")


def write_wav(path, clip: AudioClip):
    """Write a 16-bit mono PCM WAV (atomically)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        with wave.open(tmp, "wb") as handle:
            handle.setnchannels(1)
            handle.setsampwidth(2)
            handle.setframerate(clip.sample_rate_hz)
            handle.writeframes(encode_pcm16(clip.samples).tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# Manifest ------------------------------------------------------------------


def parse_manifest(path, check_audio: bool = True) -> Corpus:
    """Read the label manifest CSV into a Corpus with deferred audio loading.

    With ``check_audio`` every referenced WAV header is opened so that
    missing files, bad formats and mixed sample rates fail here rather
    than halfway through extraction.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(str(path))
    base = path.parent
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        if sorted(h.strip() for h in header) != sorted(MANIFEST_COLUMNS):
            raise MalformedManifest(
                f"manifest columns must be exactly {', '.join(MANIFEST_COLUMNS)}; got {header}"
            )
        rows = [{k.strip(): (v or "").strip() for k, v in row.items()} for row in reader]

    entries = []
    seen = set()
    for lineno, row in enumerate(rows, start=2):
        if None in row:
            raise MalformedManifest(f"line {lineno}: too many fields")
        rid = row["recording_id"]
        if rid in seen:
            raise DuplicateId(f"line {lineno}: duplicate recording_id {rid!r}")
        seen.add(rid)
        try:
            score = int(row["lsas_score"])
        except ValueError:
            raise MalformedManifest(f"line {lineno}: lsas_score {row['lsas_score']!r} is not an integer")
        src = row["path"]
        if not src:
            raise MalformedManifest(f"line {lineno}: empty path")
        full = str(base / src) if not os.path.isabs(src) else src
        try:
            meta = RecordingMeta(rid, row["speaker_id"], row["gender"], score, row["utterance_type"], full)
        except MalformedManifest as exc:
            raise MalformedManifest(f"line {lineno}: {exc}") from None
        entries.append(CorpusEntry(meta))

    if check_audio:
        rates = {wav_sample_rate(e.meta.source_path) for e in entries}
        if len(rates) > 1:
            raise MalformedManifest(f"recordings use mixed sample rates {sorted(rates)}; resample first")
    return Corpus(tuple(entries))


def write_manifest(path, metas: Sequence[RecordingMeta]):
    """Write metas as a manifest; source paths are stored relative to the manifest."""
    path = Path(path)
    base = path.parent.resolve()
    lines = [",".join(MANIFEST_COLUMNS)]
    for m in metas:
        rel = os.path.relpath(Path(m.source_path).resolve(), base) if m.source_path else ""
        lines.append(",".join([m.recording_id, m.speaker_id, m.gender, str(m.lsas_score), m.utterance_type, rel]))
    atomic_write_bytes(path, ("\n".join(lines) + "\n").encode("utf-8"))


# Synthetic utterances --------------------------------------------------------

PITCH_MIN_HZ = 60.0
PITCH_MAX_HZ = 500.0
DB_REF = 2e-5


@dataclass(frozen=True)
class SynthSpec:
    """Parameters of one synthetic utterance.

    Pause onsets are measured from the start of speech. ``f0_glide_hz`` and
    ``intensity_range_db`` add a linear pitch glide and a linear level ramp
    across the speech span (both centred on the nominal value).
    """

    f0_hz: float
    jitter_frac: float = 0.0
    shimmer_frac: float = 0.0
    intensity_db: float = 60.0
    leading_silence_s: float = 0.0
    internal_pauses: tuple = ()
    total_speech_s: float = 1.0
    trailing_silence_s: float = 0.0
    f0_glide_hz: float = 0.0
    intensity_range_db: float = 0.0

    def validate(self):
        lo = self.f0_hz - self.f0_glide_hz / 2
        hi = self.f0_hz + self.f0_glide_hz / 2
        if not (PITCH_MIN_HZ <= lo and hi <= PITCH_MAX_HZ) or self.f0_glide_hz < 0:
            raise InvalidSpec(f"f0 range [{lo}, {hi}] Hz outside [{PITCH_MIN_HZ}, {PITCH_MAX_HZ}]")
        if not 0 <= self.jitter_frac < 0.5 or not 0 <= self.shimmer_frac < 1:
            raise InvalidSpec("jitter_frac must be in [0, 0.5) and shimmer_frac in [0, 1)")
        if self.leading_silence_s < 0 or self.trailing_silence_s < 0 or self.total_speech_s <= 0:
            raise InvalidSpec("silence lengths must be >= 0 and total_speech_s > 0")
        if self.intensity_range_db < 0 or not np.isfinite(self.intensity_db):
            raise InvalidSpec("bad intensity parameters")
        prev_end = 0.0
        for onset, length in sorted(self.internal_pauses):
            if length <= 0 or onset <= prev_end or onset + length >= self.total_speech_s:
                raise InvalidSpec(f"pause ({onset}, {length}) not strictly inside the speech span")
            prev_end = onset + length


def _pulse_times(spec: SynthSpec, span_s: float):
    """Pulse onsets (seconds from speech start) and amplitude multipliers."""
    times, amps = [], []
    t, k = 0.0, 0
    lo = spec.f0_hz - spec.f0_glide_hz / 2
    while t < span_s:
        times.append(t)
        sign = 1.0 if k % 2 == 0 else -1.0
        amps.append(1.0 + sign * spec.shimmer_frac)
        f0 = lo + spec.f0_glide_hz * (t / span_s)
        t += (1.0 + sign * spec.jitter_frac) / f0
        k += 1
    return np.array(times), np.array(amps)


def synthesize_utterance(spec: SynthSpec, sample_rate_hz: int = 48000) -> AudioClip:
    """Glottal-pulse train with exact alternating period/amplitude perturbation.

    Each pulse is ``(tau/tau0) * exp(1 - tau/tau0)`` (unit peak at ``tau0``),
    evaluated at sample times so pulse positions are not quantised to the
    sample grid. Leading silence, pauses and trailing silence are exact
    digital zeros.
    """
    spec.validate()
    sr = int(sample_rate_hz)
    if sr <= 0:
        raise InvalidSpec("sample rate must be positive")
    nominal_period = 1.0 / (spec.f0_hz + spec.f0_glide_hz / 2)
    tau0 = min(0.4e-3, nominal_period / 10)
    kernel_len = int(np.ceil(16 * tau0 * sr)) + 1

    lead = int(round(spec.leading_silence_s * sr))
    n_speech = int(round(spec.total_speech_s * sr))
    n_total = lead + n_speech + int(round(spec.trailing_silence_s * sr))
    speech = np.zeros(n_speech + kernel_len + 1)

    times, amps = _pulse_times(spec, n_speech / sr)
    start = np.ceil(times * sr).astype(int)
    idx = start[:, None] + np.arange(kernel_len)[None, :]
    tau = idx / sr - times[:, None]
    shape = (tau / tau0) * np.exp(1.0 - tau / tau0)
    np.add.at(speech, idx.ravel(), (amps[:, None] * shape).ravel())
    speech = speech[:n_speech]

    gate = np.ones(n_speech, dtype=bool)
    for onset, length in spec.internal_pauses:
        a = int(round(onset * sr))
        b = int(round((onset + length) * sr))
        gate[a:b] = False
    speech[~gate] = 0.0

    rms = np.sqrt(np.mean(speech[gate] ** 2))
    target = DB_REF * 10 ** (spec.intensity_db / 20.0)
    speech *= target / rms
    if spec.intensity_range_db > 0:
        ramp_db = np.linspace(-spec.intensity_range_db / 2, spec.intensity_range_db / 2, n_speech)
        speech *= 10 ** (ramp_db / 20.0)
    if np.max(np.abs(speech)) > 1.0:
        raise InvalidSpec(f"intensity {spec.intensity_db} dB exceeds full scale for this waveform")

    out = np.zeros(n_total)
    out[lead:lead + n_speech] = speech
    return AudioClip(out, sr)
