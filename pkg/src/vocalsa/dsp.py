"""Frame-level analysis of a clip: pitch, intensity, speech segmentation and
glottal period extraction."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .corpus import DB_REF, AudioClip
from .errors import ClipTooShort, NoSpeechDetected, NoVoicedRegion


@dataclass(frozen=True)
class DspParams:
    pitch_window_s: float = 0.040
    pitch_hop_s: float = 0.010
    pitch_floor_hz: float = 60.0
    pitch_ceil_hz: float = 500.0
    voicing_threshold: float = 0.45
    octave_cost: float = 0.05
    intensity_window_s: float = 0.032
    intensity_hop_s: float = 0.010
    silence_floor_db: float = 0.0
    vad_offset_db: float = 10.0
    vad_noise_window_s: float = 0.100
    vad_hangover_s: float = 0.080
    period_search_frac: float = 0.20


DEFAULT_PARAMS = DspParams()


@dataclass(frozen=True, eq=False)
class PitchTrack:
    times_s: np.ndarray
    f0_hz: np.ndarray  # NaN marks unvoiced frames
    strength: np.ndarray
    window_s: float
    hop_s: float
    floor_hz: float
    ceil_hz: float

    @property
    def voiced(self) -> np.ndarray:
        return np.isfinite(self.f0_hz)

    def voiced_runs(self, min_frames: int = 1) -> List[Tuple[int, int]]:
        """Maximal runs of voiced frames as inclusive (first, last) indices."""
        return [(a, b) for a, b in _runs(self.voiced) if b - a + 1 >= min_frames]


@dataclass(frozen=True, eq=False)
class IntensityTrack:
    times_s: np.ndarray
    levels_db: np.ndarray
    window_s: float
    hop_s: float
    floor_db: float
    duration_s: float

    @property
    def starts_s(self) -> np.ndarray:
        return self.times_s - self.window_s / 2


@dataclass(frozen=True)
class Segmentation:
    speech_onset_s: float
    speech_end_s: float
    silent_gaps: tuple  # (start_s, length_s)
    voiced_intervals: tuple  # speech stretches between gaps, (start_s, end_s)
    threshold_db: float = 0.0
    speech_frames: Optional[np.ndarray] = field(default=None, compare=False, repr=False)


@dataclass(frozen=True, eq=False)
class PeriodSequence:
    intervals: tuple  # one (periods_s, peak_amplitudes) pair per voiced interval
    maxima_count: int

    @property
    def periods_s(self) -> np.ndarray:
        return np.concatenate([p for p, _ in self.intervals]) if self.intervals else np.empty(0)

    @property
    def peak_amplitudes(self) -> np.ndarray:
        return np.concatenate([a for _, a in self.intervals]) if self.intervals else np.empty(0)


def _runs(mask):
    """Inclusive (start, end) index pairs of the True runs in a boolean array."""
    mask = np.asarray(mask, dtype=bool)
    if mask.size == 0:
        return []
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def _frame(x, width, hop):
    if x.size < width:
        raise ClipTooShort(f"clip has {x.size} samples, shorter than one {width}-sample window")
    return sliding_window_view(x, width)[::hop]


def _to_db(rms, floor_db):
    with np.errstate(divide="ignore"):
        level = 20.0 * np.log10(rms / DB_REF)
    return np.maximum(level, floor_db)


def track_intensity(clip: AudioClip, params: DspParams = DEFAULT_PARAMS) -> IntensityTrack:
    sr = clip.sample_rate_hz
    width = int(round(params.intensity_window_s * sr))
    hop = int(round(params.intensity_hop_s * sr))
    frames = _frame(clip.samples, width, hop)
    rms = np.sqrt(np.einsum("ij,ij->i", frames, frames) / width)
    times = (np.arange(len(frames)) * hop + width / 2) / sr
    return IntensityTrack(
        times_s=times,
        levels_db=_to_db(rms, params.silence_floor_db),
        window_s=width / sr,
        hop_s=hop / sr,
        floor_db=params.silence_floor_db,
        duration_s=clip.duration_s,
    )


def energy_threshold_db(intensity: IntensityTrack, params: DspParams = DEFAULT_PARAMS) -> float:
    """Speech threshold: noise floor (median of the first 100 ms) + offset.

    The threshold is capped at ``max level - offset`` so that a recording
    that starts mid-speech still has speech frames.
    """
    levels = intensity.levels_db
    lead = intensity.starts_s + intensity.window_s <= params.vad_noise_window_s + 1e-9
    noise = float(np.median(levels[lead])) if lead.any() else float(levels[0])
    return min(noise + params.vad_offset_db, float(levels.max()) - params.vad_offset_db)


def _bridge(mask, max_gap_frames):
    out = mask.copy()
    runs = _runs(~mask)
    for a, b in runs:
        if a > 0 and b < mask.size - 1 and (b - a + 1) < max_gap_frames:
            out[a:b + 1] = True
    return out


def detect_activity(
    clip: AudioClip, intensity: IntensityTrack, params: DspParams = DEFAULT_PARAMS
) -> Segmentation:
    """Energy VAD with speech onset/end and internal silent gaps.

    Boundaries are placed by window coverage: a sub-threshold frame proves
    its whole window silent, so a run of silent frames i..k spans from the
    start of window i to the end of window k, and each boundary is put
    half a hop outside that span.
    """
    levels = intensity.levels_db
    threshold = energy_threshold_db(intensity, params)
    speech = (levels >= threshold) & (levels > intensity.floor_db)
    if not speech.any():
        raise NoSpeechDetected("no frame exceeds the energy threshold")

    hop, win, dur = intensity.hop_s, intensity.window_s, intensity.duration_s
    starts = intensity.starts_s
    max_gap = int(round(params.vad_hangover_s / hop))
    bridged = _bridge(speech, max_gap)
    idx = np.flatnonzero(bridged)
    first, last = int(idx[0]), int(idx[-1])

    onset = 0.0 if first == 0 else starts[first] + win - hop / 2
    end = dur if last == len(levels) - 1 else starts[last] + hop / 2
    onset = float(min(max(onset, 0.0), dur))
    end = float(min(max(end, onset), dur))

    gaps = []
    for a, b in _runs(~speech[first:last + 1]):
        a += first
        b += first
        g0 = max(starts[a] - hop / 2, onset)
        g1 = min(starts[b] + win + hop / 2, end)
        if g1 > g0:
            gaps.append((float(g0), float(g1 - g0)))

    intervals = []
    cursor = onset
    for g0, glen in gaps:
        if g0 > cursor:
            intervals.append((cursor, g0))
        cursor = g0 + glen
    if end > cursor:
        intervals.append((cursor, end))

    return Segmentation(onset, end, tuple(gaps), tuple(intervals), threshold, speech)


def _nccf(frames, min_lag, max_lag):
    """Normalized cross-correlation of each frame with its own lagged copy.

    Returns r[:, j] for lags min_lag - 1 + j, j = 0 .. (max_lag - min_lag + 2).
    """
    n = frames.shape[1]
    x = frames - frames.mean(axis=1, keepdims=True)
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    spec = np.fft.rfft(x, nfft, axis=1)
    acf = np.fft.irfft(spec * np.conj(spec), nfft, axis=1)[:, :n]
    cs = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(x * x, axis=1)], axis=1)
    lags = np.arange(min_lag - 1, max_lag + 2)
    e_head = cs[:, n - lags]
    e_tail = cs[:, [n]] - cs[:, lags]
    denom = np.sqrt(np.maximum(e_head * e_tail, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 0, acf[:, lags] / denom, 0.0)
    return np.clip(r, -1.0, 1.0), lags


def _repair_octave_jumps(f0, strength, freq, height, candidate, span=2, jump=0.5, snap=0.25):
    """Fix isolated octave errors in place.

    A voiced frame more than ``jump`` octaves from the median of its
    voiced neighbours (``span`` frames each side, same run) takes the
    candidate peak closest to that median; if none lies within ``snap``
    octaves the frame is marked unvoiced.
    """
    voiced = np.isfinite(f0)
    log_f = np.log2(np.where(voiced, f0, 1.0))
    fixes = []
    for a, b in _runs(voiced):
        if b - a < 2:
            continue
        for i in range(a, b + 1):
            lo, hi = max(a, i - span), min(b, i + span)
            ref = float(np.median(log_f[lo:hi + 1]))
            if abs(log_f[i] - ref) <= jump:
                continue
            options = np.flatnonzero(candidate[i])
            if options.size:
                dist = np.abs(np.log2(freq[i, options]) - ref)
                j = options[int(np.argmin(dist))]
                if dist.min() <= snap:
                    fixes.append((i, freq[i, j], height[i, j]))
                    continue
            fixes.append((i, np.nan, strength[i]))
    for i, f, h in fixes:
        f0[i] = f
        strength[i] = h


def track_pitch(
    clip: AudioClip,
    floor_hz: Optional[float] = None,
    ceil_hz: Optional[float] = None,
    params: DspParams = DEFAULT_PARAMS,
    energy_threshold: Optional[float] = None,
) -> PitchTrack:
    """Autocorrelation pitch tracker (40 ms windows, 10 ms hop).

    Candidates are local maxima of the normalized autocorrelation refined
    by parabolic interpolation; each is scored by its height minus
    ``octave_cost`` per octave below the floor-pitch lag, which keeps
    exact multiples of the period from winning. A frame is voiced when the
    winning peak height reaches the voicing threshold and the frame RMS
    reaches the VAD energy threshold.
    """
    floor_hz = params.pitch_floor_hz if floor_hz is None else floor_hz
    ceil_hz = params.pitch_ceil_hz if ceil_hz is None else ceil_hz
    if not 0 < floor_hz < ceil_hz:
        raise ValueError("pitch floor must be positive and below the ceiling")
    sr = clip.sample_rate_hz
    width = int(round(params.pitch_window_s * sr))
    hop = int(round(params.pitch_hop_s * sr))
    frames = _frame(clip.samples, width, hop)
    min_lag = max(2, int(np.floor(sr / ceil_hz)))
    max_lag = int(np.ceil(sr / floor_hz))
    if max_lag + 2 >= width:
        raise ClipTooShort("pitch window too short for the pitch floor")

    if energy_threshold is None:
        energy_threshold = energy_threshold_db(track_intensity(clip, params), params)
    frame_db = _to_db(np.sqrt(np.mean(frames * frames, axis=1)), params.silence_floor_db)
    loud = (frame_db >= energy_threshold) & (frame_db > params.silence_floor_db)

    r, lags = _nccf(frames, min_lag, max_lag)
    mid, left, right = r[:, 1:-1], r[:, :-2], r[:, 2:]
    is_peak = (mid > left) & (mid >= right)
    curv = left - 2 * mid + right
    with np.errstate(divide="ignore", invalid="ignore"):
        delta = np.where(curv < 0, 0.5 * (left - right) / curv, 0.0)
    delta = np.clip(delta, -0.5, 0.5)
    height = mid - 0.25 * (left - right) * delta
    lag = lags[1:-1][None, :] + delta
    freq = sr / lag
    in_range = (freq >= floor_hz) & (freq <= ceil_hz)
    score = height - params.octave_cost * np.log2(floor_hz * lag / sr)
    score = np.where(is_peak & in_range, score, -np.inf)

    best = np.argmax(score, axis=1)
    rows = np.arange(len(frames))
    has_peak = np.isfinite(score[rows, best])
    best_height = np.where(has_peak, height[rows, best], 0.0)
    voiced = has_peak & loud & (best_height >= params.voicing_threshold)
    f0 = np.where(voiced, freq[rows, best], np.nan)
    candidate = np.isfinite(score) & (height >= params.voicing_threshold)
    _repair_octave_jumps(f0, best_height, freq, height, candidate)
    times = (np.arange(len(frames)) * hop + width / 2) / sr
    return PitchTrack(times, f0, best_height, width / sr, hop / sr, float(floor_hz), float(ceil_hz))


def _parabolic(x, i):
    if 0 < i < x.size - 1:
        a, b, c = x[i - 1], x[i], x[i + 1]
        curv = a - 2 * b + c
        if curv < 0:
            d = float(np.clip(0.5 * (a - c) / curv, -0.5, 0.5))
            return i + d, b - 0.25 * (a - c) * d
    return float(i), float(x[i])


def extract_periods(
    clip: AudioClip, pitch: PitchTrack, params: DspParams = DEFAULT_PARAMS, min_run_frames: int = 3
) -> PeriodSequence:
    """Cycle-by-cycle waveform maxima inside each voiced interval.

    From the largest sample in the first local period, each next maximum
    is searched within +-20% of the local period (taken from the pitch
    track). Positions and heights are refined parabolically. A chain
    breaks when a maximum collapses below a quarter of the previous one
    and restarts with a fresh scan; differences are never taken across a
    break.
    """
    x = clip.samples
    sr = clip.sample_rate_hz
    runs = pitch.voiced_runs(min_frames=min_run_frames)
    if not runs:
        raise NoVoicedRegion(f"no run of {min_run_frames} consecutive voiced frames")
    lag_lo = int(np.ceil(sr / pitch.ceil_hz)) + 1
    lag_hi = int(np.floor(sr / pitch.floor_hz)) - 1
    intervals = []
    maxima = 0
    for a, b in runs:
        t_frames = pitch.times_s[a:b + 1]
        f_frames = pitch.f0_hz[a:b + 1]
        start = max(0, int(np.floor((t_frames[0] - pitch.hop_s / 2) * sr)))
        stop = min(x.size - 1, int(np.ceil((t_frames[-1] + pitch.hop_s / 2) * sr)))

        def local_period(pos):
            return sr / float(np.interp(pos / sr, t_frames, f_frames))

        floor_amp = 0.25 * float(np.max(x[start:stop + 1]))
        cursor = start
        while floor_amp > 0 and cursor < stop:
            # first maximum: scan period-long windows until one holds a real pulse
            amp = 0.0
            while cursor < stop:
                width = max(1, int(round(local_period(cursor))))
                q = cursor + int(np.argmax(x[cursor:min(stop, cursor + width) + 1]))
                pos, amp = _parabolic(x, q)
                cursor += width
                if amp >= floor_amp:
                    break
            if amp < floor_amp or amp <= 0:
                break
            positions, amps = [pos], [amp]
            while True:
                period = local_period(pos)
                lo = max(int(np.ceil(pos + (1 - params.period_search_frac) * period)), int(np.ceil(pos)) + lag_lo)
                hi = min(int(np.floor(pos + (1 + params.period_search_frac) * period)), int(np.floor(pos)) + lag_hi)
                if hi > stop or lo > hi:
                    break
                q = lo + int(np.argmax(x[lo:hi + 1]))
                new_pos, new_amp = _parabolic(x, q)
                if new_amp <= 0 or new_amp < 0.25 * amps[-1]:
                    break
                positions.append(new_pos)
                amps.append(new_amp)
                pos = new_pos
            # a broken chain restarts just after its last maximum
            cursor = max(cursor, int(np.floor(pos)) + 1)
            if len(positions) < 2:
                continue  # a lone maximum carries no period
            maxima += len(positions)
            intervals.append((np.diff(positions) / sr, np.abs(np.array(amps[:-1]))))
    if maxima == 0:
        raise NoVoicedRegion("no waveform maxima found in voiced intervals")
    return PeriodSequence(tuple(intervals), maxima)


def analyze(clip: AudioClip, params: DspParams = DEFAULT_PARAMS):
    """Run the full chain; returns (intensity, segmentation, pitch, periods)."""
    intensity = track_intensity(clip, params)
    seg = detect_activity(clip, intensity, params)
    pitch = track_pitch(clip, params=params, energy_threshold=seg.threshold_db)
    periods = extract_periods(clip, pitch, params)
    return intensity, seg, pitch, periods
