"""Autocorrelation pitch tracker used to auto-label recordings.

Per frame, peaks of the window-compensated autocorrelation become pitch
candidates (refined by parabolic interpolation, with a small bias toward
higher frequencies). A Viterbi pass then picks one candidate per frame,
trading candidate strength against voicing changes and octave jumps.
Frames quieter than ``silence_threshold`` times the loudest frame are forced
unvoiced.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dsp
from .audio_io import CANONICAL_RATE, AudioBuffer, resample_to_44100
from .codec import hz_to_midi


@dataclass(frozen=True)
class TrackerConfig:
    f_min: float = 55.0
    f_max: float = 1760.0
    voicing_threshold: float = 0.45
    silence_threshold: float = 0.03
    octave_cost: float = 0.055
    voiced_unvoiced_cost: float = 0.14
    octave_jump_cost: float = 0.35
    max_candidates: int = 15
    # analysis window for the autocorrelation; the hop stays at 10 ms
    window_len: int = 2048

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ValueError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        for name in ("voicing_threshold", "silence_threshold", "octave_cost",
                     "voiced_unvoiced_cost", "octave_jump_cost"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.max_candidates < 1:
            raise ValueError("max_candidates must be >= 1")

    def check_rate(self, sample_rate: float) -> None:
        if not self.f_max < sample_rate / 2:
            raise ValueError(f"f_max {self.f_max} Hz must be below Nyquist ({sample_rate / 2} Hz)")

    def frame_spec(self, sample_rate: int = CANONICAL_RATE) -> dsp.FrameSpec:
        return dsp.FrameSpec(self.window_len, round(sample_rate * 0.01), sample_rate)


@dataclass(frozen=True)
class PitchCandidate:
    lag: float        # fractional samples; 0 marks the unvoiced candidate
    strength: float

    @property
    def voiced(self) -> bool:
        return self.lag > 0


@dataclass(frozen=True, eq=False)
class PitchTrack:
    frame_times: np.ndarray
    midi: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.frame_times, dtype=np.float64)
        midi = np.asarray(self.midi, dtype=np.float64)
        if times.shape != midi.shape or midi.ndim != 1:
            raise ValueError("frame_times and midi must be 1-D and equal length")
        object.__setattr__(self, "frame_times", times)
        object.__setattr__(self, "midi", midi)

    def __len__(self) -> int:
        return self.midi.shape[0]

    @property
    def voiced(self) -> np.ndarray:
        return self.midi > 0

    @classmethod
    def on_grid(cls, midi, hop_seconds: float = 0.01) -> "PitchTrack":
        midi = np.asarray(midi, dtype=np.float64)
        return cls(np.arange(midi.shape[0]) * hop_seconds, midi)


def candidates_for_frame(r: np.ndarray, config: TrackerConfig = TrackerConfig(),
                         sample_rate: int = CANONICAL_RATE) -> list[PitchCandidate]:
    """Pitch candidates from one row of corrected autocorrelation.

    The unvoiced candidate (strength ``voicing_threshold``) is always first;
    voiced candidates follow by decreasing strength, at most
    ``max_candidates - 1`` of them.
    """
    out = [PitchCandidate(0.0, config.voicing_threshold)]
    r = np.asarray(r, dtype=np.float64)
    lag_lo = sample_rate / config.f_max
    lag_hi = sample_rate / config.f_min
    i_lo = max(1, int(np.floor(lag_lo)))
    i_hi = min(len(r) - 2, int(np.ceil(lag_hi)))
    if i_hi < i_lo or r[0] <= 0:
        return out

    idx = np.arange(i_lo, i_hi + 1)
    left, mid, right = r[idx - 1], r[idx], r[idx + 1]
    peaks = (mid > left) & (mid >= right) & (mid > 0)
    idx, left, mid, right = idx[peaks], left[peaks], mid[peaks], right[peaks]
    if idx.size == 0:
        return out

    curv = left - 2.0 * mid + right
    shift = np.where(curv < 0, 0.5 * (left - right) / np.where(curv < 0, curv, 1.0), 0.0)
    shift = np.clip(shift, -0.5, 0.5)
    lags = idx + shift
    values = mid - 0.25 * (left - right) * shift
    keep = (lags >= lag_lo) & (lags <= lag_hi)
    lags, values = lags[keep], values[keep]
    strengths = values - config.octave_cost * np.log2(config.f_min * lags / sample_rate)

    order = np.argsort(-strengths, kind="stable")[: config.max_candidates - 1]
    out.extend(PitchCandidate(float(lags[i]), float(strengths[i])) for i in order)
    return out


def _transition(prev: list[PitchCandidate], nxt: list[PitchCandidate],
                config: TrackerConfig) -> np.ndarray:
    a = np.array([c.lag for c in prev])[:, None]
    b = np.array([c.lag for c in nxt])[None, :]
    va, vb = a > 0, b > 0
    jump = config.octave_jump_cost * np.abs(
        np.log2(np.where(va, a, 1.0) / np.where(vb, b, 1.0)))
    return np.where(va & vb, jump, np.where(va != vb, config.voiced_unvoiced_cost, 0.0))


def viterbi_indices(candidate_lists, config: TrackerConfig = TrackerConfig()) -> list[int]:
    """Minimum-cost candidate index per frame.

    Ties go to the lexicographically smallest index sequence: a backward pass
    computes cost-to-go, then a forward pass takes the first minimiser at
    every frame.
    """
    n = len(candidate_lists)
    if n == 0:
        raise ValueError("need at least one frame")
    strengths = [np.array([c.strength for c in cl]) for cl in candidate_lists]
    trans = [_transition(candidate_lists[t], candidate_lists[t + 1], config)
             for t in range(n - 1)]
    to_go = [None] * n
    to_go[-1] = -strengths[-1]
    for t in range(n - 2, -1, -1):
        to_go[t] = -strengths[t] + np.min(trans[t] + to_go[t + 1][None, :], axis=1)
    path = [int(np.argmin(to_go[0]))]
    for t in range(n - 1):
        path.append(int(np.argmin(trans[t][path[-1]] + to_go[t + 1])))
    return path


def best_path(candidate_lists, config: TrackerConfig = TrackerConfig(),
              volumes=None, sample_rate: int = CANONICAL_RATE,
              frame_times=None) -> PitchTrack:
    """Smooth per-frame candidates into a MIDI track.

    Parameters
    ----------
    candidate_lists : sequence of candidate lists, one per frame
    volumes : array_like, optional
        Peak amplitude of each raw frame. Frames below
        ``silence_threshold * max(volumes)`` keep only the unvoiced candidate.
    """
    lists = [list(cl) for cl in candidate_lists]
    if volumes is not None:
        volumes = np.asarray(volumes, dtype=np.float64)
        peak = volumes.max() if volumes.size else 0.0
        quiet = volumes < config.silence_threshold * peak if peak > 0 else np.ones(len(lists), bool)
        lists = [[cl[0]] if q else cl for cl, q in zip(lists, quiet)]
    path = viterbi_indices(lists, config)
    lags = np.array([lists[t][i].lag for t, i in enumerate(path)])
    midi = np.zeros(len(lags))
    v = lags > 0
    midi[v] = hz_to_midi(sample_rate / lags[v])
    if frame_times is None:
        frame_times = np.arange(len(lags)) * 0.01
    return PitchTrack(frame_times, midi)


def label(buffer: AudioBuffer, config: TrackerConfig = TrackerConfig()) -> PitchTrack:
    """Auto-label ``buffer`` with one MIDI value per 10 ms frame."""
    buffer = resample_to_44100(buffer)
    config.check_rate(buffer.sample_rate)
    spec = config.frame_spec(buffer.sample_rate)
    frames, times = dsp.frame_signal(buffer, spec)
    if frames.shape[0] == 0:
        return PitchTrack(np.zeros(0), np.zeros(0))
    acf = dsp.corrected_autocorrelation(frames, dsp.hann_window(spec.window_len))
    cands = [candidates_for_frame(row, config, buffer.sample_rate) for row in acf]
    return best_path(cands, config, dsp.volume(frames), buffer.sample_rate, times)


def write_labels(track: PitchTrack, path) -> None:
    """CSV with header ``time_s,midi``; unvoiced frames are written as ``0``."""
    with open(path, "w", newline="") as fh:
        fh.write("time_s,midi\n")
        for t, m in zip(track.frame_times, track.midi):
            fh.write(f"{t:.6f},{m:.6f}\n" if m > 0 else f"{t:.6f},0\n")


def read_labels(path) -> PitchTrack:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0]] != ["time_s", "midi"]:
        raise ValueError(f"{path}: expected header 'time_s,midi'")
    try:
        data = np.array([[float(a), float(b)] for a, b in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{Path(path).name}: malformed label row ({exc})") from None
    data = data.reshape(-1, 2)
    return PitchTrack(data[:, 0], data[:, 1])
