"""Synthetic and auto-labelled training corpora.

Three generators, each returning :class:`DatasetSample` objects:

* :func:`synth_sample` renders a random note score with simple oscillators,
  an optional low-pass filter and additive Gaussian noise. Labels come
  straight from the score.
* :func:`vowel_sample` fills a random score with stretched vowel recordings
  (stretching by resampling, so pitch moves too) and labels the result with
  the autocorrelation tracker.
* :func:`segment_and_label` cuts a long recording into fixed-length,
  zero-padded segments and labels each.

Every generator is a pure function of its config (including the seed).
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import signal

from . import labeler
from .audio_io import CANONICAL_RATE, AudioBuffer, write_wav
from .codec import midi_to_hz
from .labeler import PitchTrack, TrackerConfig

WAVEFORMS = ("sine", "triangle", "square", "sawtooth")
HOP = 441
FADE_S = 0.005
MANIFEST_FIELDS = ("name", "provenance", "seed", "duration_s")


@dataclass(frozen=True)
class NoteEvent:
    onset: float
    duration: float
    pitch: float
    amplitude: float = 1.0

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    total_duration: float = 7.0
    pitch_range: tuple[float, float] = (36.0, 84.0)
    duration_range: tuple[float, float] = (0.1, 1.5)
    rest_probability: float = 0.2
    filter_probability: float = 0.3
    cutoff_range: tuple[float, float] = (1000.0, 20000.0)
    noise_amplitude: float = 0.1
    amplitude_range: tuple[float, float] = (0.3, 0.8)
    waveforms: tuple[str, ...] = WAVEFORMS
    filter_order: int = 2
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        for name in ("rest_probability", "filter_probability"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        for name in ("pitch_range", "duration_range", "cutoff_range", "amplitude_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} must be ordered, got ({lo}, {hi})")
        if self.duration_range[0] <= 0 or self.total_duration <= 0:
            raise ValueError("durations must be positive")
        if not (0 < self.pitch_range[0] and self.pitch_range[1] <= 127):
            raise ValueError("pitch_range must lie within (0, 127]")
        if self.cutoff_range[1] >= self.sample_rate / 2:
            raise ValueError("cutoff_range must stay below Nyquist")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be >= 0")
        unknown = set(self.waveforms) - set(WAVEFORMS)
        if unknown or not self.waveforms:
            raise ValueError(f"waveforms must be a non-empty subset of {WAVEFORMS}")


@dataclass(eq=False)
class DatasetSample:
    audio: AudioBuffer
    labels: PitchTrack
    provenance: str
    seed: int
    meta: dict = field(default_factory=dict)


def n_frames(n_samples: int) -> int:
    return -(-n_samples // HOP)


def score_labels(notes, n_samples: int, sample_rate: int = CANONICAL_RATE) -> PitchTrack:
    """Analytic labels: each 10 ms frame takes the pitch of the note sounding
    at its centre, or 0 in rests."""
    t = n_frames(n_samples)
    times = np.arange(t) * HOP / sample_rate
    midi = np.zeros(t)
    for note in notes:
        midi[(times >= note.onset) & (times < note.end)] = note.pitch
    return PitchTrack(times, midi)


def sample_score(config: SynthConfig, rng: np.random.Generator,
                 with_pitch: bool = True) -> list[NoteEvent]:
    """Non-overlapping notes tiling ``[0, total_duration]`` with random rests.

    A draw that would leave less than the minimum duration before the end is
    stretched to the end instead, so ``rest_probability=0`` tiles exactly.
    """
    total = config.total_duration
    d_lo, d_hi = config.duration_range
    notes = []
    t = 0.0
    while t < total - 1e-9:
        d = rng.uniform(d_lo, d_hi)
        if t + d > total - d_lo:
            d = total - t
        is_rest = rng.random() < config.rest_probability
        pitch = rng.uniform(*config.pitch_range) if with_pitch else 0.0
        amp = rng.uniform(*config.amplitude_range)
        if not is_rest:
            notes.append(NoteEvent(t, d, pitch, amp))
        t += d
    return notes


def _oscillator(waveform: str, cycles: np.ndarray) -> np.ndarray:
    frac = cycles % 1.0
    if waveform == "sine":
        return np.sin(2 * np.pi * frac)
    if waveform == "square":
        return np.where(frac < 0.5, 1.0, -1.0)
    if waveform == "sawtooth":
        return 2.0 * frac - 1.0
    if waveform == "triangle":
        return 1.0 - 4.0 * np.abs(frac - 0.5)
    raise ValueError(f"unknown waveform {waveform!r}")


def render_note(pitch: float, duration: float, amplitude: float, waveform: str,
                rng: np.random.Generator | None = None,
                sample_rate: int = CANONICAL_RATE) -> AudioBuffer:
    """Naive (non band-limited) oscillator at the pitch's frequency, with
    5 ms linear fades. A generator, if given, randomises the start phase."""
    if pitch <= 0:
        raise ValueError("render_note needs a voiced pitch")
    n = int(round(duration * sample_rate))
    phase0 = rng.random() if rng is not None else 0.0
    cycles = phase0 + midi_to_hz(pitch) * np.arange(n) / sample_rate
    y = amplitude * _oscillator(waveform, cycles)
    fade = min(int(round(FADE_S * sample_rate)), n // 2)
    if fade:
        ramp = np.arange(fade) / fade
        y[:fade] *= ramp
        y[n - fade:] *= ramp[::-1]
    return AudioBuffer(y, sample_rate)


def _place(out: np.ndarray, onset: float, clip: np.ndarray, sample_rate: int) -> None:
    a = int(round(onset * sample_rate))
    b = min(len(out), a + len(clip))
    out[a:b] += clip[: b - a]


def lowpass(x: np.ndarray, cutoff: float, order: int = 2,
            sample_rate: int = CANONICAL_RATE) -> np.ndarray:
    sos = signal.butter(order, cutoff, btype="low", fs=sample_rate, output="sos")
    return signal.sosfilt(sos, x)


def synth_sample(config: SynthConfig) -> DatasetSample:
    """One synthesizer clip with analytic labels.

    ``meta`` records the waveform per note, whether the low-pass ran and its
    cutoff, the noise standard deviation and the clean render's peak.
    """
    rng = np.random.default_rng(config.seed)
    sr = config.sample_rate
    notes = sample_score(config, rng)
    n = int(round(config.total_duration * sr))
    clean = np.zeros(n)
    waves = []
    for note in notes:
        wave = config.waveforms[rng.integers(len(config.waveforms))]
        waves.append(wave)
        _place(clean, note.onset,
               render_note(note.pitch, note.duration, note.amplitude, wave, rng, sr).samples, sr)

    filtered = rng.random() < config.filter_probability
    cutoff = float(rng.uniform(*config.cutoff_range))
    if filtered:
        clean = lowpass(clean, cutoff, config.filter_order, sr)
    peak = float(np.max(np.abs(clean))) if n else 0.0
    sigma = config.noise_amplitude * peak
    mix = clean + sigma * rng.standard_normal(n)
    top = np.max(np.abs(mix)) if n else 0.0
    gain = 1.0 / top if top > 1.0 else 1.0
    meta = {"waveforms": waves, "filtered": bool(filtered),
            "cutoff_hz": cutoff if filtered else None,
            "noise_sigma": sigma * gain, "clean_peak": peak * gain, "gain": gain,
            "notes": [asdict(x) for x in notes]}
    return DatasetSample(AudioBuffer(mix * gain, sr), score_labels(notes, n, sr),
                         "synth", config.seed, meta)


def trim_silence(buffer: AudioBuffer, rel_threshold: float = 0.02,
                 frame: int = HOP) -> AudioBuffer:
    """Drop leading/trailing frames whose RMS is below ``rel_threshold`` x peak."""
    x = buffer.samples
    if x.size == 0:
        return buffer
    peak = np.max(np.abs(x))
    if peak == 0:
        return AudioBuffer(np.zeros(0), buffer.sample_rate)
    nf = n_frames(x.size)
    padded = np.zeros(nf * frame)
    padded[: x.size] = x
    rms = np.sqrt(np.mean(padded.reshape(nf, frame) ** 2, axis=1))
    loud = np.nonzero(rms >= rel_threshold * peak)[0]
    if loud.size == 0:
        return AudioBuffer(np.zeros(0), buffer.sample_rate)
    return AudioBuffer(x[loud[0] * frame: min(x.size, (loud[-1] + 1) * frame)],
                       buffer.sample_rate)


def stretch(buffer: AudioBuffer, n_out: int) -> AudioBuffer:
    """Resample ``buffer`` to exactly ``n_out`` samples at the same rate.

    Played back at the original rate this lengthens the sound by
    ``n_out / len(buffer)`` and lowers its pitch by the same factor.
    """
    if n_out <= 0:
        return AudioBuffer(np.zeros(0), buffer.sample_rate)
    return AudioBuffer(signal.resample(buffer.samples, n_out), buffer.sample_rate)


def vowel_sample(vowel_library, config: SynthConfig,
                 tracker: TrackerConfig = TrackerConfig(),
                 min_length_s: float = 0.05) -> DatasetSample:
    """Fill a pitch-less score with stretched vowels and auto-label the result."""
    if not vowel_library:
        raise ValueError("vowel library is empty")
    rng = np.random.default_rng(config.seed)
    sr = config.sample_rate
    notes = sample_score(config, rng, with_pitch=False)
    n = int(round(config.total_duration * sr))
    out = np.zeros(n)
    picks, factors = [], []
    for note in notes:
        k = int(rng.integers(len(vowel_library)))
        src = vowel_library[k]
        if src.sample_rate != sr:
            raise ValueError(f"vowel {k} is at {src.sample_rate} Hz, expected {sr} Hz")
        trimmed = trim_silence(src)
        if len(trimmed) < min_length_s * sr:
            raise ValueError(
                f"vowel {k} is shorter than {min_length_s * 1000:.0f} ms after trimming")
        n_note = int(round(note.duration * sr))
        clip = stretch(trimmed, n_note).samples
        clip = clip * (note.amplitude / max(np.max(np.abs(clip)), 1e-12))
        _place(out, note.onset, clip, sr)
        picks.append(k)
        factors.append(n_note / len(trimmed))
    top = np.max(np.abs(out)) if n else 0.0
    if top > 1.0:
        out /= top
    audio = AudioBuffer(out, sr)
    meta = {"vowels": picks, "stretch_factors": factors,
            "notes": [asdict(x) for x in notes]}
    return DatasetSample(audio, labeler.label(audio, tracker), "vowel", config.seed, meta)


def segment_and_label(recording: AudioBuffer, segment_s: float = 7.0,
                      tracker: TrackerConfig = TrackerConfig()) -> list[DatasetSample]:
    """Split into ``segment_s`` chunks (last one zero-padded) and label each."""
    if recording.sample_rate != CANONICAL_RATE:
        raise ValueError(f"recording must be at {CANONICAL_RATE} Hz")
    seg = int(round(segment_s * recording.sample_rate))
    x = recording.samples
    out = []
    for i, start in enumerate(range(0, len(x), seg)):
        chunk = np.zeros(seg)
        piece = x[start:start + seg]
        chunk[: piece.size] = piece
        audio = AudioBuffer(chunk, recording.sample_rate)
        out.append(DatasetSample(audio, labeler.label(audio, tracker), "segmented", i,
                                 {"start_s": start / recording.sample_rate,
                                  "valid_samples": int(piece.size)}))
    return out


def sample_seed(master_seed: int, index: int) -> int:
    """Per-sample seed derived from the run seed; stable across platforms."""
    return int(np.random.SeedSequence([master_seed, index]).generate_state(1, np.uint64)[0])


def write_sample(sample: DatasetSample, out_dir, name: str) -> None:
    out_dir = Path(out_dir)
    write_wav(sample.audio, out_dir / f"{name}.wav")
    labeler.write_labels(sample.labels, out_dir / f"{name}.csv")


def write_manifest(rows, path) -> None:
    """``rows`` are ``(name, provenance, seed, duration_s)`` tuples."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_FIELDS)
        for name, prov, seed, dur in rows:
            w.writerow([name, prov, seed, f"{dur:.6f}"])


def read_manifest(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def manifest_hours(path) -> dict[str, float]:
    """Total hours per provenance in a manifest."""
    totals: dict[str, float] = {}
    for row in read_manifest(path):
        totals[row["provenance"]] = totals.get(row["provenance"], 0.0) + float(row["duration_s"])
    return {k: v / 3600.0 for k, v in totals.items()}


def write_run_info(path, **info) -> None:
    Path(path).write_text(json.dumps(info, indent=2, sort_keys=True, default=str) + "\n")


def with_seed(config: SynthConfig, seed: int) -> SynthConfig:
    return replace(config, seed=seed)
