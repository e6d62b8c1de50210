"""MIDI pitch <-> 128-bin probability vector, plus MIDI/Hz conversion.

A fractional MIDI pitch ``p`` is split linearly between the two neighbouring
integer bins, so 69.5 puts 0.5 on bins 69 and 70. Pitch 0 is the silence
sentinel and encodes to the all-zero vector.
"""
from __future__ import annotations

import numpy as np

N_PITCHES = 128
MAX_MIDI = N_PITCHES - 1
_BINS = np.arange(N_PITCHES, dtype=np.float64)


def encode(p: float) -> np.ndarray:
    if not (np.isfinite(p) and 0.0 <= p <= MAX_MIDI):
        raise ValueError(f"MIDI pitch must be in [0, {MAX_MIDI}], got {p!r}")
    e = np.zeros(N_PITCHES)
    if p == 0.0:
        return e
    m = int(np.floor(p))
    frac = p - m
    e[m] = 1.0 - frac
    if frac > 0.0 and m < MAX_MIDI:
        e[m + 1] = frac
    return e


def encode_track(midi) -> np.ndarray:
    """Vectorised :func:`encode` over a track; returns shape ``(T, 128)``."""
    midi = np.asarray(midi, dtype=np.float64)
    if np.any(~np.isfinite(midi)) or np.any(midi < 0) or np.any(midi > MAX_MIDI):
        raise ValueError(f"MIDI pitches must lie in [0, {MAX_MIDI}]")
    out = np.zeros(midi.shape + (N_PITCHES,))
    voiced = midi > 0
    m = np.floor(midi).astype(np.int64)
    frac = midi - m
    idx = np.nonzero(voiced)
    out[idx + (m[idx],)] = 1.0 - frac[idx]
    upper = voiced & (frac > 0) & (m < MAX_MIDI)
    idx = np.nonzero(upper)
    out[idx + (m[idx] + 1,)] = frac[idx]
    return out


def decode(e) -> float:
    """Expected MIDI number ``sum(i * e[i])``; 0 when total mass <= 0.5."""
    e = np.asarray(e, dtype=np.float64)
    if e.sum() <= 0.5:
        return 0.0
    return float(_BINS @ e)


def decode_local(e, radius: int = 4) -> float:
    """Expectation restricted to ``radius`` bins around the argmax.

    Off-peak mass (e.g. a secondary octave mode in a network output) is
    ignored. Returns 0 if the retained mass is below 1e-6.
    """
    e = np.asarray(e, dtype=np.float64)
    peak = int(np.argmax(e))
    lo, hi = max(0, peak - radius), min(N_PITCHES, peak + radius + 1)
    window = e[lo:hi]
    mass = window.sum()
    if mass < 1e-6:
        return 0.0
    return float(_BINS[lo:hi] @ window / mass)


def decode_track_local(probs, radius: int = 4) -> np.ndarray:
    """Apply :func:`decode_local` to every row of a ``(T, 128)`` array."""
    probs = np.asarray(probs, dtype=np.float64)
    return np.array([decode_local(row, radius) for row in probs])


def midi_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    out = 440.0 * np.exp2((m - 69.0) / 12.0)
    return float(out) if out.ndim == 0 else out


def hz_to_midi(f):
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise ValueError("frequency must be positive")
    out = 69.0 + 12.0 * np.log2(f / 440.0)
    return float(out) if out.ndim == 0 else out
