"""Frame-level spectral and autocorrelation features.

An audio buffer becomes a ``T x 4 x 513`` tensor whose channels are, in
order: FFT magnitude, phase with the sliding-window rotation removed,
window-compensated autocorrelation, and the frame's peak absolute amplitude.
Frames are centred on multiples of the hop (10 ms at 44.1 kHz) and padded
with zeros where they extend past either end of the signal.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioBuffer

TWO_PI = 2.0 * np.pi
CHANNELS = ("amplitude", "phase", "autocorrelation", "volume")
AMPLITUDE, PHASE, AUTOCORR, VOLUME = range(4)

_ACF_FLOOR = 1e-12
_PFT_MAGIC = b"PFT1"


@dataclass(frozen=True)
class FrameSpec:
    window_len: int = 1024
    hop: int = 441
    sample_rate: int = 44100

    def __post_init__(self):
        n = self.window_len
        if n < 2 or n & (n - 1):
            raise ValueError(f"window_len must be a power of two >= 2, got {n}")
        if not 0 < self.hop <= n:
            raise ValueError(f"hop must satisfy 0 < hop <= window_len, got {self.hop}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    @property
    def n_bins(self) -> int:
        return self.window_len // 2 + 1

    @property
    def overlap(self) -> int:
        return self.window_len - self.hop

    def n_frames(self, n_samples: int) -> int:
        return -(-n_samples // self.hop)

    def frame_times(self, n_frames: int) -> np.ndarray:
        return np.arange(n_frames) * self.hop / self.sample_rate


@dataclass(frozen=True, eq=False)
class FeatureTensor:
    """Preprocessed input: ``data[frame, channel, bin]`` plus frame centre times."""

    data: np.ndarray
    frame_times: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[1] != 4:
            raise ValueError(f"expected T x 4 x F data, got {self.data.shape}")
        if self.frame_times.shape != (self.data.shape[0],):
            raise ValueError("frame_times length must equal T")

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    def channel(self, name: str) -> np.ndarray:
        return self.data[:, CHANNELS.index(name), :]


def frame_signal(buffer: AudioBuffer, spec: FrameSpec = FrameSpec()):
    """Cut ``buffer`` into centred, zero-padded windows.

    Frame ``w`` covers samples ``[w*hop - L/2, w*hop + L/2)``.

    Returns
    -------
    frames : ndarray, shape (T, window_len)
    frame_times : ndarray, shape (T,)
    """
    if buffer.sample_rate != spec.sample_rate:
        raise ValueError(
            f"buffer is at {buffer.sample_rate} Hz, frame spec expects {spec.sample_rate} Hz")
    n = len(buffer)
    t = spec.n_frames(n)
    half = spec.window_len // 2
    if t == 0:
        return np.zeros((0, spec.window_len)), np.zeros(0)
    need = (t - 1) * spec.hop + spec.window_len
    padded = np.zeros(need)
    padded[half:half + n] = buffer.samples[: need - half]
    view = np.lib.stride_tricks.sliding_window_view(padded, spec.window_len)
    frames = view[:: spec.hop][:t].copy()
    return frames, spec.frame_times(t)


def hann_window(length: int) -> np.ndarray:
    """Periodic Hann window, ``0.5 * (1 - cos(2 pi n / L))``."""
    if length < 2:
        raise ValueError("Hann window needs length >= 2")
    n = np.arange(length)
    return 0.5 * (1.0 - np.cos(TWO_PI * n / length))


def _wrap_phase(phase: np.ndarray) -> np.ndarray:
    out = np.mod(phase, TWO_PI)
    # np.mod can round tiny negatives up to exactly 2*pi
    out[out >= TWO_PI] = 0.0
    return out


def spectrum(window: np.ndarray):
    """Magnitude and phase of bins ``0..L/2`` of the DFT.

    Works on a single window or a stack of windows (last axis is time).
    Phase is in ``[0, 2*pi)``; bins with zero magnitude get phase 0.
    """
    x = np.asarray(window, dtype=np.float64)
    coeffs = np.fft.rfft(x, axis=-1)
    amplitude = np.abs(coeffs)
    phase = _wrap_phase(np.angle(coeffs))
    phase[amplitude == 0.0] = 0.0
    return amplitude, phase


def phase_correct(phase: np.ndarray, w, spec: FrameSpec = FrameSpec()) -> np.ndarray:
    """Remove the phase advance a sliding window imposes on each bin.

    Bin ``k`` of frame ``w`` is rotated back by ``2*pi*w*hop*k/L``. The
    rotation is reduced modulo ``L`` in integer arithmetic first so large
    frame indices lose no precision. DC and Nyquist bins are left alone.

    ``w`` may be a scalar or one index per row of ``phase``.
    """
    phase = np.asarray(phase, dtype=np.float64)
    L = spec.window_len
    k = np.arange(phase.shape[-1], dtype=np.int64)
    w = np.asarray(w, dtype=np.int64)
    if w.ndim:
        w = w[:, None]
    turns = (w * spec.hop % L) * k % L
    rotation = TWO_PI * turns / L
    rotation = np.where((k == 0) | (k >= L // 2), 0.0, rotation)
    return _wrap_phase(phase - rotation)


def _autocorr(x: np.ndarray, n_lags: int) -> np.ndarray:
    """Linear (non-circular) autocorrelation via a zero-padded FFT."""
    n = x.shape[-1]
    spec = np.fft.rfft(x, n=2 * n, axis=-1)
    return np.fft.irfft(spec.real ** 2 + spec.imag ** 2, n=2 * n, axis=-1)[..., :n_lags]


def corrected_autocorrelation(raw_window: np.ndarray, hann: np.ndarray,
                              n_lags: int | None = None) -> np.ndarray:
    """Autocorrelation of the tapered frame divided by that of the taper.

    Both autocorrelations are normalised to 1 at lag 0 before taking the
    ratio, so every non-silent frame has value 1 at lag 0. Lags where the
    taper's normalised autocorrelation drops below 1e-12 are set to 0, as is
    every lag of an all-zero frame.

    Accepts one frame or a ``(T, L)`` stack; returns ``n_lags`` (default
    ``L/2 + 1``) lags per frame.
    """
    raw = np.asarray(raw_window, dtype=np.float64)
    if n_lags is None:
        n_lags = raw.shape[-1] // 2 + 1
    # scaling cancels in the lag-0 normalisation; it only guards against underflow
    peak = np.max(np.abs(raw), axis=-1, keepdims=True)
    raw = raw / np.where(peak > 0, peak, 1.0)
    r_sig = _autocorr(raw * hann, n_lags)
    r_win = _autocorr(hann, n_lags)
    r_win = r_win / r_win[0]

    r0 = r_sig[..., :1]
    silent = r0 <= 0.0
    r_sig = r_sig / np.where(silent, 1.0, r0)
    valid = r_win >= _ACF_FLOOR
    out = np.where(valid, r_sig / np.where(valid, r_win, 1.0), 0.0)
    out = np.where(silent, 0.0, out)
    return out


def volume(raw_window: np.ndarray):
    """Peak absolute sample of the un-tapered frame(s)."""
    return np.max(np.abs(raw_window), axis=-1)


def preprocess(buffer: AudioBuffer, spec: FrameSpec = FrameSpec()) -> FeatureTensor:
    """Build the ``T x 4 x (L/2+1)`` feature tensor for ``buffer``."""
    frames, times = frame_signal(buffer, spec)
    t, k = frames.shape[0], spec.n_bins
    data = np.zeros((t, 4, k))
    if t:
        hann = hann_window(spec.window_len)
        amp, ph = spectrum(frames * hann)
        data[:, AMPLITUDE] = amp
        data[:, PHASE] = phase_correct(ph, np.arange(t), spec)
        data[:, AUTOCORR] = corrected_autocorrelation(frames, hann, k)
        data[:, VOLUME] = volume(frames)[:, None]
    return FeatureTensor(data, times)


def write_features(features: FeatureTensor, path) -> None:
    """Write a PFT1 file: magic, ``<u32 T, 4, F>``, then float32 data."""
    data = np.ascontiguousarray(features.data, dtype="<f4")
    t, c, f = data.shape
    with open(path, "wb") as fh:
        fh.write(_PFT_MAGIC)
        fh.write(struct.pack("<III", t, c, f))
        fh.write(data.tobytes())


def read_features(path, hop_seconds: float = 0.01) -> FeatureTensor:
    raw = Path(path).read_bytes()
    if raw[:4] != _PFT_MAGIC:
        raise ValueError(f"{path}: not a PFT1 file (bad magic)")
    if len(raw) < 16:
        raise ValueError(f"{path}: truncated PFT1 header")
    t, c, f = struct.unpack_from("<III", raw, 4)
    expected = 16 + 4 * t * c * f
    if len(raw) != expected or c != 4:
        raise ValueError(
            f"{path}: header says {t}x{c}x{f} ({expected} bytes), file has {len(raw)} bytes")
    data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(t, c, f).astype(np.float64)
    return FeatureTensor(data, np.arange(t) * hop_seconds)
