"""WAV reading/writing and the canonical in-memory audio buffer."""
from __future__ import annotations

import struct
import wave
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

CANONICAL_RATE = 44100

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavFormatError(ValueError):
    """Malformed or unsupported RIFF/WAVE data, located by byte offset."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True, eq=False)
class AudioBuffer:
    """Mono audio samples at a fixed sample rate.

    ``samples`` is stored as a 1-D float64 array; values are nominally in
    [-1, 1] but only finiteness is enforced.
    """

    samples: np.ndarray
    sample_rate: int = CANONICAL_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"samples must be 1-D, got shape {samples.shape}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate


def _int_scale(bits: int) -> float:
    # symmetric: the same 2**(b-1) - 1 used when writing
    return float(2 ** (bits - 1) - 1)


def _decode_samples(raw: bytes, fmt_tag: int, bits: int, offset: int) -> np.ndarray:
    if fmt_tag == _WAVE_FORMAT_IEEE_FLOAT:
        if bits != 32:
            raise WavFormatError(f"unsupported float sample width {bits}", offset)
        return np.frombuffer(raw, dtype="<f4").astype(np.float64)
    if bits == 16:
        ints = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    elif bits == 24:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = np.where(ints >= 1 << 23, ints - (1 << 24), ints).astype(np.float64)
    elif bits == 32:
        ints = np.frombuffer(raw, dtype="<i4").astype(np.float64)
    else:
        raise WavFormatError(f"unsupported PCM sample width {bits}", offset)
    return np.clip(ints / _int_scale(bits), -1.0, 1.0)


def read_wav(path) -> AudioBuffer:
    """Read a PCM-16/24/32 or float-32 WAV file, downmixing to mono.

    Raises
    ------
    WavFormatError
        If the container is malformed or the encoding is unsupported.
    """
    data = Path(path).read_bytes()
    if len(data) < 12:
        raise WavFormatError("file too short for a RIFF header", 0)
    if data[0:4] != b"RIFF":
        raise WavFormatError("missing RIFF magic", 0)
    if data[8:12] != b"WAVE":
        raise WavFormatError("RIFF form type is not WAVE", 8)
    riff_size = struct.unpack_from("<I", data, 4)[0]
    if riff_size + 8 > len(data):
        raise WavFormatError(
            f"RIFF size {riff_size} exceeds file length {len(data)}", 4)

    fmt = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        chunk_len = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if body + chunk_len > len(data):
            raise WavFormatError(
                f"chunk {chunk_id!r} length {chunk_len} runs past end of file "
                f"({len(data) - body} bytes available)", pos + 4)
        if chunk_id == b"fmt ":
            if chunk_len < 16:
                raise WavFormatError("fmt chunk shorter than 16 bytes", pos + 4)
            fmt_tag, channels, rate, _, block_align, bits = struct.unpack_from(
                "<HHIIHH", data, body)
            if fmt_tag == _WAVE_FORMAT_EXTENSIBLE:
                if chunk_len < 40:
                    raise WavFormatError("extensible fmt chunk too short", pos + 4)
                fmt_tag = struct.unpack_from("<H", data, body + 24)[0]
            if fmt_tag not in (_WAVE_FORMAT_PCM, _WAVE_FORMAT_IEEE_FLOAT):
                raise WavFormatError(
                    f"unsupported encoding (format tag 0x{fmt_tag:04x})", body)
            if channels == 0 or block_align != channels * bits // 8:
                raise WavFormatError(
                    f"inconsistent fmt: {channels} channels, block_align "
                    f"{block_align}, {bits} bits", body)
            fmt = (fmt_tag, channels, rate, block_align, bits, body)
        elif chunk_id == b"data":
            if fmt is None:
                raise WavFormatError("data chunk before fmt chunk", pos)
            fmt_tag, channels, rate, block_align, bits, fmt_off = fmt
            if chunk_len % block_align:
                raise WavFormatError(
                    f"data length {chunk_len} not a multiple of block size "
                    f"{block_align}", pos + 4)
            samples = _decode_samples(data[body:body + chunk_len], fmt_tag, bits, fmt_off)
            samples = samples.reshape(-1, channels).mean(axis=1)
            return AudioBuffer(samples, rate)
        pos = body + chunk_len + (chunk_len & 1)
    raise WavFormatError("no data chunk found" if fmt else "no fmt chunk found", pos)


def write_wav(buffer: AudioBuffer, path) -> None:
    """Write ``buffer`` as a mono PCM-16 WAV file."""
    q = np.round(np.clip(buffer.samples, -1.0, 1.0) * _int_scale(16)).astype("<i2")
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(int(round(buffer.sample_rate)))
        w.writeframes(q.tobytes())


def resample_to_44100(buffer: AudioBuffer) -> AudioBuffer:
    """Polyphase windowed-sinc resampling to the canonical rate."""
    if buffer.sample_rate == CANONICAL_RATE:
        return buffer
    ratio = Fraction(CANONICAL_RATE) / Fraction(buffer.sample_rate).limit_denominator(1000)
    if len(buffer) == 0:
        return AudioBuffer(np.zeros(0), CANONICAL_RATE)
    out = resample_poly(buffer.samples, ratio.numerator, ratio.denominator)
    return AudioBuffer(out, CANONICAL_RATE)
