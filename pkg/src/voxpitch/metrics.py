"""Frame-level pitch evaluation in cents.

Only frames where the reference is voiced are scored. An unvoiced
prediction on such a frame is scored against the silence sentinel (MIDI 0),
which is a very large error; pass ``drop_unvoiced=True`` to exclude those
frames instead.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .labeler import PitchTrack

TOLERANCE_CENTS = 50.0
PERCENTILES = (25, 50, 75, 99)


class EmptyEvaluation(ValueError):
    """Raised when the reference track has no voiced frames to score."""


@dataclass(frozen=True)
class EvalReport:
    accuracy_50c: float
    err_mean: float
    err_p25: float
    err_median: float
    err_p75: float
    err_p99: float
    voiced_frame_count: int

    def as_dict(self) -> dict:
        return asdict(self)

    def to_table(self, label: str = "track") -> str:
        """Aligned text table with one row, columns as in the published results."""
        head = ["Dataset", "Acc.", "Err. Mean", "Err. 25th", "Err. Median",
                "Err. 75th", "Err. 99th", "Frames"]
        row = [label, f"{self.accuracy_50c:.2f}", f"{self.err_mean:.2f}",
               f"{self.err_p25:.2f}", f"{self.err_median:.2f}", f"{self.err_p75:.2f}",
               f"{self.err_p99:.2f}", str(self.voiced_frame_count)]
        widths = [max(len(a), len(b)) for a, b in zip(head, row)]
        fmt = lambda cells: " | ".join(c.rjust(w) for c, w in zip(cells, widths))
        return "\n".join([fmt(head), "-+-".join("-" * w for w in widths), fmt(row)])

    def to_keyvalue(self) -> str:
        return "".join(f"{k}={v}\n" for k, v in self.as_dict().items())


def _as_midi(track) -> np.ndarray:
    if isinstance(track, PitchTrack):
        return track.midi
    return np.asarray(track, dtype=np.float64)


def _check(pred: np.ndarray, truth: np.ndarray) -> None:
    if pred.shape != truth.shape:
        raise ValueError(f"track length mismatch: pred has {pred.size} frames, "
                         f"truth has {truth.size}")


def frame_errors(pred, truth, drop_unvoiced: bool = False) -> np.ndarray:
    """Absolute error in cents on every frame where ``truth`` is voiced."""
    p, t = _as_midi(pred), _as_midi(truth)
    _check(p, t)
    mask = t != 0
    if drop_unvoiced:
        mask &= p != 0
    return 100.0 * np.abs(p[mask] - t[mask])


def delayed_frame_errors(pred, truth, shift_frames: int = 1,
                         drop_unvoiced: bool = False) -> np.ndarray:
    """Per-frame error against the closest of the reference shifted by
    ``-shift_frames``, 0 and ``+shift_frames`` frames.

    A shifted reference value only counts if it is voiced and in range.
    """
    p, t = _as_midi(pred), _as_midi(truth)
    _check(p, t)
    n = t.size
    mask = t != 0
    if drop_unvoiced:
        mask &= p != 0
    best = np.where(mask, np.abs(p - t), np.inf)
    for s in {-shift_frames, shift_frames} - {0}:
        shifted = np.zeros(n)
        src = np.arange(n) + s
        ok = (src >= 0) & (src < n)
        shifted[ok] = t[src[ok]]
        usable = mask & (shifted != 0)
        best = np.where(usable, np.minimum(best, np.abs(p - shifted)), best)
    return 100.0 * best[mask]


def summarize(errors) -> EvalReport:
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise EmptyEvaluation("no voiced reference frames to evaluate")
    p25, p50, p75, p99 = np.percentile(errors, PERCENTILES, method="linear")
    return EvalReport(
        accuracy_50c=100.0 * float(np.mean(errors <= TOLERANCE_CENTS)),
        err_mean=float(errors.mean()),
        err_p25=float(p25),
        err_median=float(p50),
        err_p75=float(p75),
        err_p99=float(p99),
        voiced_frame_count=int(errors.size),
    )


def evaluate(pred, truth, drop_unvoiced: bool = False) -> EvalReport:
    return summarize(frame_errors(pred, truth, drop_unvoiced))


def evaluate_delayed(pred, truth, shift_frames: int = 1,
                     drop_unvoiced: bool = False) -> EvalReport:
    """Like :func:`evaluate` but tolerant to a +-``shift_frames`` timing offset
    (one frame = 10 ms)."""
    return summarize(delayed_frame_errors(pred, truth, shift_frames, drop_unvoiced))
