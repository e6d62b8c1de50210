"""Human-voice pitch estimation toolkit.

Feature extraction (:mod:`voxpitch.dsp`), pitch vector coding
(:mod:`voxpitch.codec`), an autocorrelation auto-labeller
(:mod:`voxpitch.labeler`), corpus generators (:mod:`voxpitch.datagen`), a
NumPy inference engine for the convolutional model (:mod:`voxpitch.model`)
and frame-level evaluation (:mod:`voxpitch.metrics`).
"""
from .audio_io import AudioBuffer, read_wav, resample_to_44100, write_wav
from .dsp import FeatureTensor, FrameSpec, preprocess
from .labeler import PitchTrack, TrackerConfig, label
from .metrics import EvalReport, evaluate, evaluate_delayed

__version__ = "0.1.0"

__all__ = [
    "AudioBuffer", "read_wav", "write_wav", "resample_to_44100",
    "FeatureTensor", "FrameSpec", "preprocess",
    "PitchTrack", "TrackerConfig", "label",
    "EvalReport", "evaluate", "evaluate_delayed",
]
