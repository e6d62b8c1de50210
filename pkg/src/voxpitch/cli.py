"""Command-line entry points.

Stages talk only through files: WAV audio, ``time_s,midi`` label CSVs,
PFT1 feature tensors and PNW1 weights. Exit codes: 0 success, 1 usage
error, 2 data error. Failures print one line to stderr of the form
``voxpitch: <usage-error|data-error>: <reason>``.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import codec, datagen, dsp, labeler, metrics, model
from .audio_io import WavFormatError, read_wav, resample_to_44100

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2


class UsageError(Exception):
    pass


class DataError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ----------------------------------------------------------------- helpers

def _existing_file(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"input file not found: {p}")
    return p


def _existing_dir(path) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"input directory not found: {p}")
    return p


def _out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {p}: {exc.strerror}") from None
    if not p.is_dir():
        raise UsageError(f"output path is not a directory: {p}")
    return p


def _out_file(path) -> Path:
    p = Path(path)
    if not p.parent.is_dir():
        raise UsageError(f"output directory does not exist: {p.parent}")
    return p


def _load_audio(path):
    try:
        return resample_to_44100(read_wav(path))
    except WavFormatError as exc:
        raise DataError(f"{path}: {exc}") from None


def _tracker_args(p):
    g = p.add_argument_group("tracker overrides")
    d = labeler.TrackerConfig()
    g.add_argument("--f-min", type=float, default=d.f_min)
    g.add_argument("--f-max", type=float, default=d.f_max)
    g.add_argument("--voicing-threshold", type=float, default=d.voicing_threshold)
    g.add_argument("--silence-threshold", type=float, default=d.silence_threshold)
    g.add_argument("--octave-cost", type=float, default=d.octave_cost)
    g.add_argument("--voiced-unvoiced-cost", type=float, default=d.voiced_unvoiced_cost)
    g.add_argument("--octave-jump-cost", type=float, default=d.octave_jump_cost)
    g.add_argument("--max-candidates", type=int, default=d.max_candidates)
    g.add_argument("--window-len", type=int, default=d.window_len)


def _tracker(args) -> labeler.TrackerConfig:
    try:
        cfg = labeler.TrackerConfig(
            args.f_min, args.f_max, args.voicing_threshold, args.silence_threshold,
            args.octave_cost, args.voiced_unvoiced_cost, args.octave_jump_cost,
            args.max_candidates, args.window_len)
        cfg.frame_spec()
        cfg.check_rate(44100)
    except ValueError as exc:
        raise UsageError(f"invalid tracker override: {exc}") from None
    return cfg


def _synth_args(p):
    g = p.add_argument_group("synth overrides")
    d = datagen.SynthConfig()
    g.add_argument("--duration", type=float, default=d.total_duration,
                   help="clip length in seconds (default %(default)s)")
    g.add_argument("--pitch-range", type=float, nargs=2, default=d.pitch_range,
                   metavar=("LO", "HI"))
    g.add_argument("--note-duration-range", type=float, nargs=2, default=d.duration_range,
                   metavar=("LO", "HI"))
    g.add_argument("--rest-probability", type=float, default=d.rest_probability)
    g.add_argument("--filter-probability", type=float, default=d.filter_probability)
    g.add_argument("--cutoff-range", type=float, nargs=2, default=d.cutoff_range,
                   metavar=("LO", "HI"))
    g.add_argument("--noise-amplitude", type=float, default=d.noise_amplitude)
    g.add_argument("--waveforms", default=",".join(d.waveforms),
                   help="comma-separated subset of sine,triangle,square,sawtooth")


def _synth_config(args) -> datagen.SynthConfig:
    try:
        return datagen.SynthConfig(
            seed=args.seed,
            total_duration=args.duration,
            pitch_range=tuple(args.pitch_range),
            duration_range=tuple(args.note_duration_range),
            rest_probability=args.rest_probability,
            filter_probability=args.filter_probability,
            cutoff_range=tuple(args.cutoff_range),
            noise_amplitude=args.noise_amplitude,
            waveforms=tuple(w.strip() for w in args.waveforms.split(",") if w.strip()),
        )
    except ValueError as exc:
        raise UsageError(f"invalid synth override: {exc}") from None


def _run_info(args) -> dict:
    # the output folder is implied by where run.json lives
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "out")}


# ---------------------------------------------------------------- commands

def cmd_synthgen(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    base = _synth_config(args)
    out = _out_dir(args.out)
    rows = []
    for i in range(args.count):
        seed = datagen.sample_seed(args.seed, i)
        sample = datagen.synth_sample(replace(base, seed=seed))
        name = f"synth_{i:05d}"
        datagen.write_sample(sample, out, name)
        rows.append((name, sample.provenance, seed, sample.audio.duration))
    datagen.write_manifest(rows, out / "manifest.csv")
    datagen.write_run_info(out / "run.json", **_run_info(args))
    print(f"wrote {len(rows)} samples to {out}")
    return EXIT_OK


def cmd_vowelgen(args) -> int:
    if args.count < 0:
        raise UsageError("--count must be >= 0")
    vowel_dir = _existing_dir(args.vowels)
    files = sorted(vowel_dir.glob("*.wav"))
    if not files:
        raise DataError(f"no .wav files in vowel directory {vowel_dir}")
    base = _synth_config(args)
    tracker = _tracker(args)
    out = _out_dir(args.out)
    library = [_load_audio(f) for f in files]
    rows = []
    for i in range(args.count):
        seed = datagen.sample_seed(args.seed, i)
        try:
            sample = datagen.vowel_sample(library, replace(base, seed=seed), tracker)
        except ValueError as exc:
            raise DataError(str(exc)) from None
        name = f"vowel_{i:05d}"
        datagen.write_sample(sample, out, name)
        rows.append((name, sample.provenance, seed, sample.audio.duration))
    datagen.write_manifest(rows, out / "manifest.csv")
    datagen.write_run_info(out / "run.json", vowel_files=[f.name for f in files],
                           **_run_info(args))
    print(f"wrote {len(rows)} samples to {out}")
    return EXIT_OK


def cmd_label(args) -> int:
    src = _existing_file(args.input)
    dst = _out_file(args.out)
    tracker = _tracker(args)
    track = labeler.label(_load_audio(src), tracker)
    labeler.write_labels(track, dst)
    print(f"wrote {len(track)} frames ({int(track.voiced.sum())} voiced) to {dst}")
    return EXIT_OK


def cmd_segment(args) -> int:
    src = _existing_file(args.input)
    tracker = _tracker(args)
    if args.segment_s <= 0:
        raise UsageError("--segment-s must be positive")
    out = _out_dir(args.out)
    samples = datagen.segment_and_label(_load_audio(src), args.segment_s, tracker)
    rows = []
    for sample in samples:
        name = f"segment_{sample.seed:05d}"
        datagen.write_sample(sample, out, name)
        rows.append((name, sample.provenance, sample.seed, sample.audio.duration))
    datagen.write_manifest(rows, out / "manifest.csv")
    datagen.write_run_info(out / "run.json", **_run_info(args))
    print(f"wrote {len(rows)} segments to {out}")
    return EXIT_OK


def cmd_features(args) -> int:
    src = _existing_file(args.input)
    dst = _out_file(args.out)
    fig = _out_file(args.figure) if args.figure else None
    feats = dsp.preprocess(_load_audio(src))
    dsp.write_features(feats, dst)
    if fig:
        from .plotting import plot_features
        plot_features(feats, fig, title=src.name)
    print(f"wrote {feats.n_frames} x 4 x {feats.data.shape[2]} features to {dst}")
    return EXIT_OK


def cmd_infer(args) -> int:
    src = _existing_file(args.input)
    wpath = _existing_file(args.weights)
    dst = _out_file(args.out)
    try:
        weights = model.load_weights(wpath)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    config = model.ModelConfig()
    try:
        model.check_weights(config, weights)
    except model.WeightError as exc:
        raise DataError(str(exc)) from None
    feats = dsp.preprocess(_load_audio(src))
    if feats.n_frames == 0:
        raise DataError(f"{src}: no audio frames")
    log_probs = model.forward(feats.data[None], config, weights)[0]
    midi = codec.decode_track_local(np.exp(log_probs.astype(np.float64)), args.radius)
    labeler.write_labels(labeler.PitchTrack(feats.frame_times, midi), dst)
    print(f"wrote {midi.size} predicted frames to {dst}")
    return EXIT_OK


def _read_track(path, role):
    try:
        return labeler.read_labels(path)
    except ValueError as exc:
        raise DataError(f"{role}: {exc}") from None


def cmd_eval(args) -> int:
    pred = _read_track(_existing_file(args.pred), "pred")
    truth = _read_track(_existing_file(args.truth), "truth")
    report_path = _out_file(args.report or Path(args.pred).with_suffix(".report.txt"))
    if len(pred) != len(truth):
        raise DataError(f"grid mismatch: pred has {len(pred)} rows, truth has {len(truth)} rows")
    off = np.abs(pred.frame_times - truth.frame_times)
    if off.size and off.max() > 1e-4:
        bad = int(np.count_nonzero(off > 1e-4))
        raise DataError(f"grid mismatch: {bad} of {len(pred)} rows have different time_s")

    try:
        reports = {"plain": metrics.evaluate(pred, truth, args.drop_unvoiced)}
        if args.delayed:
            reports["delayed"] = metrics.evaluate_delayed(
                pred, truth, args.shift_frames, args.drop_unvoiced)
    except metrics.EmptyEvaluation as exc:
        raise DataError(str(exc)) from None

    for name, rep in reports.items():
        print(rep.to_table(name))
        print()
    with open(report_path, "w") as fh:
        for name, rep in reports.items():
            for key, value in rep.as_dict().items():
                fh.write(f"{name}.{key}={value}\n")
    if not args.no_figure:
        from .plotting import plot_tracks
        errors = metrics.frame_errors(pred, truth, args.drop_unvoiced)
        plot_tracks(pred, truth, report_path.with_suffix(".png"), errors,
                    title=f"accuracy {reports['plain'].accuracy_50c:.2f}%")
    return EXIT_OK


def cmd_init_weights(args) -> int:
    dst = _out_file(args.out)
    model.save_weights(model.random_weights(model.ModelConfig(), args.seed), dst)
    print(f"wrote untrained weights (seed {args.seed}) to {dst}")
    return EXIT_OK


def cmd_params(args) -> int:
    print(model.format_parameter_table(model.ModelConfig()))
    return EXIT_OK


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="voxpitch", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synthgen", help="generate synthesizer clips with analytic labels")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    _synth_args(p)
    p.set_defaults(func=cmd_synthgen)

    p = sub.add_parser("vowelgen", help="generate stretched-vowel clips, auto-labelled")
    p.add_argument("--vowels", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    _synth_args(p)
    _tracker_args(p)
    p.set_defaults(func=cmd_vowelgen)

    p = sub.add_parser("label", help="auto-label a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    _tracker_args(p)
    p.set_defaults(func=cmd_label)

    p = sub.add_parser("segment", help="cut a recording into labelled fixed-length segments")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--segment-s", type=float, default=7.0)
    _tracker_args(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("features", help="write the PFT1 feature tensor of a WAV file")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--figure", help="also render the tensor to this PNG")
    p.set_defaults(func=cmd_features)

    p = sub.add_parser("infer", help="predict a pitch track with PNW1 weights")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--weights", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--radius", type=int, default=4, help="decode window around the argmax")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="score a predicted label CSV against a reference")
    p.add_argument("--pred", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--delayed", action="store_true", help="also report the +-10 ms variant")
    p.add_argument("--shift-frames", type=int, default=1)
    p.add_argument("--drop-unvoiced", action="store_true",
                   help="skip frames predicted unvoiced instead of scoring them")
    p.add_argument("--report", help="key=value report path (default: <pred>.report.txt)")
    p.add_argument("--no-figure", action="store_true",
                   help="skip the PNG rendered next to the report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("init-weights", help="write untrained random PNW1 weights")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_weights)

    p = sub.add_parser("params", help="print the per-layer parameter table")
    p.set_defaults(func=cmd_params)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"voxpitch: usage-error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, WavFormatError, model.WeightError, metrics.EmptyEvaluation,
            ValueError) as exc:
        msg = " ".join(str(exc).split())
        print(f"voxpitch: data-error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"voxpitch: data-error: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "),
              file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
