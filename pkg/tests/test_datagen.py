import json

import numpy as np
import pytest
from scipy import signal, stats

from oracles import sine
from voxpitch import datagen
from voxpitch.audio_io import AudioBuffer, read_wav
from voxpitch.datagen import SynthConfig
from voxpitch.labeler import label, read_labels

SR = 44100


def _vowel(f0=300.0, seconds=0.6, seed=0):
    """Pulse train through two formant resonators, with silence either side."""
    rng = np.random.default_rng(seed)
    n = int(seconds * SR)
    src = signal.sawtooth(2 * np.pi * f0 * np.arange(n) / SR + rng.uniform(0, 6))
    y = src
    for fc, bw in ((700.0, 110.0), (1200.0, 120.0)):
        r = np.exp(-np.pi * bw / SR)
        y = signal.lfilter([1 - r], [1, -2 * r * np.cos(2 * np.pi * fc / SR), r * r], y)
    y *= 0.6 / np.max(np.abs(y))
    pad = np.zeros(int(0.05 * SR))
    return AudioBuffer(np.concatenate([pad, y, pad]))


def test_config_validation():
    with pytest.raises(ValueError):
        SynthConfig(rest_probability=1.5)
    with pytest.raises(ValueError):
        SynthConfig(pitch_range=(80, 40))
    with pytest.raises(ValueError):
        SynthConfig(waveforms=("organ",))
    with pytest.raises(ValueError):
        SynthConfig(cutoff_range=(1000, 30000))


def test_score_deterministic_and_ordered():
    cfg = SynthConfig(seed=5)
    a = datagen.sample_score(cfg, np.random.default_rng(5))
    b = datagen.sample_score(cfg, np.random.default_rng(5))
    assert a == b
    for x, y in zip(a, a[1:]):
        assert x.end <= y.onset + 1e-12
    assert all(n.onset >= 0 and n.duration > 0 for n in a)


def test_pitch_sampling_uniform():
    cfg = SynthConfig(total_duration=200.0)
    rng = np.random.default_rng(0)
    pitches = []
    while len(pitches) < 10000:
        pitches += [n.pitch for n in datagen.sample_score(cfg, rng)]
    p = np.array(pitches[:10000])
    lo, hi = cfg.pitch_range
    assert lo <= p.min() and p.max() <= hi
    assert stats.kstest(p, stats.uniform(lo, hi - lo).cdf).pvalue > 0.01


def test_no_rests_tiles_exactly():
    cfg = SynthConfig(rest_probability=0.0)
    notes = datagen.sample_score(cfg, np.random.default_rng(1))
    assert notes[0].onset == 0
    for x, y in zip(notes, notes[1:]):
        assert y.onset == pytest.approx(x.end, abs=1e-12)
    assert notes[-1].end == pytest.approx(cfg.total_duration, abs=1e-9)


def test_render_sine_peak_bin():
    y = datagen.render_note(69, 1.0, 0.5, "sine").samples
    freqs = np.fft.rfftfreq(len(y), 1 / SR)
    assert abs(freqs[np.argmax(np.abs(np.fft.rfft(y)))] - 440) <= freqs[1]
    assert np.max(np.abs(y)) == pytest.approx(0.5, abs=1e-3)


def test_render_square_values():
    y = datagen.render_note(60, 0.5, 0.7, "square", np.random.default_rng(0)).samples
    fade = int(0.005 * SR)
    assert set(np.unique(y[fade:-fade])) == {-0.7, 0.7}


def test_render_sawtooth_harmonics():
    f = 220.0
    y = datagen.render_note(57, 1.0, 0.8, "sawtooth").samples
    mag = np.abs(np.fft.rfft(y * np.hanning(len(y))))
    freqs = np.fft.rfftfreq(len(y), 1 / SR)

    def at(hz):
        k = int(np.argmin(np.abs(freqs - hz)))
        return mag[k - 2:k + 3].max()

    assert at(2 * f) > 0.01 * at(f) and at(3 * f) > 0.01 * at(f)


def test_render_fades_and_length():
    y = datagen.render_note(64, 0.3, 1.0, "triangle").samples
    assert len(y) == round(0.3 * SR) and y[0] == 0.0
    assert abs(y[-1]) < 0.01
    with pytest.raises(ValueError):
        datagen.render_note(0, 0.3, 1.0, "sine")


def test_synth_sample_deterministic_and_labels_analytic():
    a = datagen.synth_sample(SynthConfig(seed=11))
    b = datagen.synth_sample(SynthConfig(seed=11))
    assert a.audio.samples.tobytes() == b.audio.samples.tobytes()
    assert np.array_equal(a.labels.midi, b.labels.midi)
    assert len(a.audio) == 7 * SR and len(a.labels) == 700
    assert np.max(np.abs(a.audio.samples)) <= 1.0
    for n in a.meta["notes"]:
        mid = int(round((n["onset"] + n["duration"] / 2) * 100))
        assert a.labels.midi[mid] == n["pitch"]


def test_synth_snr_20db():
    for seed in range(5):
        cfg = SynthConfig(seed=seed, filter_probability=0.0, rest_probability=0.0)
        noisy = datagen.synth_sample(cfg)
        clean = datagen.synth_sample(SynthConfig(seed=seed, filter_probability=0.0,
                                                 rest_probability=0.0, noise_amplitude=0.0))
        g = noisy.meta["gain"]
        resid = noisy.audio.samples / g - clean.audio.samples
        snr = 20 * np.log10(np.max(np.abs(clean.audio.samples)) / np.std(resid))
        assert abs(snr - 20) <= 1


def test_filter_rate_and_cutoff_distribution():
    cfg = SynthConfig(total_duration=0.3)
    flags, cutoffs = [], []
    for seed in range(1000):
        m = datagen.synth_sample(datagen.with_seed(cfg, seed)).meta
        flags.append(m["filtered"])
        if m["filtered"]:
            cutoffs.append(m["cutoff_hz"])
    assert abs(np.mean(flags) - 0.3) <= 0.03
    assert stats.kstest(cutoffs, stats.uniform(1000, 19000).cdf).pvalue > 0.01


def test_lowpass_attenuates():
    x = sine(15000, SR)
    y = datagen.lowpass(x, 1000)
    assert np.std(y[1000:]) < 0.02 * np.std(x)


def test_labeler_agrees_with_clean_render():
    cfg = SynthConfig(seed=3, noise_amplitude=0.0, filter_probability=0.0,
                      pitch_range=(45, 81))
    s = datagen.synth_sample(cfg)
    track = label(s.audio)
    v = s.labels.midi > 0
    assert np.mean(np.abs(track.midi[v] - s.labels.midi[v]) <= 0.5) >= 0.95


def test_trim_silence():
    x = np.concatenate([np.zeros(4410), sine(200, 8820), np.zeros(4410)])
    t = datagen.trim_silence(AudioBuffer(x))
    assert abs(len(t) - 8820) <= 2 * 441
    assert len(datagen.trim_silence(AudioBuffer(np.zeros(1000)))) == 0


def test_stretch_factor_one_keeps_length():
    v = _vowel()
    out = datagen.stretch(v, len(v))
    assert len(out) == len(v)
    np.testing.assert_allclose(out.samples, v.samples, atol=1e-9)


def test_stretch_two_drops_one_octave():
    v = datagen.trim_silence(_vowel(f0=300.0))
    a = label(v)
    b = label(datagen.stretch(v, 2 * len(v)))
    ma = np.median(a.midi[a.midi > 0])
    mb = np.median(b.midi[b.midi > 0])
    assert ma == pytest.approx(float(69 + 12 * np.log2(300 / 440)), abs=0.3)
    assert abs((ma - mb) - 12.0) <= 0.5


def test_vowel_sample():
    lib = [_vowel(250, seed=0), _vowel(320, seed=1)]
    cfg = SynthConfig(seed=4, total_duration=3.0, rest_probability=0.3)
    s = datagen.vowel_sample(lib, cfg)
    assert s.provenance == "vowel" and len(s.audio) == 3 * SR and len(s.labels) == 300
    again = datagen.vowel_sample(lib, cfg)
    assert s.audio.samples.tobytes() == again.audio.samples.tobytes()
    # frames well inside the gaps between notes are silent
    notes = s.meta["notes"]
    spans = [(n["onset"], n["onset"] + n["duration"]) for n in notes]
    t = s.labels.frame_times
    gap = np.ones(len(t), bool)
    for a, b in spans:
        gap &= ~((t > a - 0.03) & (t < b + 0.03))
    assert gap.any() and not s.labels.midi[gap].any()


def test_vowel_sample_errors():
    with pytest.raises(ValueError, match="empty"):
        datagen.vowel_sample([], SynthConfig())
    tiny = AudioBuffer(0.5 * sine(300, 1000))
    with pytest.raises(ValueError, match="shorter"):
        datagen.vowel_sample([tiny], SynthConfig(total_duration=1.0))


def test_segment_and_label():
    x = np.concatenate([0.6 * sine(220, 13 * SR), 0.6 * sine(330, 7 * SR)])
    segs = datagen.segment_and_label(AudioBuffer(x))
    assert len(segs) == 3
    assert [len(s.audio) for s in segs] == [7 * SR] * 3
    assert all(len(s.labels) == 700 for s in segs)
    assert not segs[2].labels.midi[-95:].any()
    assert datagen.segment_and_label(AudioBuffer(np.zeros(0))) == []


def test_seeds_and_manifest(tmp_path):
    seeds = {datagen.sample_seed(7, i) for i in range(100)}
    assert len(seeds) == 100 and datagen.sample_seed(7, 3) == datagen.sample_seed(7, 3)
    rows = [("a", "synth", 1, 7.0), ("b", "synth", 2, 7.0), ("c", "vowel", 3, 3.6)]
    p = tmp_path / "manifest.csv"
    datagen.write_manifest(rows, p)
    assert p.read_text().splitlines()[0] == "name,provenance,seed,duration_s"
    hours = datagen.manifest_hours(p)
    assert hours["synth"] == pytest.approx(14 / 3600) and hours["vowel"] == pytest.approx(0.001)
    datagen.write_run_info(tmp_path / "run.json", seed=7, count=3)
    assert json.loads((tmp_path / "run.json").read_text()) == {"count": 3, "seed": 7}


def test_write_sample(tmp_path):
    s = datagen.synth_sample(SynthConfig(seed=1, total_duration=1.0))
    datagen.write_sample(s, tmp_path, "x")
    back = read_wav(tmp_path / "x.wav")
    assert len(back) == SR
    assert np.max(np.abs(back.samples - s.audio.samples)) <= 2 ** -15
    np.testing.assert_allclose(read_labels(tmp_path / "x.csv").midi, s.labels.midi, atol=1e-6)
