import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import tapered_autocorr_oracle, direct_autocorr, direct_dft, sine
from voxpitch import dsp
from voxpitch.audio_io import AudioBuffer

SPEC = dsp.FrameSpec()
L = SPEC.window_len


def test_frame_spec_canonical():
    assert SPEC.overlap == 583
    assert SPEC.n_bins == 513
    with pytest.raises(ValueError):
        dsp.FrameSpec(window_len=1000)
    with pytest.raises(ValueError):
        dsp.FrameSpec(hop=2000)


def test_one_second_gives_100_frames():
    frames, times = dsp.frame_signal(AudioBuffer(np.ones(44100)))
    assert frames.shape == (100, 1024)
    np.testing.assert_allclose(times, np.arange(100) * 0.01)


def test_first_frame_is_left_padded():
    x = np.random.default_rng(1).uniform(0.1, 1, 5000)
    frames, _ = dsp.frame_signal(AudioBuffer(x))
    assert np.all(frames[0, :512] == 0)
    np.testing.assert_array_equal(frames[0, 512:], x[:512])


def test_1024_samples_give_three_centred_frames():
    x = np.arange(1, 1025, dtype=float)
    frames, _ = dsp.frame_signal(AudioBuffer(x))
    assert frames.shape[0] == 3
    for w, centre in enumerate((0, 441, 882)):
        assert frames[w, 512] == x[centre]


def test_empty_buffer_has_no_frames():
    frames, times = dsp.frame_signal(AudioBuffer(np.zeros(0)))
    assert frames.shape == (0, 1024) and times.size == 0
    assert dsp.preprocess(AudioBuffer(np.zeros(0))).data.shape == (0, 4, 513)


def test_hann_window():
    w = dsp.hann_window(L)
    assert w[0] == 0.0
    assert w[L // 2] == pytest.approx(1.0, abs=1e-15)
    assert w.max() <= 1.0
    assert w.sum() == pytest.approx(L / 2, abs=1e-9)


def test_spectrum_zero_window():
    amp, ph = dsp.spectrum(np.zeros(L))
    assert amp.shape == (513,) and not amp.any() and not ph.any()


def test_spectrum_peak_at_exact_bin():
    x = sine(8 * 44100 / L, L) * dsp.hann_window(L)
    amp, _ = dsp.spectrum(x)
    assert int(np.argmax(amp)) == 8
    ref = np.abs(direct_dft(x))
    assert int(np.argmax(ref)) == 8


def test_spectrum_parseval():
    x = np.random.default_rng(3).standard_normal(L)
    amp, _ = dsp.spectrum(x)
    energy = (amp[0] ** 2 + 2 * np.sum(amp[1:512] ** 2) + amp[512] ** 2) / L
    assert energy == pytest.approx(np.sum(x ** 2), rel=1e-12)


def test_spectrum_matches_direct_dft():
    x = np.random.default_rng(4).standard_normal(L)
    amp, ph = dsp.spectrum(x)
    ref = direct_dft(x)
    z = amp * np.exp(1j * ph)
    assert np.max(np.abs(z - ref)) / np.max(np.abs(ref)) < 1e-9
    assert np.all((ph >= 0) & (ph < 2 * np.pi))


def test_phase_correct_frame_zero_is_plain_wrap():
    ph = np.random.default_rng(5).uniform(-10, 10, 513)
    np.testing.assert_allclose(dsp.phase_correct(ph, 0), np.mod(ph, 2 * np.pi))


def test_phase_correct_full_turn_is_identity():
    # hop*w*k a multiple of L: w=1024 gives a whole number of turns for every k
    ph = np.random.default_rng(6).uniform(0, 2 * np.pi, 513)
    np.testing.assert_allclose(dsp.phase_correct(ph, 1024), ph, atol=1e-12)


def test_phase_correct_formula_and_edges():
    ph = np.random.default_rng(7).uniform(0, 2 * np.pi, 513)
    w = 37
    out = dsp.phase_correct(ph, w)
    k = np.arange(513)
    expect = np.mod(ph - 2 * np.pi * w * 441 * k / 1024, 2 * np.pi)
    d = np.angle(np.exp(1j * (out[1:512] - expect[1:512])))
    assert np.max(np.abs(d)) < 1e-9
    assert out[0] == ph[0] and out[512] == ph[512]


@pytest.mark.parametrize("k0", [5, 8, 40, 200])
def test_corrected_phase_constant_for_bin_centred_sine(k0):
    x = sine(k0 * 44100 / L, 44100, phase=0.3)
    ph = dsp.preprocess(AudioBuffer(x)).channel("phase")[3:-3, k0]
    dev = np.angle(np.exp(1j * (ph - ph[0])))
    assert np.std(dev) < 1e-6


def test_autocorr_lag_zero_and_silence():
    hann = dsp.hann_window(L)
    r = dsp.corrected_autocorrelation(np.random.default_rng(8).standard_normal(L), hann)
    assert r.shape == (513,) and r[0] == 1.0
    assert not dsp.corrected_autocorrelation(np.zeros(L), hann).any()


def test_autocorr_matches_pure_python_sum():
    x = np.random.default_rng(9).standard_normal(64)
    hann = dsp.hann_window(64)
    got = dsp.corrected_autocorrelation(x, hann)
    a = x * hann
    ra, rw = direct_autocorr(a, 33), direct_autocorr(hann, 33)
    np.testing.assert_allclose(got, (ra / ra[0]) / (rw / rw[0]), rtol=1e-9, atol=1e-12)


def test_autocorr_sine_peak_near_period():
    # 200.5 Hz -> period 219.95 samples
    r = dsp.corrected_autocorrelation(sine(200.5, L), dsp.hann_window(L))
    near = slice(210, 231)
    k = 210 + int(np.argmax(r[near]))
    assert abs(k - 220) <= 1
    assert r[k] >= 0.95 and r[k] >= r[k - 1] and r[k] >= r[k + 1]
    np.testing.assert_allclose(r, tapered_autocorr_oracle(sine(200.5, L)), atol=1e-9)


def test_volume():
    assert dsp.volume(np.zeros(L)) == 0.0
    x = np.zeros(L)
    x[10], x[20] = 0.5, -0.8
    assert dsp.volume(x) == 0.8


@pytest.mark.parametrize("phase", [0.0, 0.7, 2.0])
def test_volume_full_scale_sine(phase):
    v = dsp.volume(sine(440, L, phase=phase))
    assert np.cos(np.pi * 440 / 44100) <= v <= 1.0


def test_seven_seconds_gives_700_frames():
    feats = dsp.preprocess(AudioBuffer(np.zeros(7 * 44100)))
    assert feats.data.shape == (700, 4, 513)


def test_silent_input_channels_zero():
    d = dsp.preprocess(AudioBuffer(np.zeros(10000))).data
    assert not d[:, dsp.AMPLITUDE].any()
    assert not d[:, dsp.AUTOCORR].any()
    assert not d[:, dsp.VOLUME].any()


def test_preprocess_deterministic():
    x = AudioBuffer(np.random.default_rng(10).uniform(-1, 1, 20000))
    a, b = dsp.preprocess(x).data, dsp.preprocess(x).data
    assert a.tobytes() == b.tobytes()


@settings(max_examples=25, deadline=None)
@given(arrays(np.float64, st.integers(1, 6000), elements=st.floats(-1, 1)))
@example(np.array([1.33473716e-170]))
def test_feature_invariants(x):
    feats = dsp.preprocess(AudioBuffer(x))
    d = feats.data
    assert d.shape == (dsp.FrameSpec().n_frames(len(x)), 4, 513)
    assert np.all(d[:, dsp.AMPLITUDE] >= 0)
    assert np.all((d[:, dsp.PHASE] >= 0) & (d[:, dsp.PHASE] < 2 * np.pi))
    vol = d[:, dsp.VOLUME]
    assert np.all(vol == vol[:, :1]) and np.all((vol >= 0) & (vol <= 1))
    frames, _ = dsp.frame_signal(AudioBuffer(x))
    live = np.any((frames != 0) & (dsp.hann_window(L) != 0), axis=1)
    assert np.all(d[live, dsp.AUTOCORR, 0] == 1.0)
    assert not d[~live, dsp.AUTOCORR].any()


def test_pft1_roundtrip(tmp_path):
    feats = dsp.preprocess(AudioBuffer(np.random.default_rng(11).uniform(-1, 1, 3000)))
    p = tmp_path / "f.pft"
    dsp.write_features(feats, p)
    raw = p.read_bytes()
    assert raw[:4] == b"PFT1"
    assert np.frombuffer(raw[4:16], "<u4").tolist() == [7, 4, 513]
    assert len(raw) == 16 + 7 * 4 * 513 * 4
    back = dsp.read_features(p)
    np.testing.assert_allclose(back.data, feats.data, rtol=1e-6, atol=1e-6)


def test_pft1_rejects_truncated(tmp_path):
    p = tmp_path / "f.pft"
    dsp.write_features(dsp.preprocess(AudioBuffer(np.ones(1000))), p)
    p.write_bytes(p.read_bytes()[:-4])
    with pytest.raises(ValueError, match="header says"):
        dsp.read_features(p)
