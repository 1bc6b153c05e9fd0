import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from adquality import harmony as h
from adquality.dsp import TARGET_RATE, AudioClip
from adquality.synth import chord, sine

from oracles import dft_direct, pearson

C_MAJOR_KEY = 3
A_MINOR_KEY = 12


def midi(m):
    return 440.0 * 2 ** ((m - 69) / 12)


def clip(x):
    return AudioClip(np.asarray(x, dtype=np.float64), TARGET_RATE)


def scale(notes, dur=0.4):
    return np.concatenate([sine(midi(n), dur, 0.5) for n in notes])


def triad(root, dur=3.0):
    return chord([midi(root), midi(root + 4), midi(root + 7)], dur)


def circular_autocorr(x):
    return np.array([sum(x[i] * x[(i + k) % 12] for i in range(12)) for k in range(12)])


# pitch-class profile


def test_a440_on_a():
    f = h.hpcp(clip(sine(440.0, 2.0)))
    assert f.shape[0] == 12
    mean = f.mean(axis=1)
    assert mean[0] / mean.sum() >= 0.8


def test_c_triad_top_three():
    mean = h.hpcp(clip(triad(60))).mean(axis=1)
    top = {h.PITCH_CLASSES[i] for i in np.argsort(mean)[-3:]}
    assert top == {"C", "E", "G"}


def test_hpcp_silence():
    f = h.hpcp(clip(np.zeros(2 * TARGET_RATE)))
    assert np.all(f == 0)
    v = h.harmony_vector(clip(np.zeros(2 * TARGET_RATE)))
    assert np.all(np.isfinite(v))


def test_fold_conserves_mass():
    spec = h.note_spectrogram(clip(triad(57) + 0.1 * np.random.default_rng(0).standard_normal(3 * TARGET_RATE)))
    assert spec.magnitudes.shape[0] == 84
    folded = h.fold_octaves(spec.magnitudes)
    total = spec.magnitudes.sum(axis=0)
    assert np.allclose(folded.sum(axis=0), total, rtol=1e-9, atol=0)


def test_fold_index_zero_is_a():
    power = np.zeros((84, 1))
    power[9 + 12 * 3, 0] = 1.0  # A4 above C1
    assert np.argmax(h.fold_octaves(power)[:, 0]) == 0


def test_note_filterbank_partition():
    freqs = h.cqt_frequencies(84, 12, h.CQT_FMIN)
    between = np.sqrt(freqs[:-1] * freqs[1:])
    fb = h.note_filterbank(between)
    assert np.allclose(fb.sum(axis=0), 1.0)


# shift-invariant spectrum


def test_sihpcp_uniform_matches_oracle():
    frames = np.ones((12, 5))
    want = np.abs(dft_direct(circular_autocorr(np.full(12, 1 / 12)), 16))[:9]
    got = h.sihpcp(frames)
    assert got.shape == (9,)
    assert np.allclose(got, want, atol=1e-12)


@given(arrays(np.float64, 12, elements=st.floats(0, 10)), st.integers(0, 11))
def test_sihpcp_rotation_invariant(x, k):
    a = h.sihpcp(x[:, None])
    b = h.sihpcp(np.roll(x, k)[:, None])
    assert np.allclose(a, b, rtol=1e-9, atol=1e-9)


@given(arrays(np.float64, 24, elements=st.floats(-1, 1)), st.integers(0, 11))
def test_shift_invariant_24_rotation(x, k):
    rot = np.concatenate([np.roll(x[:12], k), np.roll(x[12:], k)])
    assert np.allclose(h.shift_invariant_24(x), h.shift_invariant_24(rot), atol=1e-9)
    assert h.shift_invariant_24(x).shape == (18,)


@given(arrays(np.float64, 12, elements=st.floats(-5, 5)))
def test_si_dft_matches_oracle(x):
    want = np.abs(dft_direct(circular_autocorr(x), 16))[:9]
    assert np.allclose(h._si_dft(x), want, rtol=1e-9, atol=1e-9)


# chords and keys


@given(arrays(np.float64, (12, 3), elements=st.floats(0, 10)))
def test_chordogram_in_range(frames):
    cg = h.chordogram(frames)
    assert cg.shape == (24, 3)
    assert np.all(cg >= -1) and np.all(cg <= 1)


def test_chordogram_matches_pearson():
    rng = np.random.default_rng(2)
    frames = rng.random((12, 4))
    cg = h.chordogram(frames)
    bank = h.default_templates()
    for j in range(4):
        for r in (0, 3, 17):
            assert cg[r, j] == pytest.approx(pearson(frames[:, j], bank.chord_templates[r]), abs=1e-12)


def test_template_indexing():
    names = h.template_names()
    assert names[C_MAJOR_KEY] == "C:maj"
    assert names[A_MINOR_KEY] == "A:min"


def test_c_major_chord_wins():
    cg = h.chordogram(h.hpcp(clip(triad(60))))
    winners = np.argmax(cg, axis=0)
    assert np.mean(winners == C_MAJOR_KEY) >= 0.8


def test_chord_histogram_sums_to_one():
    chc, ch = h.chord_features(h.chordogram(h.hpcp(clip(triad(62)))))
    assert chc.shape == (24,) and ch.shape == (24,)
    assert ch.sum() == pytest.approx(1.0)


def test_chord_histogram_silence():
    _, ch = h.chord_features(h.chordogram(np.zeros((12, 6))))
    assert np.all(ch == 0)


def test_key_c_major_scale():
    kc = h.key_correlations(h.hpcp(clip(scale([60, 62, 64, 65, 67, 69, 71, 72, 67, 64, 60, 55, 60]))))
    assert int(np.argmax(kc)) == C_MAJOR_KEY
    assert h.mode_estimate(kc) == 1


def test_key_a_minor_scale():
    kc = h.key_correlations(h.hpcp(clip(scale([57, 59, 60, 62, 64, 65, 67, 69, 64, 60, 57, 52, 57]))))
    assert int(np.argmax(kc)) == A_MINOR_KEY
    assert h.mode_estimate(kc) == 0


def test_mode_tie_is_major():
    kc = np.zeros(24)
    kc[5] = kc[17] = 0.7
    assert h.mode_estimate(kc) == 1


def test_harmony_vector_length():
    assert h.harmony_vector(clip(triad(64, 2.0))).shape == (64,)


@pytest.mark.parametrize("shift", [1, 5, 7])
def test_transposition_invariance(shift):
    a = h.harmony_vector(clip(triad(60)))
    b = h.harmony_vector(clip(triad(60 + shift)))
    assert np.linalg.norm(a - b) / np.linalg.norm(a) < 0.05
