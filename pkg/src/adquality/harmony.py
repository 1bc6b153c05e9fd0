"""Harmony features from an octave-folded constant-Q transform.

Pitch-class index 0 is A. Chord/key template index r (major) and 12 + r
(minor) are rooted on pitch class r, so C major is index 3 and A minor is
index 12.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import CQT_FMIN, AudioClip, Spectrogram, cqt_frequencies, stft

PITCH_CLASSES = ("A", "A#", "B", "C", "C#", "D", "D#", "E", "F", "F#", "G", "G#")
OCTAVES = 7
FRAME_LENGTH = 16384
DFT_POINTS = 16
SI_BINS = DFT_POINTS // 2 + 1
# f_min is C1; rolling the fold by this many classes puts A at index 0
_A_OFFSET = 9

KK_MAJOR = np.array([6.35, 2.23, 3.48, 2.33, 4.38, 4.09, 2.52, 5.19, 2.39, 3.66, 2.29, 2.88])
KK_MINOR = np.array([6.33, 2.68, 3.52, 5.38, 2.60, 3.53, 2.54, 4.75, 3.98, 2.69, 3.34, 3.17])


@dataclass
class TemplateBank:
    chord_templates: np.ndarray  # 24 x 12
    key_templates: np.ndarray  # 24 x 12


def _rotations(base: np.ndarray) -> np.ndarray:
    base = base / np.linalg.norm(base)
    return np.array([np.roll(base, r) for r in range(12)])


def default_templates() -> TemplateBank:
    major = np.zeros(12)
    major[[0, 4, 7]] = 1.0
    minor = np.zeros(12)
    minor[[0, 3, 7]] = 1.0
    chords = np.vstack([_rotations(major), _rotations(minor)])
    keys = np.vstack([_rotations(KK_MAJOR), _rotations(KK_MINOR)])
    return TemplateBank(chords, keys)


def template_names() -> list[str]:
    return [f"{p}:maj" for p in PITCH_CLASSES] + [f"{p}:min" for p in PITCH_CLASSES]


def fold_octaves(power: np.ndarray) -> np.ndarray:
    """Sum a (12*K, N) note-bin matrix over octaves; row p is pitch class p."""
    k = power.shape[0] // 12
    folded = power[: 12 * k].reshape(k, 12, -1).sum(axis=0)
    return np.roll(folded, -_A_OFFSET, axis=0)


def note_filterbank(bin_frequencies: np.ndarray, n_notes: int = 12 * OCTAVES,
                    f_min: float = CQT_FMIN) -> np.ndarray:
    """(n_notes, F) weights mapping FFT bins onto equal-tempered note bins.

    Each FFT bin is shared between its two nearest notes with cos^2
    weights in semitone distance, so the note weights sum to one wherever
    two notes overlap.
    """
    centers = cqt_frequencies(n_notes, 12, f_min)
    with np.errstate(divide="ignore"):
        semis = 12.0 * np.log2(np.maximum(bin_frequencies, 1e-12)[None, :] / centers[:, None])
    return np.where(np.abs(semis) < 1.0, np.cos(0.5 * np.pi * semis) ** 2, 0.0)


def note_spectrogram(clip: AudioClip) -> Spectrogram:
    """Constant-Q power obtained by warping 16384-sample STFT frames."""
    spec = stft(clip, FRAME_LENGTH, 0.5)
    fb = note_filterbank(spec.bin_frequencies)
    return Spectrogram(fb @ spec.magnitudes ** 2, cqt_frequencies(fb.shape[0], 12, CQT_FMIN),
                       spec.frame_hop, spec.frame_length, spec.sample_rate)


def hpcp(clip: AudioClip) -> np.ndarray:
    """HPCP frames, shape (12, N): octave-folded note power."""
    return fold_octaves(note_spectrogram(clip).magnitudes)


def _si_dft(x: np.ndarray) -> np.ndarray:
    """Rotation-invariant 16-point spectrum of a 12-class vector.

    The circular autocorrelation of ``x`` does not change when ``x`` is
    rotated; its zero-padded 16-point DFT magnitude keeps bins 0..8.
    """
    ac = np.real(np.fft.ifft(np.abs(np.fft.fft(x)) ** 2))
    return np.abs(np.fft.rfft(ac, DFT_POINTS))


def sihpcp(frames: np.ndarray) -> np.ndarray:
    mean = np.asarray(frames, dtype=np.float64).reshape(12, -1).mean(axis=1)
    total = mean.sum()
    if total > 0:
        mean = mean / total
    return _si_dft(mean)


def _pearson_rows(frames: np.ndarray, templates: np.ndarray) -> np.ndarray:
    """Correlation of every column of ``frames`` (12 x N) with every template row."""
    f = frames - frames.mean(axis=0, keepdims=True)
    t = templates - templates.mean(axis=1, keepdims=True)
    fn = np.linalg.norm(f, axis=0)
    tn = np.linalg.norm(t, axis=1)
    # columns that are constant up to rounding correlate 0
    flat = fn <= 1e-12 * np.linalg.norm(frames, axis=0)
    fn = np.where(flat, 1.0, fn)
    out = (t @ f) / np.outer(tn, fn)
    out[:, flat] = 0.0
    return np.clip(out, -1.0, 1.0)


def chordogram(frames: np.ndarray, bank: TemplateBank | None = None) -> np.ndarray:
    bank = bank or default_templates()
    return _pearson_rows(np.asarray(frames, dtype=np.float64).reshape(12, -1), bank.chord_templates)


def chord_features(cg: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(CHC, CH): mean chord correlation and histogram of per-frame winners.

    Frames whose correlations are all zero (silence) do not vote; with no
    voting frames the histogram is all zeros.
    """
    cg = np.asarray(cg, dtype=np.float64)
    chc = cg.mean(axis=1)
    voiced = np.any(cg != 0, axis=0)
    ch = np.zeros(cg.shape[0])
    if voiced.any():
        winners = np.argmax(cg[:, voiced], axis=0)
        ch = np.bincount(winners, minlength=cg.shape[0]) / winners.size
    return chc, ch


def key_correlations(frames: np.ndarray, bank: TemplateBank | None = None) -> np.ndarray:
    bank = bank or default_templates()
    mean = np.asarray(frames, dtype=np.float64).reshape(12, -1).mean(axis=1)
    return _pearson_rows(mean[:, None], bank.key_templates)[:, 0]


def mode_estimate(kc: np.ndarray) -> int:
    """1 (major) unless the best minor key beats the best major key."""
    kc = np.asarray(kc)
    return int(kc[:12].max() >= kc[12:].max())


def shift_invariant_24(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    maj, mnr = x[:12], x[12:24]
    return np.concatenate([_si_dft(maj + mnr), _si_dft(maj - mnr)])


HARMONY_BLOCKS = (("SIHPCP", SI_BINS), ("MODE", 1), ("SICH", 2 * SI_BINS),
                  ("SICHC", 2 * SI_BINS), ("SIKC", 2 * SI_BINS))


def harmony_from_frames(frames: np.ndarray, bank: TemplateBank | None = None) -> dict[str, np.ndarray]:
    bank = bank or default_templates()
    chc, ch = chord_features(chordogram(frames, bank))
    kc = key_correlations(frames, bank)
    return {
        "SIHPCP": sihpcp(frames),
        "MODE": np.array([float(mode_estimate(kc))]),
        "SICH": shift_invariant_24(ch),
        "SICHC": shift_invariant_24(chc),
        "SIKC": shift_invariant_24(kc),
    }


def harmony_blocks(clip: AudioClip) -> dict[str, np.ndarray]:
    return harmony_from_frames(hpcp(clip))


def harmony_vector(clip: AudioClip) -> np.ndarray:
    blocks = harmony_blocks(clip)
    return np.concatenate([blocks[name] for name, _ in HARMONY_BLOCKS])
