"""Rhythm features: accent signals, tempogram, tempo, TGR, beat profiles, Mellin."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .dsp import AudioClip, Spectrogram, stft

FRAME_LENGTH = 2048
OVERLAP = 0.875
ACCENT_GAIN = 10.0
BANDS = {
    "full": (0.0, np.inf),
    "B": (27.5, 220.0),
    "T": (220.0, 1760.0),
    "H": (1760.0, 14080.0),
}
N_BPM = 500
TEMPO_RANGE = (40, 250)
SECONDARY_MIN_DISTANCE = 10
DEFAULT_TEMPO = 120.0
TGR_RATIOS = (4.0, 8 / 3, 3.0, 2.0, 4 / 3, 3 / 2, 1.0, 2 / 3, 3 / 4, 1 / 2, 1 / 3, 3 / 8, 1 / 4)
TGR_TEMPO_INDEX = 6
TIGHTNESS = 100.0
PROFILE_BINS = 36
MELLIN_DIMS = 512
MELLIN_POINTS = 8192
MELLIN_MIN_LAG = 0.01
MELLIN_MAX_LAG = 8192
LAG_SMOOTHING_TAPS = 7


@dataclass
class AccentSignal:
    values: np.ndarray
    frame_rate: float
    band: str = "full"


@dataclass
class Tempogram:
    weights: np.ndarray  # index = BPM
    band: str = "full"


@dataclass
class BeatGrid:
    beat_frames: np.ndarray
    tempo_used: float


def rhythm_stft(clip: AudioClip) -> Spectrogram:
    return stft(clip, FRAME_LENGTH, OVERLAP)


def accent_from_spectrogram(spec: Spectrogram, band: str = "full") -> AccentSignal:
    lo, hi = BANDS[band]
    sel = (spec.bin_frequencies >= lo) & (spec.bin_frequencies < hi)
    logmag = np.log1p(ACCENT_GAIN * spec.magnitudes[sel])
    flux = np.maximum(np.diff(logmag, axis=1), 0.0).sum(axis=0)
    return AccentSignal(np.concatenate([[0.0], flux]), spec.frame_rate, band)


def accent_signal(clip: AudioClip, band: str = "full") -> AccentSignal:
    """Half-wave rectified log-spectral flux summed over ``band``'s bins."""
    return accent_from_spectrogram(rhythm_stft(clip), band)


def autocorrelation(a: AccentSignal | np.ndarray, max_lag: int) -> np.ndarray:
    values = a.values if isinstance(a, AccentSignal) else np.asarray(a, dtype=np.float64)
    if max_lag > values.size:
        raise ValueError(f"max_lag {max_lag} exceeds signal length {values.size}")
    return kernels.autocorr(values, max_lag)


def tempogram_linear(a: AccentSignal) -> Tempogram:
    """Autocorrelation resampled onto an integer BPM axis, scaled so r[0] = 1."""
    n = a.values.size
    r = autocorrelation(a, n)
    weights = np.zeros(N_BPM)
    if r[0] <= 0:
        return Tempogram(weights, a.band)
    r = _smooth_even(r / r[0], LAG_SMOOTHING_TAPS)
    bpm = np.arange(1, N_BPM, dtype=np.float64)
    lags = a.frame_rate * 60.0 / bpm
    weights[1:] = np.interp(lags, np.arange(n), r, right=0.0)
    return Tempogram(np.maximum(weights, 0.0), a.band)


def _smooth_even(r: np.ndarray, taps: int) -> np.ndarray:
    """Hann-smooth an autocorrelation, mirroring it about lag 0."""
    w = np.hanning(taps + 2)[1:-1]
    w /= w.sum()
    half = taps // 2
    ext = np.concatenate([r[half:0:-1], r, np.zeros(half)])
    return np.convolve(ext, w, mode="valid")[: r.size]


def _local_maxima(w: np.ndarray) -> np.ndarray:
    idx = np.arange(1, w.size - 1)
    keep = (w[idx] > w[idx - 1]) & (w[idx] >= w[idx + 1]) & (w[idx] > 0)
    return idx[keep]


def estimate_tempo(tg: Tempogram) -> tuple[float, float]:
    lo, hi = TEMPO_RANGE
    w = tg.weights
    window = w[lo:hi + 1]
    if not np.any(window > 0):
        return DEFAULT_TEMPO, DEFAULT_TEMPO
    primary = lo + int(np.argmax(window))
    peaks = [p for p in _local_maxima(w) if lo <= p <= hi and abs(p - primary) >= SECONDARY_MIN_DISTANCE]
    if not peaks:
        return float(primary), float(primary)
    secondary = max(peaks, key=lambda p: (w[p], -p))
    return float(primary), float(secondary)


def tempogram_ratios(tg: Tempogram, tempo: float) -> np.ndarray:
    if not 0 < tempo <= N_BPM - 1:
        raise ValueError(f"tempo must be in (0, {N_BPM - 1}], got {tempo}")
    targets = tempo * np.asarray(TGR_RATIOS)
    inside = (targets >= 1) & (targets <= N_BPM - 1)
    out = np.zeros(len(TGR_RATIOS))
    out[inside] = np.interp(targets[inside], np.arange(N_BPM), tg.weights)
    ref = out[TGR_TEMPO_INDEX]
    return out / ref if ref > 0 else out


def beat_track(a: AccentSignal, tempo: float, tightness: float = TIGHTNESS) -> BeatGrid:
    """Dynamic-programming beat tracker with a log-interval penalty."""
    if tempo <= 0:
        raise ValueError("tempo must be positive")
    x = a.values
    period = a.frame_rate * 60.0 / tempo
    if x.size < period or not np.any(x > 0):
        return BeatGrid(np.array([int(np.argmax(x))]), tempo)
    sd = x.std()
    # a constant signal can have a rounding-level std; leave it unscaled
    if sd > 1e-9 * np.abs(x).max():
        x = x / sd
    cum, back = kernels.beat_dp(x, period, tightness)
    beats = [int(np.argmax(cum))]
    while back[beats[-1]] >= 0:
        beats.append(int(back[beats[-1]]))
    return BeatGrid(np.array(beats[::-1]), tempo)


def beat_profile(a: AccentSignal, beats: BeatGrid, bins: int = PROFILE_BINS) -> np.ndarray:
    b = beats.beat_frames
    if b.size < 2:
        return np.zeros(bins)
    spans = []
    for start, stop in zip(b[:-1], b[1:]):
        seg = a.values[start:stop]
        n = seg.size
        if n >= bins:
            idx = np.arange(n) * bins // n
            sums = np.bincount(idx, weights=seg, minlength=bins)
            spans.append(sums / np.bincount(idx, minlength=bins))
        else:
            spans.append(seg[((np.arange(bins) + 0.5) * n / bins).astype(int)])
    profile = np.mean(spans, axis=0)
    peak = profile.max()
    return profile / peak if peak > 0 else profile


def mellin(a: AccentSignal | np.ndarray, dims: int = MELLIN_DIMS) -> np.ndarray:
    """Scale-transform magnitudes of the biased autocorrelation, unit L2 norm.

    The autocorrelation is resampled on an exponential lag grid between
    ``MELLIN_MIN_LAG`` and ``MELLIN_MAX_LAG`` frames, weighted by sqrt(lag), and Fourier
    transformed; a change of tempo shifts the log-lag axis, which only
    changes the phase of the transform.
    """
    values = a.values if isinstance(a, AccentSignal) else np.asarray(a, dtype=np.float64)
    n = values.size
    if not np.any(values):
        return np.zeros(dims)
    r = kernels.autocorr(values, n) / n
    u = np.linspace(np.log(MELLIN_MIN_LAG), np.log(MELLIN_MAX_LAG), MELLIN_POINTS)
    lag = np.exp(u)
    y = np.interp(lag, np.arange(n), r, right=0.0) * np.sqrt(lag)
    mag = np.abs(np.fft.rfft(y, 2 * MELLIN_POINTS))[:dims]
    norm = np.linalg.norm(mag)
    return mag / norm if norm > 0 else mag


RHYTHM_BLOCKS = (
    ("TEMPO", 2),
    ("TG_LIN", N_BPM),
    ("TGR", 3 * len(TGR_RATIOS)),
    ("BPDIST", 3 * PROFILE_BINS),
    ("MELLIN", MELLIN_DIMS),
)


def rhythm_blocks(clip: AudioClip) -> dict[str, np.ndarray]:
    spec = rhythm_stft(clip)
    full = accent_from_spectrogram(spec, "full")
    tg = tempogram_linear(full)
    primary, secondary = estimate_tempo(tg)
    tgr, prof = [], []
    for band in ("B", "T", "H"):
        acc = accent_from_spectrogram(spec, band)
        tgr.append(tempogram_ratios(tempogram_linear(acc), primary))
        prof.append(beat_profile(acc, beat_track(acc, primary)))
    return {
        "TEMPO": np.array([primary, secondary]),
        "TG_LIN": tg.weights,
        "TGR": np.concatenate(tgr),
        "BPDIST": np.concatenate(prof),
        "MELLIN": mellin(full),
    }


def rhythm_vector(clip: AudioClip) -> np.ndarray:
    blocks = rhythm_blocks(clip)
    return np.concatenate([blocks[name] for name, _ in RHYTHM_BLOCKS])
