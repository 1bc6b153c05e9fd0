"""Synthetic stimuli and a labelled toy ad corpus.

Used by the test-suite, the acceptance study and ``adquality synth``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.signal

from .dsp import TARGET_RATE, AudioClip, encode_wav


def sine(freq: float, duration: float, amplitude: float = 1.0, sr: int = TARGET_RATE) -> np.ndarray:
    t = np.arange(int(round(duration * sr))) / sr
    return amplitude * np.sin(2 * np.pi * freq * t)


def chord(freqs, duration: float, amplitude: float = 0.3, sr: int = TARGET_RATE) -> np.ndarray:
    return sum(sine(f, duration, amplitude, sr) for f in freqs)


def click_track(bpm: float, duration: float, sr: int = TARGET_RATE,
                click_ms: float = 10.0, offset: float = 0.1, amplitude: float = 0.9,
                seed: int = 0) -> np.ndarray:
    """Decaying noise bursts every 60/bpm seconds."""
    n = int(round(duration * sr))
    rng = np.random.default_rng(seed)
    width = max(int(click_ms * 1e-3 * sr), 1)
    burst = rng.standard_normal(width) * np.exp(-np.arange(width) / (width / 4))
    burst *= amplitude / np.max(np.abs(burst))
    out = np.zeros(n)
    t = offset
    while t < duration:
        s = int(round(t * sr))
        m = min(width, n - s)
        out[s:s + m] += burst[:m]
        t += 60.0 / bpm
    return out


def bandpass_noise(duration: float, lo: float, hi: float, rng, sr: int = TARGET_RATE) -> np.ndarray:
    n = int(round(duration * sr))
    sos = scipy.signal.butter(4, [lo, hi], btype="bandpass", fs=sr, output="sos")
    y = scipy.signal.sosfilt(sos, rng.standard_normal(n))
    return y / (np.std(y) + 1e-12)


def speech_like(duration: float, syllable_rate: float, rng, sr: int = TARGET_RATE) -> np.ndarray:
    """Voiced, formant-filtered pulse train gated at ``syllable_rate`` Hz."""
    n = int(round(duration * sr))
    t = np.arange(n) / sr
    f0 = rng.uniform(110, 220) * (1 + 0.05 * np.sin(2 * np.pi * 0.7 * t))
    phase = 2 * np.pi * np.cumsum(f0) / sr
    voiced = sum(np.sin(h * phase) / h for h in range(1, 16))
    sos = scipy.signal.butter(2, [300, 3400], btype="bandpass", fs=sr, output="sos")
    voiced = scipy.signal.sosfilt(sos, voiced)
    gate = 0.5 * (1 - np.cos(2 * np.pi * syllable_rate * t)) ** 2
    y = voiced * gate
    return y / (np.std(y) + 1e-12)


@dataclass
class SyntheticAd:
    ad_id: str
    label: int
    tempo: float
    snr_db: float
    clip: AudioClip


def make_ad(ad_id: str, label: int, seed: int, duration: float = 12.0,
            sr: int = TARGET_RATE) -> SyntheticAd:
    """One toy ad. Good ads (label 1) have a slower backing pulse and clearer speech."""
    rng = np.random.default_rng(seed)
    # the classes overlap in both tempo and SNR
    if label:
        tempo = rng.uniform(60, 125)
        snr_db = rng.uniform(0, 20)
    else:
        tempo = rng.uniform(95, 180)
        snr_db = rng.uniform(-8, 10)
    speech = speech_like(duration, tempo / 60.0 * rng.uniform(0.9, 1.1), rng, sr)
    noise = rng.standard_normal(speech.size)
    noise += 0.5 * bandpass_noise(duration, 80, 8000, rng, sr)
    noise /= np.std(noise)
    clicks = click_track(tempo, duration, sr, offset=rng.uniform(0.05, 0.4),
                         amplitude=1.0, seed=int(rng.integers(1 << 31)))
    clicks /= np.std(clicks) + 1e-12
    mix = speech * 10 ** (snr_db / 20) + noise + 0.8 * clicks
    mix *= 0.25 / np.max(np.abs(mix))
    return SyntheticAd(ad_id, label, float(tempo), float(snr_db), AudioClip(mix, sr, ad_id))


def make_corpus(n_ads: int = 200, seed: int = 0, duration: float = 12.0) -> list[SyntheticAd]:
    """Balanced corpus; ad ``ad{i:04d}`` is good when i is even."""
    rng = np.random.default_rng(seed)
    seeds = rng.integers(0, 2**31, size=n_ads)
    return [make_ad(f"ad{i:04d}", int(i % 2 == 0), int(s), duration) for i, s in enumerate(seeds)]


def write_corpus(corpus: list[SyntheticAd], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for ad in corpus:
        (out / f"{ad.ad_id}.wav").write_bytes(encode_wav(ad.clip))
    with open(out / "truth.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["ad_id", "label", "tempo", "snr_db"])
        for ad in corpus:
            w.writerow([ad.ad_id, ad.label, f"{ad.tempo:.3f}", f"{ad.snr_db:.3f}"])
    return out


def make_event_log(labels: dict[str, int], seed: int = 0, impressions: int = 600,
                   users: int = 400) -> list[tuple[str, str, str, float, float]]:
    """Impression/click rows whose long-click rate tracks the ad label."""
    rng = np.random.default_rng(seed)
    rows = []
    ts = 1_500_000_000.0
    for ad_id in sorted(labels):
        rate = 0.02 if labels[ad_id] else 0.005
        rate *= rng.uniform(0.7, 1.3)
        for _ in range(impressions):
            user = f"u{int(rng.integers(users)):05d}"
            ts += 1.0
            rows.append((ad_id, user, "impression", 0.0, ts))
            if rng.random() < rate * 3:
                dwell = float(rng.uniform(6, 60)) if rng.random() < 1 / 3 else float(rng.uniform(0, 4.9))
                rows.append((ad_id, user, "click", round(dwell, 3), ts + 0.5))
    return rows
