"""Timbre features: TFD, block MFCC, block delta-MFCC and mel-spectral patterns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import LOG_FLOOR, AudioClip, Spectrogram, dct2, frame_signal, hop_for, mel_spectrogram, stft

FRAME_LENGTH = 2048
OVERLAP = 0.5
MFCC_BANDS = 128
MFCC_COEFFS = 20
MSP_BANDS = 32
MSP_BLOCK = 10
MSP_PERCENTILE = 60.0
BLOCK_LENGTH = 100
BLOCK_HOP = 50


@dataclass
class FrameFeatureSequence:
    values: np.ndarray  # D x N
    feature_names: list[str]

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass
class BlockSummary:
    values: np.ndarray
    names: list[str]
    block_length: int
    block_hop: int
    n_blocks: int


def tfd_frames(clip: AudioClip) -> FrameFeatureSequence:
    hop = hop_for(FRAME_LENGTH, OVERLAP)
    frames = frame_signal(clip.samples, FRAME_LENGTH, hop)
    rms = np.sqrt(np.mean(frames * frames, axis=1))
    positive = frames >= 0
    zcr = np.count_nonzero(positive[:, 1:] != positive[:, :-1], axis=1) / (FRAME_LENGTH - 1)
    return FrameFeatureSequence(np.vstack([rms, zcr]), ["rms", "zcr"])


def mfcc_from_spectrogram(spec: Spectrogram) -> FrameFeatureSequence:
    mel = mel_spectrogram(spec, MFCC_BANDS).bands
    cep = dct2(np.log(np.maximum(mel, LOG_FLOOR)), MFCC_COEFFS + 1, axis=0)
    return FrameFeatureSequence(cep[1:], [f"c{i}" for i in range(1, MFCC_COEFFS + 1)])


def mfcc_frames(clip: AudioClip) -> FrameFeatureSequence:
    """Cepstral coefficients 1..20 (0-based) per 2048/50% frame."""
    return mfcc_from_spectrogram(stft(clip, FRAME_LENGTH, OVERLAP))


def delta(seq: FrameFeatureSequence) -> FrameFeatureSequence:
    names = [f"d{n}" for n in seq.feature_names]
    if seq.n_frames < 2:
        return FrameFeatureSequence(np.zeros((seq.values.shape[0], 1)), names)
    return FrameFeatureSequence(np.diff(seq.values, axis=1), names)


def mcv_names(feature_names: list[str]) -> list[str]:
    d = len(feature_names)
    iu, ju = np.triu_indices(d)
    inner = [f"mean_{n}" for n in feature_names]
    inner += [f"cov_{i}_{j}" for i, j in zip(iu, ju)]
    return [f"block_mean.{n}" for n in inner] + [f"block_var.{n}" for n in inner]


def _mcv(block: np.ndarray, iu, ju) -> np.ndarray:
    n = block.shape[1]
    mean = block.mean(axis=1)
    if n < 2:
        cov = np.zeros(len(iu))
    else:
        centered = block - mean[:, None]
        cov = (centered @ centered.T / (n - 1))[iu, ju]
    return np.concatenate([mean, cov])


def block_mcv_summary(seq: FrameFeatureSequence, block_length: int = BLOCK_LENGTH,
                      block_hop: int = BLOCK_HOP) -> BlockSummary:
    """Mean and variance, across blocks, of each block's mean/covariance vector."""
    if block_length < 2:
        raise ValueError("block_length must be >= 2")
    d, n = seq.values.shape
    iu, ju = np.triu_indices(d)
    if n < block_length:
        starts = [0]
    else:
        starts = range(0, n - block_length + 1, block_hop)
    mcvs = np.array([_mcv(seq.values[:, s:s + block_length], iu, ju) for s in starts])
    out = np.concatenate([mcvs.mean(axis=0), mcvs.var(axis=0)])
    return BlockSummary(out, mcv_names(seq.feature_names), block_length, block_hop, len(mcvs))


def msp_from_mel(mel: np.ndarray, block: int = MSP_BLOCK,
                 percentile: float = MSP_PERCENTILE) -> np.ndarray:
    """Sorted-block mel patterns summarised at a percentile, band-major."""
    m, n = mel.shape
    if n < block:
        mel = np.pad(mel, ((0, 0), (0, block - n)))
        n = block
    n_blocks = n // block
    blocks = mel[:, :n_blocks * block].reshape(m, n_blocks, block)
    blocks = np.sort(blocks, axis=2)
    return np.percentile(blocks, percentile, axis=1).ravel()


def msp(clip: AudioClip) -> np.ndarray:
    spec = stft(clip, FRAME_LENGTH, OVERLAP)
    return msp_from_mel(mel_spectrogram(spec, MSP_BANDS).bands)


def msp_names() -> list[str]:
    return [f"band{b:02d}.pos{p}" for b in range(MSP_BANDS) for p in range(MSP_BLOCK)]


def timbre_blocks(clip: AudioClip) -> dict[str, np.ndarray]:
    """TFD, MFCC, DMFCC and MSP vectors, sharing one STFT."""
    spec = stft(clip, FRAME_LENGTH, OVERLAP)
    mf = mfcc_from_spectrogram(spec)
    return {
        "TFD": block_mcv_summary(tfd_frames(clip)).values,
        "MFCC": block_mcv_summary(mf).values,
        "DMFCC": block_mcv_summary(delta(mf)).values,
        "MSP": msp_from_mel(mel_spectrogram(spec, MSP_BANDS).bands),
    }
