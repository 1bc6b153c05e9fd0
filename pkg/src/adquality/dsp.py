"""Signal-processing primitives shared by every feature extractor."""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.fft
import scipy.signal

from . import kernels

TARGET_RATE = 44100
LOG_FLOOR = 1e-10
CQT_FMIN = 32.70  # C1

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class DecodeError(ValueError):
    """Raised for unreadable WAV payloads; ``field`` names the culprit."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class AudioClip:
    samples: np.ndarray
    sample_rate: int
    id: str = ""

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64).ravel()
        if self.samples.size == 0:
            raise ValueError("AudioClip.samples is empty")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("AudioClip.samples contains non-finite values")
        self.sample_rate = int(self.sample_rate)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass
class Spectrogram:
    magnitudes: np.ndarray  # F x N
    bin_frequencies: np.ndarray
    frame_hop: int
    frame_length: int
    sample_rate: int = TARGET_RATE

    @property
    def n_frames(self) -> int:
        return self.magnitudes.shape[1]

    @property
    def frame_rate(self) -> float:
        return self.sample_rate / self.frame_hop


@dataclass
class MelSpectrogram:
    bands: np.ndarray  # M x N
    band_count: int
    frame_hop: int
    frame_length: int
    center_frequencies: np.ndarray = field(repr=False, default=None)


# ---------------------------------------------------------------------------
# WAV I/O
# ---------------------------------------------------------------------------


def decode_wav(data: bytes, clip_id: str = "") -> AudioClip:
    """Decode a RIFF/WAVE byte string (PCM16 or float32, mono or stereo)."""
    if len(data) < 12:
        raise DecodeError("riff_header", f"need 12 bytes, got {len(data)}")
    riff, _, wave = struct.unpack("<4sI4s", data[:12])
    if riff != b"RIFF":
        raise DecodeError("riff_header", f"bad chunk id {riff!r}")
    if wave != b"WAVE":
        raise DecodeError("riff_header", f"bad form type {wave!r}")

    fmt = None
    payload = None
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if cid == b"fmt ":
            if len(body) < 16:
                raise DecodeError("fmt", f"chunk too short ({len(body)} bytes)")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == _WAVE_FORMAT_EXTENSIBLE:
                if len(body) < 26:
                    raise DecodeError("fmt", "extensible chunk missing sub-format")
                sub = struct.unpack("<H", body[24:26])[0]
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            payload = body
        pos += 8 + size + (size & 1)

    if fmt is None:
        raise DecodeError("fmt", "missing fmt chunk")
    if payload is None:
        raise DecodeError("data", "missing data chunk")
    tag, channels, rate, _, block_align, bits = fmt
    if channels not in (1, 2):
        raise DecodeError("channels", f"unsupported channel count {channels}")
    if rate <= 0:
        raise DecodeError("sample_rate", f"invalid rate {rate}")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = np.dtype("<i2"), 1.0 / 32768.0
    elif tag == _WAVE_FORMAT_FLOAT and bits == 32:
        dtype, scale = np.dtype("<f4"), 1.0
    else:
        raise DecodeError("codec", f"unsupported format tag {tag:#x} with {bits} bits")
    frame_bytes = dtype.itemsize * channels
    usable = len(payload) - len(payload) % frame_bytes
    if usable == 0:
        raise DecodeError("data", "zero-length payload")
    raw = np.frombuffer(payload[:usable], dtype=dtype).astype(np.float64) * scale
    raw = raw.reshape(-1, channels).mean(axis=1)
    if not np.all(np.isfinite(raw)):
        raise DecodeError("data", "non-finite samples")
    return AudioClip(np.clip(raw, -1.0, 1.0), rate, clip_id)


def encode_wav(clip: AudioClip, float32: bool = False) -> bytes:
    """Mono RIFF/WAVE bytes for ``clip`` (PCM16 unless ``float32``)."""
    x = np.clip(clip.samples, -1.0, 1.0)
    if float32:
        body = x.astype("<f4").tobytes()
        tag, bits = _WAVE_FORMAT_FLOAT, 32
    else:
        body = np.clip(np.round(x * 32768.0), -32768, 32767).astype("<i2").tobytes()
        tag, bits = _WAVE_FORMAT_PCM, 16
    block = bits // 8
    fmt = struct.pack("<HHIIHH", tag, 1, clip.sample_rate, clip.sample_rate * block, block, bits)
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(body)) + body
    if len(body) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def resample(clip: AudioClip, rate: int = TARGET_RATE) -> AudioClip:
    if clip.sample_rate == rate:
        return clip
    g = np.gcd(clip.sample_rate, rate)
    y = scipy.signal.resample_poly(clip.samples, rate // g, clip.sample_rate // g)
    return AudioClip(np.clip(y, -1.0, 1.0), rate, clip.id)


def load_wav(path, rate: int | None = TARGET_RATE) -> AudioClip:
    path = Path(path)
    clip = decode_wav(path.read_bytes(), path.stem)
    return resample(clip, rate) if rate else clip


# ---------------------------------------------------------------------------
# Framing / STFT
# ---------------------------------------------------------------------------


def hop_for(frame_length: int, overlap: float) -> int:
    if not 0 <= overlap < 1:
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    return max(int(round(frame_length * (1.0 - overlap))), 1)


def frame_count(length: int, frame_length: int, hop: int) -> int:
    if length < frame_length:
        return 1
    return (length - frame_length) // hop + 1


def frame_signal(x: np.ndarray, frame_length: int, hop: int) -> np.ndarray:
    """Return an (N, frame_length) read-only view; short input is zero-padded."""
    x = np.asarray(x, dtype=np.float64)
    if x.size < frame_length:
        x = np.pad(x, (0, frame_length - x.size))
    n = frame_count(x.size, frame_length, hop)
    return as_frames(x, n, frame_length, hop)


def as_frames(x, n, frame_length, hop):
    x = np.ascontiguousarray(x)
    step = x.strides[0]
    return np.lib.stride_tricks.as_strided(
        x, shape=(n, frame_length), strides=(hop * step, step), writeable=False
    )


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def stft(clip: AudioClip, frame_length: int = 2048, overlap: float = 0.5,
         window: str = "hann") -> Spectrogram:
    if frame_length < 2 or frame_length & (frame_length - 1):
        raise ValueError(f"frame_length must be a power of two, got {frame_length}")
    if window != "hann":
        raise ValueError(f"unsupported window {window!r}")
    hop = hop_for(frame_length, overlap)
    frames = frame_signal(clip.samples, frame_length, hop)
    mags = np.abs(np.fft.rfft(frames * hann(frame_length), axis=1)).T
    freqs = np.arange(frame_length // 2 + 1) * clip.sample_rate / frame_length
    return Spectrogram(np.ascontiguousarray(mags), freqs, hop, frame_length, clip.sample_rate)


# ---------------------------------------------------------------------------
# Mel scale (linear below 1 kHz, logarithmic above)
# ---------------------------------------------------------------------------

_F_SP = 200.0 / 3.0
_MIN_LOG_HZ = 1000.0
_MIN_LOG_MEL = _MIN_LOG_HZ / _F_SP
_LOGSTEP = np.log(6.4) / 27.0


def hz_to_mel(f):
    f = np.asarray(f, dtype=np.float64)
    lin = f / _F_SP
    with np.errstate(divide="ignore"):
        log = _MIN_LOG_MEL + np.log(np.maximum(f, 1e-12) / _MIN_LOG_HZ) / _LOGSTEP
    return np.where(f >= _MIN_LOG_HZ, log, lin)


def mel_to_hz(m):
    m = np.asarray(m, dtype=np.float64)
    lin = _F_SP * m
    log = _MIN_LOG_HZ * np.exp(_LOGSTEP * (m - _MIN_LOG_MEL))
    return np.where(m >= _MIN_LOG_MEL, log, lin)


def mel_center_frequencies(sample_rate: int, band_count: int) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), band_count + 2))
    return edges[1:-1]


def mel_filterbank(stft_bins: int, sample_rate: int, band_count: int) -> np.ndarray:
    """Triangular mel filters, shape (band_count, stft_bins), unit peak."""
    if band_count < 1 or stft_bins < 2:
        raise ValueError("need band_count >= 1 and stft_bins >= 2")
    nyquist = sample_rate / 2.0
    bin_freqs = np.linspace(0.0, nyquist, stft_bins)
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(nyquist), band_count + 2))
    lower, center, upper = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bin_freqs - lower) / (center - lower)
    falling = (upper - bin_freqs) / (upper - center)
    return np.maximum(0.0, np.minimum(rising, falling))


def mel_spectrogram(spec: Spectrogram, band_count: int) -> MelSpectrogram:
    fb = mel_filterbank(spec.magnitudes.shape[0], spec.sample_rate, band_count)
    return MelSpectrogram(
        fb @ spec.magnitudes,
        band_count,
        spec.frame_hop,
        spec.frame_length,
        mel_center_frequencies(spec.sample_rate, band_count),
    )


def dct2(values, keep: int, axis: int = 0) -> np.ndarray:
    """Orthonormal type-II DCT, first ``keep`` coefficients along ``axis``."""
    values = np.asarray(values, dtype=np.float64)
    m = values.shape[axis]
    if not 1 <= keep <= m:
        raise ValueError(f"keep must be in [1, {m}], got {keep}")
    out = scipy.fft.dct(values, type=2, norm="ortho", axis=axis)
    return np.take(out, np.arange(keep), axis=axis)


# ---------------------------------------------------------------------------
# Constant-Q transform
# ---------------------------------------------------------------------------


def cqt_frequencies(bins: int, bins_per_octave: int, f_min: float) -> np.ndarray:
    return f_min * 2.0 ** (np.arange(bins) / bins_per_octave)


def cqt(clip: AudioClip, bins: int = 100, bins_per_octave: int = 12,
        f_min: float = CQT_FMIN, hop: int = 1024,
        max_window: int | None = None) -> Spectrogram:
    """Constant-Q magnitudes, one frame every ``hop`` samples.

    Frame n is centred on sample ``n * hop``; there are
    ``len // hop + 1`` frames. Bin k correlates a Hann window of
    ``Q * sr / f_k`` samples (capped by clip length and ``max_window``)
    with a complex exponential at f_k, normalised by the window sum so a
    unit sinusoid reads 0.5.
    """
    if not bins >= bins_per_octave >= 1:
        raise ValueError("need bins >= bins_per_octave >= 1")
    if f_min <= 0:
        raise ValueError("f_min must be positive")
    sr = clip.sample_rate
    if f_min * 2.0 ** (bins / bins_per_octave) > sr / 2.0:
        raise ValueError(
            f"top CQT frequency {f_min * 2.0 ** (bins / bins_per_octave):.1f} Hz "
            f"exceeds Nyquist {sr / 2.0:.1f} Hz"
        )
    x = clip.samples
    freqs = cqt_frequencies(bins, bins_per_octave, f_min)
    q = 1.0 / (2.0 ** (1.0 / bins_per_octave) - 1.0)
    cap = x.size if max_window is None else min(x.size, max_window)
    lengths = np.maximum(np.minimum(np.round(q * sr / freqs).astype(np.int64), cap), 1)

    parts = []
    for f, n in zip(freqs, lengths):
        m = np.arange(n) - (n - 1) / 2.0
        w = np.hanning(n + 2)[1:-1]
        parts.append(w * np.exp(-2j * np.pi * f * m / sr) / w.sum())
    offsets = np.concatenate([[0], np.cumsum(lengths)])
    ker = np.concatenate(parts)

    n_frames = x.size // hop + 1
    pad = int(lengths.max())
    xp = np.pad(x, (pad, pad + hop))
    # window of bin k for frame n starts at n*hop - (len_k - 1)//2 (+pad)
    starts = pad - (lengths - 1) // 2
    mags = kernels.cqt_frames(xp, ker, offsets, starts, hop, n_frames)
    return Spectrogram(mags, freqs, hop, int(lengths.max()), sr)


def log_compress(spec: Spectrogram, power: float = 2.0, scale: float = 0.1) -> Spectrogram:
    if power <= 0 or scale <= 0:
        raise ValueError("power and scale must be positive")
    return Spectrogram(
        np.log1p(scale * spec.magnitudes ** power),
        spec.bin_frequencies,
        spec.frame_hop,
        spec.frame_length,
        spec.sample_rate,
    )


def log_cqt(clip: AudioClip, bins: int = 100, hop: int = 1024) -> Spectrogram:
    """The log-compressed CQT consumed by the spectrogram CNN."""
    return log_compress(cqt(clip, bins=bins, bins_per_octave=12, f_min=CQT_FMIN, hop=hop))
