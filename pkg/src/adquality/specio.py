"""Binary log-CQT files: a fixed 64-byte header then float32 little-endian data.

Header layout (little-endian)::

    0   8s  magic b"ADQCQT01"
    8   I   F (bins)
    12  I   N (frames)
    16  I   hop (samples)
    20  I   bins per octave
    24  I   sample rate
    28  d   f_min (Hz)
    36  d   compression power
    44  d   compression scale
    52  12x padding

The payload is the F x N matrix, row-major.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"ADQCQT01"
_HEADER = struct.Struct("<8s5I3d12x")
HEADER_SIZE = _HEADER.size
SUFFIX = ".cqt"


@dataclass
class SpectrogramFile:
    values: np.ndarray  # F x N float32
    hop: int
    bins_per_octave: int
    sample_rate: int
    f_min: float
    power: float
    scale: float


def encode(sf: SpectrogramFile) -> bytes:
    v = np.ascontiguousarray(sf.values, dtype="<f4")
    f, n = v.shape
    head = _HEADER.pack(MAGIC, f, n, sf.hop, sf.bins_per_octave, sf.sample_rate,
                        sf.f_min, sf.power, sf.scale)
    return head + v.tobytes()


def decode(data: bytes) -> SpectrogramFile:
    if len(data) < HEADER_SIZE:
        raise ValueError(f"spectrogram file shorter than its {HEADER_SIZE}-byte header")
    magic, f, n, hop, bpo, sr, f_min, power, scale = _HEADER.unpack(data[:HEADER_SIZE])
    if magic != MAGIC:
        raise ValueError(f"bad spectrogram magic {magic!r}")
    body = data[HEADER_SIZE:]
    if len(body) != 4 * f * n:
        raise ValueError(f"payload holds {len(body)} bytes, header implies {4 * f * n}")
    values = np.frombuffer(body, dtype="<f4").reshape(f, n)
    return SpectrogramFile(values, hop, bpo, sr, f_min, power, scale)


def write(path, sf: SpectrogramFile) -> None:
    Path(path).write_bytes(encode(sf))


def read(path) -> SpectrogramFile:
    return decode(Path(path).read_bytes())
