"""Full acoustic feature vector: the ordered concatenation of every block."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import harmony, rhythm, timbre
from .dsp import AudioClip

LEDGER_VERSION = "1"
# a shorter, earlier total for the same blocks; the ledger report prints both
ALT_TOTAL = 2440

FEATURE_BLOCKS: tuple[tuple[str, int], ...] = (
    ("TFD", 10),
    ("MFCC", 460),
    ("DMFCC", 460),
    ("MSP", 320),
    *rhythm.RHYTHM_BLOCKS,
    ("SIHPCP", harmony.SI_BINS),
    ("MODE", 1),
    ("SI", 6 * harmony.SI_BINS),
)


def total_dims() -> int:
    return sum(d for _, d in FEATURE_BLOCKS)


def _si24_names() -> list[str]:
    return [f"{half}.k{k}" for half in ("sum", "diff") for k in range(harmony.SI_BINS)]


def block_names(block: str) -> list[str]:
    """Column names within ``block``, without the block prefix."""
    if block == "TFD":
        return timbre.mcv_names(["rms", "zcr"])
    if block in ("MFCC", "DMFCC"):
        return timbre.mcv_names([str(i) for i in range(timbre.MFCC_COEFFS)])
    if block == "MSP":
        return timbre.msp_names()
    if block == "TEMPO":
        return ["primary", "secondary"]
    if block == "TG_LIN":
        return [f"bpm{b:03d}" for b in range(rhythm.N_BPM)]
    if block == "TGR":
        return [f"{band}.r{i:02d}" for band in "BTH" for i in range(len(rhythm.TGR_RATIOS))]
    if block == "BPDIST":
        return [f"{band}.bin{i:02d}" for band in "BTH" for i in range(rhythm.PROFILE_BINS)]
    if block == "MELLIN":
        return [f"s{i:03d}" for i in range(rhythm.MELLIN_DIMS)]
    if block == "SIHPCP":
        return [f"k{k}" for k in range(harmony.SI_BINS)]
    if block == "MODE":
        return ["major"]
    if block == "SI":
        return [f"{src}.{n}" for src in ("CH", "CHC", "KC") for n in _si24_names()]
    raise KeyError(block)


def column_names() -> list[str]:
    return [f"{b}.{n}" for b, _ in FEATURE_BLOCKS for n in block_names(b)]


@dataclass
class FeatureVector:
    ad_id: str
    values: np.ndarray

    def block(self, name: str) -> np.ndarray:
        start = 0
        for b, d in FEATURE_BLOCKS:
            if b == name:
                return self.values[start:start + d]
            start += d
        raise KeyError(name)


def extract_blocks(clip: AudioClip) -> dict[str, np.ndarray]:
    out = timbre.timbre_blocks(clip)
    out.update(rhythm.rhythm_blocks(clip))
    h = harmony.harmony_blocks(clip)
    out["SIHPCP"] = h["SIHPCP"]
    out["MODE"] = h["MODE"]
    out["SI"] = np.concatenate([h["SICH"], h["SICHC"], h["SIKC"]])
    return out


def extract_features(clip: AudioClip) -> FeatureVector:
    """All feature blocks for one clip, in ledger order."""
    blocks = extract_blocks(clip)
    parts = []
    for name, dim in FEATURE_BLOCKS:
        v = np.asarray(blocks[name], dtype=np.float64).ravel()
        if v.size != dim:
            raise AssertionError(f"block {name} has {v.size} values, ledger says {dim}")
        parts.append(v)
    values = np.concatenate(parts)
    if not np.all(np.isfinite(values)):
        raise ValueError(f"non-finite feature values for clip {clip.id!r}")
    return FeatureVector(clip.id, values)


def write_feature_csv(rows: list[FeatureVector], path) -> None:
    """One row per ad, sorted by ad_id; values written with full precision."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["ad_id", *column_names()])
        for fv in sorted(rows, key=lambda r: r.ad_id):
            w.writerow([fv.ad_id, *(repr(float(v)) for v in fv.values)])


def read_feature_csv(path) -> tuple[list[str], np.ndarray, list[str]]:
    """Return (ad_ids, X, column_names)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "ad_id":
            raise ValueError(f"{path}: feature CSV must start with an ad_id column")
        ids, rows = [], []
        for row in reader:
            if len(row) != len(header):
                raise ValueError(f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}")
            ids.append(row[0])
            try:
                rows.append([float(v) for v in row[1:]])
            except ValueError as exc:
                raise ValueError(f"{path}:{reader.line_num}: {exc}") from None
    X = np.array(rows, dtype=np.float64).reshape(len(rows), len(header) - 1)
    return ids, X, header[1:]


def sidecar(n_rows: int) -> dict:
    return {
        "ledger_version": LEDGER_VERSION,
        "n_rows": n_rows,
        "n_columns": total_dims(),
        "blocks": [[name, dim] for name, dim in FEATURE_BLOCKS],
    }
