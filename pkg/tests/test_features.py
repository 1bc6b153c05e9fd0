import numpy as np
import pytest

from adquality import features
from adquality.dsp import TARGET_RATE, AudioClip
from adquality.synth import make_ad

EXPECTED_BLOCKS = [
    ("TFD", 10), ("MFCC", 460), ("DMFCC", 460), ("MSP", 320), ("TEMPO", 2),
    ("TG_LIN", 500), ("TGR", 39), ("BPDIST", 108), ("MELLIN", 512),
    ("SIHPCP", 9), ("MODE", 1), ("SI", 54),
]


@pytest.fixture(scope="module")
def ad_vector():
    ad = make_ad("ad0001", 1, seed=3, duration=6.0)
    return features.extract_features(ad.clip)


def test_ledger_blocks():
    assert list(features.FEATURE_BLOCKS) == EXPECTED_BLOCKS
    assert features.total_dims() == 2475


def test_column_names_unique_and_sized():
    names = features.column_names()
    assert len(names) == features.total_dims()
    assert len(set(names)) == len(names)
    for block, dim in features.FEATURE_BLOCKS:
        assert len(features.block_names(block)) == dim


def test_extract_shape_and_finite(ad_vector):
    assert ad_vector.ad_id == "ad0001"
    assert ad_vector.values.shape == (2475,)
    assert np.all(np.isfinite(ad_vector.values))


def test_block_slices(ad_vector):
    blocks = features.extract_blocks(make_ad("ad0001", 1, seed=3, duration=6.0).clip)
    for name, _ in features.FEATURE_BLOCKS:
        assert np.array_equal(ad_vector.block(name), np.ravel(blocks[name]))


def test_extract_deterministic(ad_vector):
    again = features.extract_features(make_ad("ad0001", 1, seed=3, duration=6.0).clip)
    assert np.array_equal(again.values, ad_vector.values)


def test_silence_extracts():
    fv = features.extract_features(AudioClip(np.zeros(3 * TARGET_RATE), TARGET_RATE, "quiet"))
    assert np.all(np.isfinite(fv.values))
    assert fv.block("TEMPO").tolist() == [120.0, 120.0]


def test_csv_round_trip(tmp_path, ad_vector):
    other = features.FeatureVector("ad0000", ad_vector.values[::-1].copy())
    path = tmp_path / "f.csv"
    features.write_feature_csv([ad_vector, other], path)
    ids, X, cols = features.read_feature_csv(path)
    assert ids == ["ad0000", "ad0001"]
    assert cols == features.column_names()
    assert np.array_equal(X[1], ad_vector.values)
    assert np.array_equal(X[0], other.values)


def test_csv_bad_row(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("ad_id,a,b\nx,1.0\n")
    with pytest.raises(ValueError, match=":2:"):
        features.read_feature_csv(path)


def test_sidecar():
    meta = features.sidecar(3)
    assert meta["n_columns"] == 2475 and meta["n_rows"] == 3
    assert sum(d for _, d in meta["blocks"]) == 2475
