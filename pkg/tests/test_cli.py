import json
import shutil
import struct
import subprocess
import sys

import numpy as np
import pytest

from adquality import cli, engagement, evaluation, features, specio
from adquality.dsp import TARGET_RATE, AudioClip, encode_wav
from adquality.linear import LinearModel, selected_coefficients
from adquality.synth import make_corpus, make_event_log, write_corpus

DURATION = 4.0


@pytest.fixture(scope="module")
def corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    ads = make_corpus(12, seed=5, duration=DURATION)
    audio = write_corpus(ads, root / "audio")
    (audio / "truth.csv").unlink()
    log = root / "events.csv"
    engagement.write_event_log(make_event_log({a.ad_id: a.label for a in ads}, seed=5), log)
    labels = root / "labels.csv"
    engagement.write_labels(
        [engagement.QualityLabel(a.ad_id, a.label, "LCR", float(a.label)) for a in ads], labels)
    return {"root": root, "audio": audio, "log": log, "labels": labels, "ads": ads}


@pytest.fixture(scope="module")
def built(corpus):
    """Feature CSV and spectrogram directory for the whole corpus."""
    root = corpus["root"]
    assert cli.main(["extract", str(corpus["audio"]), str(root / "features.csv")]) == 0
    assert cli.main(["spectrogram", str(corpus["audio"]), str(root / "specs")]) == 0
    return {"features": root / "features.csv", "specs": root / "specs"}


def small_dir(corpus, tmp_path, n):
    d = tmp_path / "wavs"
    d.mkdir()
    for p in sorted(corpus["audio"].glob("*.wav"))[:n]:
        shutil.copy(p, d / p.name)
    return d


# extract


def test_extract_two_files(corpus, tmp_path):
    d = small_dir(corpus, tmp_path, 2)
    out = tmp_path / "f.csv"
    assert cli.main(["extract", str(d), str(out)]) == 0
    ids, X, cols = features.read_feature_csv(out)
    assert ids == ["ad0000", "ad0001"]
    assert X.shape == (2, 2475) and cols == features.column_names()
    meta = json.loads((tmp_path / "f.csv.json").read_text())
    assert meta["n_rows"] == 2 and meta["n_columns"] == 2475
    assert (tmp_path / "f.csv.failures.csv").read_text() == "ad_id,error\n"


def test_extract_partial_failure(corpus, tmp_path):
    d = small_dir(corpus, tmp_path, 2)
    (d / "broken.wav").write_bytes(b"RIFF\x00\x00junk")
    out = tmp_path / "f.csv"
    assert cli.main(["extract", str(d), str(out)]) == cli.EXIT_PARTIAL
    ids, _, _ = features.read_feature_csv(out)
    assert len(ids) == 2
    fails = (tmp_path / "f.csv.failures.csv").read_text().splitlines()
    assert len(fails) == 2 and fails[1].startswith("broken,")


def test_extract_deterministic_and_parallel(corpus, tmp_path):
    d = small_dir(corpus, tmp_path, 3)
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    assert cli.main(["extract", str(d), str(a)]) == 0
    assert cli.main(["extract", str(d), str(b)]) == 0
    assert cli.main(["extract", str(d), str(c), "--workers", "2"]) == 0
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()


def test_extract_all_failed(tmp_path):
    (tmp_path / "x.wav").write_bytes(b"nope")
    assert cli.main(["extract", str(tmp_path), str(tmp_path / "f.csv")]) == cli.EXIT_DATA


# spectrogram


def test_spectrogram_header(built):
    sf = specio.read(built["specs"] / "ad0000.cqt")
    n = int(round(DURATION * TARGET_RATE))
    assert sf.values.shape == (100, 1 + n // 1024)
    assert (sf.hop, sf.bins_per_octave, sf.sample_rate) == (1024, 12, 44100)
    assert sf.f_min == pytest.approx(32.70, abs=1e-9)
    raw = (built["specs"] / "ad0000.cqt").read_bytes()
    f, n_frames = struct.unpack_from("<8s5I", raw)[1:3]
    assert (f, n_frames) == sf.values.shape
    assert len(raw) == 64 + 4 * sf.values.size


def test_spectrogram_silence(tmp_path):
    d = tmp_path / "in"
    d.mkdir()
    (d / "quiet.wav").write_bytes(encode_wav(AudioClip(np.zeros(TARGET_RATE), TARGET_RATE)))
    assert cli.main(["spectrogram", str(d), str(tmp_path / "out")]) == 0
    assert np.all(specio.read(tmp_path / "out" / "quiet.cqt").values == 0)


# label


def test_label_pipeline(corpus, tmp_path, capsys):
    out = tmp_path / "labels.csv"
    stats = tmp_path / "stats.csv"
    assert cli.main(["label", str(corpus["log"]), str(out), "--stats", str(stats)]) == 0
    labels = engagement.read_labels(out)
    assert sum(labels.values()) == 4 and len(labels) == 8
    assert "12 with impressions" in capsys.readouterr().out
    assert stats.read_text().splitlines()[0] == ",".join(engagement.STATS_COLUMNS)


def test_label_bad_log(tmp_path):
    p = tmp_path / "log.csv"
    p.write_text("ad_id,user_id,event,dwell_seconds,timestamp\na,u,hover,0,1\n")
    assert cli.main(["label", str(p), str(tmp_path / "l.csv")]) == cli.EXIT_DATA


# train / evaluate / score / report


def train(args, out):
    assert cli.main(["train", *args, "--out", str(out)]) == 0
    return out.read_bytes()


def test_train_models_deterministic(built, corpus, tmp_path):
    common = ["--labels", str(corpus["labels"])]
    runs = {
        "l1": ["--method", "l1-lr", "--features", str(built["features"]), "--lam", "0.05"],
        "mlp": ["--method", "mlp", "--features", str(built["features"]), "--epochs", "3"],
        "cnn": ["--method", "cnn", "--spectrograms", str(built["specs"]), "--epochs", "1"],
    }
    for name, args in runs.items():
        a = train(args + common, tmp_path / f"{name}.a")
        b = train(args + common, tmp_path / f"{name}.b")
        assert a == b, name


def test_evaluate_oracle(built, corpus, tmp_path):
    stem = tmp_path / "rep"
    args = ["evaluate", "--method", "oracle", "--features", str(built["features"]),
            "--labels", str(corpus["labels"]), "--k", "3", "--out", str(stem)]
    assert cli.main(args) == 0
    reps = {r.method: r for r in evaluation.reports_from_csv((tmp_path / "rep.csv").read_text())}
    assert reps["oracle"].mean_auc == 1.0
    first = ((tmp_path / "rep.csv").read_bytes(), (tmp_path / "rep.txt").read_bytes())
    assert cli.main(args) == 0
    assert first == ((tmp_path / "rep.csv").read_bytes(), (tmp_path / "rep.txt").read_bytes())
    assert (tmp_path / "rep.runtime.txt").exists()


def test_score_cnn_and_linear(built, corpus, tmp_path):
    cnn_model = tmp_path / "cnn.bin"
    train(["--method", "cnn", "--spectrograms", str(built["specs"]), "--epochs", "1",
           "--labels", str(corpus["labels"])], cnn_model)
    out = tmp_path / "scores.csv"
    d = small_dir(corpus, tmp_path, 2)
    assert cli.main(["score", str(cnn_model), str(d), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert rows[0] == "ad_id,probability" and len(rows) == 3
    assert all(0 < float(r.split(",")[1]) < 1 for r in rows[1:])

    lr_model = tmp_path / "lr.json"
    train(["--method", "lr", "--features", str(built["features"]),
           "--labels", str(corpus["labels"])], lr_model)
    assert cli.main(["score", str(lr_model), str(d), "--out", str(out)]) == 0
    assert len(out.read_text().splitlines()) == 3


def test_report_lists_nonzero_coefficients(built, corpus, tmp_path, capsys):
    model = tmp_path / "l1.json"
    train(["--method", "l1-lr", "--features", str(built["features"]), "--lam", "0.1",
           "--labels", str(corpus["labels"])], model)
    coef = tmp_path / "coef.csv"
    ledger = tmp_path / "ledger.txt"
    assert cli.main(["report", "--model", str(model), "--features", str(built["features"]),
                     "--out", str(coef), "--ledger", str(ledger)]) == 0
    rows = coef.read_text().splitlines()
    assert rows[0] == "feature_name,coefficient"
    weights = [float(r.rsplit(",", 1)[1]) for r in rows[1:]]
    assert all(w != 0 for w in weights)
    assert weights == sorted(weights, key=lambda w: -abs(w))
    assert len(rows) - 1 == len(selected_coefficients(LinearModel.from_json(model.read_text())))
    text = ledger.read_text()
    assert "2475" in text and "(12 rows)" in text
    assert "2475" in capsys.readouterr().out


# exit codes


@pytest.mark.parametrize("argv", [
    ["extract", "/no/such/dir", "out.csv"],
    ["label", "/no/such/log.csv", "out.csv"],
    ["score", "/no/such/model", "."],
    ["report", "--model", "/no/such/model"],
    ["extract", ".", "out.csv", "--workers", "0"],
])
def test_config_errors(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert cli.main(argv) == cli.EXIT_CONFIG


def test_cnn_needs_spectrograms(corpus, tmp_path):
    argv = ["train", "--method", "cnn", "--labels", str(corpus["labels"]), "--out", str(tmp_path / "m")]
    assert cli.main(argv) == cli.EXIT_CONFIG


def test_single_class_labels_is_data_error(built, tmp_path):
    labels = tmp_path / "one.csv"
    labels.write_text("ad_id,label\nad0000,1\nad0001,1\n")
    argv = ["train", "--method", "lr", "--features", str(built["features"]),
            "--labels", str(labels), "--out", str(tmp_path / "m")]
    assert cli.main(argv) == cli.EXIT_DATA


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "adquality.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for cmd in ("extract", "spectrogram", "label", "train", "evaluate", "score", "report"):
        assert cmd in res.stdout
