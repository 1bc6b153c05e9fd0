"""Command-line front end: ``adquality <command> ...``.

Exit codes: 0 success, 1 partial success (some inputs failed),
2 configuration error, 3 data error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import engagement, evaluation, features, specio
from .dsp import CQT_FMIN, DecodeError, load_wav, log_cqt

log = logging.getLogger("adquality")

EXIT_OK, EXIT_PARTIAL, EXIT_CONFIG, EXIT_DATA = 0, 1, 2, 3
CQT_BINS, CQT_HOP, CQT_POWER, CQT_SCALE = 100, 1024, 2.0, 0.1
METHOD_CHOICES = ("lr", "l1-lr", "mlp", "cnn")


class ConfigError(Exception):
    pass


class DataError(Exception):
    pass


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------


def _wav_files(audio: str) -> list[Path]:
    path = Path(audio)
    if path.is_file():
        return [path]
    if not path.is_dir():
        raise ConfigError(f"no such file or directory: {audio}")
    return sorted(p for p in path.iterdir() if p.suffix.lower() == ".wav")


def _extract_one(path: str):
    try:
        clip = load_wav(path)
        return clip.id, features.extract_features(clip).values, None
    except (DecodeError, ValueError, OSError) as exc:
        return Path(path).stem, None, f"{type(exc).__name__}: {exc}"


def _spectrogram_one(path: str):
    try:
        clip = load_wav(path)
        spec = log_cqt(clip, CQT_BINS, CQT_HOP)
        return clip.id, spec.magnitudes, None
    except (DecodeError, ValueError, OSError) as exc:
        return Path(path).stem, None, f"{type(exc).__name__}: {exc}"


def _map(fn, items, workers: int):
    if workers <= 1 or len(items) <= 1:
        return [fn(i) for i in items]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _write_failures(path: Path, failures: list[tuple[str, str]]) -> None:
    with open(path, "w") as fh:
        fh.write("ad_id,error\n")
        for ad, err in failures:
            fh.write(f"{ad},{json.dumps(err)}\n")


def _read_spectrograms(spec_dir: str) -> dict[str, np.ndarray]:
    d = Path(spec_dir)
    if not d.is_dir():
        raise ConfigError(f"spectrogram directory not found: {spec_dir}")
    out = {}
    for p in sorted(d.glob("*" + specio.SUFFIX)):
        try:
            out[p.name[: -len(specio.SUFFIX)]] = specio.read(p).values.astype(np.float64)
        except ValueError as exc:
            raise DataError(f"{p}: {exc}") from None
    if not out:
        raise DataError(f"no {specio.SUFFIX} files in {spec_dir}")
    return out


def _labels(path: str) -> dict[str, int]:
    if not Path(path).is_file():
        raise ConfigError(f"label file not found: {path}")
    try:
        return engagement.read_labels(path)
    except ValueError as exc:
        raise DataError(str(exc)) from None


def _join(ids: list[str], labels: dict[str, int]) -> tuple[list[int], np.ndarray]:
    """Rows of ``ids`` that carry a label, sorted by ad_id."""
    rows = sorted((ad, i) for i, ad in enumerate(ids) if ad in labels)
    missing = len(ids) - len(rows)
    if missing:
        log.warning("%d ads have no label and are skipped", missing)
    if not rows:
        raise DataError("no ad has both inputs and a label")
    idx = [i for _, i in rows]
    y = np.array([labels[ids[i]] for i in idx], dtype=np.int64)
    if np.unique(y).size < 2:
        raise DataError("labelled ads cover only one class")
    return idx, y


def _feature_dataset(feature_csv: str, label_csv: str) -> evaluation.LabeledDataset:
    if not Path(feature_csv).is_file():
        raise ConfigError(f"feature file not found: {feature_csv}")
    try:
        ids, X, cols = features.read_feature_csv(feature_csv)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    idx, y = _join(ids, _labels(label_csv))
    return evaluation.LabeledDataset(X[idx], y, [ids[i] for i in idx], cols)


def _spec_dataset(spec_dir: str, label_csv: str) -> evaluation.SpectrogramDataset:
    specs = _read_spectrograms(spec_dir)
    ids = sorted(specs)
    idx, y = _join(ids, _labels(label_csv))
    return evaluation.SpectrogramDataset([specs[ids[i]] for i in idx], y, [ids[i] for i in idx])


def load_model(path):
    """LinearModel, MLPParams or CNNParams from a model file."""
    from . import modelfile
    from .cnn import CNNParams
    from .linear import LinearModel
    from .mlp import MLPParams

    data = Path(path).read_bytes()
    if data.startswith(modelfile.MAGIC):
        header, arrays = modelfile.loads(data)
        kind = header.get("kind")
        if kind == "mlp":
            return MLPParams.from_header(header, arrays)
        if kind == "cnn":
            return CNNParams.from_header(header, arrays)
        raise modelfile.ModelFormatError(f"unknown model kind {kind!r}")
    return LinearModel.from_json(data.decode())


def model_bytes(model) -> bytes:
    from .linear import LinearModel

    if isinstance(model, LinearModel):
        return (model.to_json() + "\n").encode()
    return model.to_bytes()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_extract(args) -> int:
    files = _wav_files(args.audio)
    if not files:
        raise DataError(f"no .wav files in {args.audio}")
    results = _map(_extract_one, [str(f) for f in files], args.workers)
    rows = [features.FeatureVector(ad, v) for ad, v, err in results if err is None]
    failures = sorted((ad, err) for ad, _, err in results if err is not None)
    out = Path(args.out)
    features.write_feature_csv(rows, out)
    Path(str(out) + ".json").write_text(json.dumps(features.sidecar(len(rows)), indent=1) + "\n")
    fail_path = Path(args.failures or str(out) + ".failures.csv")
    _write_failures(fail_path, failures)
    print(f"extracted {len(rows)} of {len(files)} files -> {out}")
    for ad, err in failures:
        print(f"  failed {ad}: {err}", file=sys.stderr)
    if not rows:
        return EXIT_DATA
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_spectrogram(args) -> int:
    files = _wav_files(args.audio)
    if not files:
        raise DataError(f"no .wav files in {args.audio}")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    results = _map(_spectrogram_one, [str(f) for f in files], args.workers)
    failures = []
    for ad, mags, err in sorted(results, key=lambda r: r[0]):
        if err is not None:
            failures.append((ad, err))
            continue
        specio.write(out / f"{ad}{specio.SUFFIX}",
                     specio.SpectrogramFile(mags, CQT_HOP, 12, 44100, CQT_FMIN, CQT_POWER, CQT_SCALE))
    _write_failures(out / "failures.csv", failures)
    print(f"wrote {len(files) - len(failures)} of {len(files)} spectrograms -> {out}")
    if len(failures) == len(files):
        return EXIT_DATA
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_label(args) -> int:
    if not Path(args.log).is_file():
        raise ConfigError(f"event log not found: {args.log}")
    try:
        records = engagement.parse_event_log(args.log)
    except engagement.LogParseError as exc:
        raise DataError(str(exc)) from None
    report = engagement.compute_stats(records, args.dwell)
    if args.stats:
        engagement.write_stats(report.stats, args.stats)
    kept = engagement.filter_ads(report.stats, args.metric, args.min_impressions, args.min_long)
    try:
        labels = engagement.percentile_label(kept, args.metric, args.top, args.bottom)
    except engagement.LabelError as exc:
        raise DataError(str(exc)) from None
    engagement.write_labels(labels, args.out)
    good = sum(q.label for q in labels)
    print(f"ads: {len(report.stats)} with impressions, {len(kept)} after filter; "
          f"labels: {good} good, {len(labels) - good} bad, {len(kept) - len(labels)} unlabelled")
    if report.omitted_ads:
        print(f"warning: {len(report.omitted_ads)} ads had clicks but no impressions", file=sys.stderr)
    if report.orphan_long_clicks:
        print(f"warning: {len(report.orphan_long_clicks)} long-click users had no impression",
              file=sys.stderr)
    return EXIT_OK


def _train(args):
    method = args.method
    if method == "cnn":
        if not args.spectrograms:
            raise ConfigError("--spectrograms is required for the cnn method")
        from .cnn import cnn_init, cnn_train, cqt_patch_sample

        ds = _spec_dataset(args.spectrograms, args.labels)
        patches, plabels = [], []
        for i, (spec, lab) in enumerate(zip(ds.specs, ds.y)):
            for q in cqt_patch_sample(spec, args.patches, args.seed * 100003 + i, ds.ad_ids[i]):
                patches.append(q.values)
                plabels.append(int(lab))
        p = cnn_init(ds.specs[0].shape[0], args.profile, args.seed)
        cnn_train(p, patches, plabels, args.epochs or 14, args.batch_size or 64)
        return p
    if not args.features:
        raise ConfigError(f"--features is required for the {method} method")
    ds = _feature_dataset(args.features, args.labels)
    if method in ("lr", "l1-lr"):
        from .linear import lr_train, select_lambda

        lam = 0.0 if method == "lr" else args.lam
        if lam is None:
            lam = select_lambda(ds.X, ds.y, seed=args.seed)
            print(f"selected lambda {lam:g}")
        return lr_train(ds.X, ds.y, lam, column_names=ds.column_names,
                        ledger_version=features.LEDGER_VERSION)
    from .mlp import DEFAULT_HIDDEN, DROPOUT, mlp_fit

    p, _ = mlp_fit(ds.X, ds.y, DEFAULT_HIDDEN, DROPOUT, args.seed, args.batch_size or 50,
                   args.epochs or 200)
    return p


def cmd_train(args) -> int:
    model = _train(args)
    Path(args.out).write_bytes(model_bytes(model))
    print(f"wrote {args.method} model -> {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    reports = []
    for method in args.method:
        config = {"lam": args.lam, "profile": args.profile}
        if args.epochs:
            config["epochs"] = args.epochs
        if args.batch_size:
            config["batch_size"] = args.batch_size
        if method == "cnn":
            if not args.spectrograms:
                raise ConfigError("--spectrograms is required for the cnn method")
            ds = _spec_dataset(args.spectrograms, args.labels)
        else:
            if not args.features:
                raise ConfigError(f"--features is required for the {method} method")
            ds = _feature_dataset(args.features, args.labels)
        plan = evaluation.stratified_kfold(ds.y, args.k, args.seed, groups=ds.ad_ids)
        name = {"lr": "LR", "l1-lr": "L1-LR", "mlp": "MLP", "cnn": "CNN", "oracle": "oracle"}[method]
        reports.append(evaluation.cross_validate(name, ds, plan, config))
    paths = evaluation.write_reports(reports, args.out)
    print(evaluation.reports_to_text(reports), end="")
    print(f"reports -> {paths['csv']}, {paths['text']} (timings in {paths['runtime']})")
    return EXIT_OK


def cmd_score(args) -> int:
    from .cnn import CNNParams, cnn_predict_ad
    from .linear import LinearModel, lr_predict
    from .mlp import mlp_predict

    if not Path(args.model).is_file():
        raise ConfigError(f"model file not found: {args.model}")
    model = load_model(args.model)
    worker = _spectrogram_one if isinstance(model, CNNParams) else _extract_one
    files = _wav_files(args.audio)
    if not files:
        raise DataError(f"no .wav files in {args.audio}")
    lines, failures = ["ad_id,probability"], 0
    for ad, v, err in sorted(_map(worker, [str(f) for f in files], args.workers), key=lambda r: r[0]):
        if err is not None:
            print(f"  failed {ad}: {err}", file=sys.stderr)
            failures += 1
            continue
        if isinstance(model, CNNParams):
            prob = cnn_predict_ad(model, v)
        elif isinstance(model, LinearModel):
            prob = lr_predict(model, v)
        else:
            prob = float(mlp_predict(model, v))
        lines.append(f"{ad},{prob!r}")
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if failures == len(files):
        return EXIT_DATA
    return EXIT_PARTIAL if failures else EXIT_OK


def cmd_report(args) -> int:
    from .linear import LinearModel, selected_coefficients

    for path in (args.features, args.model):
        if path and not Path(path).is_file():
            raise ConfigError(f"file not found: {path}")
    ledger = evaluation.feature_ledger()
    if args.features:
        ids, X, _ = features.read_feature_csv(args.features)
        ledger = evaluation.feature_ledger(evaluation.LabeledDataset(X, np.zeros(len(ids)), ids))
    text = ledger.to_text()
    if args.ledger:
        Path(args.ledger).write_text(text)
    print(text, end="")
    if args.model:
        model = load_model(args.model)
        if not isinstance(model, LinearModel):
            raise ConfigError("coefficient reports need a linear model")
        coefs = selected_coefficients(model)
        out = args.out or "coefficients.csv"
        with open(out, "w") as fh:
            fh.write("feature_name,coefficient\n")
            for name, w in coefs:
                fh.write(f"{name},{w!r}\n")
        print(f"{len(coefs)} nonzero coefficients (lambda {model.lam:g}) -> {out}")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import make_corpus, make_event_log, write_corpus

    corpus = make_corpus(args.n_ads, args.seed, args.duration)
    out = write_corpus(corpus, args.out)
    rows = make_event_log({a.ad_id: a.label for a in corpus}, args.seed)
    engagement.write_event_log(rows, out / "events.csv")
    print(f"wrote {len(corpus)} ads and {len(rows)} log events -> {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adquality", description="Audio-ad quality pipeline.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="acoustic feature CSV from a directory of WAVs")
    p.add_argument("audio")
    p.add_argument("out")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--failures", help="failure list path (default OUT.failures.csv)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("spectrogram", help="log-CQT files for the CNN")
    p.add_argument("audio")
    p.add_argument("out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("label", help="LCR / R-LCR quality labels from an event log")
    p.add_argument("log")
    p.add_argument("out")
    p.add_argument("--metric", choices=engagement.METRICS, default="LCR")
    p.add_argument("--top", type=float, default=30.0)
    p.add_argument("--bottom", type=float, default=30.0)
    p.add_argument("--dwell", type=float, default=engagement.DWELL_THRESHOLD)
    p.add_argument("--min-impressions", type=int, default=engagement.MIN_IMPRESSIONS)
    p.add_argument("--min-long", type=int, default=engagement.MIN_LONG)
    p.add_argument("--stats", help="also write per-ad stats CSV here")
    p.set_defaults(func=cmd_label)

    def model_flags(p):
        p.add_argument("--features")
        p.add_argument("--spectrograms")
        p.add_argument("--labels", required=True)
        p.add_argument("--lam", type=float, default=None,
                       help="L1 strength (default: inner-CV grid search)")
        p.add_argument("--profile", choices=("paper", "desk"), default="desk")
        p.add_argument("--epochs", type=int, default=None, help="default 200 (mlp) / 14 (cnn)")
        p.add_argument("--batch-size", type=int, default=None, help="default 50 (mlp) / 64 (cnn)")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="fit one model")
    p.add_argument("--method", choices=METHOD_CHOICES, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--patches", type=int, default=3)
    model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="stratified k-fold AUC")
    p.add_argument("--method", choices=METHOD_CHOICES + ("oracle",), action="append", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True, help="report path stem")
    model_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("score", help="P(good) for WAV files")
    p.add_argument("model")
    p.add_argument("audio")
    p.add_argument("--out")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("report", help="feature ledger and L1 coefficient report")
    p.add_argument("--model")
    p.add_argument("--features")
    p.add_argument("--out", help="coefficient CSV (default coefficients.csv)")
    p.add_argument("--ledger", help="also write the ledger text here")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("synth", help="write a synthetic labelled ad corpus")
    p.add_argument("out")
    p.add_argument("--n-ads", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--duration", type=float, default=12.0)
    p.set_defaults(func=cmd_synth)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    for name in ("workers", "k", "epochs", "batch_size", "patches", "n_ads"):
        v = getattr(args, name, None)
        if v is not None and v < 1:
            print(f"error: --{name.replace('_', '-')} must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, evaluation.EvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
