"""Cross-validation harness: AUC, stratified folds, reports and the feature ledger."""

from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.stats

from .features import ALT_TOTAL, FEATURE_BLOCKS, LEDGER_VERSION, total_dims

METHODS = ("LR", "L1-LR", "MLP", "CNN", "oracle", "coin")
CI_Z = 1.96


class EvaluationError(ValueError):
    pass


def auc(scores, labels) -> float:
    """Mann-Whitney AUC; tied positive/negative pairs count one half."""
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel()
    if scores.size != labels.size:
        raise ValueError("scores and labels differ in length")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != labels.size:
        raise ValueError("labels must be 0/1")
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs both classes present")
    ranks = scipy.stats.rankdata(scores)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class FoldPlan:
    folds: list[np.ndarray]  # sample indices per fold
    k: int
    seed: int
    group_folds: list[list] = field(default_factory=list)

    def ad_folds(self, ad_ids: Sequence[str]) -> list[list[str]]:
        return [sorted({ad_ids[i] for i in f}) for f in self.folds]

    def train_test(self, i: int, n: int) -> tuple[np.ndarray, np.ndarray]:
        mask = np.zeros(n, dtype=bool)
        mask[self.folds[i]] = True
        return np.flatnonzero(~mask), self.folds[i]


def stratified_kfold(labels, k: int = 10, seed: int = 0, groups: Sequence | None = None) -> FoldPlan:
    """Seeded stratified k-fold.

    Units (samples, or groups when ``groups`` is given) are shuffled within
    each class and dealt round-robin, the deal continuing from class to
    class, so per-class and total fold sizes each differ by at most one.
    """
    labels = np.asarray(labels).ravel()
    n = labels.size
    if groups is None:
        unit_of = np.arange(n)
        units = list(range(n))
        unit_label = labels
    else:
        if len(groups) != n:
            raise ValueError("groups and labels differ in length")
        units = sorted(set(groups))
        index = {g: i for i, g in enumerate(units)}
        unit_of = np.array([index[g] for g in groups])
        unit_label = np.empty(len(units), dtype=labels.dtype)
        seen = np.zeros(len(units), dtype=bool)
        for u, lab in zip(unit_of, labels):
            if seen[u] and unit_label[u] != lab:
                raise ValueError(f"group {units[u]!r} mixes labels")
            unit_label[u], seen[u] = lab, True
    if not 2 <= k <= len(units):
        raise ValueError(f"k must be in [2, {len(units)}], got {k}")
    rng = np.random.default_rng(seed)
    fold_of_unit = np.empty(len(units), dtype=np.int64)
    pos = 0
    for cls in np.unique(unit_label):
        members = rng.permutation(np.flatnonzero(unit_label == cls))
        fold_of_unit[members] = (pos + np.arange(members.size)) % k
        pos += members.size
    fold_of = fold_of_unit[unit_of]
    folds = [np.flatnonzero(fold_of == f) for f in range(k)]
    group_folds = [[units[u] for u in np.flatnonzero(fold_of_unit == f)] for f in range(k)]
    return FoldPlan(folds, k, seed, group_folds if groups is not None else [])


# ---------------------------------------------------------------------------
# datasets and methods
# ---------------------------------------------------------------------------


@dataclass
class LabeledDataset:
    X: np.ndarray
    y: np.ndarray
    ad_ids: list[str]
    column_names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.ad_ids)


@dataclass
class SpectrogramDataset:
    specs: list[np.ndarray]  # log-CQT, F x N each
    y: np.ndarray
    ad_ids: list[str]

    def __len__(self):
        return len(self.ad_ids)


def _fit(method, data, train, config: dict, seed: int):
    """Train on ``train`` rows; return (predict(rows) -> scores, extras)."""
    y = np.asarray(data.y)
    if callable(method):
        def custom(rows):
            return np.asarray(method(data.X[train], y[train], data.X[rows]), dtype=np.float64)
        return custom, {}
    if method == "oracle":
        return (lambda rows: y[rows].astype(np.float64)), {}
    if method == "coin":
        rng = np.random.default_rng(seed)
        return (lambda rows: rng.random(len(rows))), {}
    if method in ("LR", "L1-LR"):
        from .linear import decision_function, lr_train, select_lambda

        lam = 0.0 if method == "LR" else config.get("lam")
        if lam is None:
            lam = select_lambda(data.X[train], y[train], seed=seed)
        m = lr_train(data.X[train], y[train], lam, config.get("max_iters", 5000), config.get("tol", 1e-6))
        extras = {"lambda": lam, "support": int(np.count_nonzero(m.weights))}
        return (lambda rows: decision_function(m, data.X[rows])), extras
    if method == "MLP":
        from .mlp import DEFAULT_HIDDEN, DROPOUT, mlp_fit, mlp_predict

        p, _ = mlp_fit(data.X[train], y[train], config.get("hidden", DEFAULT_HIDDEN),
                       config.get("dropout", DROPOUT), seed, config.get("batch_size", 50),
                       config.get("epochs", 200))
        return (lambda rows: mlp_predict(p, data.X[rows])), {}
    if method == "CNN":
        from .cnn import cnn_init, cnn_predict_ad, cnn_train, cqt_patch_sample

        patches, plabels = [], []
        for i in train:
            for q in cqt_patch_sample(data.specs[i], config.get("patches", 3), seed * 100003 + int(i)):
                patches.append(q.values)
                plabels.append(y[i])
        p = cnn_init(data.specs[0].shape[0], config.get("profile", "desk"), seed)
        cnn_train(p, patches, plabels, config.get("epochs", 14), config.get("batch_size", 64))
        return (lambda rows: np.array([cnn_predict_ad(p, data.specs[i]) for i in rows])), {}
    raise ValueError(f"unknown method {method!r}; choose from {METHODS} or pass a callable")


@dataclass
class EvalReport:
    method: str
    fold_aucs: list[float]
    fold_sizes: list[int]
    fold_positives: list[int]
    seed: int = 0
    train_seconds: list[float] = field(default_factory=list)
    predict_seconds: list[float] = field(default_factory=list)
    extras: list[dict] = field(default_factory=list)

    @property
    def k(self) -> int:
        return len(self.fold_aucs)

    @property
    def mean_auc(self) -> float:
        return float(np.mean(self.fold_aucs))

    @property
    def ci95(self) -> float:
        """Normal-approximation half-width over folds (sample std)."""
        if self.k < 2:
            return 0.0
        return float(CI_Z * np.std(self.fold_aucs, ddof=1) / np.sqrt(self.k))


def cross_validate(method, dataset, plan: FoldPlan, config: dict | None = None) -> EvalReport:
    """Train on k-1 folds, score the held-out fold, for every fold in ``plan``."""
    config = dict(config or {})
    y = np.asarray(dataset.y)
    name = method if isinstance(method, str) else getattr(method, "__name__", "custom")
    rep = EvalReport(name, [], [], [], plan.seed)
    for i in range(plan.k):
        train, test = plan.train_test(i, len(y))
        t0 = time.perf_counter()
        predict, extra = _fit(method, dataset, train, config, plan.seed + i)
        t1 = time.perf_counter()
        scores = predict(test)
        t2 = time.perf_counter()
        rep.fold_aucs.append(auc(scores, y[test]))
        rep.fold_sizes.append(int(test.size))
        rep.fold_positives.append(int((y[test] == 1).sum()))
        rep.train_seconds.append(t1 - t0)
        rep.predict_seconds.append(t2 - t1)
        rep.extras.append(extra)
    return rep


# ---------------------------------------------------------------------------
# report files
# ---------------------------------------------------------------------------

REPORT_COLUMNS = ("method", "fold", "n_test", "n_pos", "auc")


def reports_to_csv(reports: Sequence[EvalReport]) -> str:
    """Per-fold rows. Wall-times are kept out so reruns are byte-identical."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_COLUMNS)
    for r in reports:
        for i, (a, n, npos) in enumerate(zip(r.fold_aucs, r.fold_sizes, r.fold_positives)):
            w.writerow([r.method, i, n, npos, repr(float(a))])
    return buf.getvalue()


def reports_from_csv(text: str) -> list[EvalReport]:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or tuple(reader.fieldnames) != REPORT_COLUMNS:
        raise ValueError(f"report CSV must have columns {REPORT_COLUMNS}")
    out: dict[str, EvalReport] = {}
    for row in reader:
        r = out.setdefault(row["method"], EvalReport(row["method"], [], [], []))
        r.fold_aucs.append(float(row["auc"]))
        r.fold_sizes.append(int(row["n_test"]))
        r.fold_positives.append(int(row["n_pos"]))
    return list(out.values())


def reports_to_text(reports: Sequence[EvalReport]) -> str:
    """AUC table: method, mean AUC with its 95% interval half-width, folds."""
    lines = [f"{'method':<10} {'mean_auc':>9} {'ci95':>9} {'folds':>6}"]
    for r in reports:
        lines.append(f"{r.method:<10} {r.mean_auc:>9.4f} {'±' + format(r.ci95, '.4f'):>9} {r.k:>6}")
    return "\n".join(lines) + "\n"


def runtime_to_text(reports: Sequence[EvalReport]) -> str:
    lines = [f"{'method':<10} {'train_s':>10} {'predict_s':>10}"]
    for r in reports:
        lines.append(f"{r.method:<10} {sum(r.train_seconds):>10.3f} {sum(r.predict_seconds):>10.3f}")
    return "\n".join(lines) + "\n"


def write_reports(reports: Sequence[EvalReport], stem) -> dict[str, str]:
    """Write ``stem``.csv, ``stem``.txt and the non-deterministic ``stem``.runtime.txt."""
    stem = str(stem)
    paths = {"csv": stem + ".csv", "text": stem + ".txt", "runtime": stem + ".runtime.txt"}
    with open(paths["csv"], "w", newline="") as fh:
        fh.write(reports_to_csv(reports))
    with open(paths["text"], "w") as fh:
        fh.write(reports_to_text(reports))
    with open(paths["runtime"], "w") as fh:
        fh.write(runtime_to_text(reports))
    return paths


# ---------------------------------------------------------------------------
# feature ledger
# ---------------------------------------------------------------------------


@dataclass
class FeatureLedger:
    blocks: list[tuple[str, int]]
    total: int
    n_rows: int
    note: str

    def to_text(self) -> str:
        lines = [f"feature ledger v{LEDGER_VERSION} ({self.n_rows} rows)"]
        lines += [f"  {name:<8} {dim:>5}" for name, dim in self.blocks]
        lines.append(f"  {'total':<8} {self.total:>5}")
        lines.append(self.note)
        return "\n".join(lines) + "\n"


def feature_ledger(dataset: LabeledDataset | None = None) -> FeatureLedger:
    """Per-block dimensions and their total, checked against ``dataset`` if given."""
    total = total_dims()
    n_rows = 0
    if dataset is not None:
        X = np.asarray(dataset.X)
        n_rows = X.shape[0] if X.ndim == 2 else 0
        if n_rows and X.shape[1] != total:
            raise EvaluationError(f"dataset has {X.shape[1]} columns, ledger total is {total}")
    note = (f"note: the blocks above total {total} dimensions; the MLP input size "
            f"commonly quoted for this feature set is {ALT_TOTAL} ({total - ALT_TOTAL} fewer). "
            f"This build uses all {total}.")
    return FeatureLedger(list(FEATURE_BLOCKS), total, n_rows, note)
