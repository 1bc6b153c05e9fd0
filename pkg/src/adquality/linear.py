"""Logistic regression with an optional L1 penalty, fit by proximal gradient."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

LAMBDA_GRID = tuple(float(v) for v in np.logspace(-4, 0, 9))
FORMAT = "adquality.linear"


class TrainingError(ValueError):
    pass


@dataclass
class Standardizer:
    """Per-column z-score fit on training data; constant columns are dropped."""

    mean: np.ndarray
    std: np.ndarray
    keep: np.ndarray  # bool mask over the original columns

    @classmethod
    def fit(cls, X: np.ndarray) -> "Standardizer":
        X = np.asarray(X, dtype=np.float64)
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        keep = std > 1e-12 * np.maximum(1.0, np.abs(mean))
        return cls(mean, std, keep)

    def transform(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        return (X[..., self.keep] - self.mean[self.keep]) / self.std[self.keep]

    def dropped(self, names: list[str] | None = None) -> list:
        idx = np.flatnonzero(~self.keep)
        return [names[i] for i in idx] if names is not None else idx.tolist()


def standardize(X: np.ndarray, names: list[str] | None = None):
    """Return (standardized X, fitted Standardizer, dropped column names/indices)."""
    st = Standardizer.fit(X)
    return st.transform(X), st, st.dropped(names)


@dataclass
class LinearModel:
    weights: np.ndarray  # one per kept column
    intercept: float
    lam: float
    scaler: Standardizer
    column_names: list[str] = field(default_factory=list)
    ledger_version: str = ""
    objective_trace: list[float] = field(default_factory=list, repr=False)
    n_iter: int = 0
    converged: bool = False

    def full_weights(self) -> np.ndarray:
        """Weights over all original columns, 0 for dropped ones."""
        out = np.zeros(self.scaler.keep.size)
        out[self.scaler.keep] = self.weights
        return out

    def to_json(self) -> str:
        doc = {
            "format": FORMAT,
            "version": 1,
            "ledger_version": self.ledger_version,
            "lambda": self.lam,
            "intercept": self.intercept,
            "column_names": list(self.column_names),
            "mean": self.scaler.mean.tolist(),
            "std": self.scaler.std.tolist(),
            "keep": self.scaler.keep.astype(int).tolist(),
            "weights": self.weights.tolist(),
            "n_iter": self.n_iter,
            "converged": self.converged,
        }
        return json.dumps(doc, sort_keys=True, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "LinearModel":
        doc = json.loads(text)
        if doc.get("format") != FORMAT:
            raise ValueError("not a linear model document")
        scaler = Standardizer(np.array(doc["mean"], dtype=np.float64),
                              np.array(doc["std"], dtype=np.float64),
                              np.array(doc["keep"], dtype=bool))
        return cls(np.array(doc["weights"], dtype=np.float64), float(doc["intercept"]),
                   float(doc["lambda"]), scaler, list(doc["column_names"]),
                   doc.get("ledger_version", ""), [], int(doc.get("n_iter", 0)),
                   bool(doc.get("converged", False)))


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    e = np.exp(z[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def soft_threshold(v, t):
    v = np.asarray(v, dtype=np.float64)
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def _smooth_loss(Z, y, w, b) -> float:
    z = Z @ w + b
    return float(np.mean(np.logaddexp(0.0, z) - y * z))


def objective(Z, y, w, b, lam) -> float:
    """Mean binary cross-entropy plus lam * ||w||_1 on standardized inputs."""
    return _smooth_loss(Z, y, w, b) + lam * float(np.abs(w).sum())


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64).ravel()
    if not np.all((y == 0) | (y == 1)):
        raise TrainingError("labels must be 0/1")
    if y.size < 2 or y.min() == y.max():
        raise TrainingError("training needs both classes present")
    return y


def lr_train(X, y, lam: float = 0.0, max_iters: int = 5000, tol: float = 1e-6,
             column_names: list[str] | None = None, ledger_version: str = "") -> LinearModel:
    """Fit by proximal gradient with backtracking, starting from zero.

    Stops when the gradient mapping norm ``||w - w+|| / t`` drops below ``tol``
    (which bounds the objective decrease by ``t * tol**2``) or after
    ``max_iters`` iterations. The objective never increases between iterations.
    """
    if lam < 0:
        raise ValueError("lambda must be non-negative")
    y = _check_labels(y)
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] != y.size:
        raise ValueError(f"X must be (n, d) with n = {y.size}")
    if not np.all(np.isfinite(X)):
        raise TrainingError("X contains non-finite values")
    scaler = Standardizer.fit(X)
    Z = scaler.transform(X)
    n, d = Z.shape
    w = np.zeros(d)
    b = 0.0
    # 1/L for the logistic loss on standardized columns
    step = 4.0 * n / max(np.linalg.norm(Z, 2) ** 2 + n, 1e-12)
    f = _smooth_loss(Z, y, w, b)
    trace = [f + lam * float(np.abs(w).sum())]
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        r = sigmoid(Z @ w + b) - y
        gw = Z.T @ r / n
        gb = float(r.mean())
        while True:
            w_new = soft_threshold(w - step * gw, step * lam)
            b_new = b - step * gb
            dw, db = w_new - w, b_new - b
            f_new = _smooth_loss(Z, y, w_new, b_new)
            quad = f + gw @ dw + gb * db + (dw @ dw + db * db) / (2 * step)
            if f_new <= quad + 1e-12 * abs(f) or step < 1e-12:
                break
            step *= 0.5
        gmap = np.sqrt(dw @ dw + db * db) / step
        w, b, f = w_new, b_new, f_new
        trace.append(f + lam * float(np.abs(w).sum()))
        if gmap < tol:
            converged = True
            break
        step *= 1.5
    names = list(column_names) if column_names is not None else [f"x{i}" for i in range(X.shape[1])]
    return LinearModel(w, b, float(lam), scaler, names, ledger_version, trace, it, converged)


def decision_function(model: LinearModel, X) -> np.ndarray:
    return model.scaler.transform(X) @ model.weights + model.intercept


def lr_predict(model: LinearModel, X):
    """P(good | x) for one feature vector (scalar) or a matrix of rows (array)."""
    X = np.asarray(X, dtype=np.float64)
    p = sigmoid(np.atleast_1d(decision_function(model, X)))
    return float(p[0]) if X.ndim == 1 else p


def selected_coefficients(model: LinearModel) -> list[tuple[str, float]]:
    """Nonzero (column_name, weight) pairs by decreasing |weight|, then name."""
    full = model.full_weights()
    names = model.column_names or [f"x{i}" for i in range(full.size)]
    pairs = [(names[i], float(full[i])) for i in np.flatnonzero(full)]
    return sorted(pairs, key=lambda p: (-abs(p[1]), p[0]))


def select_lambda(X, y, grid=LAMBDA_GRID, folds: int = 3, seed: int = 0,
                  max_iters: int = 2000, tol: float = 1e-5) -> float:
    """Grid value with the best mean inner-CV AUC; ties go to the larger lambda."""
    from .evaluation import auc, stratified_kfold

    y = _check_labels(y)
    X = np.asarray(X, dtype=np.float64)
    plan = stratified_kfold(y, folds, seed)
    best, best_score = None, -np.inf
    for lam in sorted(grid, reverse=True):
        scores = []
        for test in plan.folds:
            mask = np.zeros(y.size, dtype=bool)
            mask[test] = True
            if np.unique(y[~mask]).size < 2 or np.unique(y[mask]).size < 2:
                continue
            m = lr_train(X[~mask], y[~mask], lam, max_iters, tol)
            scores.append(auc(decision_function(m, X[mask]), y[mask]))
        score = np.mean(scores) if scores else -np.inf
        if score > best_score + 1e-12:
            best, best_score = lam, score
    return float(best)
