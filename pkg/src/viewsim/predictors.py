"""View-probability (logistic) and bid-price (ridge least squares) models."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import sigmoid
from .csvio import FormatError, ParseError, fmt_float
from .dataset import ImpressionRecord, LldTable, encode_features


class DegenerateLabelsError(ValueError):
    """Training labels contain a single class."""


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    kind: str  # "logistic" or "linear"

    def __post_init__(self):
        if self.kind not in ("logistic", "linear"):
            raise ValueError(f"unknown model kind {self.kind!r}")
        w = np.array(self.weights, dtype=float)
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @property
    def dim(self) -> int:
        return int(self.weights.shape[0])


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.2
    epochs: int = 5
    minibatch: int = 128
    l2: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.minibatch <= 0:
            raise ValueError("minibatch must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be >= 0")


def _as_matrix(records) -> np.ndarray:
    if isinstance(records, LldTable):
        return records.features()
    if isinstance(records, ImpressionRecord):
        return encode_features(LldTable.from_records([records]))
    return encode_features(LldTable.from_records(records))


def logistic_loss(w, X, y, l2: float = 0.0) -> float:
    z = X @ w
    return float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2 * (w @ w))


def logistic_grad(w, X, y, l2: float = 0.0) -> np.ndarray:
    p = sigmoid(X @ w)
    return X.T @ (p - y) / X.shape[0] + l2 * w


def fit_logistic(X, y, config: TrainConfig, loss_trace: list | None = None) -> np.ndarray:
    """Minibatch gradient descent from all-zero weights; the seed only shuffles."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n == 0:
        raise ValueError("empty training set")
    if y.min() == y.max():
        raise DegenerateLabelsError(f"degenerate labels: every label is {int(y[0])}")
    w = np.zeros(d)
    rng = np.random.default_rng(config.seed)
    if loss_trace is not None:
        loss_trace.append(logistic_loss(w, X, y, config.l2))
    for _ in range(config.epochs):
        # one batch covering the data needs no shuffle (keeps full-batch runs seed-independent)
        order = rng.permutation(n) if config.minibatch < n else np.arange(n)
        for start in range(0, n, config.minibatch):
            idx = order[start:start + config.minibatch]
            w -= config.learning_rate * logistic_grad(w, X[idx], y[idx], config.l2)
        if loss_trace is not None:
            loss_trace.append(logistic_loss(w, X, y, config.l2))
    return w


def train_logistic(records, config: TrainConfig = TrainConfig(), loss_trace: list | None = None) -> LinearModel:
    table = records if isinstance(records, LldTable) else LldTable.from_records(records)
    if len(table) == 0:
        raise ValueError("empty training set")
    w = fit_logistic(table.features(), table.viewed.astype(float), config, loss_trace)
    return LinearModel(w, "logistic")


def predict_proba(model: LinearModel, records) -> np.ndarray:
    """Vectorised view probabilities for a table (or any record sequence)."""
    if model.kind != "logistic":
        raise ValueError(f"view prediction needs a logistic model, got {model.kind!r}")
    return sigmoid(_as_matrix(records) @ model.weights)


def predict_view_probability(model: LinearModel, record: ImpressionRecord) -> float:
    if model.kind != "logistic":
        raise ValueError(f"view prediction needs a logistic model, got {model.kind!r}")
    x = _as_matrix(record)[0]
    return sigmoid(float(x @ model.weights))


def fit_linear(X, y, l2: float = 1e-6) -> np.ndarray:
    """Ridge regression via the (mean-scaled) normal equations."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = X.shape
    if n == 0:
        raise ValueError("empty training set")
    A = X.T @ X / n
    if l2 == 0 and np.linalg.matrix_rank(A) < d:
        raise np.linalg.LinAlgError("singular normal equations; use a ridge term l2 > 0")
    A = A + l2 * np.eye(d)
    return np.linalg.solve(A, X.T @ y / n)


def train_bid_model(winning_records, config: TrainConfig = TrainConfig()) -> LinearModel:
    table = winning_records if isinstance(winning_records, LldTable) else LldTable.from_records(winning_records)
    if len(table) == 0:
        raise ValueError("empty training set")
    w = fit_linear(table.features(), table.cost_micros.astype(float), config.l2)
    return LinearModel(w, "linear")


def bid_prices(model: LinearModel, records) -> np.ndarray:
    if model.kind != "linear":
        raise ValueError(f"bid pricing needs a linear model, got {model.kind!r}")
    return np.maximum(0, np.rint(_as_matrix(records) @ model.weights)).astype(np.int64)


def bid_price(model: LinearModel, record: ImpressionRecord) -> int:
    return int(bid_prices(model, record)[0])


def gradient_check_logistic(model: LinearModel, record, label, eps: float = 1e-5, floor: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference log-loss gradients.

    The relative error is ``|a - n| / max(|a|, |n|, floor)`` per coordinate.
    """
    if not 0.0 < eps < 1e-2:
        raise ValueError(f"eps must lie in (0, 1e-2), got {eps}")
    x = np.atleast_2d(_as_matrix(record) if not isinstance(record, np.ndarray) else record)
    y = np.atleast_1d(np.asarray(label, dtype=float))
    w = np.array(model.weights, dtype=float)
    analytic = logistic_grad(w, x, y)
    numeric = np.empty_like(w)
    for i in range(w.shape[0]):
        wp = w.copy()
        wm = w.copy()
        wp[i] += eps
        wm[i] -= eps
        numeric[i] = (logistic_loss(wp, x, y) - logistic_loss(wm, x, y)) / (2 * eps)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def save_model(model: LinearModel, path) -> None:
    lines = ["kind,dim", f"{model.kind},{model.dim}"] + [fmt_float(v) for v in model.weights]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_model(path) -> LinearModel:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    if not lines or lines[0] != "kind,dim":
        raise FormatError(f"{path}: expected header 'kind,dim'")
    if len(lines) < 2:
        raise FormatError(f"{path}: missing kind/dim line")
    try:
        kind, dim = lines[1].split(",")
        dim = int(dim)
    except ValueError:
        raise ParseError(f"bad kind/dim line {lines[1]!r}", 2) from None
    weights = []
    for lineno, text in enumerate(lines[2:], start=3):
        try:
            weights.append(float(text))
        except ValueError:
            raise ParseError(f"cannot parse weight {text!r}", lineno) from None
    if len(weights) != dim:
        raise FormatError(f"{path}: header says dim={dim} but found {len(weights)} weights")
    return LinearModel(np.array(weights), kind)


def auc(scores, labels) -> float:
    """Rank-based ROC AUC (Mann-Whitney U with average ranks for ties)."""
    from scipy.stats import rankdata

    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs both classes")
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))

