"""Linear soft-margin SVM trained by epoch-wise subgradient descent.

The objective is J(w, b) = 0.5 * ||w||^2 + c * sum_i max(0, 1 - y_i * (w.h_i + b))
with an unregularized bias. Training walks the examples in a seed-shuffled
order each epoch, applying per-example subgradient steps, and returns the
best (w, b) seen at any epoch end. The whole procedure is deterministic for
a fixed (data, config) pair.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import IO, Iterable, Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    NonFiniteFeature,
    ParseError,
    SingleClassData,
)
from .features import fmt_float
from .network import FeatureVector
from .rng import SplitMix64


@dataclass
class TrainConfig:
    c: float = 10.0
    max_epochs: int = 200
    tolerance: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("c must be positive")
        if self.max_epochs < 1:
            raise ValueError("max_epochs must be >= 1")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")


@dataclass(eq=False)
class LinearModel:
    weights: np.ndarray
    bias: float

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        self.bias = float(self.bias)


def _as_values(h) -> np.ndarray:
    if isinstance(h, FeatureVector):
        return h.values
    return np.asarray(h, dtype=np.float64).reshape(-1)


def linear_kernel(h, h2) -> float:
    """Plain dot product of two equal-dimension feature vectors."""
    a, b = _as_values(h), _as_values(h2)
    if a.shape != b.shape:
        raise DimensionMismatch(f"kernel arguments of dimension {a.size} vs {b.size}")
    return float(a @ b)


def score(model: LinearModel, h) -> float:
    """Per-image score: kernel of the feature against the weights, plus bias."""
    return linear_kernel(h, model.weights) + model.bias


def _as_matrix(data: Sequence) -> tuple[np.ndarray, np.ndarray]:
    if not data:
        raise SingleClassData("no training examples")
    vectors = []
    labels = []
    for h, label in data:
        value = int(label)
        if value not in (1, -1):
            raise ValueError(f"training label must be +1 or -1, got {label!r}")
        labels.append(value)
        vectors.append(_as_values(h))
    dim = vectors[0].size
    for i, v in enumerate(vectors):
        if v.size != dim:
            raise DimensionMismatch(f"example {i} has dimension {v.size}, expected {dim}")
    x = np.vstack(vectors)
    if not np.all(np.isfinite(x)):
        raise NonFiniteFeature("training features contain non-finite values")
    return x, np.array(labels, dtype=np.float64)


def hinge_objective(model: LinearModel, data: Sequence, c: float) -> float:
    """Evaluate J(w, b) on `data`, a sequence of (feature, label) pairs."""
    x, y = _as_matrix(data)
    if x.shape[1] != model.weights.size:
        raise DimensionMismatch(
            f"model dimension {model.weights.size} vs data dimension {x.shape[1]}"
        )
    margins = y * (x @ model.weights + model.bias)
    hinge = np.maximum(0.0, 1.0 - margins)
    return 0.5 * float(model.weights @ model.weights) + float(c) * float(hinge.sum())


def train_linear_svm(data: Sequence, cfg: TrainConfig | None = None) -> LinearModel:
    """Fit a LinearModel on (feature, +1/-1 label) pairs.

    Epoch t uses step 1 / (1 + t) for every per-example update of that
    epoch; the regularizer share of each update is 1/n of the full gradient
    so one epoch approximates a batch step. The best (w, b) seen at any
    epoch end is returned, and training stops early once the epoch-end
    objective changes by less than the configured tolerance.
    """
    cfg = cfg or TrainConfig()
    x, y = _as_matrix(data)
    if len(set(y.tolist())) < 2:
        raise SingleClassData("training data needs both a +1 and a -1 example")
    n, dim = x.shape

    w = np.zeros(dim, dtype=np.float64)
    b = 0.0
    rng = SplitMix64(cfg.seed)
    order = list(range(n))

    def objective(weights: np.ndarray, bias: float) -> float:
        margins = y * (x @ weights + bias)
        hinge = np.maximum(0.0, 1.0 - margins)
        return 0.5 * float(weights @ weights) + cfg.c * float(hinge.sum())

    best_w = w.copy()
    best_b = b
    best_j = objective(w, b)
    prev_j = None
    for epoch in range(cfg.max_epochs):
        eta = 1.0 / (1.0 + epoch)
        rng.shuffle(order)
        for i in order:
            # margin uses the pre-update weights
            margin = y[i] * (float(x[i] @ w) + b)
            w *= 1.0 - eta / n
            if margin < 1.0:
                step = eta * cfg.c * y[i]
                w += step * x[i]
                b += step
        j = objective(w, b)
        if j < best_j:
            best_j = j
            best_w = w.copy()
            best_b = b
        if prev_j is not None and abs(prev_j - j) < cfg.tolerance:
            break
        prev_j = j
    return LinearModel(weights=best_w, bias=best_b)


def save_model(model: LinearModel, stream: IO[str]) -> int:
    """Write `SVM <D>` / `bias <b>` / `w <v1> ... <vD>`; returns bytes written."""
    lines = [
        f"SVM {model.weights.size}",
        f"bias {fmt_float(model.bias)}",
        "w " + " ".join(fmt_float(v) for v in model.weights),
    ]
    text = "\n".join(lines) + "\n"
    stream.write(text)
    return len(text.encode("utf-8"))


def load_model(stream: IO[str] | str | Iterable[str]) -> LinearModel:
    lines = stream.splitlines() if isinstance(stream, str) else list(stream)
    rows = [(i, line.split()) for i, line in enumerate(lines, start=1) if line.split()]
    if len(rows) != 3:
        raise ParseError("model file must hold exactly SVM, bias and w lines", None)
    (l1, head), (l2, bias_row), (l3, w_row) = rows
    if len(head) != 2 or head[0] != "SVM":
        raise ParseError("expected 'SVM <D>' header", l1)
    try:
        dim = int(head[1])
    except ValueError as err:
        raise ParseError("non-integer dimension", l1) from err
    if len(bias_row) != 2 or bias_row[0] != "bias":
        raise ParseError("expected 'bias <value>'", l2)
    if not w_row or w_row[0] != "w":
        raise ParseError("expected 'w <v1> ...'", l3)
    if len(w_row) - 1 != dim:
        raise DimensionMismatch(f"{len(w_row) - 1} weights, header says {dim}")
    try:
        bias = float(bias_row[1])
        weights = np.array([float(v) for v in w_row[1:]], dtype=np.float64)
    except ValueError as err:
        raise ParseError("bad float in model file", None) from err
    if not np.isfinite(bias) or not np.all(np.isfinite(weights)):
        raise ParseError("non-finite value in model file", None)
    return LinearModel(weights=weights, bias=bias)
