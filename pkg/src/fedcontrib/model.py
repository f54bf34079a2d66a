"""Black-box binary classifiers with a deterministic retrain contract.

Three kinds are available:

* ``logistic``: L2-regularized logistic regression fit by full-batch gradient
  descent from a zero start with a fixed iteration budget.
* ``kernel_rbf``: RBF kernel regularized least squares on +/-1 labels, solved in
  closed form; scores go through the logistic link.
* ``linear``: raw-score least squares (no link). Used as an analytic oracle,
  so its output is not confined to [0, 1].
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit
from scipy.spatial.distance import cdist

from .data import Dataset
from .errors import DataError, NumericError

KINDS = ("logistic", "kernel_rbf", "linear")


@dataclass(frozen=True)
class ModelConfig:
    kind: str = "kernel_rbf"
    l2_strength: float = 1.0
    rbf_gamma: float | None = None  # None resolves to 1/d at train time
    max_iterations: int = 500
    tolerance: float = 1e-8
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}")
        if self.l2_strength < 0:
            raise ValueError("l2_strength must be nonnegative")
        if self.rbf_gamma is not None and self.rbf_gamma <= 0:
            raise ValueError("rbf_gamma must be positive")
        if self.max_iterations <= 0:
            raise ValueError("max_iterations must be positive")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be positive")

    def resolved(self, d: int) -> "ModelConfig":
        if self.kind == "kernel_rbf" and self.rbf_gamma is None:
            return dataclasses.replace(self, rbf_gamma=1.0 / d)
        return self

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True, eq=False)
class TrainedModel:
    config: ModelConfig
    d: int
    weights: np.ndarray | None = None
    bias: float = 0.0
    dual_coef: np.ndarray | None = None
    support: np.ndarray | None = None
    training_fingerprint: str = ""

    def predict_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DataError(f"expected rows of length {self.d}, got shape {X.shape}")
        kind = self.config.kind
        if kind == "kernel_rbf":
            gram = np.exp(-self.config.rbf_gamma * cdist(X, self.support, "sqeuclidean"))
            return expit(gram @ self.dual_coef)
        score = X @ self.weights + self.bias
        if kind == "logistic":
            return expit(score)
        return score

    def predict_proba(self, x) -> float:
        """Positive-class probability for one instance (raw score for ``linear``)."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DataError("predict_proba takes a single feature vector")
        return float(self.predict_batch(x[None, :])[0])

    def parameter_block(self) -> list[float]:
        if self.config.kind == "kernel_rbf":
            return [float(v) for v in np.concatenate([self.dual_coef, self.support.ravel()])]
        return [float(v) for v in self.weights] + [float(self.bias)]

    def to_dict(self) -> dict:
        out = {
            "kind": self.config.kind,
            "config": self.config.to_dict(),
            "d": self.d,
            "parameters": self.parameter_block(),
            "fingerprint": self.training_fingerprint,
        }
        if self.config.kind == "kernel_rbf":
            out["support_rows"] = int(self.support.shape[0])
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "TrainedModel":
        config = ModelConfig(**payload["config"])
        d = int(payload["d"])
        params = np.asarray(payload["parameters"], dtype=float)
        if config.kind == "kernel_rbf":
            m = int(payload["support_rows"])
            return cls(
                config=config,
                d=d,
                dual_coef=params[:m],
                support=params[m:].reshape(m, d),
                training_fingerprint=payload.get("fingerprint", ""),
            )
        return cls(
            config=config,
            d=d,
            weights=params[:d],
            bias=float(params[d]),
            training_fingerprint=payload.get("fingerprint", ""),
        )


def fingerprint(X: np.ndarray, y: np.ndarray, config: ModelConfig) -> str:
    h = hashlib.sha256()
    h.update(json.dumps(config.to_dict(), sort_keys=True).encode())
    h.update(np.ascontiguousarray(X, dtype=np.float64).tobytes())
    h.update(np.ascontiguousarray(y, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def _fit_logistic(X: np.ndarray, y: np.ndarray, config: ModelConfig) -> tuple[np.ndarray, float]:
    n, d = X.shape
    signs = 2.0 * y - 1.0
    design = np.column_stack([X, np.ones(n)])
    lam = config.l2_strength / n
    # Lipschitz constant of the averaged logistic loss gradient.
    lipschitz = 0.25 * np.linalg.norm(design, 2) ** 2 / n + lam
    step = 1.0 / lipschitz
    theta = np.zeros(d + 1)
    penalty = np.append(np.full(d, lam), 0.0)
    for _ in range(config.max_iterations):
        margins = signs * (design @ theta)
        grad = -(design.T @ (signs * expit(-margins))) / n + penalty * theta
        if np.linalg.norm(grad) < config.tolerance:
            break
        theta = theta - step * grad
    return theta[:d], float(theta[d])


def train(dataset: Dataset, subset, config: ModelConfig) -> TrainedModel:
    """Fit ``config.kind`` on the rows listed in ``subset``.

    The result is a pure function of the selected rows (in index order) and the
    config, so retraining on the same subset reproduces it bit for bit.
    """
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise DataError("cannot train on an empty subset")
    X = dataset.features[subset]
    y = dataset.labels[subset]
    if config.kind != "linear" and np.unique(y).size < 2:
        raise DataError("training subset contains a single class")
    config = config.resolved(dataset.d)
    fp = fingerprint(X, y, config)

    if config.kind == "logistic":
        w, b = _fit_logistic(X, y, config)
        model = TrainedModel(config=config, d=dataset.d, weights=w, bias=b, training_fingerprint=fp)
    elif config.kind == "kernel_rbf":
        gram = np.exp(-config.rbf_gamma * cdist(X, X, "sqeuclidean"))
        gram[np.diag_indices_from(gram)] += config.l2_strength
        try:
            alpha = np.linalg.solve(gram, 2.0 * y - 1.0)
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"kernel system is singular: {exc}") from exc
        model = TrainedModel(
            config=config, d=dataset.d, dual_coef=alpha, support=X.copy(), training_fingerprint=fp
        )
    else:
        design = np.column_stack([X, np.ones(len(X))])
        theta = np.linalg.lstsq(design, y.astype(float), rcond=None)[0]
        model = TrainedModel(
            config=config, d=dataset.d, weights=theta[:-1], bias=float(theta[-1]), training_fingerprint=fp
        )

    params = np.asarray(model.parameter_block())
    if not np.isfinite(params).all():
        raise NumericError("training produced non-finite parameters")
    return model


def make_linear_oracle(weights: Sequence[float], bias: float = 0.0) -> TrainedModel:
    w = np.asarray(weights, dtype=float)
    return TrainedModel(config=ModelConfig(kind="linear"), d=w.size, weights=w, bias=float(bias))


def accuracy(model: TrainedModel, dataset: Dataset, subset) -> float:
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise DataError("accuracy needs a non-empty subset")
    predicted = (model.predict_batch(dataset.features[subset]) >= 0.5).astype(int)
    return float(np.mean(predicted == dataset.labels[subset]))
