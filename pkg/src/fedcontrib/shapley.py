"""Shapley attribution for individual features and feature groups.

Anything with a ``predict_batch(X) -> array`` method can be explained. A
feature that is "switched off" takes its value from a background row: either
the reference vector (per-feature medians) or rows sampled from data, in which
case the coalition value is the average over those rows.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DataError, NumericError

ENUMERATION_CAP = 15
# Rows per predict_batch call during enumeration.
_CHUNK_ROWS = 1 << 16


@dataclass(frozen=True, eq=False)
class BackgroundSpec:
    mode: str
    reference: np.ndarray
    samples: np.ndarray | None = None
    pool: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("reference_vector", "sampled_background"):
            raise ValueError(f"unknown background mode {self.mode!r}")
        if self.mode == "sampled_background" and (self.samples is None or len(self.samples) == 0):
            raise DataError("sampled_background needs a non-empty sample set")
        if self.mode == "sampled_background" and self.pool is None:
            raise DataError("sampled_background needs the matrix the samples index into")

    @classmethod
    def reference_vector(cls, reference) -> "BackgroundSpec":
        return cls("reference_vector", np.asarray(reference, dtype=float))

    @classmethod
    def sampled(cls, features, samples, reference=None) -> "BackgroundSpec":
        features = np.asarray(features, dtype=float)
        ref = np.zeros(features.shape[1]) if reference is None else np.asarray(reference, dtype=float)
        return cls("sampled_background", ref, np.asarray(samples, dtype=int), features)

    def rows(self) -> np.ndarray:
        """Background rows that supply switched-off feature values."""
        if self.mode == "reference_vector":
            return self.reference[None, :]
        return self.pool[self.samples]


@dataclass
class ShapleyResult:
    per_feature: np.ndarray
    baseline: float
    prediction: float
    method: str
    iterations: int = 0
    seed: int | None = None
    background_mode: str = "reference_vector"

    def to_dict(self, instance_id=None, feature_names: Sequence[str] | None = None) -> dict:
        names = feature_names or [f"x{i}" for i in range(len(self.per_feature))]
        return {
            "instance_id": instance_id,
            "prediction": self.prediction,
            "baseline": self.baseline,
            "method": self.method,
            "M": self.iterations,
            "seed": self.seed,
            "background": self.background_mode,
            "values": [
                {"feature": i, "name": names[i], "phi": float(v)}
                for i, v in enumerate(self.per_feature)
            ],
        }


def _check_x(model, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    d = getattr(model, "d", x.shape[-1])
    if x.ndim != 1 or x.shape[0] != d:
        raise DataError(f"instance must have length {d}")
    return x


def coalition_values(model, x, masks: np.ndarray, background: BackgroundSpec) -> np.ndarray:
    """v(mask) = mean over background rows z of f(x on mask, z elsewhere)."""
    masks = np.asarray(masks, dtype=bool)
    bg = background.rows()
    if bg.shape[1] != x.shape[0]:
        raise DataError("background width does not match the instance")
    out = np.empty(len(masks))
    per_chunk = max(1, _CHUNK_ROWS // len(bg))
    for start in range(0, len(masks), per_chunk):
        block = masks[start : start + per_chunk]
        rows = np.where(block[:, None, :], x[None, None, :], bg[None, :, :])
        preds = model.predict_batch(rows.reshape(-1, x.shape[0]))
        out[start : start + len(block)] = preds.reshape(len(block), len(bg)).mean(axis=1)
    return out


def _mask_of(Q: Iterable[int], d: int) -> np.ndarray:
    mask = np.zeros(d, dtype=bool)
    for i in Q:
        if not 0 <= i < d:
            raise DataError(f"feature index {i} out of range")
        mask[i] = True
    return mask


def delta_Q(model, x, Q: Iterable[int], background: BackgroundSpec) -> float:
    x = _check_x(model, x)
    Q = list(Q)
    if not Q:
        return 0.0
    masks = np.stack([_mask_of(Q, x.size), np.zeros(x.size, dtype=bool)])
    v = coalition_values(model, x, masks, background)
    return float(v[0] - v[1])


def _all_masks(d: int) -> np.ndarray:
    codes = np.arange(1 << d, dtype=np.int64)
    return ((codes[:, None] >> np.arange(d)) & 1).astype(bool)


def _shapley_weights(d: int) -> np.ndarray:
    """Coalition weight |Q|! (d - |Q| - 1)! / d! indexed by |Q|."""
    return np.array(
        [math.factorial(s) * math.factorial(d - s - 1) / math.factorial(d) for s in range(d)]
    )


def value_table(model, x, background: BackgroundSpec, cap: int = ENUMERATION_CAP) -> np.ndarray:
    """Coalition value for every subset, indexed by bitmask (bit i = feature i)."""
    x = _check_x(model, x)
    if x.size > cap:
        raise DataError(f"exact enumeration limited to {cap} features, got {x.size}")
    return coalition_values(model, x, _all_masks(x.size), background)


def shapley_from_table(table: np.ndarray, d: int) -> np.ndarray:
    codes = np.arange(1 << d, dtype=np.int64)
    sizes = _popcount(codes)
    weights = _shapley_weights(d)
    phi = np.empty(d)
    for i in range(d):
        bit = np.int64(1) << i
        without = codes[(codes & bit) == 0]
        phi[i] = np.dot(weights[sizes[without]], table[without | bit] - table[without])
    return phi


def _popcount(codes: np.ndarray) -> np.ndarray:
    counts = np.zeros_like(codes)
    work = codes.copy()
    while work.any():
        counts += work & 1
        work >>= 1
    return counts


def shapley_exact(
    model, x, background: BackgroundSpec, cap: int = ENUMERATION_CAP
) -> ShapleyResult:
    """Exact Shapley values by enumerating all 2^d coalitions once."""
    x = _check_x(model, x)
    table = value_table(model, x, background, cap)
    phi = shapley_from_table(table, x.size)
    if not np.isfinite(phi).all():
        raise NumericError("non-finite Shapley values")
    return ShapleyResult(
        per_feature=phi,
        baseline=float(table[0]),
        prediction=float(table[-1]),
        method="exact",
        background_mode=background.mode,
    )


def stream(seed: int, instance_id: int, player: int) -> np.random.Generator:
    """Independent generator per (root seed, instance, feature/player)."""
    return np.random.default_rng(np.random.SeedSequence([seed, instance_id, player]))


def permutation_ranks(rng: np.random.Generator, m: int, players: int) -> np.ndarray:
    """ranks[k, j] = position of player j in the k-th uniform random ordering."""
    orders = np.argsort(rng.random((m, players)), axis=1, kind="stable")
    return np.argsort(orders, axis=1, kind="stable")


def shapley_mc(
    model,
    x,
    i: int,
    M: int,
    background,
    seed: int,
    instance_id: int = 0,
) -> float:
    """Monte-Carlo Shapley value of feature ``i`` by permutation sampling.

    Each iteration draws an ordering of the features and a background row z.
    Features ahead of ``i`` in the ordering keep their values from ``x``, the
    ones behind it come from z; the two probes differ only in where feature
    ``i`` itself comes from. ``background`` is a matrix of candidate z rows or
    a :class:`BackgroundSpec`.
    """
    x = _check_x(model, x)
    if M < 1:
        raise DataError("M must be at least 1")
    if not 0 <= i < x.size:
        raise DataError(f"feature index {i} out of range")
    pool = background.rows() if isinstance(background, BackgroundSpec) else np.asarray(background, float)
    if pool.ndim != 2 or len(pool) == 0:
        raise DataError("background must contain at least one row")
    rng = stream(seed, instance_id, i)
    ranks = permutation_ranks(rng, M, x.size)
    z = pool[rng.integers(len(pool), size=M)]
    ahead = ranks < ranks[:, [i]]
    with_i = ahead.copy()
    with_i[:, i] = True
    plus = np.where(with_i, x, z)
    minus = np.where(ahead, x, z)
    preds = model.predict_batch(np.vstack([plus, minus]))
    estimate = float(np.mean(preds[:M] - preds[M:]))
    if not math.isfinite(estimate):
        raise NumericError("non-finite Monte-Carlo estimate")
    return estimate


def shapley_mc_all(model, x, M: int, background, seed: int, instance_id: int = 0) -> ShapleyResult:
    x = _check_x(model, x)
    pool = background.rows() if isinstance(background, BackgroundSpec) else np.asarray(background, float)
    phi = np.array([shapley_mc(model, x, i, M, pool, seed, instance_id) for i in range(x.size)])
    mode = background.mode if isinstance(background, BackgroundSpec) else "sampled_background"
    return ShapleyResult(
        per_feature=phi,
        baseline=float(np.mean(model.predict_batch(pool))),
        prediction=float(model.predict_batch(x[None, :])[0]),
        method="monte_carlo",
        iterations=M,
        seed=seed,
        background_mode=mode,
    )


def shapley_group_sum(result: ShapleyResult, P: Iterable[int]) -> float:
    P = list(P)
    d = len(result.per_feature)
    for i in P:
        if not 0 <= i < d:
            raise DataError(f"feature index {i} out of range")
    return float(sum(result.per_feature[i] for i in P))


def interaction_index(
    model, x, P: Iterable[int], background: BackgroundSpec, cap: int = ENUMERATION_CAP
) -> float:
    """Group interaction index: weighted extra effect of switching on all of P
    together beyond switching its members on one at a time."""
    x = _check_x(model, x)
    d = x.size
    P = sorted(set(P))
    if not P:
        raise DataError("group must be non-empty")
    group = 0
    for i in P:
        if not 0 <= i < d:
            raise DataError(f"feature index {i} out of range")
        group |= 1 << i
    table = value_table(model, x, background, cap)
    weights = _shapley_weights(d)
    total = 0.0
    for code in range(1 << d):
        if code & group:
            continue
        size = bin(code).count("1")
        delta = table[code | group] - sum(table[code | (1 << i)] for i in P) + (len(P) - 1) * table[code]
        total += weights[size] * delta
    return float(total)
