"""Deletion diagnostics for horizontally partitioned data.

A party's contribution is how much the model's predictions move when its
instances are removed and the model is retrained. Two group measures exist:

* ``summed_single``: sum of the single-instance deletion influences of the
  party's instances (one retrain per instance).
* ``batch_deletion``: remove the party's whole set at once and retrain
  (one retrain per party). Cheaper, and an approximation of the former.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, HorizontalPartition
from .errors import DataError
from .model import ModelConfig, fingerprint, train
from .parallel import thread_count

logger = logging.getLogger(__name__)

METHODS = ("batch_deletion", "summed_single")


@dataclass
class InfluenceReport:
    method: str
    influences: list[float]
    sizes: list[int]
    n: int
    config_fingerprint: str
    seed: int | None = None
    party_ids: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.party_ids:
            self.party_ids = [f"party-{k}" for k in range(len(self.influences))]

    @property
    def per_party(self) -> dict[str, float]:
        return dict(zip(self.party_ids, self.influences))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n": self.n,
            "parties": [
                {"id": pid, "size": size, "influence": value}
                for pid, size, value in zip(self.party_ids, self.sizes, self.influences)
            ],
            "config_fingerprint": self.config_fingerprint,
            "seed": self.seed,
        }


def _eval_indices(dataset: Dataset, eval_set) -> np.ndarray:
    if eval_set is None:
        return np.arange(dataset.n)
    eval_set = np.asarray(eval_set, dtype=int)
    if eval_set.size == 0:
        raise DataError("evaluation set is empty")
    return eval_set


def _check_removal(dataset: Dataset, removed: np.ndarray) -> np.ndarray:
    if removed.size and (removed.min() < 0 or removed.max() >= dataset.n):
        raise DataError("instance index out of range")
    keep = np.setdiff1d(np.arange(dataset.n), removed)
    if np.unique(dataset.labels[keep]).size < 2:
        raise DataError(
            f"removing {removed.size} instance(s) leaves a single class in the training data"
        )
    return keep


def _deletion_influence(
    dataset: Dataset,
    removed,
    config: ModelConfig,
    eval_rows: np.ndarray,
    full_predictions: np.ndarray,
) -> float:
    keep = _check_removal(dataset, np.asarray(removed, dtype=int))
    reduced = train(dataset, keep, config)
    changed = reduced.predict_batch(eval_rows)
    return float(np.mean(np.abs(full_predictions - changed)))


def _baseline(dataset: Dataset, config: ModelConfig, eval_set):
    idx = _eval_indices(dataset, eval_set)
    rows = dataset.features[idx]
    full = train(dataset, np.arange(dataset.n), config)
    return rows, full.predict_batch(rows)


def influence_single(dataset: Dataset, i: int, config: ModelConfig, eval_set=None) -> float:
    """Mean absolute change of predictions on ``eval_set`` when instance ``i`` is deleted."""
    if not 0 <= i < dataset.n:
        raise DataError(f"instance {i} out of range")
    rows, full = _baseline(dataset, config, eval_set)
    return _deletion_influence(dataset, [i], config, rows, full)


def influence_group_sum(dataset: Dataset, party_set, config: ModelConfig, eval_set=None) -> float:
    party_set = [int(i) for i in np.asarray(party_set, dtype=int)]
    if not party_set:
        return 0.0
    rows, full = _baseline(dataset, config, eval_set)
    return float(sum(_deletion_influence(dataset, [i], config, rows, full) for i in party_set))


def influence_group_batch(
    dataset: Dataset,
    partition: HorizontalPartition,
    config: ModelConfig,
    eval_set=None,
    seed: int | None = None,
    method: str = "batch_deletion",
) -> InfluenceReport:
    """Influence of every party in ``partition``.

    Retrains run on a thread pool; results are collected in party order so the
    report does not depend on scheduling.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    for k, members in enumerate(partition.assignments):
        if members.size:
            _check_removal(dataset, members)
    rows, full = _baseline(dataset, config, eval_set)

    def one_party(members: np.ndarray) -> float:
        if method == "batch_deletion":
            return _deletion_influence(dataset, members, config, rows, full)
        return float(sum(_deletion_influence(dataset, [i], config, rows, full) for i in members))

    with ThreadPoolExecutor(max_workers=thread_count()) as pool:
        values = list(pool.map(one_party, partition.assignments))

    all_rows = np.arange(dataset.n)
    fp = fingerprint(dataset.features[all_rows], dataset.labels[all_rows], config.resolved(dataset.d))
    logger.info("%s influence for %d parties: %s", method, partition.party_count, values)
    return InfluenceReport(
        method=method,
        influences=values,
        sizes=[int(a.size) for a in partition.assignments],
        n=int(rows.shape[0]),
        config_fingerprint=fp,
        seed=seed,
    )
