"""Dataset container and line-delimited JSON persistence.

A dataset is a batch of queries, each carrying a pool of ``max_budget``
graded outcomes, optionally a feature vector and (for synthetic data) the
true per-sample success probability.  Files are JSONL: one header line with
the schema version and shared shape info, then one record per line.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .validation import is_binary_pool

__all__ = ["DatasetError", "QueryRecord", "Dataset", "save_dataset", "load_dataset"]

DATASET_SCHEMA = "adalloc.dataset.v1"

METRIC_KINDS = ("success-rate", "reward")


class DatasetError(Exception):
    """Malformed or inconsistent dataset file."""


@dataclass
class QueryRecord:
    """One query: identifier, outcome pool, optional features and true difficulty."""

    id: str
    rewards: np.ndarray
    features: np.ndarray | None = None
    true_success_prob: float | None = None

    def __post_init__(self):
        self.rewards = np.asarray(self.rewards, dtype=float)
        if self.features is not None:
            self.features = np.asarray(self.features, dtype=float)

    def __eq__(self, other):
        if not isinstance(other, QueryRecord):
            return NotImplemented
        return (
            self.id == other.id
            and np.array_equal(self.rewards, other.rewards)
            and (
                (self.features is None and other.features is None)
                or (
                    self.features is not None
                    and other.features is not None
                    and np.array_equal(self.features, other.features)
                )
            )
            and self.true_success_prob == other.true_success_prob
        )


@dataclass
class Dataset:
    """A batch of queries with a shared pool size and reward kind."""

    records: list = field(default_factory=list)
    max_budget: int = 1
    metric_kind: str = "success-rate"
    feature_dim: int | None = None

    def __post_init__(self):
        if self.metric_kind not in METRIC_KINDS:
            raise DatasetError(f"metric_kind must be one of {METRIC_KINDS}")
        seen = set()
        for rec in self.records:
            if rec.id in seen:
                raise DatasetError(f"duplicate query id {rec.id!r}")
            seen.add(rec.id)
            self._check_record(rec)

    def _check_record(self, rec: QueryRecord):
        if rec.rewards.shape != (self.max_budget,):
            raise DatasetError(
                f"record {rec.id!r}: expected {self.max_budget} rewards, "
                f"got {rec.rewards.shape[0]}"
            )
        if self.metric_kind == "success-rate" and not is_binary_pool(rec.rewards):
            raise DatasetError(f"record {rec.id!r}: success-rate pools must be 0/1")
        if self.feature_dim is None:
            if rec.features is not None:
                raise DatasetError(f"record {rec.id!r}: unexpected features")
        elif rec.features is None or rec.features.shape != (self.feature_dim,):
            raise DatasetError(
                f"record {rec.id!r}: expected {self.feature_dim} features"
            )

    def __len__(self):
        return len(self.records)

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.max_budget == other.max_budget
            and self.metric_kind == other.metric_kind
            and self.feature_dim == other.feature_dim
            and self.records == other.records
        )

    def ids(self) -> list:
        return [rec.id for rec in self.records]

    def rewards_matrix(self) -> np.ndarray:
        return np.stack([rec.rewards for rec in self.records])

    def features_matrix(self) -> np.ndarray:
        if self.feature_dim is None:
            raise DatasetError("dataset has no features")
        return np.stack([rec.features for rec in self.records])

    def true_success_probs(self) -> np.ndarray:
        probs = [rec.true_success_prob for rec in self.records]
        if any(p is None for p in probs):
            raise DatasetError("dataset has no true success probabilities")
        return np.asarray(probs, dtype=float)

    def empirical_success_probs(self) -> np.ndarray:
        if self.metric_kind != "success-rate":
            raise DatasetError("empirical success probabilities need binary pools")
        return self.rewards_matrix().mean(axis=1)

    def subset(self, ids) -> "Dataset":
        wanted = set(ids)
        return Dataset(
            records=[rec for rec in self.records if rec.id in wanted],
            max_budget=self.max_budget,
            metric_kind=self.metric_kind,
            feature_dim=self.feature_dim,
        )


def save_dataset(dataset: Dataset, path) -> None:
    """Write a dataset as JSONL; deterministic bytes for equal inputs."""
    lines = [
        json.dumps(
            {
                "schema": DATASET_SCHEMA,
                "max_budget": dataset.max_budget,
                "metric_kind": dataset.metric_kind,
                "feature_dim": dataset.feature_dim,
                "n": len(dataset),
            }
        )
    ]
    for rec in dataset.records:
        row = {"id": rec.id, "rewards": rec.rewards.tolist()}
        if rec.features is not None:
            row["features"] = rec.features.tolist()
        if rec.true_success_prob is not None:
            row["true_success_prob"] = rec.true_success_prob
        lines.append(json.dumps(row))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse_line(text: str, lineno: int) -> dict:
    try:
        row = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(row, dict):
        raise DatasetError(f"line {lineno}: expected a JSON object")
    return row


def load_dataset(path) -> Dataset:
    """Read a JSONL dataset, reporting malformed lines by number."""
    raw = Path(path).read_text()
    lines = [line for line in raw.splitlines() if line.strip()]
    if not lines:
        raise DatasetError(f"{path}: empty dataset file")
    header = _parse_line(lines[0], 1)
    if header.get("schema") != DATASET_SCHEMA:
        raise DatasetError(
            f"line 1: unsupported schema {header.get('schema')!r} (expected {DATASET_SCHEMA})"
        )
    try:
        max_budget = int(header["max_budget"])
        metric_kind = header["metric_kind"]
        feature_dim = header["feature_dim"]
    except KeyError as exc:
        raise DatasetError(f"line 1: header is missing field {exc.args[0]!r}") from exc
    if feature_dim is not None:
        feature_dim = int(feature_dim)

    records = []
    for lineno, text in enumerate(lines[1:], start=2):
        row = _parse_line(text, lineno)
        if "id" not in row or "rewards" not in row:
            raise DatasetError(f"line {lineno}: record needs 'id' and 'rewards'")
        rec = QueryRecord(
            id=str(row["id"]),
            rewards=np.asarray(row["rewards"], dtype=float),
            features=(
                np.asarray(row["features"], dtype=float) if "features" in row else None
            ),
            true_success_prob=row.get("true_success_prob"),
        )
        if rec.rewards.shape != (max_budget,):
            raise DatasetError(
                f"line {lineno}: record {rec.id!r} has {rec.rewards.shape[0]} rewards, "
                f"header says {max_budget}"
            )
        if feature_dim is not None and (
            rec.features is None or rec.features.shape != (feature_dim,)
        ):
            raise DatasetError(
                f"line {lineno}: record {rec.id!r} does not match feature_dim {feature_dim}"
            )
        records.append(rec)
    try:
        return Dataset(
            records=records,
            max_budget=max_budget,
            metric_kind=metric_kind,
            feature_dim=feature_dim,
        )
    except DatasetError as exc:
        raise DatasetError(f"{path}: {exc}") from exc
