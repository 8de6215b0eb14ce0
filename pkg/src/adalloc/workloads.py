"""Seeded synthetic workloads with learnable difficulty features.

Binary families draw each query's success probability from a point mass at
zero (the fraction of hopeless queries) mixed with a Beta distribution,
then sample the outcome pool i.i.d.  The chat-like family draws scalar
rewards from a per-query two-component Gaussian mixture so reward variance
differs widely across queries.  Features are noisy invertible transforms of
the difficulty statistics (log odds of the success probability, or the
reward mean and log variance) padded with distractor noise dimensions, so a
probe can learn difficulty without it being handed over verbatim.

Each query gets its own generator seeded by (run seed, query index), so
generation is order-independent and byte-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logit

from .datasets import Dataset, QueryRecord
from .validation import check_positive_int, check_probability

__all__ = [
    "WorkloadSpec",
    "generate_workload",
    "generate_routing_workload",
    "select_tranches",
]

# Nonzero-difficulty Beta shapes per family: code-like piles mass near zero
# success, math-like is flatter.
_FAMILY_DEFAULTS = {
    "code-like": {"zero_mass": 0.5, "success_dist": ("beta", 0.45, 1.6)},
    "math-like": {"zero_mass": 0.05, "success_dist": ("beta", 1.1, 1.6)},
    "chat-like": {"zero_mass": 0.0, "success_dist": None},
    "custom": {"zero_mass": 0.0, "success_dist": ("beta", 1.0, 1.0)},
}

_PROB_FLOOR = 1e-3  # keeps logit finite for zero-success queries


@dataclass(frozen=True)
class WorkloadSpec:
    """Recipe for one synthetic workload.

    ``family`` selects defaults: binary rewards for ``code-like`` /
    ``math-like`` / ``custom`` (point mass of hopeless queries plus a Beta
    over the rest), scalar Gaussian-mixture rewards for ``chat-like``.
    ``zero_mass`` and ``success_dist`` (``("beta", a, b)`` or
    ``("point", value)``) override the family defaults.
    """

    family: str
    n_queries: int
    max_budget: int
    seed: int = 0
    zero_mass: float | None = None
    success_dist: tuple | None = None
    feature_noise: float = 0.1
    n_distractors: int = 3

    def __post_init__(self):
        if self.family not in _FAMILY_DEFAULTS:
            raise ValueError(f"unknown family {self.family!r}")
        check_positive_int(self.n_queries, "n_queries")
        check_positive_int(self.max_budget, "max_budget")
        if self.zero_mass is not None:
            check_probability(self.zero_mass, "zero_mass")
        if self.feature_noise < 0:
            raise ValueError("feature_noise must be nonnegative")
        if self.n_distractors < 0:
            raise ValueError("n_distractors must be nonnegative")


def _query_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def _draw_success_prob(rng, zero_mass, dist) -> float:
    if rng.random() < zero_mass:
        return 0.0
    kind = dist[0]
    if kind == "beta":
        return float(rng.beta(dist[1], dist[2]))
    if kind == "point":
        return check_probability(dist[1], "success_dist point value")
    raise ValueError(f"unknown success distribution {kind!r}")


def _feature_vector(rng, signal, noise, n_distractors) -> np.ndarray:
    signal = np.asarray(signal, dtype=float)
    noisy = signal + rng.normal(0.0, noise, size=signal.shape)
    return np.concatenate([noisy, rng.normal(0.0, 1.0, size=n_distractors)])


def generate_workload(spec: WorkloadSpec) -> Dataset:
    """Draw a dataset per ``spec``; fully deterministic for its seed."""
    defaults = _FAMILY_DEFAULTS[spec.family]
    zero_mass = defaults["zero_mass"] if spec.zero_mass is None else spec.zero_mass
    dist = spec.success_dist or defaults["success_dist"]

    width = len(str(spec.n_queries - 1))
    records = []
    if spec.family == "chat-like":
        feature_dim = 2 + spec.n_distractors
        for i in range(spec.n_queries):
            rng = _query_rng(spec.seed, i)
            center = rng.normal(0.0, 1.0)
            gap = rng.normal(0.0, 2.0)
            weight = rng.uniform(0.15, 0.85)
            within = rng.uniform(0.05, 0.6)
            high = rng.random(spec.max_budget) < weight
            rewards = np.where(high, center + gap / 2.0, center - gap / 2.0)
            rewards = rewards + rng.normal(0.0, within, size=spec.max_budget)
            mean = weight * (center + gap / 2.0) + (1.0 - weight) * (center - gap / 2.0)
            variance = weight * (1.0 - weight) * gap**2 + within**2
            features = _feature_vector(
                rng, [mean, np.log(variance)], spec.feature_noise, spec.n_distractors
            )
            records.append(
                QueryRecord(id=f"q{i:0{width}d}", rewards=rewards, features=features)
            )
        return Dataset(
            records=records,
            max_budget=spec.max_budget,
            metric_kind="reward",
            feature_dim=feature_dim,
        )

    feature_dim = 1 + spec.n_distractors
    for i in range(spec.n_queries):
        rng = _query_rng(spec.seed, i)
        prob = _draw_success_prob(rng, zero_mass, dist)
        rewards = (rng.random(spec.max_budget) < prob).astype(float)
        signal = logit(np.clip(prob, _PROB_FLOOR, 1.0 - _PROB_FLOOR))
        features = _feature_vector(rng, [signal], spec.feature_noise, spec.n_distractors)
        records.append(
            QueryRecord(
                id=f"q{i:0{width}d}",
                rewards=rewards,
                features=features,
                true_success_prob=prob,
            )
        )
    return Dataset(
        records=records,
        max_budget=spec.max_budget,
        metric_kind="success-rate",
        feature_dim=feature_dim,
    )


def generate_routing_workload(
    n_queries: int,
    pool_size: int,
    seed: int = 0,
    weak_better_frac: float = 0.3,
    gap_scale: float = 1.0,
    reward_noise: float = 1.0,
    feature_noise: float = 0.1,
    n_distractors: int = 3,
):
    """Paired scalar-reward datasets for a weak and a strong decoder.

    Each query has a latent reward gap (strong mean minus weak mean) whose
    sign is negative for ``weak_better_frac`` of queries; both datasets share
    ids and features (features encode the noisy gap plus distractors).
    Returns ``(strong_dataset, weak_dataset)``.
    """
    check_positive_int(n_queries, "n_queries")
    check_positive_int(pool_size, "pool_size")
    check_probability(weak_better_frac, "weak_better_frac")
    width = len(str(n_queries - 1))
    strong_records, weak_records = [], []
    for i in range(n_queries):
        rng = _query_rng(seed, i)
        magnitude = abs(rng.normal(0.0, gap_scale)) + 0.05 * gap_scale
        gap = -magnitude if rng.random() < weak_better_frac else magnitude
        base = rng.normal(0.0, 1.0)
        weak_rewards = base + rng.normal(0.0, reward_noise, size=pool_size)
        strong_rewards = base + gap + rng.normal(0.0, reward_noise, size=pool_size)
        features = _feature_vector(rng, [gap], feature_noise, n_distractors)
        qid = f"q{i:0{width}d}"
        strong_records.append(QueryRecord(id=qid, rewards=strong_rewards, features=features))
        weak_records.append(QueryRecord(id=qid, rewards=weak_rewards, features=features))
    dims = dict(max_budget=pool_size, metric_kind="reward", feature_dim=1 + n_distractors)
    return Dataset(records=strong_records, **dims), Dataset(records=weak_records, **dims)


def select_tranches(dataset: Dataset, low_frac: float = 0.1, high_frac: float = 0.1) -> Dataset:
    """Subset of the lowest and highest per-query reward-variance deciles.

    Queries are ranked by pool variance (ties broken by id); the union of
    the bottom ``floor(low_frac * n)`` and top ``floor(high_frac * n)`` is
    returned as a new dataset.
    """
    check_probability(low_frac, "low_frac")
    check_probability(high_frac, "high_frac")
    if dataset.max_budget < 2:
        raise ValueError("pools need at least 2 rewards to compute a variance")
    n = len(dataset)
    variances = dataset.rewards_matrix().var(axis=1)
    order = sorted(range(n), key=lambda i: (variances[i], dataset.records[i].id))
    n_low = int(low_frac * n)
    n_high = int(high_frac * n)
    chosen = set(order[:n_low]) | set(order[n - n_high :] if n_high else [])
    return Dataset(
        records=[dataset.records[i] for i in sorted(chosen)],
        max_budget=dataset.max_budget,
        metric_kind=dataset.metric_kind,
        feature_dim=dataset.feature_dim,
    )
