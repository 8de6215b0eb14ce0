"""Estimators of best-of-b quality from finite pools of graded outcomes.

Every query carries a pool of N graded responses.  Best-of-b quality is the
expected maximum reward over a uniformly random size-b subset of the pool
(without replacement), for which this module provides exact combinatorial
estimators, a seeded bootstrap, and the pairwise preference probability used
for two-decoder routing.

The exact binary estimator is the standard unbiased subset form
``1 - C(N - s, b) / C(N, b)`` for a pool with ``s`` successes; the scalar
estimator uses order statistics: with rewards sorted ascending,
``E[max] = sum_i r_(i) * C(i - 1, b - 1) / C(N, b)``.  Binomial coefficient
ratios are evaluated in log space (or as stable running products) so pools
of size 10^4 are fine.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit, gammaln
from scipy.stats import norm

from .validation import check_pool, check_positive_int, is_binary_pool

__all__ = [
    "CurveEstimate",
    "empirical_success_prob",
    "best_of_b_exact_binary",
    "best_of_b_exact_scalar",
    "exact_curve",
    "bootstrap_curve",
    "empirical_marginals",
    "exact_quality_matrix",
    "exact_marginal_matrix",
    "preference_probability",
]


@dataclass(frozen=True)
class CurveEstimate:
    """A quality-curve estimate with pointwise confidence bounds.

    ``curve`` has length ``max_budget + 1`` (entry 0 is the zero-budget
    reward); ``method`` is ``"exact-combinatorial"`` or ``"bootstrap"``.
    Exact estimates carry degenerate bounds (low == high == value).
    """

    curve: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    method: str
    resamples: int = 0
    seed: int = 0

    def marginals(self) -> np.ndarray:
        return np.diff(self.curve)


def empirical_success_prob(pool) -> float:
    """Fraction of successes in a binary pool."""
    pool = check_pool(pool, binary=True)
    return float(pool.mean())


def _check_subset_size(b, n_pool: int) -> int:
    b = check_positive_int(b, "b", minimum=1)
    if b > n_pool:
        raise ValueError(f"b={b} exceeds pool size {n_pool}")
    return b


def best_of_b_exact_binary(pool, b: int) -> float:
    """Probability that a uniform size-b subset of a binary pool has a success.

    Equals ``1 - C(N - s, b) / C(N, b)``, computed as a running product so
    no binomial coefficient is ever materialized.
    """
    pool = check_pool(pool, binary=True)
    n = pool.shape[0]
    b = _check_subset_size(b, n)
    failures = int(n - pool.sum())
    if failures < b:
        return 1.0
    # C(failures, b) / C(n, b) = prod_{i<b} (failures - i) / (n - i)
    i = np.arange(b)
    return float(1.0 - np.prod((failures - i) / (n - i)))


def _order_stat_weights(n: int, max_budget: int) -> np.ndarray:
    """Weights W[b-1, i-1] = C(i-1, b-1) / C(n, b) for b = 1..max_budget, i = 1..n."""
    b = np.arange(1, max_budget + 1)[:, None]
    i = np.arange(1, n + 1)[None, :]
    with np.errstate(invalid="ignore"):
        log_w = (
            gammaln(i)
            - gammaln(b)
            - gammaln(i - b + 1)
            - (gammaln(n + 1) - gammaln(b + 1) - gammaln(n - b + 2))
        )
    w = np.where(i - 1 >= b - 1, np.exp(log_w), 0.0)
    # Guard the b = n row and log-space round-off: each row sums to 1 exactly.
    return w / w.sum(axis=1, keepdims=True)


def best_of_b_exact_scalar(pool, b: int) -> float:
    """Expected maximum reward over uniform size-b subsets of a scalar pool."""
    pool = check_pool(pool)
    n = pool.shape[0]
    b = _check_subset_size(b, n)
    if b == n:
        return float(pool.max())
    weights = _order_stat_weights(n, b)[b - 1]
    return float(np.sort(pool) @ weights)


def exact_quality_matrix(rewards, max_budget: int, zero_budget_reward: float = 0.0) -> np.ndarray:
    """Exact best-of-b quality curves for a batch of pools.

    ``rewards`` is (n_queries, pool_size); returns (n_queries, max_budget + 1)
    with column 0 equal to ``zero_budget_reward`` (forced to 0 for binary
    pools).  Uses the closed binary form when every reward is 0/1, otherwise
    the order-statistic form (one weight matrix shared across queries).
    """
    rewards = np.asarray(rewards, dtype=float)
    if rewards.ndim != 2 or rewards.shape[1] < 1:
        raise ValueError(f"rewards must be 2-D (n_queries, pool_size), got {rewards.shape}")
    n_pool = rewards.shape[1]
    bmax = check_positive_int(max_budget, "max_budget")
    if bmax > n_pool:
        raise ValueError(f"max_budget={bmax} exceeds pool size {n_pool}")
    if is_binary_pool(rewards):
        failures = n_pool - rewards.sum(axis=1, keepdims=True)
        j = np.arange(bmax)[None, :]
        factors = np.clip((failures - j) / (n_pool - j), 0.0, None)
        quality = 1.0 - np.cumprod(factors, axis=1)
        zero_col = np.zeros((rewards.shape[0], 1))
    else:
        weights = _order_stat_weights(n_pool, bmax)
        quality = np.sort(rewards, axis=1) @ weights.T
        zero_col = np.full((rewards.shape[0], 1), float(zero_budget_reward))
    return np.hstack([zero_col, quality])


def exact_marginal_matrix(rewards, max_budget: int, zero_budget_reward: float = 0.0) -> np.ndarray:
    """Exact marginal-reward curves, (n_queries, max_budget)."""
    return np.diff(exact_quality_matrix(rewards, max_budget, zero_budget_reward), axis=1)


def exact_curve(pool, max_budget: int, zero_budget_reward: float = 0.0) -> CurveEstimate:
    """Exact quality curve for one pool, with degenerate confidence bounds."""
    pool = check_pool(pool)
    curve = exact_quality_matrix(pool[None, :], max_budget, zero_budget_reward)[0]
    return CurveEstimate(
        curve=curve, ci_low=curve.copy(), ci_high=curve.copy(), method="exact-combinatorial"
    )


def bootstrap_curve(
    pool,
    max_budget: int,
    resamples: int = 1000,
    seed: int = 0,
    ci_level: float = 0.95,
    zero_budget_reward: float = 0.0,
) -> CurveEstimate:
    """Monte Carlo quality curve from without-replacement subset draws.

    Each resample permutes the pool once; the running maximum of the first
    ``b`` entries is one draw of the best-of-b reward for every ``b``
    simultaneously.  The estimate at ``b`` is the mean over draws, with a
    normal-approximation percentile interval at ``ci_level`` (half-width
    ``z * sd / sqrt(resamples)``); deterministic for a fixed seed.
    """
    pool = check_pool(pool)
    n_pool = pool.shape[0]
    bmax = check_positive_int(max_budget, "max_budget")
    if bmax > n_pool:
        raise ValueError(f"max_budget={bmax} exceeds pool size {n_pool}")
    resamples = check_positive_int(resamples, "resamples")
    if not 0.0 < ci_level < 1.0:
        raise ValueError(f"ci_level must be in (0, 1), got {ci_level}")

    q0 = 0.0 if is_binary_pool(pool) else float(zero_budget_reward)
    if np.ptp(pool) == 0.0:
        # Constant pool: every draw equals the constant; skip the sampling.
        c = float(pool[0])
        curve = np.concatenate([[q0], np.full(bmax, c)])
        return CurveEstimate(curve, curve.copy(), curve.copy(), "bootstrap", resamples, seed)

    rng = np.random.default_rng(seed)
    sums = np.zeros(bmax)
    sq_sums = np.zeros(bmax)
    chunk = max(1, min(resamples, 20_000))
    done = 0
    while done < resamples:
        rows = min(chunk, resamples - done)
        block = rng.permuted(np.tile(pool, (rows, 1)), axis=1)[:, :bmax]
        prefix_max = np.maximum.accumulate(block, axis=1)
        sums += prefix_max.sum(axis=0)
        sq_sums += np.square(prefix_max).sum(axis=0)
        done += rows

    mean = sums / resamples
    if resamples > 1:
        var = np.clip(sq_sums / resamples - mean**2, 0.0, None)
        sd = np.sqrt(var * resamples / (resamples - 1))
        half = norm.ppf(0.5 + ci_level / 2.0) * sd / np.sqrt(resamples)
    else:
        half = np.zeros(bmax)
    curve = np.concatenate([[q0], mean])
    lo = np.concatenate([[q0], mean - half])
    hi = np.concatenate([[q0], mean + half])
    return CurveEstimate(curve, lo, hi, "bootstrap", resamples, seed)


def empirical_marginals(
    pool,
    max_budget: int,
    method: str = "exact",
    resamples: int = 1000,
    seed: int = 0,
    zero_budget_reward: float = 0.0,
) -> np.ndarray:
    """Marginal-reward curve from a pool: finite differences of the chosen estimator."""
    if method == "exact":
        estimate = exact_curve(pool, max_budget, zero_budget_reward)
    elif method == "bootstrap":
        estimate = bootstrap_curve(
            pool, max_budget, resamples=resamples, seed=seed, zero_budget_reward=zero_budget_reward
        )
    else:
        raise ValueError(f"unknown method {method!r}; expected 'exact' or 'bootstrap'")
    return estimate.marginals()


def preference_probability(strong_pool, weak_pool) -> float:
    """Mean logistic of the reward gap over all (strong, weak) response pairs."""
    strong = check_pool(strong_pool, "strong_pool")
    weak = check_pool(weak_pool, "weak_pool")
    return float(expit(strong[:, None] - weak[None, :]).mean())
