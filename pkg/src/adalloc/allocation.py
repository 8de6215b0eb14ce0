"""Budget allocation under a batch-average compute constraint.

Given one marginal-reward curve per query, :func:`allocate_greedy` assigns
integer budgets maximizing the summed allocated marginals subject to
``sum(b_i) <= floor(B * n)``, per-query caps and mandatory minimums.  With
nonincreasing curves the greedy unit-by-unit choice is exactly optimal
(the feasible increment sets form a matroid), so non-monotone empirical
curves are concavified first by default.  :func:`allocate_bruteforce` is an
exhaustive-search oracle for small instances.

:class:`OfflineBinnedPolicy` fits a fixed score-bin -> budget map on held-out
data (every query in a bin shares one budget) so deployment needs no batch;
routing helpers split a batch between a weak and a strong decoder under an
average-cost budget.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator

from .curves import monotone_envelope
from .validation import check_positive_int, check_vector

__all__ = [
    "BudgetSpec",
    "Allocation",
    "allocation_objective",
    "allocate_greedy",
    "allocate_bruteforce",
    "uniform_budgets",
    "OfflineBinnedPolicy",
    "policy_to_dict",
    "policy_from_dict",
    "save_policy",
    "load_policy",
    "RoutingCosts",
    "RoutingDecision",
    "route_by_preference",
    "route_random",
]

POLICY_SCHEMA = "adalloc.policy.v1"

# floor() guard against float representation of decimal budgets
# (e.g. 0.3 * 10 == 2.9999999999999996 must still count as 3 units).
_FLOOR_EPS = 1e-9


def _floor(value: float) -> int:
    return int(math.floor(value + _FLOOR_EPS))


@dataclass(frozen=True)
class BudgetSpec:
    """Average per-query budget with per-query bounds.

    ``average_budget`` is in abstract compute units per query; a batch of n
    queries may spend at most ``floor(average_budget * n)`` units in total.
    ``min_per_query`` of 1 models domains where every query must receive at
    least one sample; 0 allows skipping hopeless queries entirely.
    """

    average_budget: float
    max_per_query: int
    min_per_query: int = 0

    def __post_init__(self):
        if self.average_budget < 0:
            raise ValueError("average_budget must be nonnegative")
        check_positive_int(self.max_per_query, "max_per_query")
        if self.min_per_query not in (0, 1):
            raise ValueError("min_per_query must be 0 or 1")
        if self.min_per_query > self.max_per_query:
            raise ValueError("min_per_query exceeds max_per_query")

    def total_units(self, n_queries: int) -> int:
        return _floor(self.average_budget * n_queries)


def _make_ids(ids, n: int) -> tuple:
    if ids is None:
        return tuple(str(i) for i in range(n))
    ids = tuple(str(i) for i in ids)
    if len(ids) != n:
        raise ValueError(f"got {len(ids)} ids for {n} queries")
    if len(set(ids)) != n:
        raise ValueError("ids must be unique")
    return ids


@dataclass(frozen=True, eq=False)
class Allocation:
    """Integer budgets for a batch of queries plus the realized cost.

    ``objective_estimate`` is the summed allocated marginals of the curves
    the allocator actually optimized (the concavified curves when
    preconditioning was applied).
    """

    ids: tuple
    budgets: np.ndarray
    total_units: int
    objective_estimate: float

    def budgets_by_id(self) -> dict:
        return {qid: int(b) for qid, b in zip(self.ids, self.budgets)}


def _as_delta_matrix(deltas) -> np.ndarray:
    mat = np.asarray(deltas, dtype=float)
    if mat.ndim == 1:
        mat = mat[None, :]
    if mat.ndim != 2 or mat.shape[1] < 1:
        raise ValueError("deltas must be (n_queries, max_budget); curve lengths must match")
    if not np.all(np.isfinite(mat)):
        raise ValueError("deltas contain non-finite values")
    return mat


def allocation_objective(deltas, budgets) -> float:
    """Sum over queries of the first ``b_i`` marginals."""
    mat = _as_delta_matrix(deltas)
    budgets = np.asarray(budgets, dtype=int)
    prefix = np.hstack([np.zeros((mat.shape[0], 1)), np.cumsum(mat, axis=1)])
    return float(prefix[np.arange(mat.shape[0]), budgets].sum())


def _precondition(mat: np.ndarray, concavify: bool, minimum: int = 0) -> np.ndarray:
    """Make the purchasable marginals (units beyond the minimum) nonincreasing.

    Mandatory units are charged regardless of their marginals, so only the
    tail from ``minimum`` onward must be nonincreasing for greedy optimality;
    including a mandatory first unit in the envelope would smear e.g. a
    negative q(1) - q(0) across units the allocator can actually choose.
    """
    tail = mat[:, minimum:]
    rising = np.any(np.diff(tail, axis=1) > 1e-12, axis=1) if tail.shape[1] > 1 else np.zeros(
        mat.shape[0], dtype=bool
    )
    if not rising.any():
        return mat
    if not concavify:
        raise ValueError(
            "marginal curves must be nonincreasing; pass concavify=True to precondition them"
        )
    out = mat.copy()
    for i in np.flatnonzero(rising):
        out[i, minimum:] = monotone_envelope(tail[i])
    return out


def allocate_greedy(deltas, budget: BudgetSpec, ids=None, concavify: bool = True) -> Allocation:
    """Optimal integer budgets by greedy unit-by-unit selection.

    Mandatory minimum units are charged first; remaining units go to the
    largest next marginal (ties: lowest query index, then lowest unit).
    Zero or negative marginals are never bought beyond the minimum.
    """
    mat = _as_delta_matrix(deltas)
    n, width = mat.shape
    if width != budget.max_per_query:
        raise ValueError(
            f"curves have {width} entries but max_per_query is {budget.max_per_query}"
        )
    ids = _make_ids(ids, n)
    total = budget.total_units(n)
    minimum = budget.min_per_query
    if total < n * minimum:
        raise ValueError(
            f"budget of {total} units cannot cover the mandatory minimum {n * minimum}"
        )
    mat = _precondition(mat, concavify, minimum)

    budgets = np.full(n, minimum, dtype=int)
    remaining = total - n * minimum
    heap = []
    if minimum < width:
        heap = [(-mat[i, minimum], i, minimum + 1) for i in range(n) if mat[i, minimum] > 0.0]
        heapq.heapify(heap)
    while remaining > 0 and heap:
        _, i, unit = heapq.heappop(heap)
        budgets[i] = unit
        remaining -= 1
        if unit < width and mat[i, unit] > 0.0:
            heapq.heappush(heap, (-mat[i, unit], i, unit + 1))

    return Allocation(
        ids=ids,
        budgets=budgets,
        total_units=int(budgets.sum()),
        objective_estimate=allocation_objective(mat, budgets),
    )


def allocate_bruteforce(deltas, budget: BudgetSpec, ids=None) -> Allocation:
    """Exhaustive-search oracle over all feasible integer allocations.

    Guarded to n <= 8 queries and max_per_query <= 6.  Ties are resolved
    like the greedy allocator: maximum objective, then fewest total units
    (never buying free increments), then front-loaded budgets.
    """
    mat = _as_delta_matrix(deltas)
    n, width = mat.shape
    if width != budget.max_per_query:
        raise ValueError(
            f"curves have {width} entries but max_per_query is {budget.max_per_query}"
        )
    if n > 8 or width > 6:
        raise ValueError("bruteforce oracle is limited to n <= 8 and max_per_query <= 6")
    ids = _make_ids(ids, n)
    total = budget.total_units(n)
    minimum = budget.min_per_query
    if total < n * minimum:
        raise ValueError(
            f"budget of {total} units cannot cover the mandatory minimum {n * minimum}"
        )

    prefix = np.hstack([np.zeros((n, 1)), np.cumsum(mat, axis=1)])
    m = width + 1 - minimum
    radix = m ** np.arange(n - 1, -1, -1)
    count = m**n
    rows = np.arange(n)

    best_key = None
    best_combo = None
    chunk = 500_000
    for start in range(0, count, chunk):
        idx = np.arange(start, min(start + chunk, count))
        combos = minimum + (idx[:, None] // radix) % m  # lexicographically ascending
        units = combos.sum(axis=1)
        feasible = units <= total
        if not feasible.any():
            continue
        combos = combos[feasible]
        units = units[feasible]
        objs = prefix[rows, combos].sum(axis=1)
        top = objs == objs.max()
        lean = units[top] == units[top].min()
        # Last survivor in generation order = lexicographically greatest.
        pick = np.flatnonzero(top)[np.flatnonzero(lean)[-1]]
        key = (objs[pick], -units[pick], tuple(combos[pick]))
        if best_key is None or key > best_key:
            best_key = key
            best_combo = combos[pick]

    budgets = np.asarray(best_combo, dtype=int)
    return Allocation(
        ids=ids,
        budgets=budgets,
        total_units=int(budgets.sum()),
        objective_estimate=allocation_objective(mat, budgets),
    )


def uniform_budgets(n: int, budget: BudgetSpec) -> np.ndarray:
    """The flat baseline: every query gets floor(average_budget) units."""
    per_query = min(_floor(budget.average_budget), budget.max_per_query)
    if per_query < budget.min_per_query:
        raise ValueError(
            f"average budget {budget.average_budget} cannot cover the per-query minimum"
        )
    return np.full(n, per_query, dtype=int)


# ---------------------------------------------------------------------------
# Offline policy: a fixed score-bin -> budget map.
# ---------------------------------------------------------------------------


def _solve_binned(counts, mean_curves, total_units, minimum, cap):
    """Exact grouped-knapsack DP: one budget per bin, bin cost = count * budget.

    Returns per-bin budgets maximizing the count-weighted summed prefix
    value under the unit capacity.  Deterministic: within a bin, equal-value
    choices prefer the smaller budget; the final capacity is the smallest
    one achieving the optimum.
    """
    n_bins = len(counts)
    prefix_values = [
        w * np.concatenate([[0.0], np.cumsum(curve)]) for w, curve in zip(counts, mean_curves)
    ]
    dp = np.zeros(total_units + 1)
    choices = np.full((n_bins, total_units + 1), -1, dtype=np.int32)
    for k in range(n_bins):
        w = int(counts[k])
        values = prefix_values[k]
        new = np.full(total_units + 1, -np.inf)
        for beta in range(minimum, cap + 1):
            cost = w * beta
            if cost > total_units:
                break
            cand = dp[: total_units + 1 - cost] + values[beta]
            seg = new[cost:]
            better = cand > seg
            seg[better] = cand[better]
            choices[k, cost:][better] = beta
        dp = new
    t = int(np.argmax(dp))
    if not np.isfinite(dp[t]):
        raise ValueError("binned allocation is infeasible under the given budget")
    budgets = np.zeros(n_bins, dtype=int)
    for k in reversed(range(n_bins)):
        beta = int(choices[k, t])
        budgets[k] = beta
        t -= int(counts[k]) * beta
    return budgets, float(dp.max())


class OfflineBinnedPolicy(BaseEstimator):
    """Per-query budgets from a fixed difficulty-score binning.

    Fit on held-out scores and marginal curves: scores are split into
    ``n_bins`` equal-count quantile bins, and one budget per bin is chosen
    by exactly solving the allocation problem with the bin-sharing
    constraint (grouped-knapsack DP over bin-mean curves).  At deployment,
    :meth:`predict` maps each score to its bin's stored budget, so queries
    are processed independently of the batch.

    Parameters
    ----------
    budget : BudgetSpec
        Average budget and per-query bounds the policy is fit for.
    n_bins : int
        Requested number of quantile bins (duplicated quantiles degrade to
        fewer bins; see ``meta_``).
    score_kind : str
        What the scores are: ``"lambda"`` (predicted success probability)
        or ``"first-delta"`` (predicted gain of the first sample).
    concavify : bool
        Precondition non-monotone curves like the greedy allocator.

    Attributes
    ----------
    bin_edges_ : ndarray
        Ascending interior edges; a score in ``[edge[k-1], edge[k])`` falls
        in bin k (scores on an edge go to the higher bin).
    bin_budgets_ : ndarray
        One integer budget per bin.
    meta_ : dict
        Held-out size, budget used, requested vs effective bin count.
    """

    def __init__(self, budget: BudgetSpec, n_bins: int = 10, score_kind: str = "lambda",
                 concavify: bool = True):
        self.budget = budget
        self.n_bins = n_bins
        self.score_kind = score_kind
        self.concavify = concavify

    def fit(self, scores, delta_curves):
        scores = check_vector(scores, "scores")
        mat = _as_delta_matrix(delta_curves)
        n = scores.shape[0]
        if mat.shape[0] != n:
            raise ValueError(f"{n} scores but {mat.shape[0]} delta curves")
        if mat.shape[1] != self.budget.max_per_query:
            raise ValueError(
                f"curves have {mat.shape[1]} entries but max_per_query is "
                f"{self.budget.max_per_query}"
            )
        check_positive_int(self.n_bins, "n_bins")
        if self.score_kind not in ("lambda", "first-delta"):
            raise ValueError(f"unknown score_kind {self.score_kind!r}")
        total = self.budget.total_units(n)
        minimum = self.budget.min_per_query
        if total < n * minimum:
            raise ValueError(
                f"budget of {total} units cannot cover the mandatory minimum {n * minimum}"
            )
        mat = _precondition(mat, self.concavify, minimum)

        quantiles = np.arange(1, self.n_bins) / self.n_bins
        edges = np.unique(np.quantile(scores, quantiles)) if self.n_bins > 1 else np.array([])
        bins = np.searchsorted(edges, scores, side="right")
        # Merge away empty bins (possible with heavily tied scores).
        while True:
            counts = np.bincount(bins, minlength=edges.shape[0] + 1)
            empty = np.flatnonzero(counts == 0)
            if empty.size == 0:
                break
            drop = max(int(empty[0]) - 1, 0)
            edges = np.delete(edges, drop)
            bins = np.searchsorted(edges, scores, side="right")

        n_eff = edges.shape[0] + 1
        means = np.zeros((n_eff, mat.shape[1]))
        for k in range(n_eff):
            means[k] = mat[bins == k].mean(axis=0)
        budgets, value = _solve_binned(
            counts, means, total, minimum, self.budget.max_per_query
        )

        self.bin_edges_ = edges
        self.bin_budgets_ = budgets
        self.objective_estimate_ = value
        self.meta_ = {
            "heldout_size": int(n),
            "average_budget": float(self.budget.average_budget),
            "total_units": int(total),
            "requested_bins": int(self.n_bins),
            "effective_bins": int(n_eff),
        }
        return self

    def assign_bin(self, scores) -> np.ndarray:
        scores = check_vector(np.atleast_1d(scores), "scores")
        return np.searchsorted(self.bin_edges_, scores, side="right")

    def predict(self, scores) -> np.ndarray:
        """Budget for each score: below the first edge -> bin 0, above the last -> final bin."""
        return self.bin_budgets_[self.assign_bin(scores)]


def policy_to_dict(policy: OfflineBinnedPolicy) -> dict:
    if not hasattr(policy, "bin_budgets_"):
        raise ValueError("policy is not fitted")
    return {
        "schema": POLICY_SCHEMA,
        "score_kind": policy.score_kind,
        "n_bins": policy.n_bins,
        "concavify": policy.concavify,
        "budget": {
            "average_budget": policy.budget.average_budget,
            "max_per_query": policy.budget.max_per_query,
            "min_per_query": policy.budget.min_per_query,
        },
        "bin_edges": policy.bin_edges_.tolist(),
        "bin_budgets": [int(b) for b in policy.bin_budgets_],
        "meta": policy.meta_,
    }


def policy_from_dict(payload: dict) -> OfflineBinnedPolicy:
    if payload.get("schema") != POLICY_SCHEMA:
        raise ValueError(f"unsupported policy schema: {payload.get('schema')!r}")
    policy = OfflineBinnedPolicy(
        budget=BudgetSpec(**payload["budget"]),
        n_bins=payload["n_bins"],
        score_kind=payload["score_kind"],
        concavify=payload.get("concavify", True),
    )
    policy.bin_edges_ = np.asarray(payload["bin_edges"], dtype=float)
    policy.bin_budgets_ = np.asarray(payload["bin_budgets"], dtype=int)
    policy.meta_ = dict(payload["meta"])
    return policy


def save_policy(policy: OfflineBinnedPolicy, path) -> None:
    Path(path).write_text(json.dumps(policy_to_dict(policy)) + "\n")


def load_policy(path) -> OfflineBinnedPolicy:
    return policy_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Two-decoder routing.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RoutingCosts:
    """Per-call costs of the weak and strong decoders (strong > weak > 0)."""

    weak_cost: float
    strong_cost: float

    def __post_init__(self):
        if not 0 < self.weak_cost < self.strong_cost:
            raise ValueError("costs must satisfy 0 < weak_cost < strong_cost")


@dataclass(frozen=True, eq=False)
class RoutingDecision:
    """Which decoder handles each query, plus the realized average cost."""

    ids: tuple
    strong_mask: np.ndarray
    realized_avg_cost: float

    def routes_by_id(self) -> dict:
        return {
            qid: "strong" if s else "weak" for qid, s in zip(self.ids, self.strong_mask)
        }


def strong_count(n: int, costs: RoutingCosts, average_budget: float) -> int:
    """How many of n queries the average budget can route to the strong decoder."""
    if not costs.weak_cost <= average_budget <= costs.strong_cost:
        raise ValueError(
            f"average_budget must lie in [{costs.weak_cost}, {costs.strong_cost}], "
            f"got {average_budget}"
        )
    frac = (average_budget - costs.weak_cost) / (costs.strong_cost - costs.weak_cost)
    return min(_floor(n * frac), n)


def _routing_decision(n, strong_idx, costs, ids):
    mask = np.zeros(n, dtype=bool)
    mask[strong_idx] = True
    n_strong = int(mask.sum())
    cost = ((n - n_strong) * costs.weak_cost + n_strong * costs.strong_cost) / n
    return RoutingDecision(ids=_make_ids(ids, n), strong_mask=mask, realized_avg_cost=cost)


def route_by_preference(prefs, costs: RoutingCosts, average_budget: float,
                        ids=None) -> RoutingDecision:
    """Send the queries most likely to benefit from the strong decoder to it.

    The ``strong_count`` highest preference probabilities are routed strong;
    ties break toward the lower query index.
    """
    prefs = check_vector(prefs, "prefs")
    n = prefs.shape[0]
    n_strong = strong_count(n, costs, average_budget)
    order = np.lexsort((np.arange(n), -prefs))
    return _routing_decision(n, order[:n_strong], costs, ids)


def route_random(n: int, costs: RoutingCosts, average_budget: float, seed: int = 0,
                 ids=None) -> RoutingDecision:
    """Baseline: the same strong-decoder count, membership drawn uniformly."""
    n = check_positive_int(n, "n")
    n_strong = strong_count(n, costs, average_budget)
    rng = np.random.default_rng(seed)
    return _routing_decision(n, rng.choice(n, size=n_strong, replace=False), costs, ids)
