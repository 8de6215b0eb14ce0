"""Scoring of allocations, predictors, and allocation methods across budgets.

Batch metrics are the mean over queries of the exact best-of-b estimate at
each query's allocated budget: the expected success rate for binary pools
and the expected reward for scalar pools, both with query-level bootstrap
confidence intervals.  :func:`budget_sweep` compares allocation methods
(uniform, online greedy, offline binned, oracle) across budgets and
:func:`routing_sweep` does the same for two-decoder routing; reports
serialize to CSV and JSON for external plotting.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .allocation import (
    Allocation,
    BudgetSpec,
    OfflineBinnedPolicy,
    RoutingCosts,
    allocate_greedy,
    route_by_preference,
    route_random,
    uniform_budgets,
)
from .datasets import Dataset
from .estimation import exact_marginal_matrix, exact_quality_matrix, preference_probability
from .predictors import NoiseSpec, noisy_oracle
from .validation import check_positive_int, check_vector

__all__ = [
    "ReportRow",
    "EvaluationReport",
    "PredictorMetrics",
    "BinBreakdown",
    "expected_success_rate",
    "expected_reward",
    "budget_sweep",
    "routing_sweep",
    "predictor_metrics",
    "calibration_curve",
    "bin_breakdown",
    "pathology_study",
]

REPORT_SCHEMA = "adalloc.report.v1"

SWEEP_METHODS = ("uniform", "online", "offline", "oracle")
ROUTING_METHODS = ("preference", "random", "oracle")


@dataclass(frozen=True)
class ReportRow:
    budget: float
    method: str
    value: float
    ci_low: float
    ci_high: float


@dataclass
class EvaluationReport:
    """Per-(budget, method) metric values with confidence intervals."""

    rows: list
    metric_kind: str
    meta: dict = field(default_factory=dict)

    def value(self, method: str, budget: float) -> float:
        for row in self.rows:
            if row.method == method and math.isclose(row.budget, budget):
                return row.value
        raise KeyError(f"no row for method {method!r} at budget {budget}")

    def methods(self) -> list:
        seen = []
        for row in self.rows:
            if row.method not in seen:
                seen.append(row.method)
        return seen

    def budgets(self) -> list:
        seen = []
        for row in self.rows:
            if row.budget not in seen:
                seen.append(row.budget)
        return seen

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["budget", "method", "value", "ci_low", "ci_high"])
            for row in self.rows:
                writer.writerow(
                    [repr(row.budget), row.method, repr(row.value), repr(row.ci_low),
                     repr(row.ci_high)]
                )

    def to_json(self, path) -> None:
        payload = {
            "schema": REPORT_SCHEMA,
            "metric_kind": self.metric_kind,
            "meta": self.meta,
            "rows": [
                {
                    "budget": row.budget,
                    "method": row.method,
                    "value": row.value,
                    "ci_low": row.ci_low,
                    "ci_high": row.ci_high,
                }
                for row in self.rows
            ],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")


def _bootstrap_mean_ci(values, resamples, level, rng):
    """Percentile interval of the mean under query resampling."""
    if resamples < 1 or values.shape[0] < 2:
        mean = float(values.mean())
        return mean, mean
    idx = rng.integers(0, values.shape[0], size=(resamples, values.shape[0]))
    means = values[idx].mean(axis=1)
    lo, hi = np.percentile(means, [50.0 * (1.0 - level), 50.0 * (1.0 + level)])
    return float(lo), float(hi)


def _values_at_budgets(dataset, budgets_vec, zero_budget_reward):
    rewards = dataset.rewards_matrix()
    budgets_vec = np.asarray(budgets_vec, dtype=int)
    if budgets_vec.shape != (len(dataset),):
        raise ValueError("need one budget per query")
    if budgets_vec.min() < 0 or budgets_vec.max() > dataset.max_budget:
        raise ValueError(
            f"budgets must lie in [0, {dataset.max_budget}], got "
            f"[{budgets_vec.min()}, {budgets_vec.max()}]"
        )
    binary = dataset.metric_kind == "success-rate"
    if not binary and zero_budget_reward is None and (budgets_vec == 0).any():
        raise ValueError("a query got budget 0 but no zero-budget reward is configured")
    quality = exact_quality_matrix(
        rewards, dataset.max_budget, 0.0 if zero_budget_reward is None else zero_budget_reward
    )
    return quality[np.arange(len(dataset)), budgets_vec]


def _aligned_budgets(allocation: Allocation, dataset: Dataset) -> np.ndarray:
    table = allocation.budgets_by_id()
    try:
        return np.asarray([table[qid] for qid in dataset.ids()], dtype=int)
    except KeyError as exc:
        raise ValueError(f"allocation is missing query id {exc.args[0]!r}") from exc


def expected_success_rate(
    allocation: Allocation,
    dataset: Dataset,
    ci_resamples: int = 1000,
    ci_level: float = 0.95,
    seed: int = 0,
):
    """Mean over queries of the exact best-of-b success probability.

    Budget 0 contributes 0.  Returns ``(value, (ci_low, ci_high))`` with a
    query-level bootstrap percentile interval.
    """
    if dataset.metric_kind != "success-rate":
        raise ValueError("expected_success_rate needs binary pools")
    values = _values_at_budgets(dataset, _aligned_budgets(allocation, dataset), None)
    ci = _bootstrap_mean_ci(values, ci_resamples, ci_level, np.random.default_rng(seed))
    return float(values.mean()), ci


def expected_reward(
    allocation: Allocation,
    dataset: Dataset,
    zero_budget_reward: float | None = None,
    ci_resamples: int = 1000,
    ci_level: float = 0.95,
    seed: int = 0,
):
    """Mean over queries of the exact expected best-of-b reward."""
    values = _values_at_budgets(
        dataset, _aligned_budgets(allocation, dataset), zero_budget_reward
    )
    ci = _bootstrap_mean_ci(values, ci_resamples, ci_level, np.random.default_rng(seed))
    return float(values.mean()), ci


def _predicted_delta_matrix(n, cap, predicted_success, predicted_deltas):
    if predicted_deltas is not None:
        mat = np.asarray(predicted_deltas, dtype=float)
        if mat.shape != (n, cap):
            raise ValueError(f"predicted_deltas must have shape ({n}, {cap}), got {mat.shape}")
        return mat
    if predicted_success is not None:
        lam = check_vector(predicted_success, "predicted_success")
        if lam.shape[0] != n:
            raise ValueError(f"need {n} predicted success probabilities, got {lam.shape[0]}")
        return lam[:, None] * (1.0 - lam[:, None]) ** np.arange(cap)[None, :]
    return None


def budget_sweep(
    dataset: Dataset,
    methods,
    budgets,
    min_per_query: int = 0,
    max_per_query: int | None = None,
    predicted_success=None,
    predicted_deltas=None,
    n_bins: int = 10,
    concavify: bool = True,
    zero_budget_reward: float | None = None,
    ci_resamples: int = 1000,
    ci_level: float = 0.95,
    seed: int = 0,
) -> EvaluationReport:
    """Evaluate allocation methods on one dataset across average budgets.

    ``uniform`` gives every query floor(B) samples; ``online`` runs the
    greedy allocator on the predicted marginal curves (from
    ``predicted_success`` in binary domains or ``predicted_deltas``);
    ``offline`` fits an :class:`OfflineBinnedPolicy` on the same predictions
    and applies it; ``oracle`` runs the greedy allocator on the exact
    empirical curves from the full pools.  Deterministic for a fixed seed.
    """
    methods = list(methods)
    for method in methods:
        if method not in SWEEP_METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {SWEEP_METHODS}")
    budgets = sorted(float(b) for b in budgets)
    if not budgets:
        raise ValueError("need at least one budget")
    n = len(dataset)
    cap = dataset.max_budget if max_per_query is None else int(max_per_query)
    if cap > dataset.max_budget:
        raise ValueError("max_per_query exceeds the dataset pool size")
    binary = dataset.metric_kind == "success-rate"
    zero_reward = 0.0 if binary else zero_budget_reward

    predicted = _predicted_delta_matrix(n, cap, predicted_success, predicted_deltas)
    if predicted is None and any(m in ("online", "offline") for m in methods):
        raise ValueError("online/offline methods need predicted_success or predicted_deltas")
    scores = None
    if predicted is not None:
        scores = (
            np.asarray(predicted_success, dtype=float)
            if predicted_success is not None
            else predicted[:, 0]
        )
    score_kind = "lambda" if predicted_success is not None else "first-delta"
    oracle_deltas = None
    if "oracle" in methods:
        oracle_deltas = exact_marginal_matrix(
            dataset.rewards_matrix(), cap, 0.0 if zero_reward is None else zero_reward
        )

    rows = []
    row_index = 0
    for budget_value in budgets:
        spec = BudgetSpec(budget_value, cap, min_per_query)
        for method in methods:
            if method == "uniform":
                vec = uniform_budgets(n, spec)
            elif method == "online":
                vec = allocate_greedy(predicted, spec, concavify=concavify).budgets
            elif method == "oracle":
                vec = allocate_greedy(oracle_deltas, spec, concavify=concavify).budgets
            else:  # offline
                policy = OfflineBinnedPolicy(
                    spec, n_bins=n_bins, score_kind=score_kind, concavify=concavify
                ).fit(scores, predicted)
                vec = policy.predict(scores)
            values = _values_at_budgets(dataset, vec, zero_reward)
            ci = _bootstrap_mean_ci(
                values, ci_resamples, ci_level, np.random.default_rng([seed, row_index])
            )
            rows.append(ReportRow(budget_value, method, float(values.mean()), ci[0], ci[1]))
            row_index += 1

    return EvaluationReport(
        rows=rows,
        metric_kind=dataset.metric_kind,
        meta={"n": n, "max_per_query": cap, "min_per_query": min_per_query, "seed": seed},
    )


def pathology_study(
    dataset: Dataset,
    noise: NoiseSpec,
    budgets,
    n_bins: int = 10,
    seed: int = 0,
    ci_resamples: int = 1000,
    ci_level: float = 0.95,
) -> EvaluationReport:
    """Uniform vs online vs offline when predictions are a noisy oracle.

    Per-query empirical success probabilities are perturbed per ``noise``
    and fed to both adaptive methods, exposing how prediction error affects
    the online allocator (hopeless queries predicted slightly solvable soak
    up budget) while binning regularizes the offline policy.
    """
    noisy = noisy_oracle(dataset.empirical_success_probs(), noise, seed)
    report = budget_sweep(
        dataset,
        ["uniform", "online", "offline"],
        budgets,
        predicted_success=noisy,
        n_bins=n_bins,
        ci_resamples=ci_resamples,
        ci_level=ci_level,
        seed=seed,
    )
    report.meta.update({"noise_kind": noise.kind, "noise_sigma": noise.sigma})
    return report


def routing_sweep(
    strong_dataset: Dataset,
    weak_dataset: Dataset,
    methods,
    budgets,
    costs: RoutingCosts,
    prefs=None,
    ci_resamples: int = 1000,
    ci_level: float = 0.95,
    seed: int = 0,
) -> EvaluationReport:
    """Evaluate routing methods across average-cost budgets.

    ``preference`` routes by preference probabilities (``prefs`` if given,
    else the exact pairwise probabilities from the pools); ``oracle`` routes
    by the true mean reward gap; ``random`` draws membership with the same
    strong-decoder count.  The metric is the mean single-call reward of the
    chosen decoder.
    """
    methods = list(methods)
    for method in methods:
        if method not in ROUTING_METHODS:
            raise ValueError(f"unknown method {method!r}; expected one of {ROUTING_METHODS}")
    if strong_dataset.ids() != weak_dataset.ids():
        raise ValueError("strong and weak datasets must share query ids in order")
    budgets = sorted(float(b) for b in budgets)
    n = len(strong_dataset)
    strong_means = strong_dataset.rewards_matrix().mean(axis=1)
    weak_means = weak_dataset.rewards_matrix().mean(axis=1)
    if "preference" in methods and prefs is None:
        prefs = np.array(
            [
                preference_probability(s.rewards, w.rewards)
                for s, w in zip(strong_dataset.records, weak_dataset.records)
            ]
        )

    rows = []
    row_index = 0
    for budget_value in budgets:
        for method in methods:
            if method == "preference":
                decision = route_by_preference(prefs, costs, budget_value)
            elif method == "oracle":
                decision = route_by_preference(strong_means - weak_means, costs, budget_value)
            else:
                decision = route_random(n, costs, budget_value, seed=int(seed) + row_index)
            values = np.where(decision.strong_mask, strong_means, weak_means)
            ci = _bootstrap_mean_ci(
                values, ci_resamples, ci_level, np.random.default_rng([seed, row_index])
            )
            rows.append(ReportRow(budget_value, method, float(values.mean()), ci[0], ci[1]))
            row_index += 1

    return EvaluationReport(
        rows=rows,
        metric_kind="reward",
        meta={
            "n": n,
            "weak_cost": costs.weak_cost,
            "strong_cost": costs.strong_cost,
            "seed": seed,
        },
    )


@dataclass(frozen=True)
class PredictorMetrics:
    """Predictor quality against three reference points.

    ``avg_baseline_loss`` is the loss of always predicting the mean target;
    ``oracle_loss`` is the loss of predicting the targets themselves
    (positive for cross-entropy with soft labels); the accuracy thresholds
    predictions and targets at the targets' median.
    """

    model_loss: float
    avg_baseline_loss: float
    oracle_loss: float
    median_threshold_accuracy: float

    def to_dict(self) -> dict:
        return {
            "model_loss": self.model_loss,
            "avg_baseline_loss": self.avg_baseline_loss,
            "oracle_loss": self.oracle_loss,
            "median_threshold_accuracy": self.median_threshold_accuracy,
        }


def _per_example_loss(preds, truths, loss_kind):
    if loss_kind == "mse":
        sq = (preds - truths) ** 2
        return sq if sq.ndim == 1 else sq.sum(axis=1)
    if loss_kind == "xent":
        pc = np.clip(preds, 1e-6, 1.0 - 1e-6)
        pointwise = -(truths * np.log(pc) + (1.0 - truths) * np.log1p(-pc))
        return pointwise if pointwise.ndim == 1 else pointwise.sum(axis=1)
    raise ValueError(f"unknown loss_kind {loss_kind!r}; expected 'mse' or 'xent'")


def predictor_metrics(predictions, truths, loss_kind: str) -> PredictorMetrics:
    """Model loss vs the constant-mean baseline and the perfect predictor."""
    preds = np.asarray(predictions, dtype=float)
    truths = np.asarray(truths, dtype=float)
    if preds.shape != truths.shape:
        raise ValueError(f"shape mismatch: predictions {preds.shape} vs truths {truths.shape}")
    if preds.shape[0] < 2:
        raise ValueError("need at least 2 examples")
    model_loss = float(_per_example_loss(preds, truths, loss_kind).mean())
    baseline = np.broadcast_to(truths.mean(axis=0), truths.shape)
    avg_loss = float(_per_example_loss(baseline, truths, loss_kind).mean())
    oracle_loss = float(_per_example_loss(truths, truths, loss_kind).mean())
    pred_scalar = preds if preds.ndim == 1 else preds[:, 0]
    true_scalar = truths if truths.ndim == 1 else truths[:, 0]
    median = np.median(true_scalar)
    accuracy = float(np.mean((pred_scalar > median) == (true_scalar > median)))
    return PredictorMetrics(model_loss, avg_loss, oracle_loss, accuracy)


def calibration_curve(predictions, truths, n_bins: int = 10) -> np.ndarray:
    """Reliability points: (mean prediction, mean truth, count) per occupied bin.

    Bins are equal-width over the prediction range; a constant prediction
    collapses to a single occupied bin.
    """
    preds = check_vector(predictions, "predictions")
    truths = check_vector(truths, "truths")
    if preds.shape != truths.shape:
        raise ValueError("predictions and truths must have equal length")
    check_positive_int(n_bins, "n_bins", minimum=2)
    lo, hi = preds.min(), preds.max()
    if hi == lo:
        idx = np.zeros(preds.shape[0], dtype=int)
    else:
        idx = np.minimum(((preds - lo) / (hi - lo) * n_bins).astype(int), n_bins - 1)
    rows = []
    for k in range(n_bins):
        mask = idx == k
        if mask.any():
            rows.append([preds[mask].mean(), truths[mask].mean(), int(mask.sum())])
    return np.asarray(rows)


@dataclass(frozen=True)
class BinBreakdown:
    """Share of allocated units going to easy/medium/hard queries per budget.

    Queries are split into three equal-count bins by predicted success
    probability (lowest third = hard).  ``shares`` is (n_budgets, 3) in
    easy/medium/hard order and each row sums to 1.
    """

    budgets: tuple
    shares: np.ndarray

    def as_rows(self) -> list:
        return [
            (b, float(row[0]), float(row[1]), float(row[2]))
            for b, row in zip(self.budgets, self.shares)
        ]


def bin_breakdown(allocations, predicted_success, budgets) -> BinBreakdown:
    """Difficulty-bin shares of allocated units for one allocation per budget."""
    predicted = check_vector(predicted_success, "predicted_success")
    n = predicted.shape[0]
    if n < 3:
        raise ValueError("need at least 3 queries to form difficulty tertiles")
    allocations = list(allocations)
    budgets = [float(b) for b in budgets]
    if len(allocations) != len(budgets):
        raise ValueError("need one allocation per budget")
    order = np.argsort(predicted, kind="stable")
    hard, medium, easy = np.array_split(order, 3)
    shares = np.zeros((len(budgets), 3))
    for row, alloc in enumerate(allocations):
        units = np.asarray(alloc.budgets, dtype=float)
        if units.shape[0] != n:
            raise ValueError("allocation size does not match predictions")
        total = units.sum()
        if total <= 0:
            raise ValueError("allocation has no units to break down")
        shares[row] = [units[easy].sum() / total, units[medium].sum() / total,
                       units[hard].sum() / total]
    return BinBreakdown(budgets=tuple(budgets), shares=shares)
