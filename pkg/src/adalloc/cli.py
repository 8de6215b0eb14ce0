"""Command-line interface.

Subcommands cover the whole pipeline: ``generate`` synthetic workloads,
``estimate`` quality/marginal curves from pools, ``train`` difficulty
predictors, ``allocate`` / ``fit-policy`` / ``route`` budgets, ``sweep``
method comparisons across budgets, ``metrics`` predictor evaluation and
``tranches`` variance-extreme subsets.  Every run is seeded, writes the
documented file formats, and echoes a JSON manifest on stdout.  Exit codes:
0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .allocation import (
    POLICY_SCHEMA,
    BudgetSpec,
    OfflineBinnedPolicy,
    RoutingCosts,
    allocate_greedy,
    route_by_preference,
    route_random,
    save_policy,
)
from .datasets import DATASET_SCHEMA, DatasetError, load_dataset, save_dataset
from .estimation import (
    bootstrap_curve,
    exact_curve,
    exact_marginal_matrix,
    preference_probability,
)
from .evaluation import REPORT_SCHEMA, budget_sweep, predictor_metrics
from .predictors import (
    PREDICTOR_SCHEMA,
    MarginalRewardRegressor,
    NoiseSpec,
    PreferencePredictor,
    SuccessProbPredictor,
    load_predictor,
    noisy_oracle,
    save_predictor,
)
from .workloads import WorkloadSpec, generate_workload, select_tranches

ALLOCATION_SCHEMA = "adalloc.allocation.v1"
CURVES_SCHEMA = "adalloc.curves.v1"
ROUTING_SCHEMA = "adalloc.routing.v1"
METRICS_SCHEMA = "adalloc.metrics.v1"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _budget_list(text: str):
    try:
        budgets = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid budget list {text!r}")
    if not budgets:
        raise argparse.ArgumentTypeError("empty budget list")
    return budgets


def _single_budget(budgets) -> float:
    if len(budgets) != 1:
        raise _UsageError("this command takes a single --budget value")
    return budgets[0]


def _child_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def _write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def _analytic_from_lambda(lam, cap):
    lam = np.asarray(lam, dtype=float)
    return lam[:, None] * (1.0 - lam[:, None]) ** np.arange(cap)[None, :]


def _predicted_from_model(model, dataset, cap):
    """Per-query marginal curves (n, cap) and scores from a trained predictor."""
    features = dataset.features_matrix()
    head = model._head_tag
    if head == "lambda":
        lam = model.predict(features)
        return _analytic_from_lambda(lam, cap), lam, "lambda"
    if head == "delta-vector":
        deltas = model.predict(features)
        if deltas.shape[1] < cap:
            raise ValueError(
                f"model predicts {deltas.shape[1]} marginals but {cap} are needed"
            )
        deltas = deltas[:, :cap]
        return deltas, deltas[:, 0], "first-delta"
    raise ValueError(f"predictor head {head!r} cannot drive best-of-k allocation")


def _resolve_curves(args, dataset, cap):
    """Marginal curves + difficulty scores per the --curves source."""
    if args.curves == "oracle":
        if dataset.metric_kind == "success-rate":
            lam = dataset.empirical_success_probs()
            return _analytic_from_lambda(lam, cap), lam, "lambda"
        deltas = exact_marginal_matrix(dataset.rewards_matrix(), cap)
        return deltas, deltas[:, 0], "first-delta"
    if args.curves == "model":
        if not args.model:
            raise _UsageError("--curves model requires --model")
        return _predicted_from_model(load_predictor(args.model), dataset, cap)
    # noisy-oracle
    noise = NoiseSpec(kind=args.noise_kind, sigma=args.sigma)
    lam = noisy_oracle(dataset.empirical_success_probs(), noise, args.seed)
    return _analytic_from_lambda(lam, cap), lam, "lambda"


# ---------------------------------------------------------------------------
# Subcommands.  Each returns the list of files it wrote.
# ---------------------------------------------------------------------------


def cmd_generate(args):
    dist = None
    if args.beta is not None:
        dist = ("beta", args.beta[0], args.beta[1])
    elif args.point is not None:
        dist = ("point", args.point)
    spec = WorkloadSpec(
        family=args.family,
        n_queries=args.n,
        max_budget=args.bmax,
        seed=args.seed,
        zero_mass=args.zero_mass,
        success_dist=dist,
        feature_noise=args.feature_noise,
        n_distractors=args.distractors,
    )
    save_dataset(generate_workload(spec), args.output)
    return [args.output]


def cmd_estimate(args):
    dataset = load_dataset(args.input)
    cap = args.bmax or dataset.max_budget
    lines = [
        json.dumps(
            {
                "schema": CURVES_SCHEMA,
                "max_budget": cap,
                "method": args.method,
                "resamples": args.resamples if args.method == "bootstrap" else None,
                "seed": args.seed if args.method == "bootstrap" else None,
            }
        )
    ]
    for i, rec in enumerate(dataset.records):
        if args.method == "exact":
            est = exact_curve(rec.rewards, cap)
        else:
            est = bootstrap_curve(
                rec.rewards, cap, resamples=args.resamples, seed=_child_seed(args.seed, i)
            )
        row = {"id": rec.id, "quality": est.curve.tolist(), "deltas": est.marginals().tolist()}
        if args.method == "bootstrap":
            row["ci_low"] = est.ci_low.tolist()
            row["ci_high"] = est.ci_high.tolist()
        lines.append(json.dumps(row))
    Path(args.output).write_text("\n".join(lines) + "\n")
    return [args.output]


def cmd_train(args):
    dataset = load_dataset(args.input)
    common = dict(
        hidden_width=args.hidden,
        learning_rate=args.lr,
        epochs=args.epochs,
        batch_size=args.batch_size,
        l2=args.l2,
        seed=args.seed,
    )
    if args.head == "lambda":
        model = SuccessProbPredictor(**common)
        model.fit(dataset.features_matrix(), dataset.empirical_success_probs())
    elif args.head == "delta-vector":
        model = MarginalRewardRegressor(**common)
        targets = exact_marginal_matrix(dataset.rewards_matrix(), dataset.max_budget)
        model.fit(dataset.features_matrix(), targets)
    else:  # preference
        if not args.weak:
            raise _UsageError("--head preference requires --weak")
        weak = load_dataset(args.weak)
        if weak.ids() != dataset.ids():
            raise ValueError("strong and weak datasets must share query ids in order")
        prefs = np.array(
            [
                preference_probability(s.rewards, w.rewards)
                for s, w in zip(dataset.records, weak.records)
            ]
        )
        model = PreferencePredictor(**common)
        model.fit(weak.features_matrix(), prefs)
    save_predictor(model, args.output)
    return [args.output]


def cmd_allocate(args):
    dataset = load_dataset(args.input)
    budget_value = _single_budget(args.budget)
    cap = args.bmax or dataset.max_budget
    spec = BudgetSpec(budget_value, cap, args.min)
    deltas, _, _ = _resolve_curves(args, dataset, cap)
    allocation = allocate_greedy(deltas, spec, ids=dataset.ids())
    _write_json(
        args.output,
        {
            "schema": ALLOCATION_SCHEMA,
            "average_budget": budget_value,
            "max_per_query": cap,
            "min_per_query": args.min,
            "total_units": allocation.total_units,
            "objective_estimate": allocation.objective_estimate,
            "budgets": allocation.budgets_by_id(),
        },
    )
    return [args.output]


def cmd_fit_policy(args):
    dataset = load_dataset(args.input)
    budget_value = _single_budget(args.budget)
    cap = args.bmax or dataset.max_budget
    spec = BudgetSpec(budget_value, cap, args.min)
    deltas, scores, score_kind = _resolve_curves(args, dataset, cap)
    policy = OfflineBinnedPolicy(spec, n_bins=args.bins, score_kind=score_kind)
    policy.fit(scores, deltas)
    save_policy(policy, args.output)
    return [args.output]


def cmd_route(args):
    strong = load_dataset(args.strong)
    weak = load_dataset(args.weak)
    if strong.ids() != weak.ids():
        raise ValueError("strong and weak datasets must share query ids in order")
    costs = RoutingCosts(args.weak_cost, args.strong_cost)
    budget_value = _single_budget(args.budget)
    n = len(strong)
    if args.method == "random":
        decision = route_random(n, costs, budget_value, seed=args.seed, ids=strong.ids())
    elif args.method == "oracle":
        gaps = strong.rewards_matrix().mean(axis=1) - weak.rewards_matrix().mean(axis=1)
        decision = route_by_preference(gaps, costs, budget_value, ids=strong.ids())
    else:  # preference
        if args.model:
            model = load_predictor(args.model)
            prefs = model.predict(weak.features_matrix())
        else:
            prefs = np.array(
                [
                    preference_probability(s.rewards, w.rewards)
                    for s, w in zip(strong.records, weak.records)
                ]
            )
        decision = route_by_preference(prefs, costs, budget_value, ids=strong.ids())
    _write_json(
        args.output,
        {
            "schema": ROUTING_SCHEMA,
            "average_budget": budget_value,
            "weak_cost": costs.weak_cost,
            "strong_cost": costs.strong_cost,
            "method": args.method,
            "realized_avg_cost": decision.realized_avg_cost,
            "routes": decision.routes_by_id(),
        },
    )
    return [args.output]


def cmd_sweep(args):
    dataset = load_dataset(args.input)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    cap = args.bmax or dataset.max_budget
    predicted_success = None
    predicted_deltas = None
    if any(m in ("online", "offline") for m in methods):
        deltas, scores, score_kind = _resolve_curves(args, dataset, cap)
        if score_kind == "lambda":
            predicted_success = scores
        else:
            predicted_deltas = deltas
    report = budget_sweep(
        dataset,
        methods,
        args.budget,
        min_per_query=args.min,
        max_per_query=cap,
        predicted_success=predicted_success,
        predicted_deltas=predicted_deltas,
        n_bins=args.bins,
        zero_budget_reward=args.zero_budget_reward,
        ci_resamples=args.ci_resamples,
        seed=args.seed,
    )
    report.to_csv(args.output)
    written = [args.output]
    if args.json:
        report.to_json(args.json)
        written.append(args.json)
    return written


def cmd_metrics(args):
    dataset = load_dataset(args.input)
    model = load_predictor(args.model)
    head = model._head_tag
    if head == "lambda":
        preds = model.predict(dataset.features_matrix())
        truths = dataset.empirical_success_probs()
        loss_kind = args.loss or "xent"
    elif head == "delta-vector":
        preds = model.predict(dataset.features_matrix())
        truths = exact_marginal_matrix(dataset.rewards_matrix(), dataset.max_budget)
        loss_kind = args.loss or "mse"
    else:  # preference
        if not args.weak:
            raise _UsageError("metrics for a preference head require --weak")
        weak = load_dataset(args.weak)
        if weak.ids() != dataset.ids():
            raise ValueError("strong and weak datasets must share query ids in order")
        preds = model.predict(weak.features_matrix())
        truths = np.array(
            [
                preference_probability(s.rewards, w.rewards)
                for s, w in zip(dataset.records, weak.records)
            ]
        )
        loss_kind = args.loss or "xent"
    metrics = predictor_metrics(preds, truths, loss_kind)
    _write_json(
        args.output,
        {"schema": METRICS_SCHEMA, "head": head, "loss_kind": loss_kind, **metrics.to_dict()},
    )
    return [args.output]


def cmd_tranches(args):
    dataset = load_dataset(args.input)
    subset = select_tranches(dataset, low_frac=args.low, high_frac=args.high)
    save_dataset(subset, args.output)
    return [args.output]


# ---------------------------------------------------------------------------
# Parser wiring.
# ---------------------------------------------------------------------------


def _add_seed(p):
    p.add_argument("--seed", type=int, default=0, help="run seed (default 0)")


def _add_curve_source(p):
    p.add_argument(
        "--curves",
        choices=["oracle", "model", "noisy-oracle"],
        default="oracle",
        help="difficulty-prediction source: noiseless from the pools (oracle), a "
        "trained predictor (model), or pool estimates perturbed by --sigma "
        "(noisy-oracle)",
    )
    p.add_argument("--model", help="trained predictor JSON (with --curves model)")
    p.add_argument("--sigma", type=float, default=0.0, help="noisy-oracle noise scale")
    p.add_argument(
        "--noise-kind",
        choices=["gaussian-on-lambda", "gaussian-on-logit"],
        default="gaussian-on-lambda",
    )


def build_parser() -> _Parser:
    parser = _Parser(prog="adalloc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("generate", help="generate a synthetic workload")
    p.add_argument("--family", required=True,
                   choices=["code-like", "math-like", "chat-like", "custom"])
    p.add_argument("--n", type=int, required=True, help="number of queries")
    p.add_argument("--bmax", type=int, required=True, help="pool size per query")
    p.add_argument("--zero-mass", type=float, default=None,
                   help="fraction of hopeless queries (family default otherwise)")
    p.add_argument("--beta", type=float, nargs=2, metavar=("A", "B"),
                   help="Beta shape for nonzero success probabilities")
    p.add_argument("--point", type=float, help="constant success probability")
    p.add_argument("--feature-noise", type=float, default=0.1)
    p.add_argument("--distractors", type=int, default=3)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("estimate", help="estimate quality/marginal curves from pools")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--method", choices=["exact", "bootstrap"], default="exact")
    p.add_argument("--resamples", type=int, default=1000)
    p.add_argument("--bmax", type=int, default=None, help="curve length (default: pool size)")
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("train", help="train a difficulty predictor on features")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--head", choices=["lambda", "delta-vector", "preference"], required=True)
    p.add_argument("--weak", help="weak-decoder dataset (preference head)")
    p.add_argument("--hidden", type=int, default=None, help="hidden width (default: linear)")
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--l2", type=float, default=0.0)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("allocate", help="greedy budgets for one batch")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--budget", type=_budget_list, required=True)
    p.add_argument("--bmax", type=int, default=None)
    p.add_argument("--min", type=int, choices=[0, 1], default=0)
    _add_curve_source(p)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("fit-policy", help="fit an offline bin->budget policy")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--budget", type=_budget_list, required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--bmax", type=int, default=None)
    p.add_argument("--min", type=int, choices=[0, 1], default=0)
    _add_curve_source(p)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_fit_policy)

    p = sub.add_parser("route", help="route queries between weak and strong decoders")
    p.add_argument("--strong", required=True, help="strong-decoder dataset")
    p.add_argument("--weak", required=True, help="weak-decoder dataset")
    p.add_argument("--weak-cost", type=float, required=True)
    p.add_argument("--strong-cost", type=float, required=True)
    p.add_argument("--budget", type=_budget_list, required=True)
    p.add_argument("--method", choices=["preference", "random", "oracle"],
                   default="preference")
    p.add_argument("--model", help="trained preference predictor JSON")
    _add_seed(p)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("sweep", help="compare methods across budgets")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--methods", required=True,
                   help="comma list from uniform,online,offline,oracle")
    p.add_argument("--budgets", dest="budget", type=_budget_list, required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--bmax", type=int, default=None)
    p.add_argument("--min", type=int, choices=[0, 1], default=0)
    p.add_argument("--zero-budget-reward", type=float, default=None)
    p.add_argument("--ci-resamples", type=int, default=1000)
    _add_curve_source(p)
    _add_seed(p)
    p.add_argument("-o", "--output", required=True, help="CSV report path")
    p.add_argument("--json", help="also write a JSON report here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("metrics", help="evaluate a trained predictor")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--weak", help="weak-decoder dataset (preference head)")
    p.add_argument("--loss", choices=["mse", "xent"], default=None)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("tranches", help="variance-extreme subset of a reward dataset")
    p.add_argument("-i", "--input", required=True)
    p.add_argument("--low", type=float, default=0.1)
    p.add_argument("--high", type=float, default=0.1)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_tranches)

    return parser


def _manifest(args, outputs) -> dict:
    arguments = {k: v for k, v in vars(args).items() if k not in ("func", "command")}
    return {
        "command": args.command,
        "arguments": arguments,
        "outputs": list(outputs),
        "package_version": __version__,
        "schemas": {
            "dataset": DATASET_SCHEMA,
            "predictor": PREDICTOR_SCHEMA,
            "policy": POLICY_SCHEMA,
            "allocation": ALLOCATION_SCHEMA,
            "curves": CURVES_SCHEMA,
            "routing": ROUTING_SCHEMA,
            "report": REPORT_SCHEMA,
            "metrics": METRICS_SCHEMA,
        },
    }


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"adalloc: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if getattr(args, "func", None) is None:
        parser.print_usage(sys.stderr)
        print("adalloc: error: a subcommand is required", file=sys.stderr)
        return 1
    try:
        outputs = args.func(args)
    except _UsageError as exc:
        print(f"adalloc: error: {exc}", file=sys.stderr)
        return 1
    except (DatasetError, ValueError, KeyError, OSError) as exc:
        print(f"adalloc: error: {exc}", file=sys.stderr)
        return 2
    print(json.dumps(_manifest(args, outputs), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
