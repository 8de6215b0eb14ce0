"""Difficulty predictors: lightweight probes trained on query feature vectors.

Three estimator heads share one gradient-descent core (linear or one hidden
tanh layer, deterministic seeded minibatch GD):

* :class:`MarginalRewardRegressor` - predicts the whole marginal-reward
  vector for budgets 1..B, trained on squared error.
* :class:`SuccessProbPredictor` - predicts a per-sample success probability
  through a logistic output, trained on soft-label cross-entropy.
* :class:`PreferencePredictor` - same logistic form, predicting the chance a
  strong decoder's response beats a weak decoder's.

A :func:`noisy_oracle` stands in for a predictor of configurable accuracy in
controlled experiments.  Trained predictors serialize to a versioned JSON
document via :func:`save_predictor` / :func:`load_predictor`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit, logit
from sklearn.base import BaseEstimator, RegressorMixin

from .validation import check_matrix, check_positive_int

__all__ = [
    "MarginalRewardRegressor",
    "SuccessProbPredictor",
    "PreferencePredictor",
    "NoiseSpec",
    "noisy_oracle",
    "predictor_to_dict",
    "predictor_from_dict",
    "save_predictor",
    "load_predictor",
]

PREDICTOR_SCHEMA = "adalloc.predictor.v1"

_PROB_EPS = 1e-6  # cross-entropy clamp
_PRED_EPS = 1e-12  # keeps probability outputs strictly inside (0, 1)


# ---------------------------------------------------------------------------
# Gradient-descent core.  Parameters are a list of arrays: [W, b] for the
# linear architecture, [W1, b1, W2, b2] with a tanh hidden layer otherwise.
# ---------------------------------------------------------------------------


def _init_params(rng, input_dim, output_dim, hidden_width):
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) weights, zero biases."""
    def layer(fan_in, fan_out):
        bound = 1.0 / np.sqrt(fan_in)
        return rng.uniform(-bound, bound, size=(fan_out, fan_in)), np.zeros(fan_out)

    if hidden_width is None:
        w, b = layer(input_dim, output_dim)
        return [w, b]
    w1, b1 = layer(input_dim, hidden_width)
    w2, b2 = layer(hidden_width, output_dim)
    return [w1, b1, w2, b2]


def _forward(params, X):
    """Pre-head outputs Z (n, output_dim) and the hidden activations (or None)."""
    if len(params) == 2:
        w, b = params
        return X @ w.T + b, None
    w1, b1, w2, b2 = params
    hidden = np.tanh(X @ w1.T + b1)
    return hidden @ w2.T + b2, hidden


def _loss_and_grad(params, X, Y, head, l2=0.0):
    """Mean loss over the batch and its gradient w.r.t. every parameter.

    ``head`` is ``"mse"`` (squared L2 per example against Z) or ``"xent"``
    (logistic output, soft-label cross-entropy with probabilities clamped to
    [1e-6, 1 - 1e-6]).  An ``l2`` penalty applies to weight matrices only.
    """
    n = X.shape[0]
    Z, hidden = _forward(params, X)
    if head == "mse":
        diff = Z - Y
        loss = float(np.sum(diff * diff)) / n
        dZ = 2.0 * diff / n
    elif head == "xent":
        p = expit(Z)
        pc = np.clip(p, _PROB_EPS, 1.0 - _PROB_EPS)
        loss = float(-np.sum(Y * np.log(pc) + (1.0 - Y) * np.log1p(-pc))) / n
        # Gradient of the clamped loss: zero where the clamp is active.
        dZ = np.where(p == pc, (p - Y) / n, 0.0)
    else:
        raise ValueError(f"unknown head {head!r}")

    if len(params) == 2:
        w, _ = params
        grads = [dZ.T @ X, dZ.sum(axis=0)]
        weight_mats = [0]
    else:
        w1, _, w2, _ = params
        dH = (dZ @ w2) * (1.0 - hidden * hidden)
        grads = [dH.T @ X, dH.sum(axis=0), dZ.T @ hidden, dZ.sum(axis=0)]
        weight_mats = [0, 2]

    if l2 > 0.0:
        for k in weight_mats:
            loss += l2 * float(np.sum(params[k] * params[k]))
            grads[k] = grads[k] + 2.0 * l2 * params[k]
    return loss, grads


def _fit_gd(X, Y, head, hidden_width, learning_rate, epochs, batch_size, l2, seed):
    rng = np.random.default_rng(seed)
    params = _init_params(rng, X.shape[1], Y.shape[1], hidden_width)
    n = X.shape[0]
    loss_curve = []
    for _ in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            idx = order[start : start + batch_size]
            _, grads = _loss_and_grad(params, X[idx], Y[idx], head, l2)
            params = [p - learning_rate * g for p, g in zip(params, grads)]
        loss_curve.append(_loss_and_grad(params, X, Y, head, l2)[0])
    return params, loss_curve


class _GradientDescentEstimator(BaseEstimator):
    """Shared fit/predict plumbing for the three predictor heads."""

    _head_tag = ""  # overridden: delta-vector | lambda | preference
    _loss = ""  # mse | xent

    def __init__(
        self,
        hidden_width=None,
        learning_rate=0.1,
        epochs=200,
        batch_size=32,
        l2=0.0,
        seed=0,
    ):
        self.hidden_width = hidden_width
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.l2 = l2
        self.seed = seed

    def _validate_targets(self, y, n_samples):
        raise NotImplementedError

    def fit(self, X, y):
        X = check_matrix(X)
        Y = self._validate_targets(y, X.shape[0])
        if X.shape[0] == 0:
            raise ValueError("cannot fit on an empty dataset")
        check_positive_int(self.epochs, "epochs")
        check_positive_int(self.batch_size, "batch_size")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.l2 < 0:
            raise ValueError("l2 must be nonnegative")
        if self.hidden_width is not None:
            check_positive_int(self.hidden_width, "hidden_width")
        params, loss_curve = _fit_gd(
            X,
            Y,
            self._loss,
            self.hidden_width,
            self.learning_rate,
            self.epochs,
            self.batch_size,
            self.l2,
            self.seed,
        )
        self.params_ = params
        self.loss_curve_ = loss_curve
        self.input_dim_ = X.shape[1]
        self.output_dim_ = Y.shape[1]
        return self

    def _decision(self, X):
        X = check_matrix(X)
        if X.shape[1] != self.input_dim_:
            raise ValueError(
                f"feature dimension mismatch: fitted with {self.input_dim_}, got {X.shape[1]}"
            )
        return _forward(self.params_, X)[0]


class MarginalRewardRegressor(RegressorMixin, _GradientDescentEstimator):
    """Predicts the marginal-reward vector (gain of samples 1..B) per query.

    ``fit(X, Y)`` takes feature rows and (n_queries, max_budget) target
    curves; trained by minibatch gradient descent on mean squared error.
    Deterministic for a fixed ``seed``.
    """

    _head_tag = "delta-vector"
    _loss = "mse"

    def _validate_targets(self, y, n_samples):
        Y = check_matrix(y, "y")
        if Y.shape[0] != n_samples:
            raise ValueError(f"X has {n_samples} rows but y has {Y.shape[0]}")
        return Y

    def predict(self, X):
        return self._decision(X)


class SuccessProbPredictor(_GradientDescentEstimator):
    """Predicts a per-sample success probability through a logistic output.

    Trained on soft labels in [0, 1] with cross-entropy; predictions are
    strictly inside (0, 1).
    """

    _head_tag = "lambda"
    _loss = "xent"

    def _validate_targets(self, y, n_samples):
        y = np.asarray(y, dtype=float)
        if y.ndim != 1 or y.shape[0] != n_samples:
            raise ValueError(f"y must be 1-D with {n_samples} entries, got shape {y.shape}")
        if np.any((y < 0) | (y > 1)) or not np.all(np.isfinite(y)):
            raise ValueError("targets must lie in [0, 1]")
        return y[:, None]

    def predict(self, X):
        p = expit(self._decision(X)[:, 0])
        return np.clip(p, _PRED_EPS, 1.0 - _PRED_EPS)


class PreferencePredictor(SuccessProbPredictor):
    """Predicts the probability that the strong decoder beats the weak one."""

    _head_tag = "preference"


_HEAD_CLASSES = {
    cls._head_tag: cls
    for cls in (MarginalRewardRegressor, SuccessProbPredictor, PreferencePredictor)
}


def predictor_to_dict(model) -> dict:
    """Versioned JSON-ready description of a fitted predictor."""
    if not hasattr(model, "params_"):
        raise ValueError("predictor is not fitted")
    return {
        "schema": PREDICTOR_SCHEMA,
        "head": model._head_tag,
        "architecture": "linear" if model.hidden_width is None else "mlp-1-hidden",
        "hidden_width": model.hidden_width,
        "input_dim": model.input_dim_,
        "output_dim": model.output_dim_,
        "hyperparameters": {
            "learning_rate": model.learning_rate,
            "epochs": model.epochs,
            "batch_size": model.batch_size,
            "l2": model.l2,
            "seed": model.seed,
        },
        "weights": [w.tolist() for w in model.params_],
    }


def predictor_from_dict(payload: dict):
    """Rebuild a fitted predictor from :func:`predictor_to_dict` output."""
    if payload.get("schema") != PREDICTOR_SCHEMA:
        raise ValueError(f"unsupported predictor schema: {payload.get('schema')!r}")
    head = payload["head"]
    if head not in _HEAD_CLASSES:
        raise ValueError(f"unknown predictor head {head!r}")
    model = _HEAD_CLASSES[head](hidden_width=payload["hidden_width"], **payload["hyperparameters"])
    model.params_ = [np.asarray(w, dtype=float) for w in payload["weights"]]
    model.input_dim_ = int(payload["input_dim"])
    model.output_dim_ = int(payload["output_dim"])
    model.loss_curve_ = []
    return model


def save_predictor(model, path) -> None:
    Path(path).write_text(json.dumps(predictor_to_dict(model)) + "\n")


def load_predictor(path):
    return predictor_from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# Noisy oracle: a stand-in predictor with controllable error.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NoiseSpec:
    """Perturbation applied to true success probabilities.

    ``kind`` is ``"gaussian-on-lambda"`` (additive on the probability,
    clamped back to [0, 1]) or ``"gaussian-on-logit"`` (additive on the log
    odds); ``sigma`` is the noise scale, and 0 means no perturbation.
    """

    kind: str = "gaussian-on-lambda"
    sigma: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian-on-lambda", "gaussian-on-logit"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")


def noisy_oracle(success_probs, noise: NoiseSpec, seed: int = 0) -> np.ndarray:
    """Perturb per-query success probabilities per ``noise``; seeded.

    ``sigma = 0`` returns the input values exactly.  Accepts a scalar or a
    1-D array and always returns an array.
    """
    probs = np.atleast_1d(np.asarray(success_probs, dtype=float))
    if np.any((probs < 0) | (probs > 1)):
        raise ValueError("success probabilities must lie in [0, 1]")
    if noise.sigma == 0.0:
        return probs.copy()
    rng = np.random.default_rng(seed)
    draws = rng.normal(0.0, noise.sigma, size=probs.shape)
    if noise.kind == "gaussian-on-lambda":
        return np.clip(probs + draws, 0.0, 1.0)
    clipped = np.clip(probs, 1e-9, 1.0 - 1e-9)
    return expit(logit(clipped) + draws)
