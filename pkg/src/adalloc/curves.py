"""Closed-form reward curves for best-of-k sampling.

A quality curve ``q[0..B]`` holds the expected best reward obtained by
spending ``b`` units of compute on one query; the marginal curve is its
first difference, so ``q[b] = q[0] + sum(deltas[:b])``.  For a query with
binary rewards and per-sample success probability ``p``, the quality curve
is ``q[b] = 1 - (1 - p)**b`` and the b-th unit contributes
``p * (1 - p)**(b - 1)``.
"""

from __future__ import annotations

import numpy as np

from .validation import check_curve, check_positive_int, check_probability

__all__ = [
    "success_curve",
    "analytic_marginals",
    "marginals_from_quality",
    "quality_from_marginals",
    "monotone_envelope",
]


def success_curve(success_prob: float, max_budget: int) -> np.ndarray:
    """Probability of at least one success in ``b`` attempts, for b = 0..max_budget.

    Returns an array of length ``max_budget + 1`` with entry ``b`` equal to
    ``1 - (1 - success_prob)**b``; entry 0 is exactly 0.
    """
    p = check_probability(success_prob, "success_prob")
    bmax = check_positive_int(max_budget, "max_budget")
    return 1.0 - (1.0 - p) ** np.arange(bmax + 1)


def analytic_marginals(success_prob: float, max_budget: int) -> np.ndarray:
    """Gain of the j-th sample for a binary-reward query, j = 1..max_budget.

    Entry ``j - 1`` equals ``success_prob * (1 - success_prob)**(j - 1)``,
    which is exactly the finite difference of :func:`success_curve`.
    """
    p = check_probability(success_prob, "success_prob")
    bmax = check_positive_int(max_budget, "max_budget")
    return p * (1.0 - p) ** np.arange(bmax)


def marginals_from_quality(quality) -> np.ndarray:
    """First differences of a quality curve (entry j-1 is q[j] - q[j-1])."""
    q = check_curve(quality, "quality", min_len=2)
    return np.diff(q)


def quality_from_marginals(deltas, zero_budget_reward: float = 0.0) -> np.ndarray:
    """Inverse of :func:`marginals_from_quality`: prefix sums plus the b=0 reward."""
    d = check_curve(deltas, "deltas", min_len=1)
    return zero_budget_reward + np.concatenate([[0.0], np.cumsum(d)])


def monotone_envelope(deltas) -> np.ndarray:
    """Nonincreasing marginal curve from the concave majorant of the quality curve.

    Builds the cumulative curve, replaces it by its least concave majorant
    over the integer grid (upper convex hull with both endpoints fixed), and
    differences it back.  Prefix sums of the result dominate the input's at
    every index, with equality at the last; nonincreasing input is returned
    unchanged up to float round-off.
    """
    d = check_curve(deltas, "deltas", min_len=1)
    q = np.concatenate([[0.0], np.cumsum(d)])
    n = q.shape[0]
    hull = [0]
    for i in range(1, n):
        # Drop hull points that fall on or below the chord to i.
        while len(hull) >= 2:
            i0, i1 = hull[-2], hull[-1]
            if (q[i1] - q[i0]) * (i - i0) <= (q[i] - q[i0]) * (i1 - i0):
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.interp(np.arange(n), hull, q[hull])
    return np.diff(env)
