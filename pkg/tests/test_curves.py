"""Closed-form curve math: success curves, marginals, concave envelope."""

import itertools

import numpy as np
import pytest

from adalloc.curves import (
    analytic_marginals,
    marginals_from_quality,
    monotone_envelope,
    quality_from_marginals,
    success_curve,
)


def enumerate_success_prob(num_attempts):
    """Fraction of equally likely {0,1}^b outcome sequences with a success."""
    hits = sum(
        any(seq) for seq in itertools.product((0, 1), repeat=num_attempts)
    )
    return hits / 2**num_attempts


class TestSuccessCurve:
    def test_zero_probability(self):
        np.testing.assert_array_equal(success_curve(0.0, 3), [0, 0, 0, 0])

    def test_certain_success(self):
        np.testing.assert_array_equal(success_curve(1.0, 2), [0, 1, 1])

    def test_half_probability(self):
        np.testing.assert_allclose(success_curve(0.5, 3), [0, 0.5, 0.75, 0.875])

    def test_half_probability_matches_sequence_enumeration(self):
        curve = success_curve(0.5, 6)
        for b in range(7):
            assert curve[b] == pytest.approx(enumerate_success_prob(b), abs=1e-12)

    @pytest.mark.parametrize("bad", [-0.1, 1.1, float("nan")])
    def test_invalid_probability(self, bad):
        with pytest.raises(ValueError):
            success_curve(bad, 3)

    def test_invalid_budget(self):
        with pytest.raises(ValueError):
            success_curve(0.5, 0)

    def test_nondecreasing(self):
        for lam in np.linspace(0, 1, 21):
            assert np.all(np.diff(success_curve(lam, 12)) >= -1e-15)


class TestAnalyticMarginals:
    def test_half(self):
        np.testing.assert_allclose(analytic_marginals(0.5, 3), [0.5, 0.25, 0.125])

    def test_zero(self):
        np.testing.assert_array_equal(analytic_marginals(0.0, 4), np.zeros(4))

    def test_one(self):
        np.testing.assert_array_equal(analytic_marginals(1.0, 4), [1, 0, 0, 0])

    def test_equals_finite_difference_of_success_curve(self):
        for lam in np.linspace(0, 1, 41):
            diff = np.diff(success_curve(lam, 16))
            np.testing.assert_allclose(analytic_marginals(lam, 16), diff, atol=1e-12)

    def test_nonincreasing(self):
        for lam in np.linspace(0, 1, 21):
            assert np.all(np.diff(analytic_marginals(lam, 12)) <= 1e-15)


class TestMarginalsFromQuality:
    def test_subtraction(self):
        np.testing.assert_allclose(marginals_from_quality([0, 0.5, 0.75]), [0.5, 0.25])

    def test_constant_curve(self):
        np.testing.assert_array_equal(marginals_from_quality([0.3, 0.3, 0.3]), [0, 0])

    def test_saturating_curve(self):
        np.testing.assert_array_equal(marginals_from_quality([0, 1, 1]), [1, 0])

    def test_too_short(self):
        with pytest.raises(ValueError):
            marginals_from_quality([0.4])

    def test_prefix_sum_identity(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            q = rng.normal(size=rng.integers(2, 12))
            deltas = marginals_from_quality(q)
            for b in range(q.shape[0]):
                assert deltas[:b].sum() == pytest.approx(q[b] - q[0], abs=1e-12)

    def test_roundtrip_with_quality_from_marginals(self):
        q = np.array([0.2, 0.5, 0.6, 0.9])
        np.testing.assert_allclose(
            quality_from_marginals(marginals_from_quality(q), zero_budget_reward=0.2), q
        )


class TestMonotoneEnvelope:
    def test_nonincreasing_input_is_fixed_point(self):
        d = np.array([0.5, 0.3, 0.3, 0.1, 0.0])
        np.testing.assert_allclose(monotone_envelope(d), d, atol=1e-12)

    def test_step_curve(self):
        # quality [0, 0, 1] has deltas [0, 1]; its concave majorant is the chord
        np.testing.assert_allclose(monotone_envelope([0.0, 1.0]), [0.5, 0.5])

    def test_already_concave(self):
        np.testing.assert_allclose(monotone_envelope([0.5, 0.25]), [0.5, 0.25])

    def test_output_nonincreasing_and_dominating(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            d = rng.normal(0.2, 0.5, size=rng.integers(1, 15))
            env = monotone_envelope(d)
            assert np.all(np.diff(env) <= 1e-10)
            prefix_in = np.cumsum(d)
            prefix_out = np.cumsum(env)
            assert np.all(prefix_out >= prefix_in - 1e-10)
            assert prefix_out[-1] == pytest.approx(prefix_in[-1], abs=1e-10)
