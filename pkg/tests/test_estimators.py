import numpy as np
import pytest

from ovae.adequacy import Metric
from ovae.errors import DimensionMismatchError, OvaeError
from ovae.estimators import RiskEstimate, is_estimate, mc_estimate, spearman, speedup

# OVAE-Total-Load EENS pair, plain sampling vs importance sampling
PLAIN_EENS = RiskEstimate(Metric.EENS, 4.50e4, 0.17e4, 100_000, 4155.0)
IS_EENS = RiskEstimate(Metric.EENS, 4.137e4, 0.040e4, 100_000, 4666.0)


class TestMonteCarlo:
    def test_constant_impacts(self):
        estimate = mc_estimate(np.ones(10))
        assert (estimate.value, estimate.std_error) == (1.0, 0.0)

    def test_hand_sample_statistics(self):
        estimate = mc_estimate(np.array([0.0, 0.0, 0.0, 8760.0]))
        assert estimate.value == pytest.approx(2190.0)
        assert estimate.std_error == pytest.approx(2190.0)
        assert estimate.n_samples == 4

    def test_bernoulli_rate(self):
        rng = np.random.default_rng(0)
        p = 0.03
        estimate = mc_estimate(8760.0 * (rng.random(100_000) < p))
        assert abs(estimate.value - 8760.0 * p) < 4 * estimate.std_error

    def test_needs_two_samples(self):
        with pytest.raises(OvaeError):
            mc_estimate(np.array([1.0]))

    def test_to_dict_uses_metric_name(self):
        assert mc_estimate(np.ones(3), Metric.EENS).to_dict()['metric'] == 'EENS'


class TestImportanceEstimate:
    def test_unit_weights_match_plain_estimate_exactly(self):
        impacts = np.random.default_rng(1).exponential(size=1000)
        plain = mc_estimate(impacts, Metric.EENS)
        weighted = is_estimate(impacts, np.ones_like(impacts), Metric.EENS)
        assert (weighted.value, weighted.std_error) == (plain.value, plain.std_error)

    def test_validates_weights(self):
        with pytest.raises(DimensionMismatchError):
            is_estimate(np.ones(3), np.ones(2))
        with pytest.raises(OvaeError):
            is_estimate(np.ones(2), np.array([1.0, -1.0]))


class TestSpeedup:
    def test_identical_estimates(self):
        assert speedup(PLAIN_EENS, PLAIN_EENS) == 1.0

    def test_reciprocal(self):
        assert speedup(IS_EENS, PLAIN_EENS) * speedup(PLAIN_EENS, IS_EENS) == pytest.approx(1.0, abs=1e-12)

    def test_halving_error_quadruples(self):
        halved = RiskEstimate(Metric.EENS, PLAIN_EENS.value, PLAIN_EENS.std_error / 2, 100_000, PLAIN_EENS.wall_time_s)
        assert speedup(halved, PLAIN_EENS) == pytest.approx(4.0)

    def test_published_pair(self):
        # Rounded standard errors put the exact ratio near 13.6
        assert speedup(IS_EENS, PLAIN_EENS) == pytest.approx(14.5, rel=0.15)

    def test_rejects_zero_estimate(self):
        zero = RiskEstimate(Metric.LOLE, 0.0, 0.0, 10, 1.0)
        with pytest.raises(OvaeError):
            speedup(zero, PLAIN_EENS)


class TestSpearman:
    def test_monotone(self):
        x = np.arange(10.0)
        assert spearman(x, x ** 3) == pytest.approx(1.0)
        assert spearman(x, -x) == pytest.approx(-1.0)

    def test_hand_ranks(self):
        assert spearman([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8)

    def test_invariant_under_monotone_transform(self):
        rng = np.random.default_rng(2)
        x, y = rng.normal(size=50), rng.normal(size=50)
        assert spearman(np.exp(x), y) == pytest.approx(spearman(x, y))

    def test_constant_input_is_undefined(self):
        assert np.isnan(spearman(np.ones(5), np.arange(5.0)))

    def test_length_mismatch(self):
        with pytest.raises(DimensionMismatchError):
            spearman([1, 2, 3], [1, 2])
