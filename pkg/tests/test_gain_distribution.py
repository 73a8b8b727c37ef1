import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from models.gain_distribution import (
    ColluderMode,
    ColluderModel,
    CustomGain,
    EmpiricalGain,
    ExponentialGain,
    GammaGain,
    MaxOfIndependent,
    MaxOrderStatistic,
    max_law,
)


def test_exponential_rejects_nonpositive_mean():
    with pytest.raises(ValueError, match="positive"):
        ExponentialGain(0.0)


@pytest.mark.parametrize("K", [1, 2, 5, 20])
def test_max_of_iid_exponentials_has_harmonic_mean(K):
    law = MaxOrderStatistic(ExponentialGain(1.0), K)
    harmonic = sum(1.0 / k for k in range(1, K + 1))
    assert law.mean() == pytest.approx(harmonic, rel=1e-6)


def test_max_order_statistic_cdf_is_power_of_base():
    law = MaxOrderStatistic(ExponentialGain(2.0), 4)
    x = np.array([0.1, 1.0, 3.0, 10.0])
    np.testing.assert_allclose(law.cdf(x), (1.0 - np.exp(-x / 2.0)) ** 4, rtol=1e-12)
    np.testing.assert_allclose(law.sf(x), 1.0 - (1.0 - np.exp(-x / 2.0)) ** 4, rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(u=st.floats(min_value=1e-6, max_value=1.0 - 1e-6), K=st.integers(min_value=1, max_value=50))
def test_max_order_statistic_quantile_inverts_cdf(u, K):
    law = MaxOrderStatistic(ExponentialGain(1.0), K)
    assert float(law.cdf(law.ppf(u))) == pytest.approx(u, rel=1e-8, abs=1e-12)


def test_max_law_picks_order_statistic_for_iid_receivers():
    law = max_law([ExponentialGain(1.0)] * 3)
    assert isinstance(law, MaxOrderStatistic)
    assert law.K == 3


def test_max_of_independent_laws_multiplies_cdfs():
    laws = (ExponentialGain(1.0), ExponentialGain(3.0))
    law = max_law(laws)
    assert isinstance(law, MaxOfIndependent)
    x = np.array([0.5, 2.0, 7.0])
    expected = (1.0 - np.exp(-x)) * (1.0 - np.exp(-x / 3.0))
    np.testing.assert_allclose(law.cdf(x), expected, rtol=1e-12)
    for u in (0.1, 0.5, 0.99):
        assert float(law.cdf(law.ppf(u))) == pytest.approx(u, rel=1e-7)


def test_max_of_independent_mean_matches_inclusion_exclusion():
    # E[max(X, Y)] = a + b - ab / (a + b) for independent exponentials
    law = MaxOfIndependent((ExponentialGain(1.0), ExponentialGain(3.0)))
    assert law.mean() == pytest.approx(1.0 + 3.0 - 3.0 / 4.0, rel=1e-6)


def test_empirical_law_steps_and_strict_mass():
    law = EmpiricalGain([0.5, 1.0, 1.0, 2.0])
    assert float(law.cdf(1.0)) == pytest.approx(0.75)
    assert float(law.mass_below(1.0)) == pytest.approx(0.25)
    values, weights = law.atoms()
    np.testing.assert_allclose(values, [0.5, 1.0, 2.0])
    np.testing.assert_allclose(weights, [0.25, 0.5, 0.25])
    assert law.mean() == pytest.approx(1.125)


def test_empirical_laws_compare_by_content():
    assert EmpiricalGain([2.0, 1.0]) == EmpiricalGain([1.0, 2.0])
    assert hash(EmpiricalGain([2.0, 1.0])) == hash(EmpiricalGain([1.0, 2.0]))
    assert EmpiricalGain([1.0]) != EmpiricalGain([1.5])


@pytest.mark.parametrize("samples", [[], [-1.0, 2.0], [1.0, math.inf]])
def test_empirical_law_rejects_bad_samples(samples):
    with pytest.raises(ValueError):
        EmpiricalGain(samples)


def test_noncolluding_eavesdroppers_reduce_to_maximum():
    model = ColluderModel(ColluderMode.NONCOLLUDING, ExponentialGain(1.0), M=3)
    assert model.law == MaxOrderStatistic(ExponentialGain(1.0), 3)


def test_colluding_exponential_eavesdroppers_sum_to_gamma():
    model = ColluderModel(ColluderMode.COLLUDING, ExponentialGain(2.0), M=4)
    assert model.law == GammaGain(shape=4.0, scale=2.0)
    assert model.law.mean() == pytest.approx(8.0)


def test_colluding_sampled_eavesdroppers_are_convolved_by_sampling():
    base = EmpiricalGain([1.0, 3.0])
    model = ColluderModel(ColluderMode.COLLUDING, base, M=2, convolution_samples=20_000, seed=3)
    law = model.law
    assert isinstance(law, EmpiricalGain)
    assert set(np.unique(law.samples)) <= {2.0, 4.0, 6.0}
    assert law.mean() == pytest.approx(4.0, rel=0.05)


def test_single_mode_requires_one_eavesdropper():
    with pytest.raises(ValueError, match="M = 1"):
        ColluderModel(ColluderMode.SINGLE, ExponentialGain(1.0), M=2)


@pytest.fixture
def custom_exponential() -> CustomGain:
    return CustomGain(density=lambda x: np.exp(-x), distribution=lambda x: -np.expm1(-x), name="unit-exp")


def test_custom_law_solves_quantiles_from_its_cdf(custom_exponential):
    levels = np.array([0.01, 0.25, 0.5, 0.9, 0.999])
    np.testing.assert_allclose(custom_exponential.ppf(levels), ExponentialGain(1.0).ppf(levels), rtol=1e-9)
    assert custom_exponential.ppf(0.0) == 0.0
    assert custom_exponential.ppf(1.0) == math.inf


def test_custom_law_integrates_its_mean(custom_exponential):
    assert custom_exponential.mean() == pytest.approx(1.0, rel=1e-6)
    assert CustomGain(custom_exponential.density, custom_exponential.distribution, mean_value=2.5).mean() == 2.5


def test_custom_law_has_no_mass_below_zero(custom_exponential):
    assert float(custom_exponential.cdf(-1.0)) == 0.0
    assert float(custom_exponential.pdf(-1.0)) == 0.0
    assert custom_exponential.to_dict() == {"kind": "custom", "name": "unit-exp"}
