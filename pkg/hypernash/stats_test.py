import math

import numpy as np
import pytest
from scipy import stats as sps

from hypernash import ValidationError
from hypernash.stats import ks_distance, median, normal_cdf, poisson_chi_square, poisson_fit, summarize, two_sample_ks
from hypernash.streams import stream


def test_normal_cdf() -> None:
    assert normal_cdf(0.0) == 0.5
    assert normal_cdf(40.0) == 1.0
    assert normal_cdf(1.96) == pytest.approx(0.9750, abs=1e-4)
    xs = np.linspace(-8, 8, 321)
    values = normal_cdf(xs)
    assert np.all(np.diff(values) >= 0)
    assert np.allclose(values + normal_cdf(-xs), 1.0, atol=1e-7)


def test_ks_distance_small_cases() -> None:
    assert ks_distance([0.0], normal_cdf) == pytest.approx(0.5)
    assert ks_distance([3.0] * 50, lambda x: np.full_like(x, 0.5)) == pytest.approx(0.5)
    with pytest.raises(ValidationError):
        ks_distance([], normal_cdf)


def test_ks_distance_at_quantiles() -> None:
    k = 99
    samples = sps.norm.ppf(np.arange(1, k + 1) / (k + 1))
    assert ks_distance(samples, normal_cdf) <= 1 / (k + 1) + 1e-9


def test_ks_distance_of_normal_samples() -> None:
    samples = stream(1, 'test-normal').standard_normal(10_000)
    assert ks_distance(samples, normal_cdf) < 0.03
    assert ks_distance(samples + 1.0, normal_cdf) > 0.3


def test_two_sample_ks() -> None:
    gen = stream(2, 'test-two-sample')
    a, b = gen.standard_normal(5000), gen.standard_normal(5000)
    assert two_sample_ks(a, b) < 0.05
    assert two_sample_ks(a, b + 2) > 0.5
    with pytest.raises(ValidationError):
        two_sample_ks([], b)


def test_poisson_chi_square_exact_proportions() -> None:
    law = sps.poisson(1.0)
    total = 100_000
    counts = []
    for j in range(4):
        counts += [j] * round(law.pmf(j) * total)
    counts += [6] * (total - len(counts))
    assert poisson_chi_square(counts, 1.0) < 0.01


def test_poisson_chi_square_gross_misfit() -> None:
    assert poisson_chi_square([0] * 1000, 1.0) > 100


def test_poisson_fit_merges_small_bins() -> None:
    fit = poisson_fit([0, 1, 1, 2, 0, 0, 1] * 10, 1.0)
    assert min(fit.expected) >= 5
    assert sum(fit.observed) == 70
    assert fit.dof == len(fit.expected) - 1
    # 70 * P(3) is under 5, so {3} and {>= 4} share a bin
    assert len(fit.expected) == 4
    assert fit.observed[-1] == 0


def test_poisson_fit_errors() -> None:
    with pytest.raises(ValidationError):
        poisson_fit([], 1.0)
    with pytest.raises(ValidationError):
        poisson_fit([0, 1], 1.0)
    with pytest.raises(ValidationError):
        poisson_fit([0, 1, 2] * 10, 0.0)


def test_poisson_fit_is_calibrated() -> None:
    passes = 0
    for rep in range(100):
        counts = stream(rep, 'test-poisson').poisson(1.0, 2000)
        fit = poisson_fit(counts, 1.0)
        passes += fit.statistic < fit.critical(0.999)
    assert passes >= 97


def test_summarize() -> None:
    s = summarize([1, 2, 3, 4])
    assert s.count == 4
    assert s.mean == 2.5
    assert s.variance == pytest.approx(5 / 3)
    assert s.se == pytest.approx(math.sqrt(5 / 12))
    assert (s.low, s.high) == pytest.approx((2.5 - 4 * s.se, 2.5 + 4 * s.se))
    assert s.contains(2.5)
    assert s.ks is None
    assert s.chi_square is None


def test_summarize_constant_sample() -> None:
    s = summarize([7.0] * 10, cdf=lambda x: np.where(x < 7, 0.0, 0.5))
    assert s.variance == 0.0
    assert s.low == s.high == 7.0
    assert s.ks == pytest.approx(0.5)


def test_summarize_is_order_independent() -> None:
    values = list(stream(3, 'test-order').standard_normal(1000) * 1e6)
    assert summarize(values) == summarize(values[::-1])


def test_summarize_rejects_empty() -> None:
    with pytest.raises(ValidationError):
        summarize([])


def test_median() -> None:
    assert median([3, 1, 2]) == 2.0
    assert median([4, 1, 2, 3]) == 2.5
    assert median([]) is None
