"""Summary statistics and goodness-of-fit measures used by the experiments."""

import dataclasses
import math
from collections.abc import Callable, Sequence

import numpy as np
from scipy import special
from scipy import stats as sps

from . import ValidationError

MIN_EXPECTED = 5.0
POISSON_BINS = 4  # {0, 1, 2, 3} plus the tail {>= 4}

type Cdf = Callable[[np.ndarray], np.ndarray]


def normal_cdf(x: float | np.ndarray) -> float | np.ndarray:
    return special.ndtr(x)


def ks_distance(samples: Sequence[float], cdf: Cdf) -> float:
    """Kolmogorov distance between the empirical law of samples and cdf.

    Both one-sided gaps are taken at every sample point, so the step of the
    empirical CDF is measured on either side.
    """
    xs = np.sort(np.asarray(samples, dtype=np.float64))
    k = xs.size
    if k == 0:
        raise ValidationError('ks_distance needs at least one sample')
    f = np.asarray(cdf(xs), dtype=np.float64)
    i = np.arange(1, k + 1)
    return float(max(np.max(i / k - f), np.max(f - (i - 1) / k)))


def two_sample_ks(a: Sequence[float], b: Sequence[float]) -> float:
    if len(a) == 0 or len(b) == 0:
        raise ValidationError('two_sample_ks needs two nonempty samples')
    return float(sps.ks_2samp(a, b).statistic)


@dataclasses.dataclass(frozen=True)
class PoissonFit:
    statistic: float
    dof: int
    observed: tuple[int, ...]
    expected: tuple[float, ...]

    def critical(self, quantile: float = 0.999) -> float:
        return float(sps.chi2.ppf(quantile, self.dof))


def poisson_fit(counts: Sequence[int], lam: float) -> PoissonFit:
    """Chi-square fit of counts against Poisson(lam) on the bins {0,1,2,3,>=4}.

    Low bins with expected count under 5 are merged into the next bin up, then
    the top bin is merged downward until it reaches 5 as well.
    """
    if len(counts) == 0:
        raise ValidationError('poisson_fit needs at least one count')
    if not lam > 0:
        raise ValidationError(f'lambda must be positive, got {lam}')
    total = len(counts)
    law = sps.poisson(lam)
    probs = [float(law.pmf(j)) for j in range(POISSON_BINS)]
    probs.append(float(law.sf(POISSON_BINS - 1)))
    binned = np.minimum(np.asarray(counts, dtype=np.int64), POISSON_BINS)
    if binned.min() < 0:
        raise ValidationError('counts must be nonnegative')
    observed = np.bincount(binned, minlength=POISSON_BINS + 1).tolist()
    expected = [p * total for p in probs]

    obs, exp = [], []
    carry_o, carry_e = 0, 0.0
    for o, e in zip(observed, expected, strict=True):
        carry_o, carry_e = carry_o + o, carry_e + e
        if carry_e >= MIN_EXPECTED:
            obs.append(carry_o)
            exp.append(carry_e)
            carry_o, carry_e = 0, 0.0
    if carry_e > 0 or carry_o:
        if not exp:
            raise ValidationError(f'{total} counts are too few for a chi-square fit at lambda={lam}')
        obs[-1] += carry_o
        exp[-1] += carry_e
    if len(exp) < 2:
        raise ValidationError(f'chi-square fit at lambda={lam} with {total} counts leaves a single bin')

    statistic = math.fsum((o - e) ** 2 / e for o, e in zip(obs, exp, strict=True))
    return PoissonFit(statistic, len(exp) - 1, tuple(obs), tuple(exp))


def poisson_chi_square(counts: Sequence[int], lam: float) -> float:
    return poisson_fit(counts, lam).statistic


@dataclasses.dataclass(frozen=True)
class SummaryStats:
    count: int
    mean: float
    variance: float
    se: float
    low: float
    high: float
    ks: float | None = None
    chi_square: float | None = None

    def contains(self, x: float) -> bool:
        return self.low <= x <= self.high

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def summarize(values: Sequence[float], cdf: Cdf | None = None, poisson_lambda: float | None = None, width: float = 4.0) -> SummaryStats:
    """Mean, unbiased variance and a mean +- width*SE interval; the sum is compensated so order never matters."""
    k = len(values)
    if k == 0:
        raise ValidationError('cannot summarize an empty sample')
    xs = [float(x) for x in values]
    mean = math.fsum(xs) / k
    variance = math.fsum((x - mean) ** 2 for x in xs) / (k - 1) if k > 1 else 0.0
    se = math.sqrt(variance / k)
    return SummaryStats(
        count=k,
        mean=mean,
        variance=variance,
        se=se,
        low=mean - width * se,
        high=mean + width * se,
        ks=None if cdf is None else ks_distance(xs, cdf),
        chi_square=None if poisson_lambda is None else poisson_chi_square([int(x) for x in xs], poisson_lambda),
    )


def median(values: Sequence[float]) -> float | None:
    return float(np.median(values)) if len(values) else None
