"""Statistical machinery shared by the Monte Carlo experiments.

Seeded counter-based RNG substreams, a few samplers, and the small set of
goodness-of-fit / uniformity tests the experiment suites need.  This is not a
general statistics library.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

__all__ = [
    "RngStream",
    "TestReport",
    "binomial_interval",
    "chi_square_gof",
    "direction_uniformity",
    "normal_sample",
    "two_proportion_z",
]


@dataclass(frozen=True)
class RngStream:
    """Addressable random stream: identical (seed, stream_id) -> identical draws.

    Backed by the counter-based Philox generator keyed with the pair, so trial
    k of an experiment can be opened directly without drawing through trials
    0..k-1.  Streams are value-like; make one per concurrent trial.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class TestReport:
    """Outcome of a significance test at a stated level."""

    statistic: float
    p_value: float
    alpha: float

    @property
    def passed(self) -> bool:
        return self.p_value >= self.alpha


def normal_sample(stream: RngStream, mean: float, std: float, size=None):
    """Normal draws from the given stream; deterministic per (seed, stream_id)."""
    if std < 0:
        raise ValueError("std must be nonnegative")
    if std == 0:
        return mean if size is None else np.full(size, float(mean))
    return stream.generator().normal(mean, std, size)


def chi_square_gof(observed, expected_probs, alpha: float = 0.001) -> TestReport:
    """Pearson chi-square test of observed counts against expected cell probabilities.

    Cells with expected count < 5 are merged into their neighbor (smallest
    expected first) before computing the statistic; df = cells - 1.
    """
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(expected_probs, dtype=float)
    if obs.size == 0 or obs.size != probs.size:
        raise ValueError("observed and expected_probs must be same nonempty length")
    n = obs.sum()
    if n <= 0:
        raise ValueError("no observations")
    exp = probs / probs.sum() * n

    # merge sparse cells until every expected count is >= 5
    obs, exp = obs.copy(), exp.copy()
    while exp.size > 1 and exp.min() < 5.0:
        i = int(np.argmin(exp))
        j = i + 1 if i + 1 < exp.size else i - 1
        exp[j] += exp[i]
        obs[j] += obs[i]
        exp = np.delete(exp, i)
        obs = np.delete(obs, i)
    if exp.size < 2:
        raise ValueError("too few occupied cells for a chi-square test")

    statistic = float(((obs - exp) ** 2 / exp).sum())
    df = exp.size - 1
    p_value = float(sps.chi2.sf(statistic, df))
    return TestReport(statistic=statistic, p_value=p_value, alpha=alpha)


def binomial_interval(successes: int, trials: int, confidence: float = 0.99):
    """Normal-approximation confidence interval for a binomial proportion.

    Uses the Wald form p̂ ± z·sqrt(p̂(1−p̂)/n), clipped to [0, 1]; no continuity
    correction (adequate for the >= 10^3-trial experiments this backs).
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    z = sps.norm.ppf(0.5 + confidence / 2.0)
    half = z * np.sqrt(p * (1.0 - p) / trials)
    return (max(0.0, p - half), min(1.0, p + half))


def two_proportion_z(k1: int, n1: int, k2: int, n2: int, alpha: float = 0.0027) -> TestReport:
    """Two-sample proportion z-test (pooled); default alpha is the 3-sigma level."""
    p1, p2 = k1 / n1, k2 / n2
    pool = (k1 + k2) / (n1 + n2)
    se = np.sqrt(pool * (1.0 - pool) * (1.0 / n1 + 1.0 / n2))
    z = 0.0 if se == 0 else (p1 - p2) / se
    p_value = float(2.0 * sps.norm.sf(abs(z)))
    return TestReport(statistic=float(z), p_value=p_value, alpha=alpha)


def direction_uniformity(samples, alpha: float = 0.01) -> TestReport:
    """Rayleigh resultant-length test of directions on S^1 or S^2 against uniformity.

    ``samples`` is (n, d) with d in {2, 3}; rows are normalized internally.
    The statistic is d·n·|mean direction|^2, asymptotically chi-square(d) under
    uniformity.  Note this is a first-moment test: antipodally balanced data
    (resultant ~ 0) passes by construction.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] not in (2, 3):
        raise ValueError("samples must be (n, 2) or (n, 3)")
    if x.shape[0] < 100:
        raise ValueError("need at least 100 samples")
    norms = np.linalg.norm(x, axis=1)
    good = norms > 0
    u = x[good] / norms[good, None]
    n, d = u.shape
    rbar = np.linalg.norm(u.mean(axis=0))
    statistic = float(d * n * rbar**2)
    p_value = float(sps.chi2.sf(statistic, d))
    return TestReport(statistic=statistic, p_value=p_value, alpha=alpha)
