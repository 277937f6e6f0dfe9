"""distribution.py
Distribution submodule of domainrank. Models active-compound activities as the
equal-weight average of a moment-fitted normal and a maximum-likelihood
Student-t, and evaluates recentred and rescaled tail probabilities from it.
"""
import logging
from dataclasses import dataclass, field
from warnings import warn

import numpy as np
import pandas as pd
from scipy import stats
from scipy.optimize import brentq, minimize
from scipy.special import betainc, ndtr

from .exceptions import DegenerateDataError, DomainError
from .resources.constants import MIN_MIXTURE_VALUES, MIXTURE_STARTS, MIXTURE_WEIGHTS, NORMAL_IQR
from .resources.utils import substream

logger = logging.getLogger(__name__)

_LOG_DF_BOUNDS = (np.log(0.1), np.log(1e6))


def student_t_sf(t, df: float) -> np.ndarray:
    """P[T >= t] for a standard Student-t, via the regularized incomplete beta function."""
    t = np.asarray(t, dtype=float)
    with np.errstate(divide='ignore', invalid='ignore'):
        tail = 0.5 * betainc(0.5 * df, 0.5, df / (df + t * t))
    tail = np.where(np.isinf(t), 0.0, tail)
    return np.where(t > 0, tail, 1.0 - tail)


def student_t_cdf(t, df: float) -> np.ndarray:
    # symmetric about 0
    return student_t_sf(-np.asarray(t, dtype=float), df)


def _scalar(value):
    return float(value) if np.ndim(value) == 0 else value


@dataclass(frozen=True)
class MixtureDistribution:
    """MixtureDistribution

    0.5 * N(mu_n, sd_n) + 0.5 * t(df, loc, scale). With df None the Student-t
    component failed to fit and the distribution is the normal alone.
    """
    mu_n: float
    sd_n: float
    df: float = None
    loc: float = None
    scale: float = None
    flags: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.sd_n <= 0:
            raise DomainError(f'Normal component needs sd > 0, got {self.sd_n}.')
        if self.df is not None and (self.df <= 0 or self.scale is None or self.scale <= 0):
            raise DomainError(f'Student-t component needs df > 0 and scale > 0, got df={self.df}, '
                              f'scale={self.scale}.')

    @property
    def has_t(self) -> bool:
        return self.df is not None

    def _weights(self) -> tuple:
        return MIXTURE_WEIGHTS if self.has_t else (1.0, 0.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        w_n, w_t = self._weights()
        value = w_n * ndtr((x - self.mu_n) / self.sd_n)
        if self.has_t:
            value = value + w_t * student_t_cdf((x - self.loc) / self.scale, self.df)
        return _scalar(value)

    def sf(self, x):
        """1 - cdf, computed from the upper tails directly."""
        x = np.asarray(x, dtype=float)
        w_n, w_t = self._weights()
        value = w_n * ndtr((self.mu_n - x) / self.sd_n)
        if self.has_t:
            value = value + w_t * student_t_sf((x - self.loc) / self.scale, self.df)
        return _scalar(value)

    def normal_pdf(self, x):
        return stats.norm.pdf(x, self.mu_n, self.sd_n)

    def t_pdf(self, x):
        if not self.has_t:
            return np.zeros_like(np.asarray(x, dtype=float))
        return stats.t.pdf(x, self.df, self.loc, self.scale)

    def pdf(self, x):
        w_n, w_t = self._weights()
        return _scalar(w_n * self.normal_pdf(x) + w_t * self.t_pdf(x))

    def mean(self) -> float:
        if not self.has_t:
            return self.mu_n
        if self.df <= 1:
            return float('nan')
        w_n, w_t = MIXTURE_WEIGHTS
        return w_n * self.mu_n + w_t * self.loc

    def variance(self) -> float:
        """Mixture variance from the component moments; infinite when df <= 2."""
        if not self.has_t:
            return self.sd_n ** 2
        if self.df <= 2:
            return float('inf')
        w_n, w_t = MIXTURE_WEIGHTS
        t_variance = self.scale ** 2 * self.df / (self.df - 2.0)
        second = w_n * (self.sd_n ** 2 + self.mu_n ** 2) + w_t * (t_variance + self.loc ** 2)
        return second - self.mean() ** 2

    def quantile(self, q: float) -> float:
        lo = min(self.mu_n - 50 * self.sd_n, self.loc - 1e3 * self.scale if self.has_t else np.inf)
        hi = max(self.mu_n + 50 * self.sd_n, self.loc + 1e3 * self.scale if self.has_t else -np.inf)
        return float(brentq(lambda x: self.cdf(x) - q, lo, hi, xtol=1e-12))

    def standardization(self) -> tuple:
        """(center, spread, robust) mapping the mixture to zero location and unit scale.

        Mean and sd when the variance is finite; otherwise the median and the
        interquartile range divided by that of a standard normal (robust=True).
        """
        variance = self.variance()
        if np.isfinite(variance):
            return self.mean(), float(np.sqrt(variance)), False
        median = self.quantile(0.5)
        spread = (self.quantile(0.75) - self.quantile(0.25)) / NORMAL_IQR
        return median, spread, True

    def to_dict(self) -> dict:
        return {'normal': {'mu': self.mu_n, 'sd': self.sd_n},
                'student_t': None if not self.has_t else {'df': self.df, 'loc': self.loc, 'scale': self.scale},
                'weights': list(self._weights()), 'flags': list(self.flags)}

    @classmethod
    def from_dict(cls, data: dict) -> 'MixtureDistribution':
        t_part = data.get('student_t') or {}
        return cls(data['normal']['mu'], data['normal']['sd'], t_part.get('df'), t_part.get('loc'),
                   t_part.get('scale'), tuple(data.get('flags', ())))

    def __str__(self) -> str:
        t_part = f't(df={self.df:.4g}, loc={self.loc:.4g}, scale={self.scale:.4g})' if self.has_t else 'none'
        return f'0.5 N({self.mu_n:.4g}, {self.sd_n:.4g}) + 0.5 {t_part}'


def _fit_student_t(z: np.ndarray, n_starts: int, seed: int):
    """Maximum likelihood (df, loc, scale) of standardized values; None when every start fails."""
    def nll(theta):
        log_df, loc, log_scale = theta
        value = -np.sum(stats.t.logpdf(z, np.exp(log_df), loc, np.exp(log_scale)))
        return value if np.isfinite(value) else 1e300

    rng = substream(seed, 'student_t')
    median = float(np.median(z))
    iqr_scale = max(float(np.subtract(*np.percentile(z, [75, 25]))) / NORMAL_IQR, 1e-3)
    starts = [np.array([np.log(10.0), median, np.log(iqr_scale)])]
    for _ in range(n_starts - 1):
        starts.append(np.array([rng.uniform(0.0, np.log(100.0)), median + 0.1 * rng.standard_normal(),
                                np.log(iqr_scale) + rng.uniform(-1.0, 0.5)]))
    bounds = [_LOG_DF_BOUNDS, (None, None), (np.log(1e-6), np.log(1e3))]

    best = None
    for start in starts:
        result = minimize(nll, start, method='L-BFGS-B', bounds=bounds)
        if np.isfinite(result.fun) and result.fun < 1e300 and (best is None or result.fun < best.fun):
            best = result
    return best


def fit_mixture(activities, n_starts: int = MIXTURE_STARTS, seed: int = 0) -> MixtureDistribution:
    """Fits the normal by moments and the Student-t by multistart maximum likelihood.

    :param activities: At least 30 values with non-zero variance.
    :param n_starts: Number of local optimizations for the Student-t.
    :param seed: Seed of the random starts.
    """
    values = np.asarray(activities, dtype=float)
    if values.size < MIN_MIXTURE_VALUES:
        raise DomainError(f'Mixture fit needs at least {MIN_MIXTURE_VALUES} values, got {values.size}.')
    mean = float(values.mean())
    sd = float(values.std())
    if sd == 0.0:
        raise DegenerateDataError('Activities have zero variance.')

    best = _fit_student_t((values - mean) / sd, n_starts, seed)
    if best is None:
        warn('Student-t fit failed from every start; using the normal component alone.')
        return MixtureDistribution(mean, sd, flags=('t_fit_failed',))
    log_df, loc, log_scale = best.x
    flags = ()
    df = float(np.exp(log_df))
    if df <= 2:
        flags = ('heavy_tail_robust_standardization',)
        logger.warning('Student-t fit has df=%.3g <= 2; tail probabilities use median/IQR standardization', df)
    dist = MixtureDistribution(mean, sd, df, mean + sd * float(loc), sd * float(np.exp(log_scale)), flags)
    logger.info('Fitted activity mixture %s', dist)
    return dist


def tail_prob(dist: MixtureDistribution, mu: float, sigma, threshold):
    """P[Y >= threshold] for Y = mu + sigma * Z, Z the standardized mixture.

    Vectorized over mu, sigma and threshold.
    """
    sigma = np.asarray(sigma, dtype=float)
    if (sigma <= 0).any() or np.isnan(sigma).any():
        raise DomainError('tail_prob needs sigma > 0.')
    center, spread, _ = dist.standardization()
    z = (np.asarray(threshold, dtype=float) - np.asarray(mu, dtype=float)) / sigma
    return _scalar(np.clip(dist.sf(center + spread * z), 0.0, 1.0))


def gaussian_expected_count(activities, threshold: float) -> float:
    """Expected number of values >= threshold under the moment-fitted normal."""
    values = np.asarray(activities, dtype=float)
    return float(values.size * ndtr((values.mean() - threshold) / values.std()))


def density_table(dist: MixtureDistribution, grid) -> pd.DataFrame:
    grid = np.asarray(grid, dtype=float)
    return pd.DataFrame({'activity': grid, 'normal_pdf': dist.normal_pdf(grid), 't_pdf': dist.t_pdf(grid),
                         'mixture_pdf': dist.pdf(grid)})
