"""covariance.py
Covariance submodule of domainrank. Estimates sigma(delta), the spread of the
activity difference of two actives at distance delta, from binned pairs:
sigma(delta) ** 2 is the mean squared difference in the bin, pooled to be
non-decreasing in delta.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import LabelledSet
from .exceptions import DegenerateDataError, DomainError
from .fingerprints import paired_distances, pairwise_distances
from .resources.constants import COVARIANCE_BIN_WIDTH, COVARIANCE_MAX_PAIRS, COVARIANCE_MIN_PAIRS
from .resources.utils import bin_index, pool_adjacent_violators, read_json, substream, write_json

logger = logging.getLogger(__name__)

_ROW_BLOCK = 512
_SAMPLE_CHUNK = 1000000


@dataclass
class PairBins:
    """Pair counts and summed squared activity differences per distance bin."""
    bin_width: float
    counts: np.ndarray
    sum_sq: np.ndarray
    exhaustive: bool = True

    @property
    def n_bins(self) -> int:
        return self.counts.size

    @property
    def bin_centers(self) -> np.ndarray:
        return (np.arange(self.n_bins) + 0.5) * self.bin_width

    @property
    def n_pairs(self) -> int:
        return int(self.counts.sum())


def _n_bins(bin_width: float) -> int:
    if not 0.0 < bin_width <= 1.0:
        raise DomainError(f'Bin width must lie in (0, 1], got {bin_width}.')
    return int(np.ceil(round(1.0 / bin_width, 9)))


def _bin_of(distances, bin_width: float, n_bins: int) -> np.ndarray:
    return np.minimum(bin_index(distances, bin_width), n_bins - 1)


def iter_pairs(labelled: LabelledSet, max_pairs: int = COVARIANCE_MAX_PAIRS, seed: int = 0):
    """Yields (distances, activity differences) chunks over distinct unordered pairs.

    All n (n - 1) / 2 pairs are enumerated when that is at most max_pairs,
    otherwise max_pairs pairs are drawn uniformly (with replacement).
    """
    n = len(labelled)
    fingerprints, activities = labelled.fingerprints, labelled.activities
    if n * (n - 1) // 2 <= max_pairs:
        for start in range(0, n - 1, _ROW_BLOCK):
            stop = min(start + _ROW_BLOCK, n)
            block = pairwise_distances(fingerprints[start:stop], fingerprints)
            rows, cols = np.nonzero(np.arange(n)[None, :] > np.arange(start, stop)[:, None])
            yield block[rows, cols], activities[start + rows] - activities[cols]
        return

    rng = substream(seed, 'pairs')
    remaining = int(max_pairs)
    while remaining > 0:
        size = min(remaining, _SAMPLE_CHUNK)
        first = rng.integers(0, n, size=size)
        second = rng.integers(0, n - 1, size=size)
        second += second >= first
        yield paired_distances(fingerprints[first], fingerprints[second]), activities[first] - activities[second]
        remaining -= size


def collect_pair_bins(labelled: LabelledSet, bin_width: float = COVARIANCE_BIN_WIDTH,
                      max_pairs: int = COVARIANCE_MAX_PAIRS, seed: int = 0) -> PairBins:
    """Bins distinct pairs of `labelled` by distance (half-open bins, the last one closed at 1)."""
    n = len(labelled)
    if n < 2:
        raise DomainError(f'Pair statistics need at least 2 compounds, got {n}.')
    n_bins = _n_bins(bin_width)
    counts = np.zeros(n_bins, dtype=np.int64)
    sum_sq = np.zeros(n_bins, dtype=float)
    for distances, differences in iter_pairs(labelled, max_pairs, seed):
        bins = _bin_of(distances, bin_width, n_bins)
        counts += np.bincount(bins, minlength=n_bins)
        sum_sq += np.bincount(bins, weights=differences ** 2, minlength=n_bins)
    exhaustive = n * (n - 1) // 2 <= max_pairs
    logger.info('Binned %d %s pairs into %d bins', counts.sum(), 'enumerated' if exhaustive else 'sampled', n_bins)
    return PairBins(bin_width, counts, sum_sq, exhaustive)


@dataclass
class SigmaCurve:
    """Per-bin sigma before and after monotone pooling, on the bins with enough pairs."""
    bin_centers: np.ndarray
    sigma_raw: np.ndarray
    sigma: np.ndarray
    counts: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __call__(self, delta):
        return sigma(self, delta)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for name, values in (('sigma_raw.csv', self.sigma_raw), ('sigma_pooled.csv', self.sigma)):
            pd.DataFrame({'delta': self.bin_centers, 'sigma': values, 'count': self.counts}).to_csv(
                directory / name, index=False, float_format='%.17g', lineterminator='\n')
        write_json(directory / 'sigma.json', self.metadata)

    @classmethod
    def load(cls, directory) -> 'SigmaCurve':
        directory = Path(directory)
        raw = pd.read_csv(directory / 'sigma_raw.csv')
        pooled = pd.read_csv(directory / 'sigma_pooled.csv')
        return cls(pooled['delta'].to_numpy(dtype=float), raw['sigma'].to_numpy(dtype=float),
                   pooled['sigma'].to_numpy(dtype=float), pooled['count'].to_numpy(dtype=np.int64),
                   read_json(directory / 'sigma.json'))

    def __repr__(self) -> str:
        return (f'SigmaCurve(bins={self.bin_centers.size}, range=[{self.bin_centers[0]:.3f}, '
                f'{self.bin_centers[-1]:.3f}], sigma=[{self.sigma[0]:.3g}, {self.sigma[-1]:.3g}])')


def fit_sigma_curve(bins: PairBins, min_pairs: int = COVARIANCE_MIN_PAIRS) -> SigmaCurve:
    """sigma = sqrt(mean squared difference) per bin with at least min_pairs pairs;
    the squared values are pooled (weighted by pair counts) to be non-decreasing.
    """
    keep = bins.counts >= min_pairs
    if not keep.any():
        raise DegenerateDataError(f'No distance bin holds {min_pairs} pairs (largest holds {bins.counts.max()}).')
    counts = bins.counts[keep]
    variance = bins.sum_sq[keep] / counts
    pooled = pool_adjacent_violators(variance, weights=counts, increasing=True)
    curve = SigmaCurve(bins.bin_centers[keep], np.sqrt(variance), np.sqrt(np.maximum(pooled, 0.0)), counts,
                       {'bin_width': bins.bin_width, 'min_pairs': min_pairs, 'n_pairs': bins.n_pairs,
                        'exhaustive': bins.exhaustive, 'dropped_bins': int((~keep).sum())})
    logger.info('Fitted %r', curve)
    return curve


def sigma(curve: SigmaCurve, delta):
    """Pooled sigma interpolated linearly between bin centers, constant beyond the ends."""
    values = np.asarray(delta, dtype=float)
    if np.isnan(values).any() or (values < 0).any() or (values > 1).any():
        raise DomainError('Distances passed to sigma must lie in [0, 1].')
    result = np.interp(values, curve.bin_centers, curve.sigma)
    return float(result) if result.ndim == 0 else result


def pairwise_distance_histogram(labelled: LabelledSet, bins: int = 50, max_pairs: int = COVARIANCE_MAX_PAIRS,
                                seed: int = 0) -> tuple:
    """Density-normalized histogram of distinct pairwise distances on [0, 1].

    :return: (density, bin edges)
    """
    if len(labelled) < 2:
        raise DomainError(f'Pair statistics need at least 2 compounds, got {len(labelled)}.')
    edges = np.linspace(0.0, 1.0, bins + 1)
    counts = np.zeros(bins, dtype=np.int64)
    for distances, _ in iter_pairs(labelled, max_pairs, seed):
        counts += np.histogram(distances, bins=edges)[0]
    density = counts / (counts.sum() * np.diff(edges))
    return density, edges
