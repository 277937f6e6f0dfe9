"""sampler.py
Distance sampler submodule of domainrank. Draws the two empirical setwise
distance samples behind the activity prior:

  * active: cross-prediction over random folds of the labelled set,
  * background: segment-weighted draws from the unlabelled pool.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from warnings import warn

import numpy as np
import pandas as pd

from .dataset import LabelledSet, UnlabelledPool
from .exceptions import DomainError
from .fingerprints import batch_setwise_distances
from .resources.constants import (DEFAULT_BACKGROUND_SIZE, DEFAULT_FOLDS, DEFAULT_REPEATS, DEFAULT_SAMPLING_DELTA,
                                  SAMPLING_BIN_WIDTH)
from .resources.utils import bin_index, read_json, substream, write_json

logger = logging.getLogger(__name__)

SAMPLE_KINDS = ('active', 'background')


@dataclass
class DistanceSample:
    """Setwise distances with the parameters that produced them.

    `indices` holds the labelled (active) or pool (background) row each value
    belongs to.
    """
    values: np.ndarray
    kind: str
    seed: int
    params: dict = field(default_factory=dict)
    indices: np.ndarray = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.kind not in SAMPLE_KINDS:
            raise ValueError(f'Invalid sample kind: {self.kind}. Supported values: {SAMPLE_KINDS}')
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise DomainError('Distance samples must lie in [0, 1].')

    def __len__(self) -> int:
        return self.values.size

    def save(self, path, **metadata):
        """Writes a single-column `distance` CSV and a JSON sidecar next to it."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({'distance': self.values}).to_csv(path, index=False, float_format='%.17g',
                                                       lineterminator='\n')
        sidecar = {'kind': self.kind, 'seed': self.seed, 'params': self.params, 'count': len(self)}
        sidecar.update(metadata)
        write_json(path.with_suffix('.json'), sidecar)

    @classmethod
    def load(cls, path) -> 'DistanceSample':
        path = Path(path)
        sidecar = read_json(path.with_suffix('.json'))
        values = pd.read_csv(path)['distance'].to_numpy(dtype=float)
        return cls(values, sidecar['kind'], sidecar['seed'], sidecar.get('params', {}))


def sample_active_setwise(labelled: LabelledSet, v: int = DEFAULT_FOLDS, k: int = DEFAULT_REPEATS, seed: int = 0,
                          n_jobs: int = 1) -> DistanceSample:
    """Cross-prediction sample of active-to-active setwise distances.

    Each of the k repetitions shuffles the labelled set into v folds (sizes
    differ by at most one) and records, for every compound, its setwise
    distance to the union of the other folds. Output size is k * |L|.

    :param labelled: Labelled set, at least 2 * v compounds.
    :param v: Number of folds.
    :param k: Number of repetitions.
    :param seed: Seed of the fold shuffles.
    """
    n = len(labelled)
    if v < 2 or k < 1:
        raise DomainError(f'Cross-prediction needs v >= 2 and k >= 1, got v={v}, k={k}.')
    if n < 2 * v:
        raise DomainError(f'Cross-prediction with v={v} needs at least {2 * v} compounds, got {n}.')

    rng = substream(seed, 'active')
    values, indices = [], []
    for _ in range(k):
        order = rng.permutation(n)
        folds = [order[f::v] for f in range(v)]
        for f, fold in enumerate(folds):
            others = np.concatenate([folds[g] for g in range(v) if g != f])
            values.append(batch_setwise_distances(labelled.fingerprints[fold], labelled.fingerprints[others],
                                                  n_jobs=n_jobs))
            indices.append(fold)
    sample = DistanceSample(np.concatenate(values), 'active', seed, {'v': v, 'k': k},
                            np.concatenate(indices))
    logger.info('Drew %d active setwise distances (v=%d, k=%d)', len(sample), v, k)
    return sample


def segment_bin_counts(distances, segments, segment_count: int, delta: float,
                       bin_width: float = SAMPLING_BIN_WIDTH) -> np.ndarray:
    """Per-segment number of compounds whose distance falls in the bin holding delta."""
    in_bin = bin_index(distances, bin_width) == bin_index(delta, bin_width)
    return np.bincount(np.asarray(segments)[in_bin], minlength=segment_count)


def segment_weights(counts, inverse: bool = False) -> np.ndarray:
    """Segment selection probabilities, proportional to counts or to 1 / max(count, 1)."""
    counts = np.asarray(counts, dtype=float)
    if counts.sum() <= 0:
        raise DomainError('No compounds near the requested distance in any segment.')
    weights = 1.0 / np.maximum(counts, 1.0) if inverse else counts
    return weights / weights.sum()


def draw_segment_weighted(segments, segment_count: int, weights, m: int, rng: np.random.Generator) -> np.ndarray:
    """Draws m pool rows without replacement: the segment of each draw is chosen
    with the given probabilities, the row uniformly within the segment.

    Exhausted segments drop out and the remaining weights are renormalized. If
    every positively weighted segment runs out, the rest is drawn uniformly
    from whatever is left.
    """
    segments = np.asarray(segments)
    weights = np.asarray(weights, dtype=float)
    if m > segments.size:
        raise DomainError(f'Cannot draw {m} compounds from a pool of {segments.size}.')
    remaining = np.bincount(segments, minlength=segment_count)
    taken = np.zeros(segment_count, dtype=np.int64)
    need = m
    while need > 0:
        available = remaining > 0
        active = weights * available
        if active.sum() <= 0:
            warn(f'All weighted segments exhausted; drawing the last {need} compounds uniformly.')
            active = remaining.astype(float)
        probabilities = active / active.sum()
        draws = np.bincount(rng.choice(segment_count, size=need, p=probabilities), minlength=segment_count)
        granted = np.minimum(draws, remaining)
        taken += granted
        remaining -= granted
        need -= int(granted.sum())

    picked = []
    for segment in range(segment_count):
        if taken[segment]:
            members = np.flatnonzero(segments == segment)
            picked.append(rng.choice(members, size=taken[segment], replace=False))
    return np.concatenate(picked) if picked else np.empty(0, dtype=np.int64)


def sample_background(pool: UnlabelledPool, labelled: LabelledSet, delta_weight: float = DEFAULT_SAMPLING_DELTA,
                      m: int = DEFAULT_BACKGROUND_SIZE, seed: int = 0, bin_width: float = SAMPLING_BIN_WIDTH,
                      distances: np.ndarray = None, n_jobs: int = 1) -> DistanceSample:
    """Segment-weighted background sample of setwise distances to the labelled set.

    :param pool: Deduplicated unlabelled pool.
    :param labelled: Reference set.
    :param delta_weight: Distance whose bin counts n_{delta,i} weight the segments.
    :param m: Number of compounds drawn without replacement.
    :param seed: Seed of the draw.
    :param bin_width: Width of the distance bins.
    :param distances: Precomputed setwise distances of the pool to `labelled`.
    """
    if not 0.0 < delta_weight < 1.0:
        raise DomainError(f'delta_weight must lie in (0, 1), got {delta_weight}.')
    if m > len(pool):
        raise DomainError(f'Cannot draw {m} compounds from a pool of {len(pool)}.')
    if distances is None:
        distances = batch_setwise_distances(pool.fingerprints, labelled.fingerprints, n_jobs=n_jobs)

    counts = segment_bin_counts(distances, pool.segments, pool.segment_count, delta_weight, bin_width)
    weights = segment_weights(counts)
    rng = substream(seed, 'background')
    picked = draw_segment_weighted(pool.segments, pool.segment_count, weights, m, rng)
    logger.info('Drew %d background distances weighted by segment counts %s at delta=%.3f',
                picked.size, counts.tolist(), delta_weight)
    return DistanceSample(distances[picked], 'background', seed,
                          {'delta_weight': delta_weight, 'm': m, 'bin_width': bin_width,
                           'segment_counts': counts.tolist()}, picked)
