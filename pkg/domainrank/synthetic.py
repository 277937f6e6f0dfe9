"""synthetic.py
Synthetic submodule of domainrank. Generates fingerprint landscapes whose true
activities are known, screens part of them with a reporting cutoff to get a
selection-biased labelled set and keeps the rest as the unlabelled pool.

Landscape kinds:
  smooth     activity = 4 * (fraction of ones in the first 16 bits) + noise
  clustered  activity = 4 * (member of a planted cluster) + noise
  noise      activity ~ N(0, 1), independent of the fingerprint
"""
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .dataset import LabelledSet, UnlabelledPool, write_labelled, write_unlabelled
from .exceptions import DomainError
from .fingerprints import batch_setwise_distances, row_keys
from .resources.constants import DEFAULT_FINGERPRINT_LENGTH, LANDSCAPE_KINDS
from .resources.utils import bin_index, substream, write_json

logger = logging.getLogger(__name__)

SMOOTH_BITS = 16
LANDSCAPE_LIFT = 4.0


@dataclass(frozen=True)
class LandscapeSpec:
    """LandscapeSpec

    @:arg p                 int: Fingerprint length.
    @:arg kind              str: 'smooth', 'clustered' or 'noise'.
    @:arg active_fraction   float: Share of screened compounds above the reporting cutoff.
    @:arg noise_sd          float: Measurement noise of the smooth and clustered kinds.
    @:arg seed              int
    @:arg bit_density       float: Probability of a set bit in random fingerprints.
    @:arg n_clusters        int: Planted cluster centres (clustered kind).
    @:arg cluster_fraction  float: Share of compounds drawn around a centre.
    @:arg flip_prob         float: Bit flip probability of cluster members.
    @:arg segment_count     int: Number of pool segments.
    @:arg cutoff            float or None: Explicit reporting cutoff, overrides active_fraction.
    """
    p: int = DEFAULT_FINGERPRINT_LENGTH
    kind: str = 'clustered'
    active_fraction: float = 0.01
    noise_sd: float = 0.1
    seed: int = 0
    bit_density: float = 0.25
    n_clusters: int = 8
    cluster_fraction: float = 0.01
    flip_prob: float = 0.05
    segment_count: int = 10
    cutoff: float = None

    def __post_init__(self):
        if self.kind not in LANDSCAPE_KINDS:
            raise DomainError(f'Invalid landscape kind: {self.kind}. Supported values: {LANDSCAPE_KINDS}')
        if self.p % 8 or self.p < SMOOTH_BITS:
            raise DomainError(f'Synthetic fingerprints need p >= {SMOOTH_BITS}, a multiple of 8; got {self.p}.')
        if not 0.0 < self.active_fraction <= 1.0:
            raise DomainError(f'active_fraction must lie in (0, 1], got {self.active_fraction}.')


@dataclass
class SyntheticData:
    """Generated compounds with their ground truth.

    truth has one row per compound: id, fingerprint, activity, active,
    member, role ('labelled', 'screened_inactive' or 'pool').
    """
    spec: LandscapeSpec
    labelled: LabelledSet
    pool: UnlabelledPool
    truth: pd.DataFrame
    cutoff: float

    @property
    def n_screened(self) -> int:
        return int((self.truth['role'] != 'pool').sum())

    def pool_actives(self) -> set:
        rows = self.truth[(self.truth['role'] == 'pool') & self.truth['active']]
        return set(rows['id'].tolist()) & set(self.pool.ids)


def _random_bits(rng: np.random.Generator, n: int, p: int, density: float) -> np.ndarray:
    return (rng.random((n, p)) < density).astype(np.uint8)


def _landscape(spec: LandscapeSpec, n: int) -> tuple:
    """(bits, activities, member flags) for n compounds."""
    rng = substream(spec.seed, 'landscape')
    noise = substream(spec.seed, 'noise').standard_normal(n)
    bits = _random_bits(rng, n, spec.p, spec.bit_density)
    member = np.zeros(n, dtype=bool)

    if spec.kind == 'clustered':
        centres = _random_bits(rng, spec.n_clusters, spec.p, spec.bit_density)
        member = rng.random(n) < spec.cluster_fraction
        assignment = rng.integers(0, spec.n_clusters, size=n)
        flips = (rng.random((n, spec.p)) < spec.flip_prob).astype(np.uint8)
        bits[member] = centres[assignment[member]] ^ flips[member]
        activities = LANDSCAPE_LIFT * member + spec.noise_sd * noise
    elif spec.kind == 'smooth':
        activities = LANDSCAPE_LIFT * bits[:, :SMOOTH_BITS].mean(axis=1) + spec.noise_sd * noise
    else:
        activities = noise
    return bits, activities, member


def generate(spec: LandscapeSpec, n_labelled_pool: int, n_unlabelled: int) -> SyntheticData:
    """Generates n_labelled_pool screened and n_unlabelled unscreened compounds.

    Screened compounds at or above the cutoff form the labelled set (with
    screened_count = n_labelled_pool); screened compounds below it are
    unobserved. Unscreened compounds whose fingerprint equals a labelled one
    are dropped; the rest form the pool, segmented by deciles of their
    distance to the labelled set.
    """
    if n_labelled_pool <= 0 or n_unlabelled <= 0:
        raise DomainError(f'Synthetic sizes must be positive, got {n_labelled_pool} and {n_unlabelled}.')
    n = n_labelled_pool + n_unlabelled
    bits, activities, member = _landscape(spec, n)
    packed = np.packbits(bits, axis=1)
    ids = np.array([f'cmp{i:07d}' for i in range(n)], dtype=object)

    screened = np.arange(n) < n_labelled_pool
    if spec.cutoff is not None:
        cutoff = float(spec.cutoff)
    else:
        cutoff = float(np.quantile(activities[screened], 1.0 - spec.active_fraction))
    active = activities >= cutoff
    selected = screened & active
    if not selected.any():
        raise DomainError(f'No screened compound reaches the cutoff {cutoff:.4g}; the labelled set would be empty.')

    labelled = LabelledSet(ids[selected], packed[selected], activities[selected],
                           l_min=cutoff if np.isfinite(cutoff) else -np.inf, screened_count=n_labelled_pool)

    labelled_keys = set(row_keys(labelled.fingerprints))
    candidates = np.flatnonzero(~screened)
    keep = np.array([key not in labelled_keys for key in row_keys(packed[candidates])], dtype=bool)
    pool_rows = candidates[keep]
    distances = batch_setwise_distances(packed[pool_rows], labelled.fingerprints)
    ranks = np.empty(pool_rows.size, dtype=np.int64)
    ranks[np.argsort(distances, kind='stable')] = np.arange(pool_rows.size)
    segments = ranks * spec.segment_count // max(pool_rows.size, 1)
    pool = UnlabelledPool(ids[pool_rows], packed[pool_rows], segments, spec.segment_count,
                          n_removed=int((~keep).sum()))

    role = np.where(selected, 'labelled', np.where(screened, 'screened_inactive', 'pool'))
    truth = pd.DataFrame({'id': ids, 'fingerprint': [row.tobytes().hex() for row in packed],
                          'activity': activities, 'active': active, 'member': member, 'role': role})
    logger.info('Generated %s landscape: %d labelled of %d screened, pool of %d (%d active), cutoff %.4g',
                spec.kind, len(labelled), n_labelled_pool, len(pool), int(active[pool_rows].sum()), cutoff)
    return SyntheticData(spec, labelled, pool, truth, cutoff)


def activity_oracle(data: SyntheticData, bin_width: float = 0.05) -> pd.DataFrame:
    """Exact fraction of active pool compounds per bin of distance to the labelled set."""
    distances = batch_setwise_distances(data.pool.fingerprints, data.labelled.fingerprints)
    active = data.truth.set_index('id').loc[data.pool.ids, 'active'].to_numpy(dtype=bool)
    bins = bin_index(distances, bin_width)
    frame = pd.DataFrame({'bin': bins, 'active': active})
    table = frame.groupby('bin')['active'].agg(['count', 'mean']).reset_index()
    table['delta'] = (table['bin'] + 0.5) * bin_width
    return table.rename(columns={'mean': 'fraction_active'})[['delta', 'count', 'fraction_active']]


def write_synthetic(data: SyntheticData, directory) -> dict:
    """Writes labelled.csv, unlabelled/pool_XXX.csv, truth.csv and synthetic.json.

    :return: dict with the 'labelled', 'unlabelled' (list) and 'truth' paths.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    labelled_path = directory / 'labelled.csv'
    write_labelled(data.labelled, labelled_path)
    pool_paths = write_unlabelled(data.pool, directory / 'unlabelled')
    truth_path = directory / 'truth.csv'
    data.truth.to_csv(truth_path, index=False, float_format='%.17g', lineterminator='\n')
    write_json(directory / 'synthetic.json', {'spec': asdict(data.spec), 'cutoff': data.cutoff,
                                              'n_labelled': len(data.labelled), 'n_screened': data.n_screened,
                                              'n_pool': len(data.pool), 'n_removed': data.pool.n_removed})
    return {'labelled': labelled_path, 'unlabelled': pool_paths, 'truth': truth_path}
