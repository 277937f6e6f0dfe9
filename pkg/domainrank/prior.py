"""prior.py
Activity prior submodule of domainrank. Estimates P[active | setwise distance]
as base_rate * (active distance density / background distance density), with
Gaussian kernel densities whose bandwidth is tuned so the curve reaches 1 at
distance 0, then projected onto non-increasing sequences.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from warnings import warn

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from .dataset import LabelledSet, UnlabelledPool
from .exceptions import ConfigError, DegenerateDataError, DomainError
from .fingerprints import batch_setwise_distances
from .resources.constants import (BASE_RATE_MODES, CALIBRATION_DELTA_COUNT, CALIBRATION_DELTA_MAX,
                                  CALIBRATION_REPEATS, DEFAULT_BACKGROUND_SIZE, DEFAULT_GRID_POINTS, GAMMA_LOWER,
                                  GAMMA_MAX_ITER, GAMMA_TOLERANCE, GAMMA_UPPER, MIN_BACKGROUND_DENSITY,
                                  SAMPLING_BIN_WIDTH)
from .resources.utils import derive_seed, pool_adjacent_violators, read_json, write_json
from .sampler import DistanceSample, sample_background

logger = logging.getLogger(__name__)

_GRID_CHUNK = 16
_RATE_EPS = 1e-12


def default_grid(points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 1.0, points)


def _values(samples) -> np.ndarray:
    values = samples.values if isinstance(samples, DistanceSample) else np.asarray(samples, dtype=float)
    values = np.ravel(values)
    if values.size == 0:
        raise DomainError('Kernel density estimation needs at least one sample.')
    return values


def kde_log_eval(samples, gamma: float, grid) -> np.ndarray:
    """Log of the Gaussian kernel density of `samples` at each grid point."""
    if not gamma > 0:
        raise DomainError(f'Bandwidth must be positive, got {gamma}.')
    values = _values(samples)
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    norm = np.log(values.size * gamma * np.sqrt(2.0 * np.pi))
    out = np.empty(grid.size, dtype=float)
    for start in range(0, grid.size, _GRID_CHUNK):
        z = (grid[start:start + _GRID_CHUNK, None] - values[None, :]) / gamma
        out[start:start + _GRID_CHUNK] = logsumexp(-0.5 * z * z, axis=1) - norm
    return out


def kde_eval(samples, gamma: float, grid) -> np.ndarray:
    """Gaussian kernel density (1 / (n gamma sqrt(2 pi))) sum exp(-(x - s)^2 / (2 gamma^2))."""
    return np.exp(kde_log_eval(samples, gamma, grid))


def silverman_bandwidth(samples) -> float:
    """Silverman's rule of thumb, 0.9 min(sd, IQR / 1.34) n^(-1/5), floored at GAMMA_LOWER."""
    values = _values(samples)
    sd = np.std(values, ddof=1) if values.size > 1 else 0.0
    iqr = np.subtract(*np.percentile(values, [75, 25]))
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    return float(max(0.9 * spread * values.size ** -0.2, GAMMA_LOWER))


def _log_ratio_at(active, background, gamma: float, grid) -> np.ndarray:
    return kde_log_eval(active, gamma, grid) - kde_log_eval(background, gamma, grid)


def estimate_base_rate(mode: str, labelled: LabelledSet, active_sample=None, background_sample=None,
                       gamma: float = None) -> float:
    """Overall fraction of screened compounds that are active.

    :param mode: 'counts' for n / n', 'limit' for the ratio of background to
        active distance density at distance 0.
    :param labelled: Labelled set; counts mode needs its screened_count.
    :param active_sample: Active distance sample (limit mode).
    :param background_sample: Background distance sample (limit mode).
    :param gamma: Bandwidth for limit mode; Silverman's rule on the pooled samples when None.
    """
    if mode not in BASE_RATE_MODES:
        raise ConfigError(f'Invalid base rate mode: {mode}. Supported values: {BASE_RATE_MODES}')
    if mode == 'counts':
        if labelled.screened_count is None:
            raise ConfigError('Base rate mode "counts" needs the screened compound count.', '/labelled/screened_count')
        if not 0 < len(labelled) < labelled.screened_count:
            raise DomainError(f'Counts base rate needs 0 < n < n\', got n={len(labelled)}, '
                              f'n\'={labelled.screened_count}.')
        return len(labelled) / labelled.screened_count

    if active_sample is None or background_sample is None:
        raise ConfigError('Base rate mode "limit" needs both the active and the background sample.')
    if gamma is None:
        gamma = silverman_bandwidth(np.concatenate([_values(active_sample), _values(background_sample)]))
    with np.errstate(over='ignore'):
        rate = float(np.exp(-_log_ratio_at(active_sample, background_sample, gamma, [0.0])[0]))
    if not _RATE_EPS <= rate <= 1.0 - _RATE_EPS:
        warn(f'Limit base rate {rate:.3g} outside (0, 1); clipped.')
        rate = float(np.clip(rate, _RATE_EPS, 1.0 - _RATE_EPS))
    logger.info('Limit-mode base rate %.5g at bandwidth %.4g', rate, gamma)
    return rate


@dataclass
class BandwidthCalibration:
    gamma: float
    residual: float
    converged: bool
    iterations: int


def calibrate_bandwidth(active_sample, background_sample, base_rate: float, lower: float = GAMMA_LOWER,
                        upper: float = GAMMA_UPPER, tolerance: float = GAMMA_TOLERANCE,
                        max_iter: int = GAMMA_MAX_ITER) -> BandwidthCalibration:
    """Binary search for the bandwidth at which base_rate * f(0) = 1.

    When the residual does not change sign over [lower, upper] the bandwidth
    minimizing |residual| on a log grid is returned (smallest on ties) and
    the result is flagged as not converged.
    """
    def residual(gamma):
        with np.errstate(over='ignore'):
            return base_rate * float(np.exp(_log_ratio_at(active_sample, background_sample, gamma, [0.0])[0])) - 1.0

    low_value, high_value = residual(lower), residual(upper)
    if low_value == 0.0:
        return BandwidthCalibration(lower, 0.0, True, 0)
    if np.sign(low_value) != np.sign(high_value):
        # bisect log(gamma); the bracket spans three decades
        low, high, iterations = np.log(lower), np.log(upper), 0
        while np.exp(high) - np.exp(low) > tolerance and iterations < max_iter:
            middle = 0.5 * (low + high)
            value = residual(np.exp(middle))
            if value == 0.0:
                low = high = middle
            elif np.sign(value) == np.sign(low_value):
                low = middle
            else:
                high = middle
            iterations += 1
        gamma = float(np.exp(0.5 * (low + high)))
        result = BandwidthCalibration(gamma, residual(gamma), True, iterations)
        logger.info('Calibrated bandwidth %.5f after %d bisection steps', gamma, iterations)
        return result

    scan = np.geomspace(lower, upper, max_iter + 1)
    scan[0], scan[-1] = lower, upper
    values = np.abs([residual(g) for g in scan])
    best = int(np.argmin(values))
    logger.warning('No bandwidth in [%g, %g] gives base_rate * f(0) = 1; using %.5f (|residual| %.3g)',
                   lower, upper, scan[best], values[best])
    return BandwidthCalibration(float(scan[best]), float(values[best]), False, scan.size)


class PriorCurve:
    """PriorCurve

    P[active | setwise distance] tabulated on a grid; linear interpolation
    between grid points, constant beyond the ends.
    @:arg grid          increasing array of distances in [0, 1].
    @:arg prob          non-increasing array of probabilities.
    @:arg gamma         float: KDE bandwidth.
    @:arg base_rate     float: Overall active rate.
    @:arg metadata      dict: Sample counts, flags, residual at distance 0.
    """
    def __init__(self, grid, prob, gamma: float, base_rate: float, metadata: dict = None):
        self.grid = np.asarray(grid, dtype=float)
        self.prob = np.asarray(prob, dtype=float)
        self.gamma = float(gamma)
        self.base_rate = float(base_rate)
        self.metadata = dict(metadata or {})
        if self.grid.ndim != 1 or self.grid.shape != self.prob.shape or self.grid.size < 2:
            raise DomainError('Prior grid and probabilities must be 1-d arrays of equal length >= 2.')
        if (np.diff(self.grid) <= 0).any() or self.grid[0] < 0 or self.grid[-1] > 1:
            raise DomainError('Prior grid must be strictly increasing within [0, 1].')
        if (np.diff(self.prob) > 0).any() or self.prob.min() < 0 or self.prob.max() > 1:
            raise DomainError('Prior probabilities must be non-increasing within [0, 1].')

    def __call__(self, delta):
        return prob_active(self, delta)

    def save(self, path, **metadata):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        pd.DataFrame({'delta': self.grid, 'prob': self.prob}).to_csv(path, index=False, float_format='%.17g',
                                                                     lineterminator='\n')
        sidecar = {'gamma': self.gamma, 'base_rate': self.base_rate}
        sidecar.update(self.metadata)
        sidecar.update(metadata)
        write_json(path.with_suffix('.json'), sidecar)

    @classmethod
    def load(cls, path) -> 'PriorCurve':
        path = Path(path)
        frame = pd.read_csv(path)
        sidecar = read_json(path.with_suffix('.json'))
        gamma, base_rate = sidecar.pop('gamma'), sidecar.pop('base_rate')
        return cls(frame['delta'].to_numpy(), frame['prob'].to_numpy(), gamma, base_rate, sidecar)

    def __repr__(self) -> str:
        return (f'PriorCurve(points={self.grid.size}, gamma={self.gamma:.4g}, base_rate={self.base_rate:.4g}, '
                f'prob0={self.prob[0]:.4g})')


def fit_prior_curve(active_sample, background_sample, gamma: float, base_rate: float, grid=None) -> PriorCurve:
    """base_rate * kde(active) / kde(background) on the grid, clipped to [0, 1]
    and made non-increasing by pool-adjacent-violators.

    Grid points where the background density is below 1e-12 are masked and
    filled by interpolation from their neighbours.
    """
    grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
    log_active = kde_log_eval(active_sample, gamma, grid)
    log_background = kde_log_eval(background_sample, gamma, grid)
    masked = np.exp(log_background) < MIN_BACKGROUND_DENSITY
    if masked.all():
        raise DegenerateDataError('Background density vanishes on the whole grid.')
    with np.errstate(over='ignore'):
        raw = base_rate * np.exp(log_active - log_background)
    flags = []
    if masked.any():
        warn(f'Background density below {MIN_BACKGROUND_DENSITY} at {int(masked.sum())} grid points; '
             f'filled by interpolation.')
        raw[masked] = np.interp(grid[masked], grid[~masked], raw[~masked])
        flags.append('masked_grid_points')

    prob = pool_adjacent_violators(np.clip(raw, 0.0, 1.0), increasing=False)
    prob = np.clip(prob, 0.0, 1.0)
    if prob[0] < base_rate:
        flags.append('below_base_rate_at_zero')
    metadata = {'n_active': int(_values(active_sample).size),
                'n_background': int(_values(background_sample).size),
                'residual_at_zero': float(prob[0] - 1.0),
                'masked_points': int(masked.sum()),
                'flags': flags}
    curve = PriorCurve(grid, prob, gamma, base_rate, metadata)
    logger.info('Fitted %r', curve)
    return curve


def prob_active(curve: PriorCurve, delta):
    """Interpolated probability of being active at setwise distance `delta`."""
    values = np.asarray(delta, dtype=float)
    if np.isnan(values).any() or (values < 0).any() or (values > 1).any():
        raise DomainError('Distances passed to prob_active must lie in [0, 1].')
    prob = np.clip(np.interp(values, curve.grid, curve.prob), 0.0, 1.0)
    return float(prob) if prob.ndim == 0 else prob


@dataclass
class BandwidthStudy:
    """Calibrated bandwidths over sampling distances and reseeded background draws."""
    table: pd.DataFrame
    gamma: float
    backgrounds: dict = field(default_factory=dict, repr=False)


def calibrate_bandwidth_median(pool: UnlabelledPool, labelled: LabelledSet, active_sample, base_rate: float,
                               deltas=None, repeats: int = CALIBRATION_REPEATS, m: int = DEFAULT_BACKGROUND_SIZE,
                               seed: int = 0, bin_width: float = SAMPLING_BIN_WIDTH, distances=None,
                               n_jobs: int = 1) -> BandwidthStudy:
    """Runs calibrate_bandwidth for `repeats` background samples at each
    sampling distance and takes the median bandwidth (of converged runs when
    there are any).
    """
    if deltas is None:
        deltas = np.linspace(0.0, CALIBRATION_DELTA_MAX, CALIBRATION_DELTA_COUNT)
    if distances is None:
        distances = batch_setwise_distances(pool.fingerprints, labelled.fingerprints, n_jobs=n_jobs)
    m = min(m, len(pool))

    rows, backgrounds = [], {}
    for j, delta in enumerate(deltas):
        for r in range(repeats):
            try:
                background = sample_background(pool, labelled, float(delta), m, derive_seed(seed, 'study', j, r),
                                               bin_width, distances)
            except DomainError as error:
                logger.warning('Skipping sampling distance %.3f: %s', delta, error)
                break
            calibration = calibrate_bandwidth(active_sample, background, base_rate)
            backgrounds[(float(delta), r)] = background.values
            rows.append({'delta': float(delta), 'repeat': r, 'gamma': calibration.gamma,
                         'converged': calibration.converged, 'residual': calibration.residual})
    if not rows:
        raise DegenerateDataError('No sampling distance produced a background sample.')

    table = pd.DataFrame(rows)
    converged = table[table['converged']]
    gamma = float(np.median((converged if len(converged) else table)['gamma']))
    logger.info('Median bandwidth %.4f over %d calibrations (%d converged)', gamma, len(table), len(converged))
    return BandwidthStudy(table, gamma, backgrounds)


def select_sampling_delta(study: BandwidthStudy, active_sample, base_rate: float) -> tuple:
    """Sampling distance whose background draws give base_rate * f(0) closest to 1
    at the study's median bandwidth (median over repeats, smallest distance on ties).

    :return: (delta, DataFrame of delta and median |residual|)
    """
    residuals = {}
    for (delta, _), values in study.backgrounds.items():
        with np.errstate(over='ignore'):
            ratio = float(np.exp(_log_ratio_at(active_sample, values, study.gamma, [0.0])[0]))
        residuals.setdefault(delta, []).append(abs(base_rate * ratio - 1.0))
    summary = pd.DataFrame({'delta': sorted(residuals),
                            'residual': [float(np.median(residuals[d])) for d in sorted(residuals)]})
    best = int(np.argmin(summary['residual'].to_numpy()))
    return float(summary['delta'].iloc[best]), summary
