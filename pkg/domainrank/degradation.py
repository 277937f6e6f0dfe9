"""degradation.py
Degradation submodule of domainrank. Measures how predictive accuracy decays
with distance from the training data: models are refitted with every compound
closer than delta to the target removed, the out-of-ball predictions are
regressed on the truth through the origin, and the per-delta estimates are
smoothed with the family g(delta) = a / (1 + exp(-b * delta ** c)).
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from warnings import warn

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy.optimize import least_squares

from .dataset import LabelledSet
from .exceptions import DegenerateDataError, DomainError
from .fingerprints import pairwise_distances
from .regressors import RegressorSpec, fit
from .resources.constants import (DEFAULT_MAX_TARGETS, DEGRADATION_GRID_POINTS, MIN_BETA_PAIRS, MIN_TRAINING_SIZE,
                                  SMOOTH_BOUNDS, SMOOTH_STARTS)
from .resources.utils import read_json, substream, write_json

logger = logging.getLogger(__name__)

_STANDARDIZED_TOLERANCE = 1e-6
_MIN_CURVE_POINTS = 4


@dataclass
class DeltaBallResult:
    """Out-of-ball predictions at one exclusion radius.

    y_true, y_pred and n_train_sizes are aligned with the used targets;
    target_indices holds every attempted target, used or skipped.
    """
    delta: float
    y_true: np.ndarray
    y_pred: np.ndarray
    n_train_sizes: np.ndarray
    target_indices: np.ndarray
    n_skipped: int = 0

    @property
    def n_attempted(self) -> int:
        return int(self.target_indices.size)

    @property
    def n_used(self) -> int:
        return int(self.y_true.size)

    @property
    def pairs(self) -> list:
        return list(zip(self.y_true.tolist(), self.y_pred.tolist()))


def _check_standardized(labelled: LabelledSet):
    mean = float(np.mean(labelled.activities))
    sd = float(np.std(labelled.activities, ddof=1)) if len(labelled) > 1 else 0.0
    if abs(mean) > _STANDARDIZED_TOLERANCE or abs(sd - 1.0) > _STANDARDIZED_TOLERANCE:
        raise DomainError(f'Degradation needs standardized activities, got mean {mean:.3g} and sd {sd:.3g}.')


def select_targets(n: int, max_targets: int = DEFAULT_MAX_TARGETS, seed: int = 0) -> np.ndarray:
    """Uniform subsample of at most max_targets row indices, sorted."""
    if n <= max_targets:
        return np.arange(n)
    return np.sort(substream(seed, 'targets').choice(n, size=max_targets, replace=False))


def _fit_out_of_ball(labelled: LabelledSet, spec: RegressorSpec, target: int, keep: np.ndarray) -> float:
    model = fit(spec, labelled.fingerprints[keep], labelled.activities[keep])
    return model.predict_one(labelled.fingerprints[target:target + 1])


def delta_ball_residuals(labelled: LabelledSet, spec: RegressorSpec, delta: float,
                         max_targets: int = DEFAULT_MAX_TARGETS, seed: int = 0, targets=None,
                         target_distances=None, min_training_size: int = MIN_TRAINING_SIZE,
                         n_jobs: int = 1) -> DeltaBallResult:
    """Fits one model per target on the compounds at distance >= delta from it.

    :param labelled: Standardized labelled set.
    :param spec: Regressor to refit.
    :param delta: Exclusion radius.
    :param max_targets: Cap on the number of targets (ignored when `targets` is given).
    :param seed: Seed of the target subsample.
    :param targets: Explicit target rows.
    :param target_distances: Precomputed (len(targets), len(labelled)) distance matrix.
    :param min_training_size: Targets with a smaller training set are skipped.
    """
    _check_standardized(labelled)
    if not 0.0 <= delta <= 1.0:
        raise DomainError(f'Exclusion radius must lie in [0, 1], got {delta}.')
    targets = select_targets(len(labelled), max_targets, seed) if targets is None else np.asarray(targets)
    if target_distances is None:
        target_distances = pairwise_distances(labelled.fingerprints[targets], labelled.fingerprints)

    keeps = target_distances >= delta
    sizes = keeps.sum(axis=1)
    usable = np.flatnonzero(sizes >= min_training_size)
    n_skipped = targets.size - usable.size
    if usable.size == 0:
        raise DegenerateDataError(f'Every target at delta={delta:.3f} leaves fewer than {min_training_size} '
                                  f'training compounds.')

    if n_jobs == 1:
        predictions = [_fit_out_of_ball(labelled, spec, int(targets[t]), keeps[t]) for t in usable]
    else:
        predictions = Parallel(n_jobs=n_jobs)(delayed(_fit_out_of_ball)(labelled, spec, int(targets[t]), keeps[t])
                                              for t in usable)
    logger.debug('delta=%.3f: %d targets fitted, %d skipped', delta, usable.size, n_skipped)
    return DeltaBallResult(float(delta), labelled.activities[targets[usable]], np.asarray(predictions, dtype=float),
                           sizes[usable], targets, int(n_skipped))


@dataclass(frozen=True)
class BetaEpsilon:
    """Through-origin slope and residual sd. Unpacks as (beta, epsilon)."""
    beta: float
    epsilon: float
    degenerate: bool = False

    def __iter__(self):
        return iter((self.beta, self.epsilon))


def beta_epsilon_from_pairs(y_true, y_pred) -> BetaEpsilon:
    """beta = sum(y * yhat) / sum(yhat ** 2), epsilon = rms(y - beta * yhat)."""
    y_true = np.asarray(y_true, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    denominator = float(np.dot(y_pred, y_pred))
    if denominator == 0.0:
        warn('All predictions are zero; beta set to 0.')
        return BetaEpsilon(0.0, float(np.sqrt(np.mean(y_true ** 2))), True)
    beta = float(np.dot(y_true, y_pred)) / denominator
    return BetaEpsilon(beta, float(np.sqrt(np.mean((y_true - beta * y_pred) ** 2))))


def fit_beta_epsilon(result: DeltaBallResult, min_pairs: int = MIN_BETA_PAIRS) -> BetaEpsilon:
    if result.n_used < min_pairs:
        raise DegenerateDataError(f'delta={result.delta:.3f} has {result.n_used} prediction pairs, '
                                  f'at least {min_pairs} are needed.')
    return beta_epsilon_from_pairs(result.y_true, result.y_pred)


def smooth_family(delta, a: float, b: float, c: float):
    """g(delta) = a / (1 + exp(-b * delta ** c))."""
    delta = np.asarray(delta, dtype=float)
    with np.errstate(over='ignore'):
        return a / (1.0 + np.exp(-b * np.power(delta, c)))


@dataclass
class SmoothCurve:
    """SmoothCurve

    Fitted a / (1 + exp(-b * delta ** c)) with a > 0, b < 0, c > 0, which is
    continuous, non-negative and strictly decreasing on [0, 1].
    """
    a: float
    b: float
    c: float
    fitted_points: list = field(default_factory=list)
    rss: float = float('nan')
    flags: list = field(default_factory=list)

    def __call__(self, delta):
        value = smooth_family(delta, self.a, self.b, self.c)
        return float(value) if np.ndim(value) == 0 else value

    @property
    def poorly_identified(self) -> bool:
        return 'poorly_identified' in self.flags

    def to_dict(self) -> dict:
        return {'a': self.a, 'b': self.b, 'c': self.c, 'rss': self.rss, 'flags': list(self.flags),
                'fitted_points': [[float(d), float(v)] for d, v in self.fitted_points]}

    @classmethod
    def from_dict(cls, data: dict) -> 'SmoothCurve':
        return cls(data['a'], data['b'], data['c'], [tuple(p) for p in data['fitted_points']], data['rss'],
                   list(data['flags']))

    def __repr__(self) -> str:
        return f'SmoothCurve(a={self.a:.4g}, b={self.b:.4g}, c={self.c:.4g}, rss={self.rss:.3g})'


def fit_smooth_curve(points, n_starts: int = SMOOTH_STARTS, seed: int = 0) -> SmoothCurve:
    """Bounded least squares fit of the smooth family from several starts.

    The first start is taken from the data (a = twice the largest value,
    b = -3, c = 1); the others are drawn uniformly inside the parameter box.
    """
    points = [(float(d), float(v)) for d, v in points]
    if len(points) < _MIN_CURVE_POINTS:
        raise DegenerateDataError(f'Smooth curve fit needs at least {_MIN_CURVE_POINTS} points, got {len(points)}.')
    deltas = np.array([d for d, _ in points])
    values = np.array([v for _, v in points])
    lower, upper = (np.array(bound) for bound in SMOOTH_BOUNDS)

    rng = substream(seed, 'smooth')
    starts = [np.clip([2.0 * max(values.max(), 1e-3), -3.0, 1.0], lower, upper)]
    starts += [rng.uniform(lower, upper) for _ in range(n_starts - 1)]

    def residuals(theta):
        return smooth_family(deltas, *theta) - values

    best, diagnostics = None, []
    for start in starts:
        try:
            solution = least_squares(residuals, start, bounds=(lower, upper), method='trf')
        except (ValueError, FloatingPointError) as error:
            diagnostics.append(str(error))
            continue
        diagnostics.append(solution.message)
        rss = float(np.sum(solution.fun ** 2))
        if np.isfinite(rss) and (best is None or rss < best[1]):
            best = (solution.x, rss)
    if best is None:
        raise DegenerateDataError(f'Smooth curve fit failed from every start: {diagnostics}')

    (a, b, c), rss = best
    flags = []
    at_bound = np.isclose(best[0], lower, rtol=0, atol=1e-6) | np.isclose(best[0], upper, rtol=0, atol=1e-6)
    if b > -1e-3 or at_bound.any():
        flags.append('poorly_identified')
        logger.warning('Smooth curve poorly identified: a=%.4g, b=%.4g, c=%.4g', a, b, c)
    return SmoothCurve(float(a), float(b), float(c), points, rss, flags)


class DegradationCurves:
    """DegradationCurves

    @:arg beta          SmoothCurve: Fitted beta(delta).
    @:arg strength      SmoothCurve: Fitted 1 - epsilon(delta).
    @:arg model_kind    str: Regressor kind the curves describe.
    @:arg points        DataFrame: Per-delta estimates and target accounting.
    @:arg metadata      dict: Run parameters.
    """
    def __init__(self, beta: SmoothCurve, strength: SmoothCurve, model_kind: str, points: pd.DataFrame,
                 metadata: dict = None):
        self.beta = beta
        self.strength = strength
        self.model_kind = model_kind
        self.points = points
        self.metadata = metadata or {}

    def beta_at(self, delta):
        return self.beta(delta)

    def epsilon_at(self, delta):
        """Residual sd, increasing in delta."""
        return 1.0 - self.strength(delta)

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        self.points.to_csv(directory / 'points.csv', index=False, float_format='%.17g', lineterminator='\n')
        write_json(directory / 'curves.json', {'model_kind': self.model_kind, 'beta': self.beta.to_dict(),
                                               'strength': self.strength.to_dict(), 'metadata': self.metadata})

    @classmethod
    def load(cls, directory) -> 'DegradationCurves':
        directory = Path(directory)
        data = read_json(directory / 'curves.json')
        return cls(SmoothCurve.from_dict(data['beta']), SmoothCurve.from_dict(data['strength']),
                   data['model_kind'], pd.read_csv(directory / 'points.csv'), data.get('metadata'))

    def __repr__(self) -> str:
        return f'DegradationCurves({self.model_kind}, beta={self.beta!r}, strength={self.strength!r})'


def strength_points(deltas, epsilon) -> list:
    """(delta, 1 - epsilon) pairs for the strength curve, floored at 0."""
    strength = 1.0 - np.asarray(epsilon, dtype=float)
    negative = strength < 0.0
    if negative.any():
        warn(f'epsilon above 1 at {int(negative.sum())} grid points; strength clipped to 0.')
    return list(zip(np.asarray(deltas, dtype=float), np.maximum(strength, 0.0)))


def build_degradation(labelled: LabelledSet, spec: RegressorSpec, grid=None,
                      max_targets: int = DEFAULT_MAX_TARGETS, seed: int = 0,
                      min_training_size: int = MIN_TRAINING_SIZE, min_pairs: int = MIN_BETA_PAIRS,
                      n_starts: int = SMOOTH_STARTS, n_jobs: int = 1) -> DegradationCurves:
    """Per-delta beta and epsilon estimates on a grid and their smooth fits.

    The same targets are used at every delta. Grid points where every target
    is skipped or too few pairs remain are recorded and left out of the fits.

    :param labelled: Standardized labelled set.
    :param spec: Regressor to refit.
    :param grid: Exclusion radii, 10 equispaced points on [0, 1] (endpoints included) by default.
    """
    grid = np.linspace(0.0, 1.0, DEGRADATION_GRID_POINTS) if grid is None else np.asarray(grid, dtype=float)
    targets = select_targets(len(labelled), max_targets, seed)
    distances = pairwise_distances(labelled.fingerprints[targets], labelled.fingerprints)

    rows = []
    for delta in grid:
        row = {'delta': float(delta), 'beta': np.nan, 'epsilon': np.nan, 'n_attempted': int(targets.size),
               'n_used': 0, 'n_skipped': int(targets.size), 'mean_train_size': np.nan, 'degenerate': False,
               'usable': False}
        try:
            result = delta_ball_residuals(labelled, spec, float(delta), targets=targets, target_distances=distances,
                                          min_training_size=min_training_size, n_jobs=n_jobs)
            estimate = fit_beta_epsilon(result, min_pairs)
        except DegenerateDataError as error:
            logger.info('Skipping delta=%.3f: %s', delta, error)
            rows.append(row)
            continue
        row.update(beta=estimate.beta, epsilon=estimate.epsilon, n_used=result.n_used, n_skipped=result.n_skipped,
                   mean_train_size=float(result.n_train_sizes.mean()), degenerate=estimate.degenerate, usable=True)
        rows.append(row)
        logger.info('delta=%.3f: beta=%.4f epsilon=%.4f from %d targets', delta, estimate.beta, estimate.epsilon,
                    result.n_used)

    points = pd.DataFrame(rows)
    usable = points[points['usable']]
    if len(usable) < _MIN_CURVE_POINTS:
        raise DegenerateDataError(f'Only {len(usable)} usable grid points, at least {_MIN_CURVE_POINTS} are needed.')
    beta = fit_smooth_curve(zip(usable['delta'], usable['beta']), n_starts, seed)
    strength = fit_smooth_curve(strength_points(usable['delta'], usable['epsilon']), n_starts, seed)
    metadata = {'grid_includes_endpoints': bool(grid[0] == 0.0 and grid[-1] == 1.0), 'epsilon_is_sd': True,
                'max_targets': max_targets, 'min_training_size': min_training_size, 'seed': seed,
                'regressor': spec.to_dict()}
    return DegradationCurves(beta, strength, spec.kind, points, metadata)
