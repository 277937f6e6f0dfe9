"""scoring.py
Scoring submodule of domainrank. Turns a fitted model and the distance-aware
curves into the four ranking scores:

  S0  model prediction
  S1  beta(delta) * S0
  S2  prob_active(delta) * S1
  S3  tail_prob(mixture, mean, sigma(delta), I) * prob_active(delta), mean = S1 (or S2)
"""
import logging
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd

from .covariance import SigmaCurve, sigma
from .degradation import DegradationCurves
from .distribution import MixtureDistribution, tail_prob
from .exceptions import ConfigError, DomainError
from .fingerprints import as_matrix, batch_setwise_distances
from .prior import PriorCurve, prob_active
from .regressors import BaseRegressor
from .resources.constants import SIGMA_FLOOR

logger = logging.getLogger(__name__)

RANKING_COLUMNS = ['rank', 'id', 'score', 'delta', 's0', 's1', 's2', 's3']


class ScoreVariant(str, Enum):
    S0 = 'S0'
    S1 = 'S1'
    S2 = 'S2'
    S3 = 'S3'

    @property
    def column(self) -> str:
        return self.value.lower()


class MeanSource(str, Enum):
    """Conditional mean fed to the tail probability of S3."""
    S1 = 'S1'
    S2 = 'S2'


# Components each variant needs and where they come from
_REQUIREMENTS = {ScoreVariant.S0: (),
                 ScoreVariant.S1: (('degradation', "stage 'degrade'"),),
                 ScoreVariant.S2: (('degradation', "stage 'degrade'"), ('prior', "stage 'prior'")),
                 ScoreVariant.S3: (('degradation', "stage 'degrade'"), ('prior', "stage 'prior'"),
                                   ('sigma_curve', "stage 'covariance'"), ('mixture', "stage 'mixture'"),
                                   ('threshold', 'the scoring.threshold setting'))}


@dataclass
class ScoringContext:
    """Everything fitted on one training set that scoring reads.

    threshold is the activity cutoff I in standardized units.
    """
    model: BaseRegressor
    train_fingerprints: np.ndarray
    prior: PriorCurve = None
    degradation: DegradationCurves = None
    sigma_curve: SigmaCurve = None
    mixture: MixtureDistribution = None
    threshold: float = None
    mean_source: MeanSource = MeanSource.S1
    n_jobs: int = 1

    def __post_init__(self):
        self.train_fingerprints = as_matrix(self.train_fingerprints)
        self.mean_source = MeanSource(self.mean_source)

    def require(self, variant):
        variant = ScoreVariant(variant)
        for attribute, source in _REQUIREMENTS[variant]:
            if getattr(self, attribute) is None:
                raise ConfigError(f'Score {variant.value} needs the {attribute} from {source}.')

    def has(self, variant) -> bool:
        return all(getattr(self, attribute) is not None for attribute, _ in _REQUIREMENTS[ScoreVariant(variant)])


def score_table(ids, fingerprints, context: ScoringContext, variant=None) -> pd.DataFrame:
    """Setwise distance and all four scores of every candidate.

    Scores whose components are not fitted are NaN. When `variant` is given its
    components must be present.
    """
    if variant is not None:
        context.require(variant)
    matrix = as_matrix(fingerprints)
    delta = batch_setwise_distances(matrix, context.train_fingerprints, n_jobs=context.n_jobs)
    s0 = context.model.predict(matrix)
    nan = np.full(delta.size, np.nan)

    s1 = context.degradation.beta_at(delta) * s0 if context.has(ScoreVariant.S1) else nan
    p = prob_active(context.prior, delta) if context.prior is not None else nan
    s2 = p * s1
    if context.has(ScoreVariant.S3):
        mean = s1 if context.mean_source is MeanSource.S1 else s2
        spread = np.maximum(sigma(context.sigma_curve, delta), SIGMA_FLOOR)
        s3 = tail_prob(context.mixture, mean, spread, context.threshold) * p
    else:
        s3 = nan
    return pd.DataFrame({'id': [str(i) for i in ids], 'delta': delta, 's0': s0, 's1': s1, 's2': s2, 's3': s3})


def score_compound(fingerprint, context: ScoringContext, variant=ScoreVariant.S3) -> float:
    variant = ScoreVariant(variant)
    table = score_table(['x'], fingerprint, context, variant)
    return float(table[variant.column].iloc[0])


class RankedList:
    """RankedList

    Candidates ordered by score, descending, ties by id ascending.
    @:arg frame     DataFrame with columns rank,id,score,delta,s0,s1,s2,s3.
    @:arg variant   ScoreVariant the ranking uses.
    """
    def __init__(self, frame: pd.DataFrame, variant: ScoreVariant):
        self.frame = frame
        self.variant = ScoreVariant(variant)

    @property
    def ids(self) -> list:
        return self.frame['id'].tolist()

    @property
    def scores(self) -> np.ndarray:
        return self.frame['score'].to_numpy()

    def top(self, n: int) -> list:
        return self.ids[:n]

    def __len__(self) -> int:
        return len(self.frame)

    def to_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.frame.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')

    @classmethod
    def from_csv(cls, path, variant) -> 'RankedList':
        return cls(pd.read_csv(path, dtype={'id': str}), variant)

    def __repr__(self) -> str:
        return f'RankedList({self.variant.value}, {len(self)} candidates)'


def rank_candidates(ids, fingerprints, context: ScoringContext, variant=ScoreVariant.S3) -> RankedList:
    """Scores every candidate and sorts by the chosen variant.

    :param ids: Candidate ids (pool compounds and any held-out actives).
    :param fingerprints: Candidate fingerprints, aligned with ids.
    :param context: Fitted scoring components.
    :param variant: Score used for the order; all four are kept for audit.
    """
    variant = ScoreVariant(variant)
    if len(ids) == 0:
        raise DomainError('Cannot rank an empty candidate set.')
    table = score_table(ids, fingerprints, context, variant)
    table.insert(1, 'score', table[variant.column])
    table = table.sort_values(['score', 'id'], ascending=[False, True], kind='mergesort').reset_index(drop=True)
    table.insert(0, 'rank', np.arange(1, len(table) + 1))
    logger.info('Ranked %d candidates by %s (mean source %s)', len(table), variant.value, context.mean_source.value)
    return RankedList(table[RANKING_COLUMNS], variant)


def tail_contours(context: ScoringContext, start_points, deltas, threshold: float = None) -> pd.DataFrame:
    """log10 of prob_active(delta) * tail_prob(beta(delta) * s0, sigma(delta), I) on a (s0, delta) grid."""
    context.require(ScoreVariant.S3)
    threshold = context.threshold if threshold is None else threshold
    s0, delta = (grid.ravel() for grid in np.meshgrid(np.asarray(start_points, dtype=float),
                                                      np.asarray(deltas, dtype=float), indexing='ij'))
    spread = np.maximum(sigma(context.sigma_curve, delta), SIGMA_FLOOR)
    prob = prob_active(context.prior, delta) * tail_prob(context.mixture, context.degradation.beta_at(delta) * s0,
                                                         spread, threshold)
    with np.errstate(divide='ignore'):
        return pd.DataFrame({'s0': s0, 'delta': delta, 'log10_prob': np.log10(prob)})
