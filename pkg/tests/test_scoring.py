from dataclasses import replace

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from domainrank.covariance import SigmaCurve
from domainrank.degradation import DegradationCurves, SmoothCurve
from domainrank.distribution import MixtureDistribution, tail_prob
from domainrank.exceptions import ConfigError, DomainError
from domainrank.fingerprints import random_fingerprints
from domainrank.prior import PriorCurve
from domainrank.regressors import RegressorSpec, fit
from domainrank.scoring import (RANKING_COLUMNS, RankedList, ScoreVariant, ScoringContext, rank_candidates,
                                score_compound, score_table, tail_contours)


@pytest.fixture
def context(standardized_labelled):
    model = fit(RegressorSpec('ridge', ridge_lambda=1.0), standardized_labelled.fingerprints,
                standardized_labelled.activities)
    degradation = DegradationCurves(SmoothCurve(1.8, -3.0, 1.0), SmoothCurve(1.6, -2.0, 1.0), 'ridge', pd.DataFrame())
    return ScoringContext(model, standardized_labelled.fingerprints,
                          prior=PriorCurve([0.0, 0.5, 0.9, 1.0], [0.9, 0.3, 0.0, 0.0], 0.05, 0.01),
                          degradation=degradation,
                          sigma_curve=SigmaCurve(np.array([0.1, 0.5, 0.9]), np.array([0.5, 1.0, 1.2]),
                                                 np.array([0.5, 1.0, 1.2]), np.array([50, 50, 50])),
                          mixture=MixtureDistribution(0.0, 1.0, df=4.0, loc=0.2, scale=0.8),
                          threshold=1.5)


@pytest.fixture
def candidates(rng):
    fingerprints = random_fingerprints(40, 64, 0.3, rng)
    return [f'q{i:02d}' for i in range(40)], fingerprints


def test_score_formulas(context, candidates):
    ids, fingerprints = candidates
    table = score_table(ids, fingerprints, context)
    delta = table['delta'].to_numpy()
    assert_allclose(table['s0'], context.model.predict(fingerprints))
    assert_allclose(table['s1'], context.degradation.beta_at(delta) * table['s0'])
    assert_allclose(table['s2'], context.prior(delta) * table['s1'])
    tail = tail_prob(context.mixture, table['s1'].to_numpy(), context.sigma_curve(delta), 1.5)
    expected = tail * context.prior(delta)
    assert_allclose(table['s3'], expected)


def test_zero_prior_zeroes_prior_weighted_scores(context):
    far = np.zeros((2, 8), dtype=np.uint8)
    table = score_table(['a', 'b'], far, context)
    assert_array_equal(table['delta'], 1.0)
    assert_array_equal(table['s2'], 0.0)
    assert_array_equal(table['s3'], 0.0)


def test_lower_threshold_raises_tail_score(context, candidates):
    ids, fingerprints = candidates
    high = score_table(ids, fingerprints, context)['s3'].to_numpy()
    context.threshold = -1.0
    low = score_table(ids, fingerprints, context)['s3'].to_numpy()
    assert np.all(low >= high)
    positive = high > 0
    assert np.all(low[positive] > high[positive])


def test_mean_source_s2(context, candidates):
    ids, fingerprints = candidates
    context = replace(context, mean_source='S2')
    table = score_table(ids, fingerprints, context)
    delta = table['delta'].to_numpy()
    tail = tail_prob(context.mixture, table['s2'].to_numpy(), context.sigma_curve(delta), 1.5)
    expected = tail * context.prior(delta)
    assert_allclose(table['s3'], expected)


def test_missing_components(context, candidates):
    ids, fingerprints = candidates
    bare = ScoringContext(context.model, context.train_fingerprints, degradation=context.degradation)
    table = score_table(ids, fingerprints, bare)
    assert table['s1'].notna().all()
    assert table[['s2', 's3']].isna().all().all()
    assert bare.has(ScoreVariant.S1) and not bare.has(ScoreVariant.S2)
    with pytest.raises(ConfigError, match='prior'):
        bare.require('S2')
    with pytest.raises(ConfigError, match='mixture'):
        rank_candidates(ids, fingerprints, ScoringContext(context.model, context.train_fingerprints,
                                                          prior=context.prior, degradation=context.degradation,
                                                          sigma_curve=context.sigma_curve, threshold=1.5))


def test_s0_needs_only_the_model(context, candidates):
    ids, fingerprints = candidates
    ranking = rank_candidates(ids, fingerprints, ScoringContext(context.model, context.train_fingerprints), 'S0')
    assert_allclose(ranking.scores, np.sort(context.model.predict(fingerprints))[::-1])


@pytest.mark.parametrize('variant', list(ScoreVariant))
def test_ranking_is_sorted_and_matches_single_scores(context, candidates, variant):
    ids, fingerprints = candidates
    ranking = rank_candidates(ids, fingerprints, context, variant)
    assert list(ranking.frame.columns) == RANKING_COLUMNS
    assert_array_equal(ranking.frame['rank'], np.arange(1, 41))
    assert np.all(np.diff(ranking.scores) <= 0)
    assert sorted(ranking.ids) == ids
    for compound_id in ranking.top(5):
        row = ids.index(compound_id)
        score = score_compound(fingerprints[row:row + 1], context, variant)
        assert ranking.frame.loc[ranking.frame['id'] == compound_id, 'score'].iloc[0] == pytest.approx(score)


def test_ties_break_by_id(context, rng):
    fingerprint = random_fingerprints(1, 64, 0.3, rng)
    ranking = rank_candidates(['c', 'a', 'b'], np.repeat(fingerprint, 3, axis=0), context)
    assert ranking.ids == ['a', 'b', 'c']
    assert len(set(ranking.scores)) == 1


def test_empty_candidates(context):
    with pytest.raises(DomainError):
        rank_candidates([], np.empty((0, 8), dtype=np.uint8), context)


def test_ranked_list_csv(tmp_path, context, candidates):
    ids, fingerprints = candidates
    ranking = rank_candidates(ids, fingerprints, context, 'S2')
    ranking.to_csv(tmp_path / 'scores' / 'ranking.csv')
    loaded = RankedList.from_csv(tmp_path / 'scores' / 'ranking.csv', 'S2')
    assert loaded.ids == ranking.ids
    assert_allclose(loaded.scores, ranking.scores)
    assert loaded.variant is ScoreVariant.S2


def test_tail_contours(context):
    table = tail_contours(context, [-1.0, 0.0, 1.0], [0.0, 0.5, 0.95])
    assert list(table.columns) == ['s0', 'delta', 'log10_prob']
    assert len(table) == 9
    assert np.isneginf(table.loc[table['delta'] == 0.95, 'log10_prob']).all()
    near = table[table['delta'] == 0.0].sort_values('s0')['log10_prob'].to_numpy()
    assert np.all(np.diff(near) > 0)


def test_scores_stay_probabilities(context, rng):
    fingerprints = random_fingerprints(2000, 64, rng.uniform(0.05, 0.6), rng)
    table = score_table([f'r{i}' for i in range(2000)], fingerprints, context)
    assert table['s3'].between(0.0, 1.0).all()
    assert_array_equal(table['s2'], context.prior(table['delta'].to_numpy()) * table['s1'].to_numpy())
