import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from domainrank.exceptions import ConfigError, DimensionError, DomainError
from domainrank.fingerprints import random_fingerprints
from domainrank.regressors import (RandomForestRegressor, RegressorSpec, fit, load_model, predict, save_model)


@pytest.fixture
def five_points(rng):
    return random_fingerprints(5, 8, 0.5, rng), rng.standard_normal(5)


def test_ridge_matches_normal_equations(five_points):
    fingerprints, y = five_points
    model = fit(RegressorSpec('ridge', ridge_lambda=0.5), fingerprints, y)
    X = np.unpackbits(fingerprints, axis=1).astype(float)
    Xc, yc = X - X.mean(axis=0), y - y.mean()
    weights = np.linalg.solve(Xc.T @ Xc + 0.5 * np.eye(8), Xc.T @ yc)
    assert_allclose(model.weights, weights, atol=1e-9)
    assert model.intercept == pytest.approx(y.mean() - X.mean(axis=0) @ weights, abs=1e-9)
    assert_allclose(model.predict(fingerprints), X @ weights + model.intercept, atol=1e-9)


def test_unregularized_ridge_interpolates():
    X = np.zeros((5, 8), dtype=np.uint8)
    X[np.arange(4), np.arange(4)] = 1
    y = np.array([0.3, -1.2, 2.5, 0.7, 1.1])
    model = fit(RegressorSpec('ridge', ridge_lambda=0.0), np.packbits(X, axis=1), y)
    assert np.abs(model.predict(np.packbits(X, axis=1)) - y).max() < 1e-9


def test_single_tree_memorizes_distinct_training_set(rng):
    fingerprints = np.unique(random_fingerprints(40, 16, 0.5, rng), axis=0)
    y = rng.standard_normal(fingerprints.shape[0])
    spec = RegressorSpec('random_forest', n_trees=1, bootstrap=False, min_samples_split=2)
    assert_allclose(fit(spec, fingerprints, y).predict(fingerprints), y)


@pytest.mark.parametrize('kind', ['ridge', 'random_forest'])
def test_constant_response(rng, kind):
    fingerprints = random_fingerprints(20, 16, 0.5, rng)
    model = fit(RegressorSpec(kind), fingerprints, np.full(20, 2.5))
    assert_allclose(model.predict(random_fingerprints(7, 16, 0.5, rng)), 2.5)


def test_forest_is_mean_of_trees(rng):
    fingerprints = random_fingerprints(50, 16, 0.5, rng)
    model = fit(RegressorSpec('random_forest', n_trees=5, seed=3), fingerprints, rng.standard_normal(50))
    queries = random_fingerprints(10, 16, 0.5, rng)
    assert_allclose(model.predict(queries), model.tree_predictions(queries).mean(axis=0))


def test_forest_is_deterministic_and_order_free(rng):
    fingerprints = random_fingerprints(60, 16, 0.5, rng)
    y = rng.standard_normal(60)
    spec = RegressorSpec('random_forest', n_trees=4, max_features=0.5, seed=9)
    queries = random_fingerprints(10, 16, 0.5, rng)
    reference = fit(spec, fingerprints, y).predict(queries)
    assert_array_equal(fit(spec, fingerprints, y).predict(queries), reference)
    order = rng.permutation(60)
    assert_array_equal(fit(spec, fingerprints[order], y[order]).predict(queries), reference)


def test_forest_does_not_depend_on_n_jobs(rng):
    fingerprints = random_fingerprints(40, 16, 0.5, rng)
    y = rng.standard_normal(40)
    serial = fit(RegressorSpec('random_forest', n_trees=3), fingerprints, y)
    parallel = fit(RegressorSpec('random_forest', n_trees=3, n_jobs=2), fingerprints, y)
    assert_array_equal(serial.predict(fingerprints), parallel.predict(fingerprints))


def test_predict_checks_length(rng):
    model = fit(RegressorSpec('ridge'), random_fingerprints(10, 16, 0.5, rng), rng.standard_normal(10))
    with pytest.raises(DimensionError):
        model.predict(random_fingerprints(1, 24, 0.5, rng))


def test_fit_checks_sizes(rng):
    with pytest.raises(DomainError):
        fit(RegressorSpec('ridge'), random_fingerprints(10, 16, 0.5, rng), np.zeros(9))
    with pytest.raises(DomainError):
        fit(RegressorSpec('ridge'), random_fingerprints(1, 16, 0.5, rng), np.zeros(1))


def test_spec_validation():
    with pytest.raises(ConfigError):
        RegressorSpec('svm')
    with pytest.raises(ConfigError):
        RegressorSpec('ridge', ridge_lambda=-1.0)
    assert 'n_jobs' not in RegressorSpec('ridge').to_dict()


@pytest.mark.parametrize('kind', ['ridge', 'random_forest'])
def test_saved_model_predicts_the_same(tmp_path, rng, kind):
    fingerprints = random_fingerprints(30, 16, 0.5, rng)
    model = fit(RegressorSpec(kind, n_trees=3), fingerprints, rng.standard_normal(30))
    save_model(model, tmp_path / 'model.json')
    loaded = load_model(tmp_path / 'model.json')
    assert type(loaded) is type(model)
    assert_allclose(loaded.predict(fingerprints), model.predict(fingerprints))
    assert predict(loaded, fingerprints[:1]) == pytest.approx(model.predict_one(fingerprints[:1]))


def test_unfitted_model():
    with pytest.raises(ConfigError):
        RandomForestRegressor(RegressorSpec('random_forest')).predict(np.zeros((1, 2), dtype=np.uint8))
