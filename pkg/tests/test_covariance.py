import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from domainrank.covariance import (PairBins, SigmaCurve, collect_pair_bins, fit_sigma_curve, iter_pairs,
                                   pairwise_distance_histogram, sigma)
from domainrank.dataset import LabelledSet
from domainrank.exceptions import DegenerateDataError, DomainError
from domainrank.fingerprints import random_fingerprints


def labelled_with(fingerprints, activities) -> LabelledSet:
    return LabelledSet([f'c{i}' for i in range(len(activities))], fingerprints, activities)


def test_four_compounds_six_pairs(rng):
    labelled = labelled_with(random_fingerprints(4, 16, 0.5, rng), [1.0, 2.0, 3.0, 4.0])
    bins = collect_pair_bins(labelled)
    assert bins.n_pairs == 6
    assert bins.exhaustive
    assert sum(d.size for d, _ in iter_pairs(labelled)) == 6


def test_identical_pair_lands_in_first_bin():
    fingerprints = np.array([[0x0f], [0x0f]], dtype=np.uint8)
    bins = collect_pair_bins(labelled_with(fingerprints, [0.0, 1.0]), bin_width=0.1)
    assert bins.counts[0] == 1 and bins.counts.sum() == 1


def test_unit_differences_give_unit_sigma():
    fingerprints = np.array([[0x0f], [0x0f], [0xf0], [0xf0]], dtype=np.uint8)
    labelled = labelled_with(fingerprints, [0.0, 1.0, 5.0, 4.0])
    curve = fit_sigma_curve(collect_pair_bins(labelled, bin_width=0.1), min_pairs=2)
    assert curve.bin_centers[0] == pytest.approx(0.05)
    assert curve.sigma_raw[0] == pytest.approx(1.0)


def test_equal_activities_give_zero_sigma(rng):
    labelled = labelled_with(random_fingerprints(30, 32, 0.4, rng), np.full(30, 2.0))
    curve = fit_sigma_curve(collect_pair_bins(labelled), min_pairs=1)
    assert_array_equal(curve.sigma, 0.0)


def test_sigma_of_known_difference_distribution(rng):
    draws = rng.standard_normal(2000)
    activities = (draws - draws.mean()) / draws.std(ddof=1) * np.sqrt(0.125)
    labelled = labelled_with(random_fingerprints(2000, 32, 0.4, rng), activities)
    curve = fit_sigma_curve(collect_pair_bins(labelled, bin_width=1.0), min_pairs=1)
    # mean squared difference over all pairs is twice the sample variance
    assert curve.sigma_raw[0] == pytest.approx(np.sqrt(2.0 * np.var(activities, ddof=1)), rel=1e-9)
    assert curve.sigma_raw[0] == pytest.approx(0.5)


def test_sampled_pairs_match_enumeration(rng):
    labelled = labelled_with(random_fingerprints(500, 32, 0.4, rng), rng.standard_normal(500))
    exhaustive = collect_pair_bins(labelled, bin_width=0.1)
    sampled = collect_pair_bins(labelled, bin_width=0.1, max_pairs=50000, seed=2)
    assert not sampled.exhaustive and sampled.n_pairs == 50000
    expected = exhaustive.counts / exhaustive.n_pairs
    tolerance = 3.0 * np.sqrt(expected * (1.0 - expected) / sampled.n_pairs) + 1e-12
    assert np.all(np.abs(sampled.counts / sampled.n_pairs - expected) <= tolerance)


def test_pooled_sigma_is_monotone_and_keeps_weighted_mean():
    bins = PairBins(0.25, np.array([100, 300, 200, 400]), np.array([100 * 0.5, 300 * 0.2, 200 * 0.9, 400 * 0.8]))
    curve = fit_sigma_curve(bins, min_pairs=100)
    assert np.all(np.diff(curve.sigma) >= 0)
    assert np.dot(curve.sigma ** 2, curve.counts) == pytest.approx(bins.sum_sq.sum())


def test_sparse_bins_are_dropped():
    bins = PairBins(0.5, np.array([150, 20]), np.array([150.0, 40.0]))
    curve = fit_sigma_curve(bins, min_pairs=100)
    assert_allclose(curve.bin_centers, [0.25])
    assert curve.metadata['dropped_bins'] == 1
    with pytest.raises(DegenerateDataError):
        fit_sigma_curve(bins, min_pairs=1000)


def test_sigma_lookup():
    curve = SigmaCurve(np.array([0.1, 0.3, 0.5]), np.array([0.2, 0.6, 0.5]), np.array([0.2, 0.55, 0.55]),
                       np.array([10, 10, 10]))
    assert sigma(curve, 0.3) == pytest.approx(0.55)
    assert sigma(curve, 0.2) == pytest.approx(0.375)
    assert sigma(curve, 0.0) == pytest.approx(0.2)
    assert sigma(curve, 1.0) == pytest.approx(0.55)
    values = curve(np.linspace(0.0, 1.0, 21))
    assert np.all(np.diff(values) >= 0)
    with pytest.raises(DomainError):
        sigma(curve, -0.1)


def test_sigma_curve_files(tmp_path, rng):
    labelled = labelled_with(random_fingerprints(60, 32, 0.4, rng), rng.standard_normal(60))
    curve = fit_sigma_curve(collect_pair_bins(labelled, bin_width=0.05), min_pairs=10)
    curve.save(tmp_path)
    loaded = SigmaCurve.load(tmp_path)
    assert_allclose(loaded.sigma, curve.sigma)
    assert_allclose(loaded.sigma_raw, curve.sigma_raw)
    assert loaded.metadata['min_pairs'] == 10


def test_pairs_need_two_compounds(rng):
    with pytest.raises(DomainError):
        collect_pair_bins(labelled_with(random_fingerprints(1, 16, 0.5, rng), [1.0]))


def test_histogram_is_a_density(rng):
    labelled = labelled_with(random_fingerprints(80, 32, 0.4, rng), rng.standard_normal(80))
    density, edges = pairwise_distance_histogram(labelled, bins=20)
    assert np.sum(density * np.diff(edges)) == pytest.approx(1.0)
