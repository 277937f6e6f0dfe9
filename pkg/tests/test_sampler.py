import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from domainrank.dataset import LabelledSet
from domainrank.exceptions import DomainError
from domainrank.fingerprints import batch_setwise_distances, random_fingerprints
from domainrank.resources.utils import substream
from domainrank.sampler import (DistanceSample, draw_segment_weighted, sample_active_setwise, sample_background,
                                segment_bin_counts, segment_weights)


def test_two_folds_one_repeat(rng):
    fingerprints = random_fingerprints(4, 32, 0.4, rng)
    labelled = LabelledSet(list('abcd'), fingerprints, [1.0, 2.0, 3.0, 4.0])
    sample = sample_active_setwise(labelled, v=2, k=1, seed=11)
    assert len(sample) == 4
    assert sorted(sample.indices.tolist()) == [0, 1, 2, 3]

    order = substream(11, 'active').permutation(4)
    folds = [order[0::2], order[1::2]]
    for value, row in zip(sample.values, sample.indices):
        other = folds[1] if row in folds[0] else folds[0]
        assert value == batch_setwise_distances(fingerprints[row:row + 1], fingerprints[other])[0]


def test_sample_size_is_k_times_n(random_labelled):
    sample = sample_active_setwise(random_labelled, v=3, k=4, seed=0)
    assert len(sample) == 4 * len(random_labelled)
    assert sample.values.min() >= 0.0 and sample.values.max() <= 1.0


def test_duplicates_across_folds_give_zero():
    fingerprints = np.repeat(np.array([[0xf0, 0x0f]], dtype=np.uint8), 4, axis=0)
    labelled = LabelledSet(list('abcd'), fingerprints, [1.0, 2.0, 3.0, 4.0])
    assert_array_equal(sample_active_setwise(labelled, 2, 2).values, np.zeros(8))


def test_active_sample_is_seeded(random_labelled):
    first = sample_active_setwise(random_labelled, seed=5)
    assert_array_equal(first.values, sample_active_setwise(random_labelled, seed=5).values)


def test_active_sample_needs_enough_compounds(random_labelled):
    with pytest.raises(DomainError):
        sample_active_setwise(random_labelled.subset([0, 1, 2]), v=2)
    with pytest.raises(DomainError):
        sample_active_setwise(random_labelled, v=1)


def test_segment_bin_counts():
    counts = segment_bin_counts([0.15, 0.155, 0.5, 0.151], [0, 1, 0, 0], 3, 0.15, 0.01)
    assert_array_equal(counts, [2, 1, 0])


def test_segment_weights():
    assert_allclose(segment_weights([9, 1]), [0.9, 0.1])
    assert_allclose(segment_weights([8, 2]), [0.8, 0.2])
    assert_allclose(segment_weights([8, 2], inverse=True), [0.2, 0.8])
    with pytest.raises(DomainError):
        segment_weights([0, 0])


def test_single_segment_draw_is_uniform_without_replacement(rng):
    picked = draw_segment_weighted(np.zeros(50, dtype=int), 1, [1.0], 50, rng)
    assert_array_equal(np.sort(picked), np.arange(50))


def test_draw_follows_segment_weights():
    segments = np.repeat([0, 1], 5000)
    picked = draw_segment_weighted(segments, 2, [0.8, 0.2], 1000, np.random.default_rng(0))
    share = np.mean(segments[picked] == 0)
    assert share == pytest.approx(0.8, abs=0.05)
    assert np.unique(picked).size == picked.size


def test_exhausted_segments_fall_back_to_uniform(rng):
    segments = np.array([0, 0, 0, 1, 1, 1, 1])
    with pytest.warns(UserWarning, match='exhausted'):
        picked = draw_segment_weighted(segments, 2, [1.0, 0.0], 5, rng)
    assert np.unique(picked).size == 5
    assert set(np.flatnonzero(segments == 0)) <= set(picked.tolist())


def test_background_sample(random_labelled, random_pool):
    distances = batch_setwise_distances(random_pool.fingerprints, random_labelled.fingerprints)
    delta = float(np.median(distances))
    sample = sample_background(random_pool, random_labelled, delta, 200, seed=1, bin_width=0.05)
    assert len(sample) == 200
    assert np.unique(sample.indices).size == 200
    assert_array_equal(sample.values, distances[sample.indices])


def test_background_larger_than_pool(random_labelled, random_pool):
    with pytest.raises(DomainError):
        sample_background(random_pool, random_labelled, 0.5, len(random_pool) + 1)


def test_distance_sample_files(tmp_path):
    sample = DistanceSample(np.array([0.1, 0.25]), 'active', 3, {'v': 2})
    sample.save(tmp_path / 'active.csv', note='x')
    loaded = DistanceSample.load(tmp_path / 'active.csv')
    assert_array_equal(loaded.values, sample.values)
    assert (loaded.kind, loaded.seed, loaded.params) == ('active', 3, {'v': 2})


def test_distance_sample_range():
    with pytest.raises(DomainError):
        DistanceSample(np.array([1.5]), 'active', 0)
