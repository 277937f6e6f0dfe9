import json

import numpy as np
import pytest

from domainrank.dataset import LabelledSet, UnlabelledPool, standardize_activities
from domainrank.fingerprints import random_fingerprints
from domainrank.synthetic import LandscapeSpec, generate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def random_labelled(rng):
    fingerprints = random_fingerprints(120, 64, 0.3, rng)
    bits = np.unpackbits(fingerprints, axis=1)
    activities = 0.5 * bits[:, :8].sum(axis=1) + 0.1 * rng.standard_normal(120)
    return LabelledSet([f'L{i:04d}' for i in range(120)], fingerprints, activities)


@pytest.fixture
def standardized_labelled(random_labelled):
    return standardize_activities(random_labelled)[0]


@pytest.fixture
def random_pool(rng):
    fingerprints = random_fingerprints(600, 64, 0.3, rng)
    return UnlabelledPool([f'P{i:05d}' for i in range(600)], fingerprints, np.arange(600) % 3, 3)


@pytest.fixture(scope='session')
def clustered_data():
    spec = LandscapeSpec(p=64, kind='clustered', active_fraction=0.05, n_clusters=4, cluster_fraction=0.05,
                         flip_prob=0.03, segment_count=5, seed=7)
    return generate(spec, 4000, 4000)


@pytest.fixture
def synthetic_config(tmp_path):
    """Path of a small end-to-end config that reads its data from the synth stage."""
    config = {
        'paths': {'workdir': 'work'},
        'fingerprint': {'p': 64},
        'synthetic': {'kind': 'clustered', 'p': 64, 'n_labelled_pool': 1500, 'n_unlabelled': 3000,
                      'active_fraction': 0.05, 'cluster_fraction': 0.05, 'n_clusters': 4, 'flip_prob': 0.03,
                      'segment_count': 5},
        'sampler': {'k': 2, 'm': 1000, 'delta_weight': 0.7, 'bin_width': 0.1},
        'prior': {'grid_points': 51},
        'degradation': {'max_targets': 40, 'min_training_size': 20, 'n_starts': 4},
        'covariance': {'min_pairs': 20},
        'mixture': {'n_starts': 2},
        'scoring': {'threshold': 2.0},
        'seed': 3
    }
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(config), encoding='utf-8')
    return path
