import numpy as np
import pytest
from numpy.testing import assert_array_equal

from domainrank.exceptions import DimensionError, DomainError
from domainrank.fingerprints import (Fingerprint, as_matrix, batch_setwise_distances, paired_distances,
                                     pairwise_distances, popcounts, random_fingerprints, setwise_distance,
                                     tanimoto_distance)


def fp(bits: str) -> Fingerprint:
    return Fingerprint.from_bits([int(b) for b in bits])


def test_bit_order():
    assert fp('10000000').packed == b'\x80'
    assert fp('00000001').to_hex() == '01'


def test_hex_round_trip():
    x = Fingerprint.from_hex('a0ff', 16)
    assert x.p == 16
    assert x.to_hex() == 'a0ff'
    assert x.popcount() == 10


def test_from_hex_rejects_bad_input():
    with pytest.raises(ValueError):
        Fingerprint.from_hex('zz')
    with pytest.raises(DimensionError):
        Fingerprint.from_hex('a0', 16)


def test_length_must_be_multiple_of_eight():
    with pytest.raises(DimensionError):
        Fingerprint.from_bits([1, 0, 1])


@pytest.mark.parametrize('a, b, expected', [
    ('11000000', '10100000', 2 / 3),
    ('11000000', '11000000', 0.0),
    ('11000000', '00110000', 1.0),
    ('00000000', '00000000', 0.0),
])
def test_tanimoto_distance(a, b, expected):
    assert tanimoto_distance(fp(a), fp(b)) == pytest.approx(expected)
    assert tanimoto_distance(fp(b), fp(a)) == pytest.approx(expected)


def test_tanimoto_length_mismatch():
    with pytest.raises(DimensionError):
        tanimoto_distance(fp('11000000'), fp('1100000011000000'))


def test_setwise_distance():
    x = fp('11000000')
    assert setwise_distance(x, [fp('10100000'), fp('00110000')]) == pytest.approx(2 / 3)
    assert setwise_distance(x, [fp('00110000'), x]) == 0.0
    assert setwise_distance(x, [fp('00000000')]) == 1.0


def test_setwise_distance_to_empty_set():
    with pytest.raises(DomainError):
        setwise_distance(fp('11000000'), [])
    with pytest.raises(DomainError):
        batch_setwise_distances(as_matrix([fp('11000000')]), np.empty((0, 1), dtype=np.uint8))


def test_batch_matches_double_loop(rng):
    queries = random_fingerprints(60, 32, 0.3, rng)
    refs = random_fingerprints(45, 32, 0.3, rng)
    naive = [min(tanimoto_distance(Fingerprint(q.tobytes()), Fingerprint(r.tobytes())) for r in refs)
             for q in queries]
    assert_array_equal(batch_setwise_distances(queries, refs), naive)


def test_batch_single_query_and_self(rng):
    refs = random_fingerprints(30, 64, 0.4, rng)
    x = Fingerprint(random_fingerprints(1, 64, 0.4, rng)[0].tobytes())
    assert batch_setwise_distances(x, refs)[0] == setwise_distance(x, refs)
    assert_array_equal(batch_setwise_distances(refs, refs), np.zeros(30))


def test_batch_does_not_depend_on_n_jobs(rng):
    queries = random_fingerprints(1500, 32, 0.3, rng)
    refs = random_fingerprints(20, 32, 0.3, rng)
    assert_array_equal(batch_setwise_distances(queries, refs, n_jobs=2), batch_setwise_distances(queries, refs))


def test_pairwise_and_paired_agree(rng):
    a = random_fingerprints(10, 16, 0.5, rng)
    b = random_fingerprints(10, 16, 0.5, rng)
    assert_array_equal(np.diag(pairwise_distances(a, b)), paired_distances(a, b))


def test_mixed_lengths_rejected():
    with pytest.raises(DimensionError):
        as_matrix([fp('11000000'), fp('1100000011000000')])
    with pytest.raises(DimensionError):
        batch_setwise_distances(as_matrix([fp('11000000')]), as_matrix([fp('1100000011000000')]))


def test_popcounts(rng):
    matrix = random_fingerprints(5, 64, 0.5, rng)
    assert_array_equal(popcounts(matrix), np.unpackbits(matrix, axis=1).sum(axis=1))


def test_metric_properties_on_random_triples():
    rng = np.random.default_rng(21)
    a, b, c = (random_fingerprints(20000, 128, density, rng) for density in (0.1, 0.3, 0.5))
    ab, ba, bc, ac = paired_distances(a, b), paired_distances(b, a), paired_distances(b, c), paired_distances(a, c)
    assert ab.min() >= 0.0 and ab.max() <= 1.0
    assert_array_equal(ab, ba)
    assert_array_equal(paired_distances(a, a), 0.0)
    assert np.all(ac <= ab + bc + 1e-12)
