import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from domainrank.dataset import (LabelledSet, load_labelled, load_unlabelled, standardize_activities, write_labelled,
                                write_unlabelled)
from domainrank.exceptions import DegenerateDataError, DomainError, IngestionError


def write_csv(path, header, rows):
    path.write_text('\n'.join([header] + rows) + '\n', encoding='utf-8')
    return path


@pytest.fixture
def labelled_csv(tmp_path):
    return write_csv(tmp_path / 'labelled.csv', 'id,fingerprint,activity',
                     ['a,c000,7.1', 'b,a000,6.0', 'c,0300,5.5', 'd,ffff,6.5'])


def test_load_labelled(labelled_csv):
    labelled = load_labelled(labelled_csv)
    assert labelled.ids == ['a', 'b', 'c', 'd']
    assert labelled.p == 16
    assert_allclose(labelled.activities, [7.1, 6.0, 5.5, 6.5])
    assert labelled[0].fp.to_hex() == 'c000'
    assert labelled.report.n_rejected == 0


def test_rows_below_l_min_are_rejected_inclusive_boundary(labelled_csv):
    with pytest.warns(UserWarning, match='below l_min'):
        labelled = load_labelled(labelled_csv, l_min=6.0)
    assert labelled.ids == ['a', 'b', 'd']
    assert labelled.report.rejected_ids == ['c']


def test_single_row_at_l_min_is_accepted(tmp_path):
    labelled = load_labelled(write_csv(tmp_path / 'one.csv', 'id,fingerprint,activity', ['x,ff,5.0']), l_min=5.0)
    assert len(labelled) == 1


def test_malformed_fingerprint(tmp_path):
    path = write_csv(tmp_path / 'bad.csv', 'id,fingerprint,activity', ['a,ff,1.0', 'b,zz,2.0'])
    with pytest.raises(IngestionError) as error:
        load_labelled(path)
    assert error.value.row == 3


def test_wrong_length_fingerprint(tmp_path):
    path = write_csv(tmp_path / 'bad.csv', 'id,fingerprint,activity', ['a,ff,1.0'])
    with pytest.raises(IngestionError):
        load_labelled(path, p=16)


def test_bad_header(tmp_path):
    with pytest.raises(IngestionError):
        load_labelled(write_csv(tmp_path / 'bad.csv', 'id,fp,activity', ['a,ff,1.0']))


def test_duplicate_id(tmp_path):
    with pytest.raises(IngestionError, match='duplicate'):
        load_labelled(write_csv(tmp_path / 'dup.csv', 'id,fingerprint,activity', ['a,ff,1.0', 'a,0f,2.0']))


def test_non_numeric_activity(tmp_path):
    with pytest.raises(IngestionError):
        load_labelled(write_csv(tmp_path / 'nan.csv', 'id,fingerprint,activity', ['a,ff,high']))


def test_load_unlabelled_removes_labelled_duplicates(tmp_path, labelled_csv):
    labelled = load_labelled(labelled_csv)
    first = write_csv(tmp_path / 'pool_0.csv', 'id,fingerprint', ['p1,c000', 'p2,0001', 'p3,a000'])
    second = write_csv(tmp_path / 'pool_1.csv', 'id,fingerprint', ['p4,ffff', 'p5,0002'])
    pool = load_unlabelled([first, second], labelled)
    assert pool.n_removed == 3
    assert pool.ids == ['p2', 'p5']
    assert_array_equal(pool.segments, [0, 1])
    assert pool.segment_count == 2


def test_load_unlabelled_needs_files(labelled_csv):
    with pytest.raises(DomainError):
        load_unlabelled([], load_labelled(labelled_csv))


def test_ids_unique_across_pool_files(tmp_path, labelled_csv):
    first = write_csv(tmp_path / 'pool_0.csv', 'id,fingerprint', ['p1,0001'])
    second = write_csv(tmp_path / 'pool_1.csv', 'id,fingerprint', ['p1,0002'])
    with pytest.raises(IngestionError):
        load_unlabelled([first, second], load_labelled(labelled_csv))


def test_standardize_activities():
    labelled = LabelledSet(['a', 'b', 'c'], np.zeros((3, 1), dtype=np.uint8), [1.0, 2.0, 3.0], l_min=0.0)
    standardized, transform = standardize_activities(labelled)
    assert_allclose(standardized.activities, [-1.0, 0.0, 1.0])
    assert (transform.mean, transform.sd) == (2.0, 1.0)
    assert standardized.l_min == -2.0
    assert_allclose(transform.invert(standardized.activities), labelled.activities)


def test_standardize_constant_activities():
    labelled = LabelledSet(['a', 'b'], np.zeros((2, 1), dtype=np.uint8), [4.0, 4.0])
    with pytest.raises(DegenerateDataError):
        standardize_activities(labelled)


def test_labelled_set_validation():
    with pytest.raises(DomainError):
        LabelledSet(['a', 'a'], np.zeros((2, 1), dtype=np.uint8), [1.0, 2.0])
    with pytest.raises(DomainError):
        LabelledSet(['a'], np.zeros((1, 1), dtype=np.uint8), [1.0], l_min=2.0)


def test_written_files_load_back(tmp_path, random_labelled, random_pool):
    write_labelled(random_labelled, tmp_path / 'l.csv')
    paths = write_unlabelled(random_pool, tmp_path / 'pool')
    labelled = load_labelled(tmp_path / 'l.csv')
    assert_allclose(labelled.activities, random_labelled.activities, rtol=1e-12)
    pool = load_unlabelled(paths, labelled)
    assert [p.name for p in paths] == ['pool_000.csv', 'pool_001.csv', 'pool_002.csv']
    assert sorted(pool.ids) == sorted(random_pool.ids)
