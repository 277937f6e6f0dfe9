"""dataset.py
Dataset submodule of domainrank. Reads labelled (active) and unlabelled
compound files, removes unlabelled compounds that duplicate a labelled
fingerprint and standardizes activities.

Labelled CSV header: id,fingerprint,activity
Unlabelled CSV header: id,fingerprint (one file per segment, in order)
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from warnings import warn

import numpy as np
import pandas as pd

from .exceptions import DegenerateDataError, DimensionError, DomainError, IngestionError
from .fingerprints import Fingerprint, as_matrix, fingerprint_length, row_keys
from .resources.path_builder import segment_filename

logger = logging.getLogger(__name__)

LABELLED_COLUMNS = ['id', 'fingerprint', 'activity']
UNLABELLED_COLUMNS = ['id', 'fingerprint']


class LabelledCompound:
    """LabelledCompound

    Class used to wrap up one labelled row so it can be accessed via attributes.
    @:arg compound_id   str: Compound identifier.
    @:arg fp            Fingerprint: The compound's fingerprint.
    @:arg activity      float: pIC50 (or standardized activity).
    """
    def __init__(self, compound_id: str, fp: Fingerprint, activity: float):
        self.id = compound_id
        self.fp = fp
        self.activity = activity

    def __str__(self) -> str:
        return f'{{"id": {self.id},\n"fingerprint": {self.fp.to_hex()},\n"activity": {self.activity}}}'

    def __repr__(self) -> str:
        return str({"id": self.id, "fingerprint": self.fp.to_hex(), "activity": self.activity})


class LabelledSet:
    """LabelledSet

    Active compounds with their activities, stored column-wise.
    @:arg ids               sequence of str: Unique compound ids.
    @:arg fingerprints      packed uint8 matrix or sequence of Fingerprint.
    @:arg activities        sequence of float, all >= l_min.
    @:arg l_min             float: Activity reporting cutoff.
    @:arg screened_count    int or None: Size of the screened library (n').
    """
    def __init__(self, ids, fingerprints, activities, l_min: float = -np.inf, screened_count: int = None):
        self.ids = [str(i) for i in ids]
        self.fingerprints = as_matrix(fingerprints)
        self.activities = np.asarray(activities, dtype=float).copy()
        self.l_min = float(l_min)
        self.screened_count = None if screened_count is None else int(screened_count)

        n = len(self.ids)
        if self.fingerprints.shape[0] != n or self.activities.shape != (n,):
            raise DomainError(f'Column lengths differ: {n} ids, {self.fingerprints.shape[0]} fingerprints, '
                              f'{self.activities.size} activities.')
        if len(set(self.ids)) != n:
            raise DomainError('Compound ids must be unique.')
        if not np.isfinite(self.activities).all():
            raise DomainError('Activities must be finite.')
        if (self.activities < self.l_min).any():
            raise DomainError(f'Activities below l_min={self.l_min} are not allowed in a labelled set.')
        if self.screened_count is not None and self.screened_count <= 0:
            raise DomainError(f'screened_count must be positive, got {self.screened_count}.')

    @property
    def p(self) -> int:
        return fingerprint_length(self.fingerprints) if len(self) else 0

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self):
        for i in range(len(self)):
            yield self[i]

    def __getitem__(self, index: int) -> LabelledCompound:
        return LabelledCompound(self.ids[index], Fingerprint(self.fingerprints[index].tobytes()),
                                float(self.activities[index]))

    def subset(self, selection) -> 'LabelledSet':
        """Returns the compounds picked by a boolean mask or an index array, same metadata."""
        index = np.flatnonzero(selection) if np.asarray(selection).dtype == bool else np.asarray(selection, dtype=int)
        return LabelledSet([self.ids[i] for i in index], self.fingerprints[index], self.activities[index],
                           self.l_min, self.screened_count)

    def with_activities(self, activities, l_min: float = None) -> 'LabelledSet':
        return LabelledSet(self.ids, self.fingerprints, activities, self.l_min if l_min is None else l_min,
                           self.screened_count)

    def __repr__(self) -> str:
        return f'LabelledSet(n={len(self)}, p={self.p}, l_min={self.l_min}, screened_count={self.screened_count})'


class UnlabelledPool:
    """UnlabelledPool

    Unlabelled compounds tagged with the index of the file (segment) they came from.
    @:arg ids               sequence of str
    @:arg fingerprints      packed uint8 matrix or sequence of Fingerprint
    @:arg segments          sequence of int in [0, segment_count)
    @:arg segment_count     int: Number of segments, including empty ones.
    @:arg n_removed         int: Compounds dropped as duplicates of labelled fingerprints.
    """
    def __init__(self, ids, fingerprints, segments, segment_count: int, n_removed: int = 0):
        self.ids = [str(i) for i in ids]
        self.fingerprints = as_matrix(fingerprints)
        self.segments = np.asarray(segments, dtype=np.int64).copy()
        self.segment_count = int(segment_count)
        self.n_removed = int(n_removed)

        n = len(self.ids)
        if self.fingerprints.shape[0] != n or self.segments.shape != (n,):
            raise DomainError('Column lengths differ in unlabelled pool.')
        if n and (self.segments.min() < 0 or self.segments.max() >= self.segment_count):
            raise DomainError(f'Segments must lie in [0, {self.segment_count}).')

    @property
    def p(self) -> int:
        return fingerprint_length(self.fingerprints) if len(self) else 0

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, selection) -> 'UnlabelledPool':
        index = np.flatnonzero(selection) if np.asarray(selection).dtype == bool else np.asarray(selection, dtype=int)
        return UnlabelledPool([self.ids[i] for i in index], self.fingerprints[index], self.segments[index],
                              self.segment_count, self.n_removed)

    def segment_sizes(self) -> np.ndarray:
        return np.bincount(self.segments, minlength=self.segment_count)

    def __repr__(self) -> str:
        return f'UnlabelledPool(n={len(self)}, segments={self.segment_count}, removed={self.n_removed})'


@dataclass(frozen=True)
class ActivityTransform:
    """Affine map between raw and standardized activities."""
    mean: float
    sd: float

    def __post_init__(self):
        if not self.sd > 0:
            raise DegenerateDataError(f'Standardization needs sd > 0, got {self.sd}.')

    def apply(self, values):
        return (np.asarray(values, dtype=float) - self.mean) / self.sd

    def invert(self, values):
        return np.asarray(values, dtype=float) * self.sd + self.mean

    def to_dict(self) -> dict:
        return {'mean': self.mean, 'sd': self.sd}

    @classmethod
    def from_dict(cls, data: dict) -> 'ActivityTransform':
        return cls(float(data['mean']), float(data['sd']))


@dataclass
class IngestionReport:
    path: str
    n_read: int
    n_accepted: int
    rejected_ids: list = field(default_factory=list)

    @property
    def n_rejected(self) -> int:
        return len(self.rejected_ids)


def _read_table(path, columns: list) -> pd.DataFrame:
    path = Path(path)
    frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8-sig')
    header = [c.strip() for c in frame.columns]
    if header != columns:
        raise IngestionError(path, 1, f'expected header {",".join(columns)}, got {",".join(header)}')
    frame.columns = columns
    return frame


def _parse_fingerprints(path, column: pd.Series, p: int = None) -> np.ndarray:
    if column.empty:
        return np.empty((0, 0 if p is None else p // 8), dtype=np.uint8)
    if p is None:
        p = 4 * len(column.iloc[0])
        if p == 0 or p % 8:
            raise IngestionError(path, 2, f'fingerprint {column.iloc[0]!r} does not encode a multiple of 8 bits')
    bad = ~column.str.fullmatch(f'[0-9a-f]{{{p // 4}}}')
    if bad.any():
        row = int(np.flatnonzero(bad.to_numpy())[0])
        raise IngestionError(path, row + 2, f'malformed {p}-bit fingerprint {column.iloc[row]!r}')
    return np.frombuffer(bytes.fromhex(''.join(column)), dtype=np.uint8).reshape(len(column), p // 8).copy()


def _check_ids(path, ids: pd.Series, seen: set = None):
    seen = set() if seen is None else seen
    for row, compound_id in enumerate(ids):
        if compound_id == '':
            raise IngestionError(path, row + 2, 'empty id')
        if compound_id in seen:
            raise IngestionError(path, row + 2, f'duplicate id {compound_id!r}')
        seen.add(compound_id)
    return seen


def load_labelled(path, l_min: float = -np.inf, screened_count: int = None, p: int = None) -> LabelledSet:
    """Reads a labelled CSV.

    Rows with activity below l_min are rejected (warned about and listed on
    the returned set's `report`); the boundary is inclusive.

    :param path: CSV with header id,fingerprint,activity.
    :param l_min: Activity reporting cutoff.
    :param screened_count: Size of the screened library, if known.
    :param p: Expected fingerprint length; inferred from the first row when None.
    :return: LabelledSet with an IngestionReport attached as `.report`.
    """
    frame = _read_table(path, LABELLED_COLUMNS)
    _check_ids(path, frame['id'])
    fingerprints = _parse_fingerprints(path, frame['fingerprint'], p)

    activities = pd.to_numeric(frame['activity'], errors='coerce').to_numpy(dtype=float)
    bad = ~np.isfinite(activities)
    if bad.any():
        row = int(np.flatnonzero(bad)[0])
        raise IngestionError(path, row + 2, f'activity {frame["activity"].iloc[row]!r} is not a finite number')

    keep = activities >= l_min
    ids = frame['id'].tolist()
    report = IngestionReport(str(path), len(ids), int(keep.sum()), [ids[i] for i in np.flatnonzero(~keep)])
    if report.n_rejected:
        warn(f'{report.n_rejected} of {report.n_read} rows in {path} have activity below l_min={l_min}'
             f' and were rejected.')
    logger.info('Loaded %d labelled compounds from %s (%d rejected)', report.n_accepted, path, report.n_rejected)

    labelled = LabelledSet([ids[i] for i in np.flatnonzero(keep)], fingerprints[keep], activities[keep], l_min,
                           screened_count)
    labelled.report = report
    return labelled


def load_unlabelled(paths, labelled: LabelledSet, p: int = None) -> UnlabelledPool:
    """Reads unlabelled CSVs, file i becoming segment i, and drops compounds
    whose fingerprint equals a labelled fingerprint.

    :param paths: Ordered list of CSV files with header id,fingerprint.
    :param labelled: Labelled set to deduplicate against.
    :param p: Expected fingerprint length; defaults to the labelled set's.
    :return: UnlabelledPool whose `n_removed` holds the duplicate count.
    """
    paths = list(paths)
    if not paths:
        raise DomainError('At least one unlabelled file is required.')
    if p is None and len(labelled):
        p = labelled.p

    ids, matrices, segments, seen = [], [], [], set()
    for segment, path in enumerate(paths):
        frame = _read_table(path, UNLABELLED_COLUMNS)
        _check_ids(path, frame['id'], seen)
        matrix = _parse_fingerprints(path, frame['fingerprint'], p)
        if len(frame) and p is None:
            p = fingerprint_length(matrix)
        ids.extend(frame['id'].tolist())
        matrices.append(matrix)
        segments.append(np.full(len(frame), segment, dtype=np.int64))

    non_empty = [m for m in matrices if m.shape[0]]
    fingerprints = np.vstack(non_empty) if non_empty else np.empty((0, (p or 0) // 8), dtype=np.uint8)
    if len(labelled) and fingerprints.shape[0] and fingerprints.shape[1] != labelled.fingerprints.shape[1]:
        raise DimensionError(f'Unlabelled fingerprints have {fingerprints.shape[1] * 8} bits, '
                             f'labelled have {labelled.p}.')

    labelled_keys = set(row_keys(labelled.fingerprints)) if len(labelled) else set()
    keep = np.array([key not in labelled_keys for key in row_keys(fingerprints)], dtype=bool)
    n_removed = int((~keep).sum())
    logger.info('Loaded %d unlabelled compounds from %d files; removed %d duplicates of labelled fingerprints',
                len(ids), len(paths), n_removed)
    return UnlabelledPool([ids[i] for i in np.flatnonzero(keep)], fingerprints[keep],
                          np.concatenate(segments)[keep], len(paths), n_removed)


def standardize_activities(labelled: LabelledSet) -> tuple:
    """Rescales activities to sample mean 0 and sample sd 1 (n - 1 denominator).

    :return: (standardized LabelledSet, ActivityTransform)
    """
    if len(labelled) < 2:
        raise DegenerateDataError(f'Standardization needs at least 2 compounds, got {len(labelled)}.')
    mean = float(np.mean(labelled.activities))
    sd = float(np.std(labelled.activities, ddof=1))
    if sd == 0.0:
        raise DegenerateDataError('All activities are equal; cannot standardize.')
    transform = ActivityTransform(mean, sd)
    standardized = labelled.with_activities(transform.apply(labelled.activities),
                                            float(transform.apply(labelled.l_min)))
    return standardized, transform


def write_labelled(labelled: LabelledSet, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame({'id': labelled.ids,
                          'fingerprint': [row.tobytes().hex() for row in labelled.fingerprints],
                          'activity': [repr(float(a)) for a in labelled.activities]})
    frame.to_csv(path, index=False, lineterminator='\n')


def write_unlabelled(pool: UnlabelledPool, directory) -> list:
    """Writes one CSV per segment (empty segments included) and returns the paths in order."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    hex_rows = np.array([row.tobytes().hex() for row in pool.fingerprints], dtype=object)
    ids = np.array(pool.ids, dtype=object)
    paths = []
    for segment in range(pool.segment_count):
        mask = pool.segments == segment
        path = directory / segment_filename(segment)
        pd.DataFrame({'id': ids[mask], 'fingerprint': hex_rows[mask]}).to_csv(path, index=False,
                                                                             lineterminator='\n')
        paths.append(path)
    return paths
