"""fingerprints.py
Fingerprint submodule of domainrank. Binary fingerprints stored byte-packed
(most significant bit first) and Tanimoto distance kernels over them.

Distances are computed from integer popcounts as (|a u b| - |a n b|) / |a u b|,
a single correctly rounded division, so the scalar and the batch kernels agree
bit for bit.
"""
import logging
import re

import numpy as np
from joblib import Parallel, delayed

from .exceptions import DimensionError, DomainError
from .resources.constants import DEFAULT_FINGERPRINT_LENGTH

logger = logging.getLogger(__name__)

_POPCOUNT_TABLE = np.array([bin(i).count('1') for i in range(256)], dtype=np.int64)
_HEX_PATTERN = re.compile(r'[0-9a-f]*')

# Query rows x reference rows evaluated per block
_BLOCK_QUERIES = 1024
_BLOCK_REFS = 4096


class Fingerprint:
    """Fingerprint

    Immutable fixed-length binary vector. Bit j lives in byte j // 8 at bit
    position 7 - j % 8.
    @:arg packed    bytes: Packed bits, p / 8 bytes.
    @:arg p         int: Number of bits. Defaults to 8 * len(packed).
    """
    __slots__ = ('_packed', 'p')

    def __init__(self, packed, p: int = None):
        data = bytes(packed)
        if p is None:
            p = 8 * len(data)
        if p <= 0 or p % 8 != 0:
            raise DimensionError(f'Fingerprint length must be a positive multiple of 8, got {p}.')
        if len(data) * 8 != p:
            raise DimensionError(f'Expected {p // 8} bytes for a {p}-bit fingerprint, got {len(data)}.')
        self._packed = data
        self.p = p

    @classmethod
    def from_hex(cls, text: str, p: int = None) -> 'Fingerprint':
        """Parses the lowercase hex encoding (p / 4 characters)."""
        if not isinstance(text, str) or _HEX_PATTERN.fullmatch(text) is None or len(text) % 2:
            raise ValueError(f'Invalid fingerprint encoding: {text!r}')
        if p is not None and len(text) != p // 4:
            raise DimensionError(f'Expected {p // 4} hex characters for a {p}-bit fingerprint, got {len(text)}.')
        return cls(bytes.fromhex(text), p)

    @classmethod
    def from_bits(cls, bits) -> 'Fingerprint':
        bits = np.asarray(bits, dtype=np.uint8).ravel()
        if bits.size == 0 or bits.size % 8:
            raise DimensionError(f'Fingerprint length must be a positive multiple of 8, got {bits.size}.')
        if (bits > 1).any():
            raise ValueError('Fingerprint bits must be 0 or 1.')
        return cls(np.packbits(bits).tobytes(), bits.size)

    @property
    def packed(self) -> bytes:
        return self._packed

    @property
    def array(self) -> np.ndarray:
        return np.frombuffer(self._packed, dtype=np.uint8)

    def bits(self) -> np.ndarray:
        return np.unpackbits(self.array)

    def popcount(self) -> int:
        return int(_POPCOUNT_TABLE[self.array].sum())

    def to_hex(self) -> str:
        return self._packed.hex()

    def __eq__(self, other) -> bool:
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return self.p == other.p and self._packed == other._packed

    def __hash__(self) -> int:
        return hash((self.p, self._packed))

    def __len__(self) -> int:
        return self.p

    def __str__(self) -> str:
        return self.to_hex()

    def __repr__(self) -> str:
        return f'Fingerprint({self.to_hex()!r}, p={self.p})'


def as_matrix(fingerprints) -> np.ndarray:
    """Returns fingerprints as a C-contiguous uint8 matrix of shape (n, p / 8).

    Accepts a single Fingerprint, a sequence of Fingerprint objects or an
    already packed 2-d uint8 array.
    """
    if isinstance(fingerprints, Fingerprint):
        return fingerprints.array.reshape(1, -1)
    if isinstance(fingerprints, np.ndarray):
        if fingerprints.ndim != 2 or fingerprints.dtype != np.uint8:
            raise DimensionError(f'Packed fingerprints must be a 2-d uint8 array, got {fingerprints.dtype} '
                                 f'with shape {fingerprints.shape}.')
        return np.ascontiguousarray(fingerprints)
    rows = list(fingerprints)
    if not rows:
        return np.empty((0, 0), dtype=np.uint8)
    lengths = {fp.p for fp in rows}
    if len(lengths) > 1:
        raise DimensionError(f'Fingerprints of different lengths combined: {sorted(lengths)}')
    return np.vstack([fp.array for fp in rows])


def from_matrix(matrix: np.ndarray) -> list:
    """Inverse of as_matrix for a packed array."""
    return [Fingerprint(row.tobytes()) for row in matrix]


def fingerprint_length(matrix: np.ndarray) -> int:
    return matrix.shape[1] * 8


def unpack_bits(fingerprints, dtype=np.uint8) -> np.ndarray:
    """Expands packed fingerprints into an (n, p) 0/1 matrix."""
    return np.unpackbits(as_matrix(fingerprints), axis=1).astype(dtype, copy=False)


def popcounts(fingerprints) -> np.ndarray:
    return _POPCOUNT_TABLE[as_matrix(fingerprints)].sum(axis=1)


def row_keys(fingerprints) -> list:
    """Hashable byte keys, one per fingerprint row, for equality lookups."""
    return [row.tobytes() for row in as_matrix(fingerprints)]


def _check_dims(a: np.ndarray, b: np.ndarray):
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f'Fingerprint length mismatch: {a.shape[1] * 8} vs {b.shape[1] * 8} bits.')


def tanimoto_counts(a: Fingerprint, b: Fingerprint) -> tuple:
    """Returns (|a n b|, |a u b|) as exact integers."""
    if a.p != b.p:
        raise DimensionError(f'Fingerprint length mismatch: {a.p} vs {b.p} bits.')
    ia = int.from_bytes(a.packed, 'big')
    ib = int.from_bytes(b.packed, 'big')
    return bin(ia & ib).count('1'), bin(ia | ib).count('1')


def _ratio(intersection, union):
    with np.errstate(divide='ignore', invalid='ignore'):
        distance = (union - intersection) / union
    return np.where(union == 0, 0.0, distance)


def tanimoto_distance(a: Fingerprint, b: Fingerprint) -> float:
    """Tanimoto (Jaccard) distance 1 - |a n b| / |a u b|.

    Two all-zero fingerprints are identical and at distance 0.
    """
    intersection, union = tanimoto_counts(a, b)
    if union == 0:
        return 0.0
    return (union - intersection) / union


class _BitBlock:
    """Unpacked float32 bits and popcounts of a packed matrix.

    0/1 products summed in float32 are exact integers for p < 2**24.
    """

    def __init__(self, matrix: np.ndarray):
        self.bits = np.unpackbits(matrix, axis=1).astype(np.float32)
        self.counts = _POPCOUNT_TABLE[matrix].sum(axis=1)

    def distances_to(self, other: '_BitBlock', rows=slice(None), cols=slice(None)) -> np.ndarray:
        intersection = np.rint(self.bits[rows] @ other.bits[cols].T).astype(np.int64)
        union = self.counts[rows][:, None] + other.counts[cols][None, :] - intersection
        return _ratio(intersection, union)


def _min_distances(query_matrix: np.ndarray, ref_block: _BitBlock) -> np.ndarray:
    queries = _BitBlock(query_matrix)
    n_refs = ref_block.counts.shape[0]
    best = np.ones(query_matrix.shape[0], dtype=float)
    for start in range(0, n_refs, _BLOCK_REFS):
        block = queries.distances_to(ref_block, cols=slice(start, start + _BLOCK_REFS))
        np.minimum(best, block.min(axis=1), out=best)
    return best


def setwise_distance(x: Fingerprint, refs) -> float:
    """Distance from x to its nearest neighbour in refs."""
    ref_matrix = as_matrix(refs)
    if ref_matrix.shape[0] == 0:
        raise DomainError('Setwise distance to an empty reference set is undefined.')
    return float(batch_setwise_distances(as_matrix(x), ref_matrix)[0])


def batch_setwise_distances(queries, refs, n_jobs: int = 1) -> np.ndarray:
    """Setwise distance of every query to refs.

    :param queries: Fingerprints to measure.
    :param refs: Non-empty reference set.
    :param n_jobs: joblib workers over blocks of queries. The result does not
        depend on the value.
    :return: float64 array with one distance per query.
    """
    query_matrix = as_matrix(queries)
    ref_matrix = as_matrix(refs)
    if ref_matrix.shape[0] == 0:
        raise DomainError('Setwise distance to an empty reference set is undefined.')
    if query_matrix.shape[0] == 0:
        return np.empty(0, dtype=float)
    _check_dims(query_matrix, ref_matrix)

    ref_block = _BitBlock(ref_matrix)
    starts = range(0, query_matrix.shape[0], _BLOCK_QUERIES)
    if n_jobs == 1 or len(starts) == 1:
        parts = [_min_distances(query_matrix[s:s + _BLOCK_QUERIES], ref_block) for s in starts]
    else:
        parts = Parallel(n_jobs=n_jobs)(delayed(_min_distances)(query_matrix[s:s + _BLOCK_QUERIES], ref_block)
                                        for s in starts)
    return np.concatenate(parts)


def pairwise_distances(queries, refs) -> np.ndarray:
    """Full (n_queries, n_refs) Tanimoto distance matrix."""
    query_matrix = as_matrix(queries)
    ref_matrix = as_matrix(refs)
    if query_matrix.shape[0] == 0 or ref_matrix.shape[0] == 0:
        return np.empty((query_matrix.shape[0], ref_matrix.shape[0]), dtype=float)
    _check_dims(query_matrix, ref_matrix)
    return _BitBlock(query_matrix).distances_to(_BitBlock(ref_matrix))


def paired_distances(left, right) -> np.ndarray:
    """Distance between left[i] and right[i] for every row i."""
    left_matrix = as_matrix(left)
    right_matrix = as_matrix(right)
    _check_dims(left_matrix, right_matrix)
    if left_matrix.shape[0] != right_matrix.shape[0]:
        raise DimensionError(f'Row count mismatch: {left_matrix.shape[0]} vs {right_matrix.shape[0]}.')
    intersection = _POPCOUNT_TABLE[left_matrix & right_matrix].sum(axis=1)
    union = _POPCOUNT_TABLE[left_matrix | right_matrix].sum(axis=1)
    return _ratio(intersection, union)


def random_fingerprints(n: int, p: int = DEFAULT_FINGERPRINT_LENGTH, density: float = 0.5,
                        rng: np.random.Generator = None) -> np.ndarray:
    """Packed matrix of n random fingerprints with each bit set with probability `density`."""
    if p <= 0 or p % 8:
        raise DimensionError(f'Fingerprint length must be a positive multiple of 8, got {p}.')
    rng = np.random.default_rng() if rng is None else rng
    bits = (rng.random((n, p)) < density).astype(np.uint8)
    return np.packbits(bits, axis=1)
