"""utils.py
Utility functions shared by the other submodules: seed substreams, monotone
projection, hashing and small artifact writers.
"""

import hashlib
import json
import zlib
from pathlib import Path

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    return zlib.crc32(str(key).encode('utf-8'))


def derive_seed(seed: int, *keys) -> int:
    """Derives an independent integer seed for a named substream of `seed`.

    :param seed: Root seed.
    :param keys: Names or integers identifying the substream, e.g. ('degrade', 3).
    :return: Non-negative 32 bit integer.
    """
    sequence = np.random.SeedSequence([int(seed)] + [_key_to_int(k) for k in keys])
    return int(sequence.generate_state(1)[0])


def substream(seed: int, *keys) -> np.random.Generator:
    """Returns a Generator for the named substream of `seed`."""
    return np.random.default_rng(np.random.SeedSequence([int(seed)] + [_key_to_int(k) for k in keys]))


class _Block:
    """Contiguous run of the input handled as one pooled value."""

    def __init__(self, values, weights, index):
        self.start = index
        self.end = index + 1
        self.sum = values[index] * weights[index]
        self.weight_sum = weights[index]

    def merge_with_next_block(self, right):
        self.sum += right.sum
        self.weight_sum += right.weight_sum
        self.end = right.end

    def value(self):
        return self.sum / self.weight_sum


def pool_adjacent_violators(values, weights=None, increasing=True) -> np.ndarray:
    """Returns the weighted least squares monotone fit to `values`.

    :param values: Sequence to project.
    :param weights: Positive weights, defaults to ones.
    :param increasing: False for a non-increasing fit.
    :return: numpy array of the same length as `values`.
    """
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        return values.copy()
    if not increasing:
        return -pool_adjacent_violators(-values, weights, True)
    if weights is None:
        weights = np.ones_like(values)
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != values.shape:
            raise ValueError('Weights must be the same size as values.')
        if not (weights > 0).all():
            raise ValueError('Weights must be positive.')

    blocks = [_Block(values, weights, 0)]
    for index in range(1, len(values)):
        prev_block = blocks[-1]
        cur_block = _Block(values, weights, index)
        while prev_block is not None and prev_block.value() > cur_block.value():
            prev_block.merge_with_next_block(cur_block)
            cur_block = prev_block
            blocks.pop()
            prev_block = blocks[-1] if blocks else None
        blocks.append(cur_block)

    return np.repeat([b.value() for b in blocks], [b.end - b.start for b in blocks])


def bin_index(values, width: float) -> np.ndarray:
    """Index of the half-open bin [k*width, (k+1)*width) holding each value.

    Rounds the quotient to 9 decimals first so that e.g. 0.15 / 0.01 lands in bin 15.
    """
    return np.floor(np.round(np.asarray(values, dtype=float) / width, 9)).astype(np.int64)


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), default=_json_default)


def canonical_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode('utf-8')).hexdigest()


def file_hash(path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f'Object of type {type(obj).__name__} is not JSON serializable')


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(obj, handle, indent=2, sort_keys=True, default=_json_default)
        handle.write('\n')


def read_json(path):
    with open(path, encoding='utf-8') as handle:
        return json.load(handle)
