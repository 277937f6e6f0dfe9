"""regressors.py
Regressors submodule of domainrank. Ridge regression and random forest
regression over fingerprint bits, both fitted from scratch so that their
results are fully determined by (spec, data).
"""
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg

from .exceptions import ConfigError, DimensionError, DomainError
from .fingerprints import as_matrix, fingerprint_length
from .resources.constants import REGRESSOR_KINDS
from .resources.utils import substream

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class RegressorSpec:
    """Model kind and hyperparameters. Defaults follow scikit-learn 0.19."""
    kind: str = 'ridge'
    ridge_lambda: float = 1.0
    n_trees: int = 10
    max_features: Optional[Union[int, float]] = None
    min_samples_split: int = 2
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = field(default=1, compare=False)

    def __post_init__(self):
        if self.kind not in REGRESSOR_KINDS:
            raise ConfigError(f'Invalid regressor kind: {self.kind}. Supported values: {REGRESSOR_KINDS}')
        if self.ridge_lambda < 0:
            raise ConfigError(f'ridge_lambda must be >= 0, got {self.ridge_lambda}.')
        if self.n_trees < 1 or self.min_samples_split < 2:
            raise ConfigError('n_trees must be >= 1 and min_samples_split >= 2.')

    def to_dict(self) -> dict:
        data = asdict(self)
        data.pop('n_jobs')
        return data

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> 'RegressorSpec':
        values = dict(data)
        values.update(overrides)
        return cls(**values)


def _as_bits(fingerprints) -> np.ndarray:
    return np.unpackbits(as_matrix(fingerprints), axis=1)


class BaseRegressor:
    """Base class of the fingerprint regressors.
    Parent class of RidgeRegressor, RandomForestRegressor
    """
    kind = None

    def __init__(self, spec: RegressorSpec):
        self.spec = spec
        self.p = None

    def fit(self, fingerprints, y) -> 'BaseRegressor':
        matrix = as_matrix(fingerprints)
        y = np.asarray(y, dtype=float)
        if matrix.shape[0] != y.size:
            raise DomainError(f'{matrix.shape[0]} fingerprints but {y.size} responses.')
        if y.size < 2:
            raise DomainError(f'Fitting needs at least 2 compounds, got {y.size}.')
        self.p = fingerprint_length(matrix)
        self._fit(matrix, y)
        return self

    def predict(self, fingerprints) -> np.ndarray:
        if self.p is None:
            raise ConfigError('Model has not been fitted.')
        matrix = as_matrix(fingerprints)
        if matrix.shape[0] and fingerprint_length(matrix) != self.p:
            raise DimensionError(f'Model fitted on {self.p}-bit fingerprints, got {fingerprint_length(matrix)}.')
        if matrix.shape[0] == 0:
            return np.empty(0, dtype=float)
        return self._predict(matrix)

    def predict_one(self, fingerprint) -> float:
        return float(self.predict(fingerprint)[0])

    def _fit(self, matrix: np.ndarray, y: np.ndarray):
        raise NotImplementedError

    def _predict(self, matrix: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _parameters(self) -> dict:
        raise NotImplementedError

    def _load_parameters(self, data: dict):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {'format_version': MODEL_FORMAT_VERSION, 'spec': self.spec.to_dict(), 'p': self.p,
                'parameters': self._parameters()}

    def __repr__(self) -> str:
        return f'{type(self).__name__}(p={self.p}, spec={self.spec})'


class RidgeRegressor(BaseRegressor):
    """Minimizes ||y - Xw - b||^2 + lambda ||w||^2 with an unpenalized intercept.

    The intercept is removed by centering; the penalized normal equations are
    solved by Cholesky. With lambda = 0 the least squares problem is solved
    directly (minimum norm solution when X is rank deficient).
    """
    kind = 'ridge'

    def __init__(self, spec: RegressorSpec):
        super().__init__(spec)
        self.weights = None
        self.intercept = None

    def _fit(self, matrix, y):
        X = np.unpackbits(matrix, axis=1).astype(float)
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        yc = y - y_mean
        lam = self.spec.ridge_lambda
        if lam > 0:
            gram = Xc.T @ Xc
            gram[np.diag_indices_from(gram)] += lam
            self.weights = linalg.cho_solve(linalg.cho_factor(gram), Xc.T @ yc)
        else:
            self.weights = linalg.lstsq(Xc, yc)[0]
        self.intercept = float(y_mean - x_mean @ self.weights)

    def _predict(self, matrix):
        return np.unpackbits(matrix, axis=1).astype(float) @ self.weights + self.intercept

    def _parameters(self) -> dict:
        return {'weights': [float(w) for w in self.weights], 'intercept': self.intercept}

    def _load_parameters(self, data):
        self.weights = np.asarray(data['weights'], dtype=float)
        self.intercept = float(data['intercept'])


class RegressionTree:
    """Binary regression tree over 0/1 features, stored as parallel arrays.
    Leaves have feature -1; bit 0 goes left, bit 1 goes right.
    """
    def __init__(self, feature, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return self.value.size

    def predict(self, bits: np.ndarray) -> np.ndarray:
        node = np.zeros(bits.shape[0], dtype=np.int64)
        inner = self.feature[node] >= 0
        while inner.any():
            rows = np.flatnonzero(inner)
            current = node[rows]
            go_right = bits[rows, self.feature[current]] == 1
            node[rows] = np.where(go_right, self.right[current], self.left[current])
            inner = self.feature[node] >= 0
        return self.value[node]

    def to_dict(self) -> dict:
        return {'feature': self.feature.tolist(), 'left': self.left.tolist(), 'right': self.right.tolist(),
                'value': [float(v) for v in self.value]}

    @classmethod
    def from_dict(cls, data: dict) -> 'RegressionTree':
        return cls(data['feature'], data['left'], data['right'], data['value'])


def _n_split_features(max_features, p: int) -> int:
    if max_features is None:
        return p
    if isinstance(max_features, float):
        return max(1, int(max_features * p))
    return max(1, min(int(max_features), p))


def _grow_tree(bits: np.ndarray, y: np.ndarray, spec: RegressorSpec, tree_index: int) -> RegressionTree:
    """CART tree on a bootstrap resample, variance-reduction splits, lowest feature index on ties."""
    rng = substream(spec.seed, 'tree', tree_index)
    n, p = bits.shape
    sample = rng.integers(0, n, size=n) if spec.bootstrap else np.arange(n)
    n_features = _n_split_features(spec.max_features, p)

    feature, left, right, value = [], [], [], []

    def new_node() -> int:
        feature.append(-1)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(value) - 1

    stack = [(new_node(), sample)]
    while stack:
        node, rows = stack.pop()
        ys = y[rows]
        value[node] = float(ys.mean())
        if rows.size < spec.min_samples_split or ys.max() == ys.min():
            continue

        candidates = np.arange(p) if n_features == p else np.sort(rng.choice(p, n_features, replace=False))
        split = _best_split(bits[rows], ys, candidates)
        if split is None and n_features < p:
            split = _best_split(bits[rows], ys, np.arange(p))
        if split is None:
            continue

        on = bits[rows, split] == 1
        feature[node] = int(split)
        left[node] = new_node()
        right[node] = new_node()
        stack.append((right[node], rows[on]))
        stack.append((left[node], rows[~on]))
    return RegressionTree(feature, left, right, value)


def _best_split(node_bits: np.ndarray, ys: np.ndarray, candidates: np.ndarray):
    X = node_bits[:, candidates].astype(float)
    m = ys.size
    n_on = X.sum(axis=0)
    n_off = m - n_on
    valid = (n_on > 0) & (n_off > 0)
    if not valid.any():
        return None
    sum_on = ys @ X
    sum_off = ys.sum() - sum_on
    with np.errstate(divide='ignore', invalid='ignore'):
        score = np.where(valid, sum_on ** 2 / n_on + sum_off ** 2 / n_off, -np.inf)
    return candidates[int(np.argmax(score))]


class RandomForestRegressor(BaseRegressor):
    """Mean of n_trees CART regression trees.

    Rows are put into a canonical order (by fingerprint bytes, then response)
    before fitting and tree t draws from the substream (seed, t), so the fit
    does not depend on the input row order or on n_jobs.
    """
    kind = 'random_forest'

    def __init__(self, spec: RegressorSpec):
        super().__init__(spec)
        self.trees = []

    def _fit(self, matrix, y):
        keys = [y] + [matrix[:, j] for j in reversed(range(matrix.shape[1]))]
        order = np.lexsort(keys)
        bits = np.unpackbits(matrix[order], axis=1)
        y = y[order]
        if self.spec.n_jobs == 1:
            self.trees = [_grow_tree(bits, y, self.spec, t) for t in range(self.spec.n_trees)]
        else:
            self.trees = Parallel(n_jobs=self.spec.n_jobs)(delayed(_grow_tree)(bits, y, self.spec, t)
                                                           for t in range(self.spec.n_trees))
        logger.debug('Grew %d trees with %s nodes', len(self.trees), [t.n_nodes for t in self.trees])

    def tree_predictions(self, fingerprints) -> np.ndarray:
        """(n_trees, n) matrix of per-tree predictions."""
        bits = _as_bits(fingerprints)
        return np.vstack([tree.predict(bits) for tree in self.trees])

    def _predict(self, matrix):
        return self.tree_predictions(matrix).mean(axis=0)

    def _parameters(self) -> dict:
        return {'trees': [tree.to_dict() for tree in self.trees]}

    def _load_parameters(self, data):
        self.trees = [RegressionTree.from_dict(tree) for tree in data['trees']]


_REGRESSORS = {RidgeRegressor.kind: RidgeRegressor, RandomForestRegressor.kind: RandomForestRegressor}


def fit(spec: RegressorSpec, fingerprints, y) -> BaseRegressor:
    """Fits the regressor described by `spec` and returns the fitted model."""
    return _REGRESSORS[spec.kind](spec).fit(fingerprints, y)


def predict(model: BaseRegressor, fingerprint) -> float:
    return model.predict_one(fingerprint)


def model_from_dict(data: dict) -> BaseRegressor:
    if data.get('format_version') != MODEL_FORMAT_VERSION:
        raise ConfigError(f'Unsupported model format version: {data.get("format_version")}')
    spec = RegressorSpec.from_dict(data['spec'])
    model = _REGRESSORS[spec.kind](spec)
    model.p = int(data['p'])
    model._load_parameters(data['parameters'])
    return model


def save_model(model: BaseRegressor, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(model.to_dict(), handle)


def load_model(path) -> BaseRegressor:
    with open(path, encoding='utf-8') as handle:
        return model_from_dict(json.load(handle))
