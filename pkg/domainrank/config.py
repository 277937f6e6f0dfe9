"""config.py
Configuration submodule of domainrank. PipelineConfig mirrors the JSON config
file section by section; every key is checked against the dataclass fields
before any stage runs, and errors carry the JSON pointer of the offending key.
"""
import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import List, Optional, Union, get_args, get_origin, get_type_hints

from .exceptions import ConfigError
from .regressors import RegressorSpec
from .resources.constants import (BASE_RATE_MODES, CALIBRATION_REPEATS, COVARIANCE_BIN_WIDTH, COVARIANCE_MAX_PAIRS,
                                  COVARIANCE_MIN_PAIRS, DEFAULT_BACKGROUND_SIZE, DEFAULT_FINGERPRINT_LENGTH,
                                  DEFAULT_FOLDS, DEFAULT_GRID_POINTS, DEFAULT_MAX_TARGETS, DEFAULT_POOL_DELTA,
                                  DEFAULT_POOL_SIZE, DEFAULT_REPEATS, DEFAULT_SAMPLING_DELTA, DEFAULT_SPLITS,
                                  DEGRADATION_GRID_POINTS, LANDSCAPE_KINDS, MIN_BETA_PAIRS, MIN_TRAINING_SIZE,
                                  MIXTURE_STARTS, POOL_MODES, REGRESSOR_KINDS, SAMPLING_BIN_WIDTH, SCORE_VARIANTS,
                                  SMOOTH_STARTS)
from .resources.utils import canonical_hash, derive_seed

logger = logging.getLogger(__name__)


def _require(condition: bool, message: str, pointer: str):
    if not condition:
        raise ConfigError(message, pointer)


def _choice(value, choices, pointer: str):
    _require(value in choices, f'Invalid value: {value}. Supported values: {choices}', pointer)


@dataclass
class PathsConfig:
    labelled: Optional[str] = None
    unlabelled: List[str] = field(default_factory=list)
    workdir: str = 'work'

    def validate(self, pointer: str):
        pass


@dataclass
class FingerprintConfig:
    p: int = DEFAULT_FINGERPRINT_LENGTH

    def validate(self, pointer: str):
        _require(self.p > 0 and self.p % 8 == 0, f'Fingerprint length must be a positive multiple of 8, got {self.p}',
                 f'{pointer}/p')


@dataclass
class LabelledConfig:
    """l_min None means no reporting cutoff."""
    l_min: Optional[float] = None
    screened_count: Optional[int] = None

    def validate(self, pointer: str):
        if self.screened_count is not None:
            _require(self.screened_count > 0, 'screened_count must be positive', f'{pointer}/screened_count')

    @property
    def cutoff(self) -> float:
        return -math.inf if self.l_min is None else self.l_min


@dataclass
class SamplerConfig:
    v: int = DEFAULT_FOLDS
    k: int = DEFAULT_REPEATS
    delta_weight: float = DEFAULT_SAMPLING_DELTA
    m: int = DEFAULT_BACKGROUND_SIZE
    bin_width: float = SAMPLING_BIN_WIDTH

    def validate(self, pointer: str):
        _require(self.v >= 2, f'v must be >= 2, got {self.v}', f'{pointer}/v')
        _require(self.k >= 1, f'k must be >= 1, got {self.k}', f'{pointer}/k')
        _require(0.0 < self.delta_weight < 1.0, 'delta_weight must lie in (0, 1)', f'{pointer}/delta_weight')
        _require(self.m >= 1, f'm must be >= 1, got {self.m}', f'{pointer}/m')
        _require(0.0 < self.bin_width <= 1.0, 'bin_width must lie in (0, 1]', f'{pointer}/bin_width')


@dataclass
class PriorConfig:
    """gamma overrides the calibrated bandwidth. With bandwidth_study the
    bandwidth is the median over a study of sampling distances and repeats.
    """
    grid_points: int = DEFAULT_GRID_POINTS
    gamma: Optional[float] = None
    base_rate_mode: str = 'counts'
    bandwidth_study: bool = False
    study_deltas: Optional[List[float]] = None
    study_repeats: int = CALIBRATION_REPEATS

    def validate(self, pointer: str):
        _require(self.grid_points >= 2, 'grid_points must be >= 2', f'{pointer}/grid_points')
        if self.gamma is not None:
            _require(self.gamma > 0, 'gamma must be positive', f'{pointer}/gamma')
        _choice(self.base_rate_mode, BASE_RATE_MODES, f'{pointer}/base_rate_mode')
        _require(self.study_repeats >= 1, 'study_repeats must be >= 1', f'{pointer}/study_repeats')


@dataclass
class RegressorConfig:
    kind: str = 'ridge'
    ridge_lambda: float = 1.0
    n_trees: int = 10
    max_features: Optional[Union[int, float]] = None
    min_samples_split: int = 2
    bootstrap: bool = True

    def validate(self, pointer: str):
        _choice(self.kind, REGRESSOR_KINDS, f'{pointer}/kind')
        _require(self.ridge_lambda >= 0, 'ridge_lambda must be >= 0', f'{pointer}/ridge_lambda')
        _require(self.n_trees >= 1, 'n_trees must be >= 1', f'{pointer}/n_trees')
        _require(self.min_samples_split >= 2, 'min_samples_split must be >= 2', f'{pointer}/min_samples_split')

    def spec(self, seed: int, kind: str = None, n_jobs: int = 1) -> RegressorSpec:
        values = asdict(self)
        if kind is not None:
            values['kind'] = kind
        return RegressorSpec(seed=seed, n_jobs=n_jobs, **values)


@dataclass
class DegradationConfig:
    grid_points: int = DEGRADATION_GRID_POINTS
    max_targets: int = DEFAULT_MAX_TARGETS
    min_training_size: int = MIN_TRAINING_SIZE
    min_pairs: int = MIN_BETA_PAIRS
    n_starts: int = SMOOTH_STARTS

    def validate(self, pointer: str):
        _require(self.grid_points >= 4, 'grid_points must be >= 4', f'{pointer}/grid_points')
        _require(self.max_targets >= 1, 'max_targets must be >= 1', f'{pointer}/max_targets')
        _require(self.n_starts >= 1, 'n_starts must be >= 1', f'{pointer}/n_starts')


@dataclass
class CovarianceConfig:
    bin_width: float = COVARIANCE_BIN_WIDTH
    min_pairs: int = COVARIANCE_MIN_PAIRS
    max_pairs: int = COVARIANCE_MAX_PAIRS

    def validate(self, pointer: str):
        _require(0.0 < self.bin_width <= 1.0, 'bin_width must lie in (0, 1]', f'{pointer}/bin_width')
        _require(self.min_pairs >= 1, 'min_pairs must be >= 1', f'{pointer}/min_pairs')
        _require(self.max_pairs >= 1, 'max_pairs must be >= 1', f'{pointer}/max_pairs')


@dataclass
class MixtureConfig:
    n_starts: int = MIXTURE_STARTS

    def validate(self, pointer: str):
        _require(self.n_starts >= 1, 'n_starts must be >= 1', f'{pointer}/n_starts')


@dataclass
class ScoringConfig:
    """threshold is the activity cutoff I in the units of the labelled file."""
    threshold: Optional[float] = None
    variant: str = 'S3'
    mean_source: str = 'S1'

    def validate(self, pointer: str):
        _choice(self.variant, SCORE_VARIANTS, f'{pointer}/variant')
        _choice(self.mean_source, ('S1', 'S2'), f'{pointer}/mean_source')


@dataclass
class EvaluationConfig:
    """Benchmark grid. Each split is [q_train, q_test]; the S3 threshold of a split is its q_test."""
    splits: List[List[float]] = field(default_factory=lambda: [list(s) for s in DEFAULT_SPLITS])
    pool_modes: List[str] = field(default_factory=lambda: list(POOL_MODES))
    pool_size: int = DEFAULT_POOL_SIZE
    delta_ref: float = DEFAULT_POOL_DELTA
    models: List[str] = field(default_factory=lambda: list(REGRESSOR_KINDS))
    variants: List[str] = field(default_factory=lambda: list(SCORE_VARIANTS))

    def validate(self, pointer: str):
        for i, split in enumerate(self.splits):
            _require(len(split) == 2 and split[0] <= split[1], 'split must be [q_train, q_test] with q_train <= q_test',
                     f'{pointer}/splits/{i}')
        for i, mode in enumerate(self.pool_modes):
            _choice(mode, POOL_MODES, f'{pointer}/pool_modes/{i}')
        for i, kind in enumerate(self.models):
            _choice(kind, REGRESSOR_KINDS, f'{pointer}/models/{i}')
        for i, variant in enumerate(self.variants):
            _choice(variant, SCORE_VARIANTS, f'{pointer}/variants/{i}')
        _require(self.pool_size >= 0, 'pool_size must be >= 0', f'{pointer}/pool_size')
        _require(0.0 < self.delta_ref < 1.0, 'delta_ref must lie in (0, 1)', f'{pointer}/delta_ref')


@dataclass
class SyntheticConfig:
    kind: str = 'clustered'
    p: int = DEFAULT_FINGERPRINT_LENGTH
    n_labelled_pool: int = 5000
    n_unlabelled: int = 20000
    active_fraction: float = 0.01
    noise_sd: float = 0.1
    bit_density: float = 0.25
    n_clusters: int = 8
    cluster_fraction: float = 0.05
    flip_prob: float = 0.05
    segment_count: int = 10

    def validate(self, pointer: str):
        _choice(self.kind, LANDSCAPE_KINDS, f'{pointer}/kind')
        _require(self.n_labelled_pool > 0 and self.n_unlabelled > 0, 'sizes must be positive', pointer)
        _require(0.0 < self.active_fraction <= 1.0, 'active_fraction must lie in (0, 1]', f'{pointer}/active_fraction')


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    fingerprint: FingerprintConfig = field(default_factory=FingerprintConfig)
    labelled: LabelledConfig = field(default_factory=LabelledConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    prior: PriorConfig = field(default_factory=PriorConfig)
    regressor: RegressorConfig = field(default_factory=RegressorConfig)
    degradation: DegradationConfig = field(default_factory=DegradationConfig)
    covariance: CovarianceConfig = field(default_factory=CovarianceConfig)
    mixture: MixtureConfig = field(default_factory=MixtureConfig)
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)
    synthetic: SyntheticConfig = field(default_factory=SyntheticConfig)
    seed: int = 0
    n_jobs: int = 1

    def validate(self, pointer: str = ''):
        for section in fields(self):
            value = getattr(self, section.name)
            if hasattr(value, 'validate'):
                value.validate(f'{pointer}/{section.name}')
        _require(self.n_jobs != 0, 'n_jobs must not be 0', '/n_jobs')

    def stage_seed(self, stage: str, *keys) -> int:
        """Seed of the named substream of the root seed."""
        return derive_seed(self.seed, stage, *keys)

    def section_hash(self, names) -> str:
        return canonical_hash({name: asdict(getattr(self, name)) for name in names})

    def to_dict(self) -> dict:
        return asdict(self)


def _check_value(value, annotation, pointer: str):
    origin = get_origin(annotation)
    if origin is Union:
        options = get_args(annotation)
        if value is None and type(None) in options:
            return value
        errors = []
        for option in options:
            if option is type(None):
                continue
            try:
                return _check_value(value, option, pointer)
            except ConfigError as error:
                errors.append(error)
        raise errors[0]
    if origin in (list, List):
        _require(isinstance(value, list), f'Expected a list, got {type(value).__name__}', pointer)
        (item_type,) = get_args(annotation) or (object,)
        return [_check_value(item, item_type, f'{pointer}/{i}') for i, item in enumerate(value)]
    if annotation is bool:
        _require(isinstance(value, bool), f'Expected a boolean, got {value!r}', pointer)
    elif annotation is int:
        _require(isinstance(value, int) and not isinstance(value, bool), f'Expected an integer, got {value!r}', pointer)
    elif annotation is float:
        _require(isinstance(value, (int, float)) and not isinstance(value, bool), f'Expected a number, got {value!r}',
                 pointer)
        return float(value)
    elif annotation is str:
        _require(isinstance(value, str), f'Expected a string, got {value!r}', pointer)
    return value


def _build(cls, data, pointer: str):
    _require(isinstance(data, dict), f'Expected an object, got {type(data).__name__}', pointer or '/')
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    for key in data:
        _require(key in names, f'Unknown key {key!r}', f'{pointer}/{key}')
    values = {}
    for name, value in data.items():
        annotation = hints[name]
        if isinstance(annotation, type) and hasattr(annotation, '__dataclass_fields__'):
            values[name] = _build(annotation, value, f'{pointer}/{name}')
        else:
            values[name] = _check_value(value, annotation, f'{pointer}/{name}')
    return cls(**values)


def config_from_dict(data: dict, base_dir=None) -> PipelineConfig:
    """Validates `data` and builds a PipelineConfig.

    Relative paths are resolved against base_dir when it is given.
    """
    config = _build(PipelineConfig, data, '')
    config.validate()
    if base_dir is not None:
        base_dir = Path(base_dir)
        paths = config.paths
        if paths.labelled is not None:
            paths.labelled = str(base_dir / paths.labelled)
        paths.unlabelled = [str(base_dir / p) for p in paths.unlabelled]
        paths.workdir = str(base_dir / paths.workdir)
    return config


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        with open(path, encoding='utf-8') as handle:
            data = json.load(handle)
    except json.JSONDecodeError as error:
        raise ConfigError(f'{path} is not valid JSON: {error}') from error
    config = config_from_dict(data, path.resolve().parent)
    logger.debug('Loaded config from %s', path)
    return config
