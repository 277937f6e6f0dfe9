"""evaluation.py
Evaluation submodule of domainrank. Quantile-activity benchmark: train on the
actives below q_train, hide the actives at or above q_test in a near or far
pool sample, rank everything and record the recall of the hidden actives.
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from warnings import warn

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from .config import PipelineConfig
from .covariance import collect_pair_bins, fit_sigma_curve
from .dataset import LabelledSet, UnlabelledPool, standardize_activities
from .degradation import build_degradation
from .distribution import fit_mixture
from .exceptions import DomainError
from .fingerprints import batch_setwise_distances
from .prior import calibrate_bandwidth, default_grid, estimate_base_rate, fit_prior_curve
from .regressors import fit
from .resources.constants import DEFAULT_POOL_DELTA, POOL_MODES, RECALL_OPERATING_POINT, SAMPLING_BIN_WIDTH
from .resources.utils import derive_seed, substream, write_json
from .sampler import (draw_segment_weighted, sample_active_setwise, sample_background, segment_bin_counts,
                      segment_weights)
from .scoring import RankedList, ScoreVariant, ScoringContext, rank_candidates
from .version import __version__

logger = logging.getLogger(__name__)

plt.rcParams['svg.hashsalt'] = 'domainrank'


@dataclass(frozen=True)
class SplitSpec:
    q_train: float
    q_test: float
    pool_mode: str = 'near'
    pool_size: int = 500000
    seed: int = 0
    delta_ref: float = DEFAULT_POOL_DELTA

    def __post_init__(self):
        if self.q_train > self.q_test:
            raise DomainError(f'q_train must not exceed q_test, got {self.q_train} > {self.q_test}.')
        if self.pool_mode not in POOL_MODES:
            raise DomainError(f'Invalid pool mode: {self.pool_mode}. Supported values: {POOL_MODES}')

    @property
    def label(self) -> str:
        return f'train{self.q_train:g}_test{self.q_test:g}_{self.pool_mode}'


def quantile_split(labelled: LabelledSet, q_train: float, q_test: float) -> tuple:
    """(train, test_actives): activity < q_train and activity >= q_test.

    Compounds in [q_train, q_test) belong to neither.
    """
    if q_train > q_test:
        raise DomainError(f'q_train must not exceed q_test, got {q_train} > {q_test}.')
    low, high = float(labelled.activities.min()), float(labelled.activities.max())
    for name, value in (('q_train', q_train), ('q_test', q_test)):
        if not low <= value <= high:
            raise DomainError(f'{name}={value} lies outside the activity range [{low}, {high}].')
    train = labelled.subset(labelled.activities < q_train)
    test = labelled.subset(labelled.activities >= q_test)
    if len(train) == 0 or len(test) == 0:
        raise DomainError(f'Split ({q_train}, {q_test}) leaves {len(train)} training and {len(test)} test compounds.')
    logger.info('Split (%g, %g): %d train, %d test, %d discarded', q_train, q_test, len(train), len(test),
                len(labelled) - len(train) - len(test))
    return train, test


def build_test_pool(pool: UnlabelledPool, train_fingerprints, mode: str, delta_ref: float = DEFAULT_POOL_DELTA,
                    size: int = 500000, seed: int = 0, bin_width: float = SAMPLING_BIN_WIDTH, distances=None,
                    n_jobs: int = 1) -> UnlabelledPool:
    """Segment-weighted draw of `size` pool compounds.

    near: segment weights proportional to the segment's count of compounds at
    distance delta_ref from the training set; far: proportional to 1 / max(count, 1).
    """
    if mode not in POOL_MODES:
        raise DomainError(f'Invalid pool mode: {mode}. Supported values: {POOL_MODES}')
    if size > len(pool):
        raise DomainError(f'Cannot draw {size} compounds from a pool of {len(pool)}.')
    if size == 0:
        return pool.subset(np.empty(0, dtype=np.int64))
    if distances is None:
        distances = batch_setwise_distances(pool.fingerprints, train_fingerprints, n_jobs=n_jobs)
    counts = segment_bin_counts(distances, pool.segments, pool.segment_count, delta_ref, bin_width)
    weights = segment_weights(counts, inverse=(mode == 'far'))
    picked = draw_segment_weighted(pool.segments, pool.segment_count, weights, size, substream(seed, 'test_pool', mode))
    logger.info('Drew %s test pool of %d with segment weights %s', mode, size, np.round(weights, 4).tolist())
    return pool.subset(np.sort(picked))


def assert_no_leakage(train: LabelledSet, test_actives: LabelledSet):
    overlap = set(train.ids) & set(test_actives.ids)
    if overlap:
        raise DomainError(f'{len(overlap)} test compounds are in the training set, e.g. {sorted(overlap)[0]!r}.')


@dataclass
class RecallCurve:
    """Percentage of the truth found in the first n ranked candidates."""
    points: pd.DataFrame
    hits: np.ndarray
    n_truth: int

    def at(self, n: int) -> float:
        n = min(max(int(n), 0), self.hits.size)
        return 0.0 if n == 0 else 100.0 * self.hits[n - 1] / self.n_truth

    def to_csv(self, path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.points.to_csv(path, index=False, float_format='%.17g', lineterminator='\n')


def recall_grid(n: int) -> np.ndarray:
    """1, 2, 5, 10, 20, 50, ... up to n, plus 1000 and n."""
    grid = [m * 10 ** e for e in range(len(str(n)) + 1) for m in (1, 2, 5)]
    grid += [RECALL_OPERATING_POINT, n]
    return np.unique([g for g in grid if 1 <= g <= n])


def recall_curve(ranking, truth, grid=None) -> RecallCurve:
    """Recall of `truth` ids among the top n of `ranking` (RankedList or list of ids)."""
    ids = ranking.ids if isinstance(ranking, RankedList) else list(ranking)
    truth = set(truth)
    if not truth:
        raise DomainError('Recall needs at least one true active.')
    missing = truth.difference(ids)
    if missing:
        raise DomainError(f'{len(missing)} true actives are not in the ranking, e.g. {sorted(missing)[0]!r}.')
    hits = np.cumsum([i in truth for i in ids])
    grid = recall_grid(len(ids)) if grid is None else np.asarray(grid, dtype=int)
    points = pd.DataFrame({'n_selected': grid, 'pct_found': 100.0 * hits[grid - 1] / len(truth)})
    return RecallCurve(points, hits, len(truth))


def fit_scoring_context(train: LabelledSet, pool: UnlabelledPool, config: PipelineConfig, kind: str, threshold: float,
                        seed: int, pool_distances=None, n_jobs: int = 1) -> ScoringContext:
    """Fits the model and every distance curve on `train` alone.

    :param train: Raw training actives; standardized here.
    :param pool: Unlabelled pool for the background distance sample.
    :param kind: Regressor kind.
    :param threshold: Activity cutoff I in raw units.
    :param seed: Seed of this fit; substreams are derived per component.
    """
    standardized, transform = standardize_activities(train)
    spec = config.regressor.spec(derive_seed(seed, 'regressor'), kind=kind, n_jobs=n_jobs)
    model = fit(spec, standardized.fingerprints, standardized.activities)

    if pool_distances is None:
        pool_distances = batch_setwise_distances(pool.fingerprints, train.fingerprints, n_jobs=n_jobs)
    sampler = config.sampler
    active = sample_active_setwise(train, sampler.v, sampler.k, derive_seed(seed, 'sample'), n_jobs)
    background = sample_background(pool, train, sampler.delta_weight, min(sampler.m, len(pool)),
                                   derive_seed(seed, 'background'), sampler.bin_width, pool_distances)
    base_rate = estimate_base_rate(config.prior.base_rate_mode, train, active, background)
    gamma = config.prior.gamma or calibrate_bandwidth(active, background, base_rate).gamma
    prior = fit_prior_curve(active, background, gamma, base_rate, default_grid(config.prior.grid_points))

    degradation = config.degradation
    curves = build_degradation(standardized, spec, np.linspace(0.0, 1.0, degradation.grid_points),
                               degradation.max_targets, derive_seed(seed, 'degrade'), degradation.min_training_size,
                               degradation.min_pairs, degradation.n_starts, n_jobs)
    covariance = config.covariance
    sigma_curve = fit_sigma_curve(collect_pair_bins(standardized, covariance.bin_width, covariance.max_pairs,
                                                    derive_seed(seed, 'covariance')), covariance.min_pairs)
    mixture = fit_mixture(standardized.activities, config.mixture.n_starts, derive_seed(seed, 'mixture'))
    return ScoringContext(model, standardized.fingerprints, prior, curves, sigma_curve, mixture,
                          float(transform.apply(threshold)), config.scoring.mean_source, n_jobs)


@dataclass
class BenchmarkReport:
    """summary has one row per (split, model, pool mode, variant) cell."""
    summary: pd.DataFrame
    curves: dict
    rankings: dict


def plot_recall_curves(curves: dict, path, title: str = ''):
    """SVG line chart of recall against the number of selected compounds, one line per label."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, curve in curves.items():
        ax.plot(curve.points['n_selected'], curve.points['pct_found'], marker='.', label=label)
    ax.set_xscale('log')
    ax.set_xlabel('compounds selected')
    ax.set_ylabel('% of actives found')
    ax.set_ylim(0, 100)
    ax.axvline(RECALL_OPERATING_POINT, color='grey', linestyle=':', linewidth=0.8)
    ax.set_title(title)
    ax.legend()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format='svg', metadata={'Date': None})
    plt.close(fig)


def _run_cell(labelled: LabelledSet, pool: UnlabelledPool, config: PipelineConfig, split_index: int, kind: str,
              n_jobs: int) -> list:
    q_train, q_test = config.evaluation.splits[split_index]
    evaluation = config.evaluation
    train, test_actives = quantile_split(labelled, q_train, q_test)
    assert_no_leakage(train, test_actives)
    pool_distances = batch_setwise_distances(pool.fingerprints, train.fingerprints, n_jobs=n_jobs)
    context = fit_scoring_context(train, pool, config, kind, q_test,
                                  config.stage_seed('evaluate', split_index, kind), pool_distances, n_jobs)

    size = evaluation.pool_size
    if size > len(pool):
        warn(f'Benchmark pool size {size} exceeds the pool of {len(pool)}; using the whole pool.')
        size = len(pool)
    results = []
    for mode in evaluation.pool_modes:
        split = SplitSpec(q_train, q_test, mode, size, config.stage_seed('pool', split_index, mode),
                          evaluation.delta_ref)
        test_pool = build_test_pool(pool, train.fingerprints, mode, split.delta_ref, size, split.seed,
                                    config.sampler.bin_width, pool_distances)
        ids = test_pool.ids + test_actives.ids
        if len(set(ids)) != len(ids):
            raise DomainError(f'Test actives share ids with the pool in split {split.label}.')
        fingerprints = np.vstack([test_pool.fingerprints, test_actives.fingerprints])
        for variant in evaluation.variants:
            ranking = rank_candidates(ids, fingerprints, context, variant)
            curve = recall_curve(ranking, test_actives.ids)
            results.append((split, kind, ScoreVariant(variant), ranking, curve, len(test_actives)))
    return results


def run_benchmark(labelled: LabelledSet, pool: UnlabelledPool, config: PipelineConfig, out_dir=None,
                  n_jobs: int = 1) -> BenchmarkReport:
    """Runs every (split, model, pool mode, variant) cell of config.evaluation.

    Each (split, model) pair is fitted once on its training actives; the S3
    threshold is the split's q_test. With out_dir, per-cell recall and ranking
    CSVs, one SVG per (split, model, pool mode), summary.csv and a manifest
    are written.
    """
    cells = [(s, kind) for s in range(len(config.evaluation.splits)) for kind in config.evaluation.models]
    if n_jobs == 1:
        outputs = [_run_cell(labelled, pool, config, s, kind, 1) for s, kind in cells]
    else:
        outputs = Parallel(n_jobs=n_jobs)(delayed(_run_cell)(labelled, pool, config, s, kind, 1) for s, kind in cells)

    rows, curves, rankings = [], {}, {}
    for split, kind, variant, ranking, curve, n_test in (item for output in outputs for item in output):
        key = (split.label, kind, variant.value)
        curves[key] = curve
        rankings[key] = ranking
        rows.append({'split': split.label, 'q_train': split.q_train, 'q_test': split.q_test,
                     'pool_mode': split.pool_mode, 'model': kind, 'variant': variant.value,
                     'n_candidates': len(ranking), 'n_test_actives': n_test,
                     f'recall_at_{RECALL_OPERATING_POINT}': curve.at(RECALL_OPERATING_POINT)})
    summary = pd.DataFrame(rows)
    report = BenchmarkReport(summary, curves, rankings)
    if out_dir is not None:
        write_report(report, config, out_dir)
    return report


def write_report(report: BenchmarkReport, config: PipelineConfig, out_dir) -> list:
    out_dir = Path(out_dir)
    written = []
    for (label, kind, variant), curve in report.curves.items():
        cell_dir = out_dir / label / kind
        curve.to_csv(cell_dir / f'recall_{variant}.csv')
        report.rankings[(label, kind, variant)].to_csv(cell_dir / f'ranking_{variant}.csv')
        written += [cell_dir / f'recall_{variant}.csv', cell_dir / f'ranking_{variant}.csv']
    for label, kind in sorted({(label, kind) for label, kind, _ in report.curves}):
        cell_curves = {variant: curve for (l, k, variant), curve in report.curves.items() if (l, k) == (label, kind)}
        plot_recall_curves(cell_curves, out_dir / label / kind / 'recall.svg', f'{label} {kind}')
        written.append(out_dir / label / kind / 'recall.svg')
    report.summary.to_csv(out_dir / 'summary.csv', index=False, float_format='%.17g', lineterminator='\n')
    write_json(out_dir / 'report.json', {'version': __version__, 'config': config.to_dict(),
                                         'seed': config.seed, 'cells': len(report.curves)})
    written += [out_dir / 'summary.csv', out_dir / 'report.json']
    logger.info('Wrote benchmark report with %d cells to %s', len(report.curves), out_dir)
    return written
