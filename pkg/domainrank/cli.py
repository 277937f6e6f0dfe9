"""cli.py
Command line interface of domainrank. Every pipeline stage is a subcommand
that reads its predecessors' artifacts from the workdir, writes its own next
to a manifest, and is skipped when nothing it depends on has changed.

    domainrank <stage> --config <file> [--workdir <dir>] [--seed <int>] [-v]

Exit status: 0 success, 1 domain or configuration error, 2 I/O error.
"""
import argparse
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np
import pandas as pd

from .config import PipelineConfig, load_config
from .covariance import SigmaCurve, collect_pair_bins, fit_sigma_curve, pairwise_distance_histogram
from .dataset import (ActivityTransform, load_labelled, load_unlabelled, standardize_activities, write_labelled,
                      write_unlabelled)
from .degradation import DegradationCurves, build_degradation
from .distribution import MixtureDistribution, density_table, fit_mixture, gaussian_expected_count
from .evaluation import run_benchmark
from .exceptions import ConfigError, DependencyError, DomainRankError
from .prior import (PriorCurve, calibrate_bandwidth, calibrate_bandwidth_median, default_grid, estimate_base_rate,
                    fit_prior_curve, select_sampling_delta)
from .regressors import fit, save_model
from .resources.path_builder import build_path, lock_path, manifest_path
from .resources.stages import stage_config_sections, stage_dependencies, stage_names
from .resources.utils import canonical_hash, file_hash, read_json, write_json
from .sampler import DistanceSample, sample_active_setwise, sample_background
from .scoring import ScoringContext, rank_candidates, tail_contours
from .synthetic import LandscapeSpec, generate, write_synthetic
from .version import __version__

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2


def _relative(paths, workdir: Path) -> list:
    return [Path(p).resolve().relative_to(workdir.resolve()).as_posix() for p in paths]


def _pool_paths(workdir: Path) -> list:
    return sorted(build_path(workdir, 'ingest', 'unlabelled').glob('pool_*.csv'))


def _load_ingested(workdir: Path, config: PipelineConfig) -> tuple:
    """(raw labelled set, standardized labelled set, transform, pool) from the ingest artifacts."""
    report = read_json(build_path(workdir, 'ingest', 'report.json'))
    labelled = load_labelled(build_path(workdir, 'ingest', 'labelled.csv'), config.labelled.cutoff,
                             report['screened_count'], config.fingerprint.p)
    transform = ActivityTransform.from_dict(read_json(build_path(workdir, 'ingest', 'transform.json')))
    standardized = labelled.with_activities(transform.apply(labelled.activities),
                                            float(transform.apply(labelled.l_min)))
    pool = load_unlabelled(_pool_paths(workdir), labelled, config.fingerprint.p)
    return labelled, standardized, transform, pool


def _input_files(config: PipelineConfig, workdir: Path) -> tuple:
    """(labelled file, unlabelled files, screened count) feeding ingest: the configured
    files or the synthetic set, whose screened count fills in when the config has none.
    """
    if config.paths.labelled is not None:
        if not config.paths.unlabelled:
            raise ConfigError('At least one unlabelled file is required.', '/paths/unlabelled')
        return Path(config.paths.labelled), [Path(p) for p in config.paths.unlabelled], config.labelled.screened_count
    if not manifest_path(workdir, 'synth').exists():
        raise ConfigError('No labelled file configured and no synthetic data in the workdir.', '/paths/labelled')
    synth_dir = build_path(workdir, 'synth')
    screened_count = config.labelled.screened_count or read_json(synth_dir / 'synthetic.json')['n_screened']
    return synth_dir / 'labelled.csv', sorted((synth_dir / 'unlabelled').glob('pool_*.csv')), screened_count


def run_synth(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    settings = asdict(config.synthetic)
    n_labelled_pool, n_unlabelled = settings.pop('n_labelled_pool'), settings.pop('n_unlabelled')
    data = generate(LandscapeSpec(seed=seed, **settings), n_labelled_pool, n_unlabelled)
    paths = write_synthetic(data, build_path(workdir, 'synth'))
    outputs = [paths['labelled'], *paths['unlabelled'], paths['truth'], build_path(workdir, 'synth', 'synthetic.json')]
    return outputs, {'cutoff': data.cutoff, 'n_labelled': len(data.labelled), 'n_pool': len(data.pool)}


def run_ingest(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    labelled_path, pool_paths, screened_count = _input_files(config, workdir)
    labelled = load_labelled(labelled_path, config.labelled.cutoff, screened_count,
                             config.fingerprint.p)
    pool = load_unlabelled(pool_paths, labelled, config.fingerprint.p)
    _, transform = standardize_activities(labelled)

    out_dir = build_path(workdir, 'ingest')
    write_labelled(labelled, out_dir / 'labelled.csv')
    written = write_unlabelled(pool, out_dir / 'unlabelled')
    write_json(out_dir / 'transform.json', transform.to_dict())
    report = labelled.report
    write_json(out_dir / 'report.json', {'n_labelled': len(labelled), 'n_rejected': report.n_rejected,
                                         'screened_count': screened_count,
                                         'n_pool': len(pool), 'n_removed': pool.n_removed,
                                         'segment_sizes': pool.segment_sizes()})
    outputs = [out_dir / 'labelled.csv', *written, out_dir / 'transform.json', out_dir / 'report.json']
    return outputs, {'n_labelled': len(labelled), 'n_pool': len(pool), 'n_removed': pool.n_removed}


def run_sample(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    labelled, _, _, pool = _load_ingested(workdir, config)
    sampler = config.sampler
    active = sample_active_setwise(labelled, sampler.v, sampler.k, seed, config.n_jobs)
    background = sample_background(pool, labelled, sampler.delta_weight, min(sampler.m, len(pool)), seed,
                                   sampler.bin_width, n_jobs=config.n_jobs)
    outputs = [build_path(workdir, 'sample', 'active.csv'), build_path(workdir, 'sample', 'background.csv')]
    active.save(outputs[0])
    background.save(outputs[1])
    return outputs, {'n_active': len(active), 'n_background': len(background)}


def run_prior(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    labelled, _, _, pool = _load_ingested(workdir, config)
    active = DistanceSample.load(build_path(workdir, 'sample', 'active.csv'))
    background = DistanceSample.load(build_path(workdir, 'sample', 'background.csv'))
    settings = config.prior
    base_rate = estimate_base_rate(settings.base_rate_mode, labelled, active, background)
    out_dir = build_path(workdir, 'prior')
    outputs, metadata = [], {'base_rate': base_rate}

    if settings.gamma is not None:
        gamma, metadata['gamma_source'] = settings.gamma, 'config'
    elif settings.bandwidth_study:
        study = calibrate_bandwidth_median(pool, labelled, active, base_rate, settings.study_deltas,
                                           settings.study_repeats, min(config.sampler.m, len(pool)), seed,
                                           config.sampler.bin_width, n_jobs=config.n_jobs)
        delta, summary = select_sampling_delta(study, active, base_rate)
        study.table.to_csv(out_dir / 'bandwidth_study.csv', index=False, float_format='%.17g', lineterminator='\n')
        summary.to_csv(out_dir / 'sampling_delta.csv', index=False, float_format='%.17g', lineterminator='\n')
        outputs += [out_dir / 'bandwidth_study.csv', out_dir / 'sampling_delta.csv']
        gamma = study.gamma
        metadata.update(gamma_source='study', selected_sampling_delta=delta)
    else:
        calibration = calibrate_bandwidth(active, background, base_rate)
        gamma = calibration.gamma
        metadata.update(gamma_source='calibration', converged=calibration.converged, residual=calibration.residual)

    curve = fit_prior_curve(active, background, gamma, base_rate, default_grid(settings.grid_points))
    curve.save(out_dir / 'prior.csv', gamma_source=metadata['gamma_source'])
    outputs += [out_dir / 'prior.csv', out_dir / 'prior.json']
    metadata['gamma'] = gamma
    return outputs, metadata


def run_degrade(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    _, standardized, _, _ = _load_ingested(workdir, config)
    spec = config.regressor.spec(seed, n_jobs=1)
    settings = config.degradation
    curves = build_degradation(standardized, spec, np.linspace(0.0, 1.0, settings.grid_points), settings.max_targets,
                               seed, settings.min_training_size, settings.min_pairs, settings.n_starts, config.n_jobs)
    out_dir = build_path(workdir, 'degrade')
    curves.save(out_dir)
    return [out_dir / 'points.csv', out_dir / 'curves.json'], {'beta_flags': curves.beta.flags,
                                                               'strength_flags': curves.strength.flags}


def run_covariance(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    _, standardized, _, _ = _load_ingested(workdir, config)
    settings = config.covariance
    curve = fit_sigma_curve(collect_pair_bins(standardized, settings.bin_width, settings.max_pairs, seed),
                            settings.min_pairs)
    out_dir = build_path(workdir, 'covariance')
    curve.save(out_dir)
    density, edges = pairwise_distance_histogram(standardized, max_pairs=settings.max_pairs, seed=seed)
    histogram_path = out_dir / 'pair_distances.csv'
    pd.DataFrame({'left': edges[:-1], 'right': edges[1:], 'density': density}).to_csv(
        histogram_path, index=False, float_format='%.17g', lineterminator='\n')
    outputs = [out_dir / 'sigma_raw.csv', out_dir / 'sigma_pooled.csv', out_dir / 'sigma.json', histogram_path]
    return outputs, {'bins': int(curve.bin_centers.size)}


def run_mixture(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    labelled, _, _, _ = _load_ingested(workdir, config)
    dist = fit_mixture(labelled.activities, config.mixture.n_starts, seed)
    out_dir = build_path(workdir, 'mixture')
    metadata = {'flags': list(dist.flags)}
    threshold = config.scoring.threshold
    if threshold is not None:
        metadata.update(threshold=threshold,
                        gaussian_expected=gaussian_expected_count(labelled.activities, threshold),
                        observed=int((labelled.activities >= threshold).sum()))
    write_json(out_dir / 'mixture.json', {**dist.to_dict(), 'diagnostics': metadata})
    low, high = labelled.activities.min(), labelled.activities.max()
    span = high - low
    density_table(dist, np.linspace(low - 0.25 * span, high + 0.25 * span, 401)).to_csv(
        out_dir / 'density.csv', index=False, float_format='%.17g', lineterminator='\n')
    return [out_dir / 'mixture.json', out_dir / 'density.csv'], metadata


def run_score(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    if config.scoring.threshold is None and config.scoring.variant == 'S3':
        raise ConfigError('Scoring with S3 needs an activity threshold.', '/scoring/threshold')
    _, standardized, transform, pool = _load_ingested(workdir, config)
    spec = config.regressor.spec(seed, n_jobs=config.n_jobs)
    model = fit(spec, standardized.fingerprints, standardized.activities)
    out_dir = build_path(workdir, 'score')
    save_model(model, out_dir / 'model.json')

    threshold = config.scoring.threshold
    context = ScoringContext(model, standardized.fingerprints,
                             PriorCurve.load(build_path(workdir, 'prior', 'prior.csv')),
                             DegradationCurves.load(build_path(workdir, 'degrade')),
                             SigmaCurve.load(build_path(workdir, 'covariance')),
                             MixtureDistribution.from_dict(read_json(build_path(workdir, 'mixture', 'mixture.json'))),
                             None if threshold is None else float(transform.apply(threshold)),
                             config.scoring.mean_source, config.n_jobs)
    ranking = rank_candidates(pool.ids, pool.fingerprints, context, config.scoring.variant)
    ranking.to_csv(out_dir / 'ranking.csv')
    outputs = [out_dir / 'model.json', out_dir / 'ranking.csv']
    if context.threshold is not None:
        contours = tail_contours(context, np.linspace(-2.0, 4.0, 61), default_grid(51))
        contours.to_csv(out_dir / 'contours.csv', index=False, float_format='%.17g', lineterminator='\n')
        outputs.append(out_dir / 'contours.csv')
    return outputs, {'n_ranked': len(ranking), 'variant': config.scoring.variant}


def run_evaluate(config: PipelineConfig, workdir: Path, seed: int) -> tuple:
    labelled, _, _, pool = _load_ingested(workdir, config)
    out_dir = build_path(workdir, 'evaluate')
    report = run_benchmark(labelled, pool, config, out_dir, config.n_jobs)
    outputs = sorted(p for p in out_dir.rglob('*') if p.is_file() and p.name != 'manifest.json')
    return outputs, {'cells': len(report.curves)}


STAGE_RUNNERS = {'synth': run_synth, 'ingest': run_ingest, 'sample': run_sample, 'prior': run_prior,
                 'degrade': run_degrade, 'covariance': run_covariance, 'mixture': run_mixture, 'score': run_score,
                 'evaluate': run_evaluate}


def cache_key(stage: str, config: PipelineConfig, workdir: Path) -> str:
    """sha256 of the stage's config sections, seed, upstream keys, version and (for ingest) input files."""
    upstream = {}
    for dependency in stage_dependencies[stage]:
        path = manifest_path(workdir, dependency)
        if not path.exists():
            raise DependencyError(stage, dependency)
        upstream[dependency] = read_json(path)['cache_key']
    inputs = {}
    if stage == 'ingest':
        labelled_path, pool_paths, _ = _input_files(config, workdir)
        inputs = {str(p): file_hash(p) for p in [labelled_path, *pool_paths]}
    return canonical_hash({'stage': stage, 'config': config.section_hash(stage_config_sections[stage]),
                           'seed': config.stage_seed(stage), 'upstream': upstream, 'version': __version__,
                           'inputs': inputs, 'fingerprint': config.fingerprint.p})


def _up_to_date(workdir: Path, stage: str, key: str) -> bool:
    path = manifest_path(workdir, stage)
    if not path.exists():
        return False
    manifest = read_json(path)
    return manifest.get('cache_key') == key and all((workdir / p).exists() for p in manifest.get('outputs', []))


def run_stage(stage: str, config: PipelineConfig) -> dict:
    """Runs one stage unless its manifest already carries the current cache key.

    :return: The stage manifest, with 'skipped' True when nothing was recomputed.
    """
    if stage not in stage_names:
        raise ValueError(f'Invalid stage: {stage}. Supported values: {stage_names}')
    workdir = Path(config.paths.workdir)
    key = cache_key(stage, config, workdir)
    if _up_to_date(workdir, stage, key):
        logger.info('Stage %s is up to date', stage)
        manifest = read_json(manifest_path(workdir, stage))
        manifest['skipped'] = True
        return manifest

    seed = config.stage_seed(stage)
    logger.info('Running stage %s (seed %d)', stage, seed)
    build_path(workdir, stage).mkdir(parents=True, exist_ok=True)
    outputs, metadata = STAGE_RUNNERS[stage](config, workdir, seed)
    manifest = {'stage': stage, 'version': __version__, 'cache_key': key,
                'config_hash': config.section_hash(stage_config_sections[stage]), 'seed': seed,
                'root_seed': config.seed,
                'upstream': {d: read_json(manifest_path(workdir, d))['cache_key'] for d in stage_dependencies[stage]},
                'outputs': _relative(outputs, workdir), 'metadata': metadata}
    write_json(manifest_path(workdir, stage), manifest)
    manifest['skipped'] = False
    logger.info('Stage %s wrote %d artifacts', stage, len(outputs))
    return manifest


class WorkdirLock:
    """Exclusive lock file in the workdir; an existing lock raises FileExistsError."""

    def __init__(self, workdir):
        self.path = lock_path(workdir)

    def __enter__(self):
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, 'x', encoding='utf-8') as handle:
            handle.write(str(os.getpid()))
        return self

    def __exit__(self, *exc):
        self.path.unlink(missing_ok=True)
        return False


def setup_logging(verbose: bool = False):
    logging.basicConfig(stream=sys.stderr, level=logging.DEBUG if verbose else logging.INFO,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s', datefmt='%H:%M:%S')
    logging.captureWarnings(True)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', type=Path, required=True, help='JSON pipeline config')
    common.add_argument('--workdir', type=Path, default=None, help='Artifact directory (overrides paths.workdir)')
    common.add_argument('--seed', type=int, default=None, help='Root seed (overrides seed)')
    common.add_argument('-v', '--verbose', action='store_true')

    parser = argparse.ArgumentParser(prog='domainrank', description='Distance-aware ranking of candidate compounds.')
    parser.add_argument('--version', action='version', version=f'%(prog)s {__version__}')
    subparsers = parser.add_subparsers(dest='command', required=True, metavar='<stage>')
    helps = {'synth': 'Generate a synthetic landscape', 'ingest': 'Read and deduplicate input files',
             'sample': 'Draw active and background distance samples', 'prior': 'Fit the activity prior curve',
             'degrade': 'Fit the degradation curves', 'covariance': 'Fit the distance-dependent sigma curve',
             'mixture': 'Fit the activity distribution', 'score': 'Rank the unlabelled pool',
             'evaluate': 'Run the quantile-split benchmark'}
    for stage in stage_names:
        subparsers.add_parser(stage, parents=[common], help=helps[stage])
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose)
    try:
        config = load_config(args.config)
        if args.workdir is not None:
            config.paths.workdir = str(args.workdir)
        if args.seed is not None:
            config.seed = args.seed
        with WorkdirLock(config.paths.workdir):
            run_stage(args.command, config)
    except DomainRankError as error:
        logger.error('%s', error)
        return EXIT_DOMAIN
    except OSError as error:
        logger.error('%s', error)
        return EXIT_IO
    return EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
