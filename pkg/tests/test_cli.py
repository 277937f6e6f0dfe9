import json
from pathlib import Path

import pandas as pd
import pytest

from domainrank.cli import EXIT_DOMAIN, EXIT_IO, EXIT_OK, WorkdirLock, build_parser, cache_key, main, run_stage
from domainrank.config import load_config
from domainrank.exceptions import DependencyError
from domainrank.resources.path_builder import build_path, lock_path, manifest_path
from domainrank.version import __version__


def test_parser_lists_every_stage():
    parser = build_parser()
    args = parser.parse_args(['score', '--config', 'c.json', '--seed', '4', '-v'])
    assert (args.command, args.seed, args.verbose) == ('score', 4, True)
    with pytest.raises(SystemExit):
        parser.parse_args(['train', '--config', 'c.json'])


def test_version(capsys):
    with pytest.raises(SystemExit) as exit_info:
        main(['--version'])
    assert exit_info.value.code == 0
    assert __version__ in capsys.readouterr().out


def test_ingest_without_input_files(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'paths': {'workdir': 'work'}}), encoding='utf-8')
    assert main(['ingest', '--config', str(path)]) == EXIT_DOMAIN


def test_invalid_config_exits_with_domain_status(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps({'sampler': {'folds': 3}}), encoding='utf-8')
    assert main(['synth', '--config', str(path)]) == EXIT_DOMAIN


def test_missing_config_file_is_io_error(tmp_path):
    assert main(['synth', '--config', str(tmp_path / 'absent.json')]) == EXIT_IO


def test_lock_blocks_a_second_run(synthetic_config):
    config = load_config(synthetic_config)
    path = lock_path(config.paths.workdir)
    path.parent.mkdir(parents=True)
    path.write_text('1234', encoding='utf-8')
    assert main(['synth', '--config', str(synthetic_config)]) == EXIT_IO
    assert not manifest_path(config.paths.workdir, 'synth').exists()


def test_lock_is_released(tmp_path):
    with WorkdirLock(tmp_path):
        assert lock_path(tmp_path).exists()
        with pytest.raises(FileExistsError):
            with WorkdirLock(tmp_path):
                pass
    assert not lock_path(tmp_path).exists()


def test_stage_order_is_enforced(synthetic_config):
    assert main(['synth', '--config', str(synthetic_config)]) == EXIT_OK
    assert main(['ingest', '--config', str(synthetic_config)]) == EXIT_OK
    assert main(['prior', '--config', str(synthetic_config)]) == EXIT_DOMAIN
    with pytest.raises(DependencyError) as error:
        run_stage('prior', load_config(synthetic_config))
    assert error.value.missing == 'sample'
    assert error.value.stage == 'prior'


def test_cache_key_follows_config(synthetic_config):
    config = load_config(synthetic_config)
    assert main(['synth', '--config', str(synthetic_config)]) == EXIT_OK
    workdir = Path(config.paths.workdir)
    key = cache_key('ingest', config, workdir)
    config.labelled.l_min = 1.0
    assert cache_key('ingest', config, workdir) != key
    config.sampler.k = 5
    assert cache_key('synth', config, workdir) == cache_key('synth', load_config(synthetic_config), workdir)


def test_workdir_and_seed_overrides(tmp_path, synthetic_config):
    other = tmp_path / 'elsewhere'
    assert main(['synth', '--config', str(synthetic_config), '--workdir', str(other), '--seed', '9']) == EXIT_OK
    manifest = json.loads(manifest_path(other, 'synth').read_text(encoding='utf-8'))
    assert manifest['root_seed'] == 9
    assert manifest['version'] == __version__


@pytest.mark.slow
def test_pipeline_end_to_end(synthetic_config):
    stages = ['synth', 'ingest', 'sample', 'prior', 'degrade', 'covariance', 'mixture', 'score']
    for stage in stages:
        assert main([stage, '--config', str(synthetic_config)]) == EXIT_OK, stage

    config = load_config(synthetic_config)
    workdir = config.paths.workdir
    for stage, files in [('ingest', ['labelled.csv', 'transform.json', 'report.json']),
                         ('sample', ['active.csv', 'active.json', 'background.csv']),
                         ('prior', ['prior.csv', 'prior.json']),
                         ('degrade', ['points.csv', 'curves.json']),
                         ('covariance', ['sigma_raw.csv', 'sigma_pooled.csv', 'sigma.json', 'pair_distances.csv']),
                         ('mixture', ['mixture.json', 'density.csv']),
                         ('score', ['model.json', 'ranking.csv', 'contours.csv'])]:
        for name in files:
            assert build_path(workdir, stage, name).exists(), (stage, name)

    ranking = pd.read_csv(build_path(workdir, 'score', 'ranking.csv'), dtype={'id': str})
    report = json.loads(build_path(workdir, 'ingest', 'report.json').read_text(encoding='utf-8'))
    assert len(ranking) == report['n_pool']
    assert ranking['score'].is_monotonic_decreasing
    assert ranking['s3'].between(0.0, 1.0).all()
    assert report['screened_count'] == 1500

    for stage in stages:
        assert run_stage(stage, config)['skipped'], stage

    config.scoring.variant = 'S2'
    assert not run_stage('score', config)['skipped']
    assert run_stage('covariance', config)['skipped']


@pytest.mark.slow
def test_identical_configs_give_identical_rankings(tmp_path, synthetic_config):
    rankings = []
    for name in ('first', 'second'):
        workdir = tmp_path / name
        for stage in ['synth', 'ingest', 'sample', 'prior', 'degrade', 'covariance', 'mixture', 'score']:
            assert main([stage, '--config', str(synthetic_config), '--workdir', str(workdir)]) == EXIT_OK
        rankings.append(build_path(workdir, 'score', 'ranking.csv').read_bytes())
    assert rankings[0] == rankings[1]
