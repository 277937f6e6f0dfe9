"""path_builder.py
Functions for building the paths of stage artifacts inside a workdir.
"""

from pathlib import Path

MANIFEST_NAME = 'manifest.json'
LOCK_NAME = '.domainrank.lock'


def _parse_stage(stage: str) -> str:
    if stage == 'synth':
        return 'synthetic'
    elif stage == 'ingest':
        return 'ingested'
    elif stage == 'sample':
        return 'samples'
    elif stage == 'prior':
        return 'prior'
    elif stage == 'degrade':
        return 'degradation'
    elif stage == 'covariance':
        return 'covariance'
    elif stage == 'mixture':
        return 'mixture'
    elif stage == 'score':
        return 'scores'
    elif stage == 'evaluate':
        return 'benchmark'
    else:
        raise ValueError(f'Invalid stage: {stage}')


def build_path(workdir, stage: str, filename: str = None) -> Path:
    stage_dir = Path(workdir) / _parse_stage(stage)
    return stage_dir if filename is None else stage_dir / filename


def manifest_path(workdir, stage: str) -> Path:
    return build_path(workdir, stage, MANIFEST_NAME)


def lock_path(workdir) -> Path:
    return Path(workdir) / LOCK_NAME


def segment_filename(segment: int) -> str:
    return f'pool_{segment:03d}.csv'
