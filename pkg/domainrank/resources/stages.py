"""stages.py
Lists of the pipeline stages, what each one depends on and which config
sections feed it. Used by the cli submodule.
"""

stage_names = [
    'synth',
    'ingest',
    'sample',
    'prior',
    'degrade',
    'covariance',
    'mixture',
    'score',
    'evaluate'
]

stage_dependencies = {
    'synth': [],
    'ingest': [],
    'sample': ['ingest'],
    'prior': ['ingest', 'sample'],
    'degrade': ['ingest'],
    'covariance': ['ingest'],
    'mixture': ['ingest'],
    'score': ['ingest', 'prior', 'degrade', 'covariance', 'mixture'],
    'evaluate': ['ingest']
}

# Config sections whose values enter a stage's cache key
stage_config_sections = {
    'synth': ['synthetic'],
    'ingest': ['paths', 'fingerprint', 'labelled'],
    'sample': ['sampler'],
    'prior': ['prior', 'sampler', 'labelled'],
    'degrade': ['regressor', 'degradation'],
    'covariance': ['covariance'],
    'mixture': ['mixture', 'scoring'],
    'score': ['regressor', 'scoring'],
    'evaluate': ['sampler', 'prior', 'regressor', 'degradation', 'covariance', 'mixture', 'scoring', 'evaluation',
                 'labelled']
}

n_stages = len(stage_names)
