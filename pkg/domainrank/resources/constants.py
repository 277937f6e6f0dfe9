"""constants.py
Reference tables and default parameters used by the other submodules.
"""

"""DATASET_FIGURES:
    Dict of published figures for the TCAMS screen and the Molport pool.
    Used as reference values in reports and as expected values when the
    real data are supplied.
    """
DATASET_FIGURES = {'tcams_actives': 13533,
                   'tcams_screened': 1985056,
                   'molport_duplicates_removed': 2044,
                   'cross_prediction_samples_reported': 66635,
                   'activity_mean': 6.25,
                   'activity_sd': 0.4,
                   'test_actives_at_7_5': 237,
                   'test_actives_at_8_0': 170,
                   'gaussian_expected_at_8_0': 0.08,
                   'bandwidth': 0.09,
                   'sampling_delta': 0.15,
                   'pool_delta_ref': 0.19,
                   'benchmark_pool_size': 500000,
                   'molport_segments': 15}

# Fingerprints
DEFAULT_FINGERPRINT_LENGTH = 128

# Distance sampling
DEFAULT_FOLDS = 2
DEFAULT_REPEATS = 5
DEFAULT_SAMPLING_DELTA = 0.15
DEFAULT_BACKGROUND_SIZE = 100000
SAMPLING_BIN_WIDTH = 0.01

# Activity prior
DEFAULT_GRID_POINTS = 101
GAMMA_LOWER = 1e-3
GAMMA_UPPER = 1.0
GAMMA_TOLERANCE = 1e-4
GAMMA_MAX_ITER = 60
MIN_BACKGROUND_DENSITY = 1e-12
CALIBRATION_DELTA_MAX = 0.45
CALIBRATION_DELTA_COUNT = 10
CALIBRATION_REPEATS = 10

# Degradation
DEGRADATION_GRID_POINTS = 10
DEFAULT_MAX_TARGETS = 500
MIN_TRAINING_SIZE = 50
MIN_BETA_PAIRS = 10
SMOOTH_STARTS = 16
"""SMOOTH_BOUNDS:
    Box for the (a, b, c) parameters of g(delta) = a / (1 + exp(-b * delta**c)).
    The open ends of a > 0, b < 0, c > 0 are closed off at a small margin.
    """
SMOOTH_BOUNDS = ((1e-9, -50.0, 1e-6), (10.0, -1e-9, 5.0))

# Covariance
COVARIANCE_BIN_WIDTH = 0.02
COVARIANCE_MIN_PAIRS = 100
COVARIANCE_MAX_PAIRS = 5000000

# Activity distribution
MIN_MIXTURE_VALUES = 30
MIXTURE_STARTS = 8
MIXTURE_WEIGHTS = (0.5, 0.5)
# Interquartile range of the standard normal, used to turn an IQR into a normal-equivalent sd
NORMAL_IQR = 1.3489795003921634

# Scoring
SIGMA_FLOOR = 1e-9

# Evaluation
DEFAULT_POOL_DELTA = 0.19
DEFAULT_POOL_SIZE = 500000
RECALL_OPERATING_POINT = 1000
"""DEFAULT_SPLITS:
    (q_train, q_test) pairs benchmarked by default, run for both pool modes.
    """
DEFAULT_SPLITS = [(7.0, 7.5), (7.0, 8.0), (7.5, 7.5), (7.5, 8.0)]

REGRESSOR_KINDS = ('ridge', 'random_forest')
SCORE_VARIANTS = ('S0', 'S1', 'S2', 'S3')
POOL_MODES = ('near', 'far')
LANDSCAPE_KINDS = ('smooth', 'clustered', 'noise')
BASE_RATE_MODES = ('counts', 'limit')
