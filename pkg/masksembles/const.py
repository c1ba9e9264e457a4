DEFAULT_SEED = 0
DEFAULT_ECE_BINS = 15
DEFAULT_OOD_SCORE = 'entropy'
OOD_SCORES = ('entropy', 'max-prob')

DEFAULT_N = 4
DEFAULT_M = 100
DEFAULT_TRANSITION_SCALES = (1.1, 2.0, 3.0, 10.0)
DEFAULT_DIVERSITY_SCALES = (2.0, 3.0, 4.0, 5.0)
DEFAULT_SURFACE_NS = (1, 2, 4, 8)
DEFAULT_SURFACE_SCALES = (1.0, 1.5, 2.0, 3.0, 4.0, 6.0)
DEFAULT_SURFACE_M = 32
DEFAULT_SURFACE_DRAWS = 200

DEFAULT_EPOCHS = 60
DEFAULT_BATCH_SIZE = 32
DEFAULT_LEARNING_RATE = 0.05
DEFAULT_MOMENTUM = 0.9

DEFAULT_SINUSOID_COUNT = 200
DEFAULT_SINUSOID_NOISE = 0.3
DEFAULT_SINUSOID_OFFSETS = (1.0, -1.0)
DEFAULT_X_RANGE = (-5.0, 5.0)
DEFAULT_GRID_X_RANGE = (-10.0, 10.0)
DEFAULT_GRID_Y_RANGE = (-4.0, 4.0)
DEFAULT_GRID_RESOLUTION = 41
DEFAULT_DIVERSITY_NOISE = 0.6

DEFAULT_BASE_SIGMA_FRACTION = 0.2
MAX_SEVERITY = 5

# substream tags for rng.stream()
STREAM_MASKS = 1
STREAM_INIT = 2
STREAM_SHUFFLE = 3
STREAM_ASSIGN = 4
STREAM_DATA = 5
STREAM_NOISE = 6
STREAM_CELL = 7
STREAM_DROPOUT = 8

MASK_FILE_SUFFIX = '.masks'
CHECKPOINT_MAGIC = 'masksembles-checkpoint 1'

METRICS_CSV_HEADER = ('tag', 'n', 'm', 's', 'iou', 'accuracy', 'ece', 'entropy_in',
                      'entropy_out', 'roc_auc', 'pr_auc', 'model_size', 'wall_time_s')
RELIABILITY_CSV_HEADER = ('bin_lo', 'bin_hi', 'confidence', 'accuracy', 'count')
SURFACE_CSV_HEADER = ('n', 's', 'relative_size', 'analytical_size', 'empirical_iou',
                      'analytical_iou')
DIVERSITY_CSV_HEADER = ('config', 's', 'pair_id', 'accuracy', 'diversity',
                        'bound_worst', 'bound_best')
TRANSITION_CSV_HEADER = ('config', 's', 'seed', 'accuracy', 'mean_entropy_in',
                         'mean_entropy_out', 'model_size')
LOSS_CSV_HEADER = ('epoch', 'loss')
SCORES_CSV_HEADER = ('score', 'is_ood')
GRID_ENTROPY_CSV_HEADER = ('x', 'y', 'in_distribution', 'entropy')

CHECKPOINT_FILE = 'model.ckpt'
LOSS_FILE = 'loss.csv'
TRAIN_DATA_FILE = 'train.csv'
TEST_DATA_FILE = 'test.csv'
METRICS_FILE = 'metrics.csv'
RELIABILITY_FILE = 'reliability.csv'
SURFACE_FILE = 'surface.csv'
DIVERSITY_FILE = 'diversity.csv'
TRANSITION_FILE = 'transition.csv'
TRANSITION_DIR = 'transition'

DEFAULT_DROPOUT_SCALE = 2.0
EVAL_METRICS_FILE = 'eval.csv'
EVAL_RELIABILITY_FILE = 'eval-reliability.csv'
MASKS_FILE = 'masks' + MASK_FILE_SUFFIX
