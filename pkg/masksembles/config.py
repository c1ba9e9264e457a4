"""
Experiment configuration.

Config files are flat ``key=value`` lines (``#`` starts a comment), lists are
comma-separated::

    s_values=1.1,2,3,10
    m=100
    epochs=80

Any key can be overridden on the command line as ``--key value`` (dashes and
underscores are interchangeable).
"""
import logging
from dataclasses import dataclass
from dataclasses import field
from dataclasses import fields
from dataclasses import replace
from typing import Iterable
from typing import Optional
from typing import Sequence
from typing import Tuple

from masksembles import const
from masksembles.env import parse_key_values
from masksembles.errors import ValidationError
from masksembles.errors import require
from masksembles.files import slurp_lines
from masksembles.model import TrainConfig
from masksembles.rng import UINT64_MAX

logger = logging.getLogger('masksembles')

TRUE_WORDS = ('1', 'true', 'yes', 'on')
FALSE_WORDS = ('0', 'false', 'no', 'off')


def parse_bool(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in TRUE_WORDS:
        return True
    if lowered in FALSE_WORDS:
        return False
    raise ValueError('expected a boolean, got "%s"' % value)


def parse_ints(value: str) -> Tuple[int, ...]:
    return tuple(int(item) for item in value.split(',') if item.strip())


def parse_floats(value: str) -> Tuple[float, ...]:
    return tuple(float(item) for item in value.split(',') if item.strip())


def _option(default, parse):
    return field(default=default, metadata={'parse': parse})


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = _option(const.DEFAULT_SEED, int)
    out: str = _option('.', str)
    runs: int = _option(1, int)
    workers: int = _option(1, int)

    # dataset
    dataset: str = _option('sinusoids', str)
    count_per_class: int = _option(const.DEFAULT_SINUSOID_COUNT, int)
    test_count_per_class: int = _option(const.DEFAULT_SINUSOID_COUNT, int)
    noise_sigma: float = _option(const.DEFAULT_SINUSOID_NOISE, float)
    diversity_noise_sigma: float = _option(const.DEFAULT_DIVERSITY_NOISE, float)
    x_range: Tuple[float, ...] = _option(const.DEFAULT_X_RANGE, parse_floats)
    grid_x_range: Tuple[float, ...] = _option(const.DEFAULT_GRID_X_RANGE, parse_floats)
    grid_y_range: Tuple[float, ...] = _option(const.DEFAULT_GRID_Y_RANGE, parse_floats)
    grid_resolution: int = _option(const.DEFAULT_GRID_RESOLUTION, int)
    severities: Tuple[int, ...] = _option((0,), parse_ints)

    # mask pool grid
    model: str = _option('masksembles', str)
    n_values: Tuple[int, ...] = _option((const.DEFAULT_N,), parse_ints)
    m: int = _option(const.DEFAULT_M, int)
    s_values: Tuple[float, ...] = _option(const.DEFAULT_TRANSITION_SCALES, parse_floats)
    fixed_width: bool = _option(False, parse_bool)
    width: int = _option(0, int)
    hidden_layers: int = _option(1, int)
    draws: int = _option(const.DEFAULT_SURFACE_DRAWS, int)

    # baselines
    ensemble_size: int = _option(const.DEFAULT_N, int)
    include_single: bool = _option(True, parse_bool)
    include_ensemble: bool = _option(True, parse_bool)
    include_dropout: bool = _option(True, parse_bool)

    # training
    epochs: int = _option(const.DEFAULT_EPOCHS, int)
    batch_size: int = _option(const.DEFAULT_BATCH_SIZE, int)
    learning_rate: float = _option(const.DEFAULT_LEARNING_RATE, float)
    momentum: float = _option(const.DEFAULT_MOMENTUM, float)

    # evaluation
    bins: int = _option(const.DEFAULT_ECE_BINS, int)
    score: str = _option(const.DEFAULT_OOD_SCORE, str)

    def __post_init__(self):
        require(0 <= self.seed and self.seed + self.runs - 1 <= UINT64_MAX,
                'seed must be in [0, 2**64 - 1] for every run (got seed %s, runs %s)', self.seed, self.runs)
        require(len(self.n_values) >= 1, 'n_values must not be empty')
        require(len(self.s_values) >= 1, 's_values must not be empty')
        require(all(n >= 1 for n in self.n_values), 'n_values must be >= 1 (got %s)', self.n_values)
        require(all(s >= 1.0 for s in self.s_values), 's_values must be >= 1 (got %s)', self.s_values)
        require(self.m >= 1, 'm must be >= 1 (got %s)', self.m)
        require(self.runs >= 1, 'runs must be >= 1 (got %s)', self.runs)
        require(self.workers >= 1, 'workers must be >= 1 (got %s)', self.workers)
        require(self.hidden_layers >= 1, 'hidden_layers must be >= 1 (got %s)', self.hidden_layers)
        require(self.ensemble_size >= 1, 'ensemble_size must be >= 1 (got %s)', self.ensemble_size)
        require(self.draws >= 1, 'draws must be >= 1 (got %s)', self.draws)
        require(self.dataset in ('sinusoids', 'blobs'), 'dataset must be sinusoids or blobs (got %s)', self.dataset)
        require(self.model in ('masksembles', 'single'), 'model must be masksembles or single (got %s)', self.model)
        require(self.score in const.OOD_SCORES, 'score must be one of %s (got %s)',
                ', '.join(const.OOD_SCORES), self.score)
        for name in ('x_range', 'grid_x_range', 'grid_y_range'):
            require(len(getattr(self, name)) == 2, '%s needs exactly two values', name)
        require(not self.fixed_width or self.width >= 1, 'fixed_width needs width >= 1')
        require(len(self.severities) >= 1, 'severities must not be empty')
        require(all(0 <= severity <= const.MAX_SEVERITY for severity in self.severities),
                'severities must be in [0, %d] (got %s)', const.MAX_SEVERITY, self.severities)

    @property
    def train_config(self) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, batch_size=self.batch_size, learning_rate=self.learning_rate,
                           seed=self.seed, momentum=self.momentum)

    def hidden(self, width: int) -> list:
        return [width] * self.hidden_layers

    def layer_widths(self, width: int, inputs: int = 2, outputs: int = 2) -> list:
        return [inputs] + self.hidden(width) + [outputs]


OPTION_NAMES = {spec.name for spec in fields(ExperimentConfig)}


def normalize_key(key: str) -> str:
    return key.strip().lstrip('-').replace('-', '_')


def apply_overrides(config: ExperimentConfig, pairs: Iterable[Tuple[str, str]]) -> ExperimentConfig:
    parsers = {spec.name: spec.metadata['parse'] for spec in fields(ExperimentConfig)}
    changes = {}
    for key, value in pairs:
        name = normalize_key(key)
        if name not in parsers:
            raise ValidationError('unknown config key "%s"' % key)
        try:
            changes[name] = parsers[name](value)
        except ValueError as e:
            raise ValidationError('bad value for %s: %s' % (name, e)) from e
    return replace(config, **changes)


def parse_override_args(tokens: Sequence[str]) -> list:
    """``['--epochs', '5', '--s-values=1,2']`` -> ``[('epochs', '5'), ('s-values', '1,2')]``"""
    pairs = []
    index = 0
    tokens = list(tokens)
    while index < len(tokens):
        token = tokens[index]
        if not token.startswith('--'):
            raise ValidationError('unexpected argument "%s"' % token)
        if '=' in token:
            key, value = token[2:].split('=', 1)
            index += 1
        else:
            if index + 1 >= len(tokens):
                raise ValidationError('missing value for %s' % token)
            key, value = token[2:], tokens[index + 1]
            index += 2
        pairs.append((key, value))
    return pairs


def load_config(filename: Optional[str] = None, overrides: Iterable[Tuple[str, str]] = (),
                **defaults) -> ExperimentConfig:
    """
    Build a config from built-in defaults, then ``defaults`` (per-command
    defaults), then the file, then ``overrides``.
    """
    config = ExperimentConfig(**defaults)
    if filename is not None:
        logger.info('Loading experiment config %s', filename)
        try:
            pairs = parse_key_values(slurp_lines(filename))
        except ValueError as e:
            raise ValidationError('%s: %s' % (filename, e)) from e
        config = apply_overrides(config, pairs)
    return apply_overrides(config, overrides)
