"""
Synthetic datasets for the toy experiments.
"""
import logging
from dataclasses import dataclass
from dataclasses import field
from dataclasses import replace
from typing import Optional
from typing import Sequence
from typing import Tuple

import numpy as np

from masksembles.const import DEFAULT_BASE_SIGMA_FRACTION
from masksembles.const import DEFAULT_GRID_X_RANGE
from masksembles.const import DEFAULT_GRID_Y_RANGE
from masksembles.const import DEFAULT_SINUSOID_NOISE
from masksembles.const import DEFAULT_SINUSOID_OFFSETS
from masksembles.const import DEFAULT_X_RANGE
from masksembles.const import MAX_SEVERITY
from masksembles.const import STREAM_DATA
from masksembles.const import STREAM_NOISE
from masksembles.errors import ValidationError
from masksembles.errors import require
from masksembles.rng import stream

logger = logging.getLogger('masksembles')


@dataclass
class Dataset:
    features: np.ndarray
    labels: Optional[np.ndarray]
    meta: dict = field(default_factory=dict)
    # per-sample flag for grids: True inside the training range
    in_distribution: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        require(self.features.ndim == 2, 'features must be a B x F matrix (got shape %s)', self.features.shape)
        require(bool(np.all(np.isfinite(self.features))), 'features must be finite')
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            require(self.labels.shape == (self.features.shape[0],),
                    'labels length %s != sample count %d', self.labels.shape, self.features.shape[0])
            require(self.labels.size == 0 or self.labels.min() >= 0, 'labels must be >= 0')
        if self.in_distribution is not None:
            self.in_distribution = np.asarray(self.in_distribution, dtype=bool)

    def __len__(self):
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        if self.labels is None or self.labels.size == 0:
            return 0
        return int(self.labels.max()) + 1


def _check_range(name, bounds) -> Tuple[float, float]:
    low, high = float(bounds[0]), float(bounds[1])
    if not (np.isfinite(low) and np.isfinite(high) and low < high):
        raise ValidationError('%s must be a nonempty interval (got [%s, %s])' % (name, low, high))
    return low, high


def gen_two_sinusoids(count_per_class: int, noise_sigma: float = DEFAULT_SINUSOID_NOISE,
                      x_range=DEFAULT_X_RANGE, seed: int = 0,
                      offsets: Sequence[float] = DEFAULT_SINUSOID_OFFSETS) -> Dataset:
    """
    Points ``(x, sin(x) + offset_c + noise)`` with ``x`` uniform on ``x_range``,
    class ``c`` taking the ``c``-th offset. Classes are exactly balanced and
    appear in class order (class 0 first).
    """
    require(count_per_class >= 1, 'count_per_class must be >= 1 (got %s)', count_per_class)
    require(noise_sigma >= 0, 'noise_sigma must be >= 0 (got %s)', noise_sigma)
    low, high = _check_range('x_range', x_range)
    features, labels = [], []
    for label, offset in enumerate(offsets):
        rng = stream(seed, STREAM_DATA, label)
        x = rng.uniform(low, high, count_per_class)
        y = np.sin(x) + offset + rng.normal(0.0, 1.0, count_per_class) * noise_sigma
        features.append(np.column_stack([x, y]))
        labels.append(np.full(count_per_class, label))
    meta = {'generator': 'two_sinusoids', 'count_per_class': count_per_class, 'noise_sigma': noise_sigma,
            'x_range': (low, high), 'offsets': tuple(offsets), 'seed': seed}
    return Dataset(np.concatenate(features), np.concatenate(labels), meta)


def gen_blobs(count_per_class: int, centers=((-2.0, 0.0), (2.0, 0.0)), sigma: float = 0.5,
              seed: int = 0) -> Dataset:
    require(count_per_class >= 1, 'count_per_class must be >= 1 (got %s)', count_per_class)
    require(sigma >= 0, 'sigma must be >= 0 (got %s)', sigma)
    centers = np.asarray(centers, dtype=np.float64)
    features, labels = [], []
    for label, center in enumerate(centers):
        rng = stream(seed, STREAM_DATA, label)
        features.append(center + rng.normal(0.0, 1.0, (count_per_class, center.shape[0])) * sigma)
        labels.append(np.full(count_per_class, label))
    meta = {'generator': 'blobs', 'count_per_class': count_per_class, 'sigma': sigma, 'seed': seed}
    return Dataset(np.concatenate(features), np.concatenate(labels), meta)


def gen_ood_grid(x_range_extended=DEFAULT_GRID_X_RANGE, y_range=DEFAULT_GRID_Y_RANGE, resolution=41,
                 in_distribution_x=DEFAULT_X_RANGE) -> Dataset:
    """
    Regular unlabelled grid, row-major in y then x. Points whose x lies in
    ``in_distribution_x`` are flagged as in-distribution.
    """
    x_low, x_high = _check_range('x range', x_range_extended)
    y_low, y_high = _check_range('y range', y_range)
    in_low, in_high = _check_range('in-distribution x range', in_distribution_x)
    require(x_low <= in_low and in_high <= x_high and (x_low, x_high) != (in_low, in_high),
            'grid x range [%s, %s] must strictly contain the training range [%s, %s]',
            x_low, x_high, in_low, in_high)
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    x_steps, y_steps = int(resolution[0]), int(resolution[1])
    require(x_steps >= 2 and y_steps >= 2, 'resolution must be >= 2 per axis (got %s)', resolution)

    xs = np.linspace(x_low, x_high, x_steps)
    ys = np.linspace(y_low, y_high, y_steps)
    grid_x, grid_y = np.meshgrid(xs, ys)
    features = np.column_stack([grid_x.ravel(), grid_y.ravel()])
    inside = (features[:, 0] >= in_low) & (features[:, 0] <= in_high)
    meta = {'generator': 'ood_grid', 'x_range': (x_low, x_high), 'y_range': (y_low, y_high),
            'resolution': (x_steps, y_steps), 'in_distribution_x': (in_low, in_high)}
    return Dataset(features, None, meta, in_distribution=inside)


def corrupt_gaussian(dataset: Dataset, severity: int, seed: int = 0,
                     base_sigma: Optional[float] = None) -> Dataset:
    """
    Add i.i.d. Gaussian noise with sigma = severity * base_sigma. The default
    base_sigma is a fifth of the overall feature standard deviation.
    Severity 0 returns the features unchanged.
    """
    require(0 <= severity <= MAX_SEVERITY, 'severity must be in [0, %d] (got %s)', MAX_SEVERITY, severity)
    if base_sigma is None:
        base_sigma = DEFAULT_BASE_SIGMA_FRACTION * float(dataset.features.std())
    meta = dict(dataset.meta, corruption='gaussian', severity=severity, base_sigma=base_sigma, noise_seed=seed)
    if severity == 0:
        return replace(dataset, features=dataset.features.copy(), meta=meta)
    rng = stream(seed, STREAM_NOISE, severity)
    noise = rng.normal(0.0, 1.0, dataset.features.shape) * (severity * base_sigma)
    logger.info('Corrupting %d samples with severity %d (sigma %.4g)', len(dataset), severity, severity * base_sigma)
    return replace(dataset, features=dataset.features + noise, meta=meta)
