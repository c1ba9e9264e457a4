"""
Fixed pools of binary masks with controllable overlap.

A pool is described by three numbers: ``n`` masks, ``m`` ones per mask and a
scale ``s`` that widens every mask to ``round(m * s)`` positions. Each mask
switches on a uniformly random ``m``-subset of those positions; positions that
no mask uses may then be trimmed away. ``s = 1`` yields ``n`` identical
all-ones masks (a single model), large ``s`` yields nearly disjoint masks (an
ensemble of independent sub-networks).
"""
import logging
import math
from dataclasses import dataclass
from dataclasses import field
from typing import List
from typing import Optional

import numpy as np

from masksembles.const import STREAM_DROPOUT
from masksembles.const import STREAM_MASKS
from masksembles.errors import FormatError
from masksembles.errors import ValidationError
from masksembles.errors import require
from masksembles.rng import UINT64_MAX
from masksembles.rng import stream

logger = logging.getLogger('masksembles')


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


@dataclass(frozen=True)
class MaskSpec:
    n: int
    m: int
    s: float
    seed: int = 0
    # Explicit pre-trim width, set when the width has to match an existing layer.
    width: Optional[int] = None

    def __post_init__(self):
        require(self.n >= 1, 'n must be >= 1 (got %s)', self.n)
        require(self.m >= 1, 'm must be >= 1 (got %s)', self.m)
        require(math.isfinite(self.s) and self.s >= 1.0, 's must be >= 1 (got %s)', self.s)
        require(0 <= self.seed <= UINT64_MAX, 'seed must be a 64-bit unsigned integer (got %s)', self.seed)
        require(self.width is None or self.width >= 1, 'width must be >= 1 (got %s)', self.width)
        require(self.pre_trim_width >= self.m,
                'pre-trim width must be >= m (got width %d, m %d)', self.pre_trim_width, self.m)

    @property
    def pre_trim_width(self) -> int:
        if self.width is not None:
            return self.width
        return round_half_up(self.m * self.s)

    @property
    def dropout_rate(self) -> float:
        return dropout_rate_equivalent(self)

    def header(self, trim: bool) -> str:
        fields = [str(self.n), str(self.m), repr(float(self.s)), str(self.seed), '1' if trim else '0']
        if self.width is not None:
            fields.append(str(self.width))
        return ' '.join(fields)


@dataclass(frozen=True)
class MaskSet:
    spec: MaskSpec
    masks: np.ndarray = field(repr=False)
    pre_trim_width: int
    dropped_count: int
    trimmed: bool

    @property
    def n(self) -> int:
        return self.masks.shape[0]

    @property
    def k(self) -> int:
        return self.masks.shape[1]

    @property
    def lines(self) -> List[str]:
        return [''.join('1' if value else '0' for value in row) for row in self.masks]

    def to_text(self) -> str:
        return '\n'.join([self.spec.header(self.trimmed)] + self.lines) + '\n'

    @staticmethod
    def from_text(text: str) -> 'MaskSet':
        lines = [line.strip() for line in text.strip().splitlines()]
        if not lines:
            raise FormatError('empty mask file')
        header = lines[0].split()
        if len(header) not in (5, 6):
            raise FormatError('mask header must be "N M S seed trim [width]", got "%s"' % lines[0])
        try:
            n, m, s, seed = int(header[0]), int(header[1]), float(header[2]), int(header[3])
            if header[4] not in ('0', '1'):
                raise ValueError('trim flag must be 0 or 1, got "%s"' % header[4])
            trim = header[4] == '1'
            width = int(header[5]) if len(header) == 6 else None
        except ValueError as e:
            raise FormatError('bad mask header "%s": %s' % (lines[0], e)) from e
        spec = MaskSpec(n, m, s, seed, width)
        rows = lines[1:]
        if len(rows) != n:
            raise FormatError('expected %d mask rows, got %d' % (n, len(rows)))
        if any(set(row) - {'0', '1'} for row in rows) or len({len(row) for row in rows}) != 1:
            raise FormatError('mask rows must be equal-length strings of 0/1')
        masks = np.array([[char == '1' for char in row] for row in rows], dtype=np.uint8)
        return _make_mask_set(spec, masks, trim)

    def __eq__(self, other):
        if not isinstance(other, MaskSet):
            return NotImplemented
        return (self.spec == other.spec and self.trimmed == other.trimmed
                and np.array_equal(self.masks, other.masks))

    __hash__ = None


def _make_mask_set(spec: MaskSpec, masks: np.ndarray, trim: bool) -> MaskSet:
    masks = np.ascontiguousarray(masks, dtype=np.uint8)
    masks.setflags(write=False)
    width = spec.pre_trim_width
    if np.any(masks.sum(axis=1) != spec.m):
        raise FormatError('every mask must contain exactly m=%d ones' % spec.m)
    if trim and not np.all(masks.any(axis=0)):
        raise FormatError('trimmed mask set contains an all-zero column')
    if not trim and masks.shape[1] != width:
        raise FormatError('untrimmed mask width %d != pre-trim width %d' % (masks.shape[1], width))
    return MaskSet(spec=spec, masks=masks, pre_trim_width=width,
                   dropped_count=width - masks.shape[1], trimmed=trim)


def generate_masks(spec: MaskSpec, trim: bool = True) -> MaskSet:
    width = spec.pre_trim_width
    masks = np.zeros((spec.n, width), dtype=np.uint8)
    for row in range(spec.n):
        ones = stream(spec.seed, STREAM_MASKS, row).choice(width, size=spec.m, replace=False)
        masks[row, ones] = 1
    if trim:
        # column order of the survivors is preserved
        masks = masks[:, masks.any(axis=0)]
    mask_set = _make_mask_set(spec, masks, trim)
    logger.debug('Generated masks %s trim=%s: K=%d D=%d', spec, trim, mask_set.k, mask_set.dropped_count)
    return mask_set


def expected_retention_probability(spec: MaskSpec) -> float:
    """Probability that a pre-trim position is used by at least one mask."""
    return 1.0 - (1.0 - 1.0 / spec.s) ** spec.n


def expected_size(spec: MaskSpec) -> float:
    """Expected width left after trimming: M*S*[1 - (1 - 1/S)^N]."""
    return spec.m * spec.s * expected_retention_probability(spec)


def expected_intersection(spec: MaskSpec) -> float:
    """Expected number of ones two masks share."""
    return spec.m / spec.s


def expected_iou(s: float) -> float:
    require(s >= 1.0, 's must be >= 1 (got %s)', s)
    return 1.0 / (2.0 * s - 1.0)


def pairwise_iou(masks) -> np.ndarray:
    """Upper-triangle IoU values of all unordered row pairs."""
    rows = np.asarray(masks, dtype=np.int64)
    intersection = rows @ rows.T
    counts = rows.sum(axis=1)
    union = counts[:, None] + counts[None, :] - intersection
    upper = np.triu_indices(rows.shape[0], k=1)
    inter, uni = intersection[upper], union[upper]
    # two empty rows are identical
    return np.where(uni > 0, inter / np.maximum(uni, 1), 1.0)


def empirical_mean_iou(mask_set) -> float:
    masks = mask_set.masks if isinstance(mask_set, MaskSet) else np.asarray(mask_set)
    if masks.ndim != 2 or masks.shape[0] < 2:
        raise ValidationError('mean IoU needs at least 2 masks (got %d)' % (masks.shape[0] if masks.ndim else 0))
    return float(pairwise_iou(masks).mean())


def dropout_rate_equivalent(spec: MaskSpec) -> float:
    return 1.0 - 1.0 / spec.s


def solve_m_for_fixed_width(target_width: int, n: int, s: float, seed: int = 0) -> MaskSpec:
    """
    Pick M so that the pre-trim mask width equals an existing layer width.

    M is round(width / S); the pre-trim width is pinned to ``target_width``
    so that, generated with ``trim=False``, the pool fits the layer exactly.
    """
    require(target_width >= 1, 'target width must be >= 1 (got %s)', target_width)
    require(s >= 1.0, 's must be >= 1 (got %s)', s)
    require(math.floor(target_width / s) >= 1,
            'floor(width / s) must be >= 1 (got width %s, s %s)', target_width, s)
    m = round_half_up(target_width / s)
    require(m >= 1, 'solved m must be >= 1 (got %s)', m)
    return MaskSpec(n=n, m=m, s=s, seed=seed, width=target_width)


def generate_bernoulli_masks(width: int, n: int, rate: float, seed: int, index: int = 0) -> np.ndarray:
    """
    ``n`` i.i.d. dropout masks: every position is kept with probability
    ``1 - rate``. Unlike a mask pool, rows neither have a fixed number of ones
    nor controlled overlap.
    """
    require(width >= 1, 'width must be >= 1 (got %s)', width)
    require(0.0 <= rate < 1.0, 'dropout rate must be in [0, 1) (got %s)', rate)
    rng = stream(seed, STREAM_DROPOUT, index)
    return (rng.random((n, width)) >= rate).astype(np.float64)
