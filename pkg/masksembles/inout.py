"""
Text file formats: mask pools, checkpoints, dataset/metrics CSVs.

Every writer produces the same bytes for the same input and every reader
restores the written values exactly (floats go through ``repr`` or
``float.hex``).
"""
import csv
import io
import logging
import os
from typing import Iterable
from typing import List
from typing import Sequence

import numpy as np

from masksembles.const import CHECKPOINT_MAGIC
from masksembles.const import MASK_FILE_SUFFIX
from masksembles.const import METRICS_CSV_HEADER
from masksembles.const import RELIABILITY_CSV_HEADER
from masksembles.data import Dataset
from masksembles.errors import FormatError
from masksembles.files import slurp
from masksembles.files import spit_atomic
from masksembles.masks import MaskSet
from masksembles.metrics import MetricsReport
from masksembles.metrics import ReliabilityDiagram
from masksembles.model import MasksemblesMLP

logger = logging.getLogger('masksembles')


def save_masks(mask_set: MaskSet, filename: str) -> None:
    logger.info('Saving %d x %d masks to %s', mask_set.n, mask_set.k, filename)
    spit_atomic(filename, mask_set.to_text())


def load_masks(filename: str) -> MaskSet:
    return MaskSet.from_text(slurp(filename))


def format_csv(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow([format_cell(value) for value in row])
    return buffer.getvalue()


def format_cell(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return '1' if value else '0'
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def write_csv(filename: str, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    spit_atomic(filename, format_csv(header, rows))


def read_csv(filename: str, expected_header: Sequence[str] = None) -> List[List[str]]:
    with open(filename, encoding='utf-8', newline='') as file_:
        rows = list(csv.reader(file_))
    if not rows:
        raise FormatError('%s: empty CSV file' % filename)
    if expected_header is not None and tuple(rows[0]) != tuple(expected_header):
        raise FormatError('%s: expected header %s, got %s' % (filename, ','.join(expected_header), ','.join(rows[0])))
    return rows


def save_dataset(dataset: Dataset, filename: str) -> None:
    header = ['x%d' % index for index in range(dataset.num_features)] + ['label']
    labels = dataset.labels if dataset.labels is not None else [''] * len(dataset)
    rows = [list(features) + [label] for features, label in zip(dataset.features, labels)]
    write_csv(filename, header, rows)


def load_dataset(filename: str) -> Dataset:
    rows = read_csv(filename)
    header, body = rows[0], rows[1:]
    if not header or header[-1] != 'label' or header[:-1] != ['x%d' % i for i in range(len(header) - 1)]:
        raise FormatError('%s: dataset header must be x0,...,xF-1,label' % filename)
    try:
        features = np.array([[float(value) for value in row[:-1]] for row in body], dtype=np.float64)
        raw_labels = [row[-1] for row in body]
        labels = None if all(label == '' for label in raw_labels) else np.array([int(v) for v in raw_labels])
    except ValueError as e:
        raise FormatError('%s: %s' % (filename, e)) from e
    features = features.reshape(len(body), len(header) - 1)
    return Dataset(features, labels, {'source': os.path.basename(filename)})


def save_metrics(reports: Sequence[MetricsReport], filename: str) -> None:
    write_csv(filename, METRICS_CSV_HEADER, [report.to_row() for report in reports])


def load_metrics(filename: str) -> List[MetricsReport]:
    return [MetricsReport.from_row(row) for row in read_csv(filename, METRICS_CSV_HEADER)[1:]]


def save_reliability(diagram: ReliabilityDiagram, filename: str) -> None:
    write_csv(filename, RELIABILITY_CSV_HEADER, diagram.rows())


def load_reliability(filename: str) -> ReliabilityDiagram:
    return ReliabilityDiagram.from_rows(read_csv(filename, RELIABILITY_CSV_HEADER)[1:])


def _hex_block(values: np.ndarray) -> str:
    return ' '.join(float(value).hex() for value in values.ravel())


def save_checkpoint(model: MasksemblesMLP, filename: str) -> None:
    """
    Header lines (widths, mask file, seed, fixed-width flag) followed by one
    ``param <name> <shape>`` line and one line of hex floats per tensor. The
    mask pool goes to ``<filename>.masks`` next to the checkpoint.
    """
    masks_name = 'none'
    if model.mask_set is not None:
        masks_name = os.path.basename(filename) + MASK_FILE_SUFFIX
        save_masks(model.mask_set, os.path.join(os.path.dirname(os.path.abspath(filename)), masks_name))
    lines = [
        CHECKPOINT_MAGIC,
        'layer_widths %s' % ','.join(str(width) for width in model.layer_widths),
        'masks %s' % masks_name,
        'seed %d' % model.seed,
        'fixed_width %d' % int(model.fixed_width),
    ]
    for param in model.parameters:
        lines.append('param %s %s' % (param.name, ','.join(str(dim) for dim in param.shape)))
        lines.append(_hex_block(param.data))
    logger.info('Saving checkpoint %s', filename)
    spit_atomic(filename, '\n'.join(lines) + '\n')


def load_checkpoint(filename: str) -> MasksemblesMLP:
    lines = slurp(filename).splitlines()
    if not lines or lines[0] != CHECKPOINT_MAGIC:
        raise FormatError('%s: not a checkpoint file' % filename)
    header = {}
    index = 1
    while index < len(lines) and not lines[index].startswith('param '):
        key, _, value = lines[index].partition(' ')
        header[key] = value
        index += 1
    missing = {'layer_widths', 'masks', 'seed', 'fixed_width'} - set(header)
    if missing:
        raise FormatError('%s: missing header fields %s' % (filename, ', '.join(sorted(missing))))

    mask_set = None
    if header['masks'] != 'none':
        mask_set = load_masks(os.path.join(os.path.dirname(os.path.abspath(filename)), header['masks']))
    try:
        widths = [int(width) for width in header['layer_widths'].split(',')]
        model = MasksemblesMLP(widths, mask_set, int(header['seed']), bool(int(header['fixed_width'])))
    except ValueError as e:
        raise FormatError('%s: %s' % (filename, e)) from e

    params = model.parameters
    blocks = lines[index:]
    if len(blocks) != 2 * len(params):
        raise FormatError('%s: expected %d parameter blocks, got %d' % (filename, len(params), len(blocks) // 2))
    for param, (title, values) in zip(params, zip(blocks[::2], blocks[1::2])):
        _, name, shape = title.split(' ')
        shape = tuple(int(dim) for dim in shape.split(','))
        if name != param.name or shape != param.shape:
            raise FormatError('%s: parameter %s%s does not match model %s%s' % (filename, name, shape, param.name,
                                                                               param.shape))
        try:
            data = np.array([float.fromhex(token) for token in values.split()], dtype=np.float64)
        except ValueError as e:
            raise FormatError('%s: bad value in %s: %s' % (filename, name, e)) from e
        if data.size != param.size:
            raise FormatError('%s: %s holds %d values, expected %d' % (filename, name, data.size, param.size))
        param.data = data.reshape(shape)
    return model
