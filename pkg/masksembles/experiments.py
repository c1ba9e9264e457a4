"""
Experiment runners behind the CLI: train/evaluate one model and the three
sweeps (single-model to ensemble transition, size/IoU surface, diversity).

A sweep is a list of independent cells. Every cell derives its own seed from
the run seed and its index, owns its model and writes its own files, so the
cells can run in any order on any number of threads; summaries are assembled
afterwards in cell order.
"""
import logging
import math
import os
import time
from dataclasses import dataclass
from dataclasses import replace
from functools import partial
from itertools import combinations
from typing import List
from typing import Optional
from typing import Tuple

import numpy as np

from masksembles import const
from masksembles.config import ExperimentConfig
from masksembles.data import Dataset
from masksembles.data import corrupt_gaussian
from masksembles.data import gen_blobs
from masksembles.data import gen_ood_grid
from masksembles.data import gen_two_sinusoids
from masksembles.errors import ValidationError
from masksembles.files import ensure_dir
from masksembles.inout import save_checkpoint
from masksembles.inout import save_dataset
from masksembles.inout import save_metrics
from masksembles.inout import save_reliability
from masksembles.inout import write_csv
from masksembles.masks import MaskSpec
from masksembles.masks import empirical_mean_iou
from masksembles.masks import expected_iou
from masksembles.masks import expected_size
from masksembles.masks import generate_masks
from masksembles.metrics import MetricsReport
from masksembles.metrics import ReliabilityDiagram
from masksembles.metrics import accuracy
from masksembles.metrics import disagreement
from masksembles.metrics import diversity_bounds
from masksembles.metrics import ece
from masksembles.metrics import entropy_rows
from masksembles.metrics import ood_scores
from masksembles.metrics import pr_auc
from masksembles.metrics import roc_auc
from masksembles.model import Ensemble
from masksembles.model import McDropoutMLP
from masksembles.model import MasksemblesMLP
from masksembles.model import build_dropout_model
from masksembles.model import build_ensemble
from masksembles.model import build_model
from masksembles.model import build_single_model
from masksembles.model import member_predictions
from masksembles.model import model_size
from masksembles.model import predict_ensemble
from masksembles.model import train
from masksembles.parallel import call_parallel
from masksembles.rng import derive_seed

logger = logging.getLogger('masksembles')


@dataclass
class Evaluation:
    report: MetricsReport
    diagram: ReliabilityDiagram
    scores: np.ndarray
    is_ood: np.ndarray


def format_s(s) -> str:
    return s if isinstance(s, str) else '%g' % s


def describe_model(model) -> Tuple[int, int, float, float]:
    """``(n, m, s, iou)`` of a model as reported in the metrics CSV."""
    if isinstance(model, Ensemble):
        # disjoint members
        return model.n_members, model.layer_widths[1], float(model.n_members), 0.0
    if isinstance(model, McDropoutMLP):
        width = model.layer_widths[1]
        iou = empirical_mean_iou(model.inference_masks) if model.n_members >= 2 else 1.0
        return model.n_members, int(round(width * (1.0 - model.rate))), 1.0 / (1.0 - model.rate), iou
    if model.mask_set is None:
        return 1, model.layer_widths[1], 1.0, 1.0
    spec = model.mask_set.spec
    iou = empirical_mean_iou(model.mask_set) if model.mask_set.n >= 2 else 1.0
    return spec.n, spec.m, float(spec.s), iou


def ood_points(ood: Dataset) -> np.ndarray:
    """Features of the out-of-distribution part of ``ood`` (all of it when unflagged)."""
    if ood.in_distribution is None:
        return ood.features
    return ood.features[~ood.in_distribution]


def evaluate(model, test: Dataset, ood: Dataset, tag: str, bins: int = const.DEFAULT_ECE_BINS,
             score: str = const.DEFAULT_OOD_SCORE, workers: int = 1, wall_time: float = 0.0) -> Evaluation:
    """
    Metrics of the mixture prediction: accuracy and calibration on ``test``,
    mean entropy on ``test`` and on the OOD points, and OOD detection with
    ``test`` as the negative and the OOD points as the positive class.
    """
    if test.labels is None:
        raise ValidationError('evaluation needs a labelled test set')
    outside = ood_points(ood)
    if outside.shape[0] == 0:
        raise ValidationError('OOD set has no out-of-distribution points')

    probs_in = predict_ensemble(model, test.features, workers).mixture_probs
    probs_out = predict_ensemble(model, outside, workers).mixture_probs
    calibration_error, diagram = ece(probs_in, test.labels, bins)
    scores = np.concatenate([ood_scores(probs_in, score), ood_scores(probs_out, score)])
    is_ood = np.concatenate([np.zeros(len(test), dtype=bool), np.ones(outside.shape[0], dtype=bool)])

    n, m, s, iou = describe_model(model)
    report = MetricsReport(
        tag=tag, n=n, m=m, s=s, iou=iou,
        accuracy=accuracy(probs_in.argmax(axis=1), test.labels),
        ece=calibration_error,
        mean_entropy_in=float(entropy_rows(probs_in).mean()),
        mean_entropy_out=float(entropy_rows(probs_out).mean()),
        ood_roc_auc=roc_auc(scores, is_ood),
        ood_pr_auc=pr_auc(scores, is_ood),
        model_size=model_size(model),
        wall_time_seconds=wall_time,
    )
    logger.info('Evaluated %s: accuracy %.4f ece %.4f roc %.4f', tag, report.accuracy, report.ece,
                report.ood_roc_auc)
    return Evaluation(report, diagram, scores, is_ood)


def make_train_set(config: ExperimentConfig, seed: int, noise_sigma: Optional[float] = None) -> Dataset:
    return _make_dataset(config, derive_seed(seed, const.STREAM_DATA, 0), config.count_per_class, noise_sigma)


def make_test_set(config: ExperimentConfig, seed: int, noise_sigma: Optional[float] = None) -> Dataset:
    return _make_dataset(config, derive_seed(seed, const.STREAM_DATA, 1), config.test_count_per_class, noise_sigma)


def _make_dataset(config: ExperimentConfig, seed: int, count: int, noise_sigma: Optional[float]) -> Dataset:
    noise_sigma = config.noise_sigma if noise_sigma is None else noise_sigma
    if config.dataset == 'blobs':
        return gen_blobs(count, seed=seed)
    return gen_two_sinusoids(count, noise_sigma, config.x_range, seed)


def make_grid(config: ExperimentConfig) -> Dataset:
    return gen_ood_grid(config.grid_x_range, config.grid_y_range, config.grid_resolution, config.x_range)


def configured_model(config: ExperimentConfig, seed: int):
    """The model a ``train`` run builds: first N and S of the grid, or a single model."""
    if config.model == 'single':
        return build_single_model(config.layer_widths(config.m), seed)
    if config.fixed_width:
        return build_model(config.layer_widths(config.width),
                           MaskSpec(config.n_values[0], config.m, config.s_values[0], seed),
                           fixed_width=True, seed=seed)
    return build_model(config.layer_widths(config.m), MaskSpec(config.n_values[0], config.m, config.s_values[0], seed),
                       seed=seed)


def train_cell(model, dataset: Dataset, config: ExperimentConfig, seed: int):
    trained, _ = train(model, dataset, replace(config.train_config, seed=seed))
    return trained


def run_train(config: ExperimentConfig) -> Tuple[MasksemblesMLP, Evaluation]:
    """
    Train one model and write the checkpoint, its loss history, the train and
    test sets and the metrics/reliability report on the test set.
    """
    out = ensure_dir(config.out)
    train_set = make_train_set(config, config.seed)
    test_set = make_test_set(config, config.seed)
    model = configured_model(config, config.seed)
    model, history = train(model, train_set, config.train_config)

    save_checkpoint(model, os.path.join(out, const.CHECKPOINT_FILE))
    write_csv(os.path.join(out, const.LOSS_FILE), const.LOSS_CSV_HEADER, enumerate(history.epoch_losses))
    save_dataset(train_set, os.path.join(out, const.TRAIN_DATA_FILE))
    save_dataset(test_set, os.path.join(out, const.TEST_DATA_FILE))

    evaluation = evaluate(model, test_set, make_grid(config), '%s/%s' % (config.model, config.score),
                          config.bins, config.score, config.workers)
    save_metrics([evaluation.report], os.path.join(out, const.METRICS_FILE))
    save_reliability(evaluation.diagram, os.path.join(out, const.RELIABILITY_FILE))
    return model, evaluation


def corrupted(test: Dataset, severity: int, seed: int) -> Dataset:
    if severity == 0:
        return test
    return corrupt_gaussian(test, severity, derive_seed(seed, const.STREAM_NOISE))


def severity_tag(tag: str, severity: int, sweep: bool) -> str:
    return '%s/severity%d' % (tag, severity) if severity or sweep else tag


def evaluate_severities(model, test: Dataset, ood: Dataset, tag: str, severities, seed: int,
                        bins: int = const.DEFAULT_ECE_BINS, score: str = const.DEFAULT_OOD_SCORE,
                        workers: int = 1, timing: bool = False) -> List[Evaluation]:
    """
    One evaluation per corruption severity of ``test`` (domain shift); the OOD
    set is left clean. With more than one severity every tag gets a
    ``/severityK`` suffix. The wall time is recorded only with ``timing``.
    """
    sweep = len(severities) > 1
    evaluations = []
    for severity in severities:
        started = time.perf_counter()
        evaluation = evaluate(model, corrupted(test, severity, seed), ood, severity_tag(tag, severity, sweep),
                              bins, score, workers)
        if timing:
            evaluation.report.wall_time_seconds = time.perf_counter() - started
        evaluations.append(evaluation)
    return evaluations


# transition sweep

@dataclass(frozen=True)
class TransitionCell:
    config: str
    s: object
    seed: int
    index: int


def transition_cells(config: ExperimentConfig) -> List[TransitionCell]:
    cells = []
    for run in range(config.runs):
        seed = config.seed + run
        labels = []
        for n in config.n_values:
            name = 'masksembles' if len(config.n_values) == 1 else 'masksembles-n%d' % n
            labels.extend((name, s) for s in config.s_values)
        if config.include_single:
            labels.append(('single', 'single'))
        if config.include_ensemble:
            labels.append(('ensemble', 'ensemble'))
        if config.include_dropout:
            labels.append(('mc-dropout', const.DEFAULT_DROPOUT_SCALE))
        cells.extend(TransitionCell(name, s, seed, index) for index, (name, s) in enumerate(labels))
    return cells


def transition_model(config: ExperimentConfig, cell: TransitionCell, seed: int):
    widths = config.layer_widths(config.m)
    if cell.config == 'single':
        return build_single_model(widths, seed)
    if cell.config == 'ensemble':
        return build_ensemble(widths, config.ensemble_size, seed)
    if cell.config == 'mc-dropout':
        return build_dropout_model(widths, config.m, cell.s, config.n_values[0], seed)
    n = config.n_values[0] if cell.config == 'masksembles' else int(cell.config.rsplit('-n', 1)[1])
    return build_model(widths, MaskSpec(n, config.m, cell.s, seed), seed=seed)


def run_transition_cell(config: ExperimentConfig, cell: TransitionCell, grid: Dataset, directory: str) -> list:
    seed = derive_seed(cell.seed, const.STREAM_CELL, cell.index)
    logger.info('Transition cell %s s=%s seed=%d', cell.config, format_s(cell.s), cell.seed)
    train_set = make_train_set(config, cell.seed)
    test_set = make_test_set(config, cell.seed)
    model = train_cell(transition_model(config, cell, seed), train_set, config, seed)

    test_probs = predict_ensemble(model, test_set.features).mixture_probs
    grid_entropy = entropy_rows(predict_ensemble(model, grid.features).mixture_probs)
    rows = [(x, y, inside, value) for (x, y), inside, value in zip(grid.features, grid.in_distribution, grid_entropy)]
    filename = '%s-s%s-seed%d.csv' % (cell.config, format_s(cell.s), cell.seed)
    write_csv(os.path.join(directory, filename), const.GRID_ENTROPY_CSV_HEADER, rows)

    return [cell.config, format_s(cell.s), cell.seed,
            accuracy(test_probs.argmax(axis=1), test_set.labels),
            float(entropy_rows(test_probs).mean()),
            float(grid_entropy[~grid.in_distribution].mean()),
            model_size(model)]


def run_transition(config: ExperimentConfig) -> List[list]:
    """
    Train one model per S (and the baselines) for every run seed, write the
    predictive entropy over the grid per cell and a summary CSV.
    """
    directory = ensure_dir(os.path.join(config.out, const.TRANSITION_DIR))
    grid = make_grid(config)
    cells = transition_cells(config)
    rows = call_parallel([partial(run_transition_cell, config, cell, grid, directory) for cell in cells],
                         max_workers=config.workers)
    write_csv(os.path.join(config.out, const.TRANSITION_FILE), const.TRANSITION_CSV_HEADER, rows)
    return rows


# size/IoU surface

def run_surface_cell(config: ExperimentConfig, n: int, s: float, index: int) -> list:
    sizes, ious = [], []
    for draw in range(config.draws):
        spec = MaskSpec(n, config.m, s, derive_seed(config.seed, const.STREAM_MASKS, index, draw))
        mask_set = generate_masks(spec)
        sizes.append(mask_set.k)
        if n >= 2:
            ious.append(empirical_mean_iou(mask_set))
    spec = MaskSpec(n, config.m, s)
    empirical_iou = float(np.mean(ious)) if ious else math.nan
    # sizes are relative to the n=1, s=1 pool, whose width is exactly m
    return [n, s, float(np.mean(sizes)) / config.m, expected_size(spec) / config.m, empirical_iou, expected_iou(s)]


def run_surface(config: ExperimentConfig) -> List[list]:
    """Mean trimmed width and mask IoU over ``draws`` seeded pools per (N, S), next to the formulas."""
    out = ensure_dir(config.out)
    grid = [(n, s) for n in config.n_values for s in config.s_values]
    rows = call_parallel([partial(run_surface_cell, config, n, s, index) for index, (n, s) in enumerate(grid)],
                         max_workers=config.workers)
    write_csv(os.path.join(out, const.SURFACE_FILE), const.SURFACE_CSV_HEADER, rows)
    return rows


# diversity sweep

def pair_rows(name: str, s, run: int, member_labels: np.ndarray, labels: np.ndarray) -> List[list]:
    """One row per unordered member pair; the accuracy is the pair's mean accuracy."""
    accuracies = [accuracy(member, labels) for member in member_labels]
    if len(accuracies) == 1:
        return [[name, format_s(s), '%d:0-0' % run, accuracies[0], 0.0] + _bounds(accuracies[0])]
    rows = []
    for i, j in combinations(range(len(accuracies)), 2):
        pair_accuracy = (accuracies[i] + accuracies[j]) / 2.0
        value = math.nan
        if pair_accuracy < 1.0:
            value = disagreement(member_labels[i], member_labels[j]) / (1.0 - pair_accuracy)
        rows.append([name, format_s(s), '%d:%d-%d' % (run, i, j), pair_accuracy, value] + _bounds(pair_accuracy))
    return rows


def _bounds(value: float) -> list:
    if value >= 1.0:
        return [math.nan, math.nan]
    return list(diversity_bounds(value))


def run_diversity_cell(config: ExperimentConfig, cell: TransitionCell) -> List[list]:
    seed = derive_seed(cell.seed, const.STREAM_CELL, cell.index)
    noise = config.diversity_noise_sigma
    train_set = make_train_set(config, cell.seed, noise)
    test_set = make_test_set(config, cell.seed, noise)
    model = train_cell(transition_model(config, cell, seed), train_set, config, seed)
    member_labels = member_predictions(model, test_set.features)
    return pair_rows(cell.config, cell.s, cell.seed - config.seed, member_labels, test_set.labels)


def run_diversity(config: ExperimentConfig) -> List[list]:
    """
    Pairwise diversity of the sub-models of fixed-capacity mask pools over S,
    of the ensemble members and of the single model (always 0).
    """
    out = ensure_dir(config.out)
    cells = transition_cells(replace(config, include_dropout=False))
    groups = call_parallel([partial(run_diversity_cell, config, cell) for cell in cells],
                           max_workers=config.workers)
    rows = [row for group in groups for row in group]
    write_csv(os.path.join(out, const.DIVERSITY_FILE), const.DIVERSITY_CSV_HEADER, rows)
    return rows
