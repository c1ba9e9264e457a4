import math
import os
from collections import defaultdict
from tempfile import TemporaryDirectory
from unittest import TestCase

import numpy as np
import pytest

from masksembles import const
from masksembles.config import load_config
from masksembles.data import Dataset
from masksembles.data import gen_ood_grid
from masksembles.data import gen_two_sinusoids
from masksembles.errors import ValidationError
from masksembles.experiments import describe_model
from masksembles.experiments import evaluate
from masksembles.experiments import evaluate_severities
from masksembles.experiments import make_grid
from masksembles.experiments import make_test_set
from masksembles.experiments import pair_rows
from masksembles.experiments import run_diversity
from masksembles.experiments import run_surface
from masksembles.experiments import run_train
from masksembles.experiments import run_transition
from masksembles.experiments import severity_tag
from masksembles.experiments import transition_cells
from masksembles.files import slurp
from masksembles.inout import load_checkpoint
from masksembles.masks import MaskSpec
from masksembles.masks import expected_iou
from masksembles.model import build_dropout_model
from masksembles.model import build_ensemble
from masksembles.model import build_model
from masksembles.model import build_single_model
from masksembles.tests.utils import requires_slow_env


def small_config(directory, **changes):
    values = dict(out=directory, epochs=3, count_per_class=20, test_count_per_class=20, m=8, n_values=(2,),
                  s_values=(2.0,), grid_resolution=5)
    values.update(changes)
    return load_config(**values)


def spearman(xs, ys):
    rank_x = np.argsort(np.argsort(xs))
    rank_y = np.argsort(np.argsort(ys))
    return float(np.corrcoef(rank_x, rank_y)[0, 1])


class TestDescribeModel(TestCase):
    def test_kinds(self):
        widths = [2, 10, 2]
        self.assertEqual((1, 10, 1.0, 1.0), describe_model(build_single_model(widths)))
        self.assertEqual((4, 10, 4.0, 0.0), describe_model(build_ensemble(widths, 4)))
        n, m, s, iou = describe_model(build_model(widths, MaskSpec(3, 10, 2.0, seed=1)))
        self.assertEqual((3, 10, 2.0), (n, m, s))
        self.assertGreater(iou, 0.0)
        self.assertEqual((1, 10, 3.0, 1.0), describe_model(build_model(widths, MaskSpec(1, 10, 3.0))))
        n, m, s, _ = describe_model(build_dropout_model(widths, 10, 2.0, 4))
        self.assertEqual((4, 10, 2.0), (n, m, s))


class TestEvaluate(TestCase):
    def test_grid_points_inside_the_training_range_are_skipped(self):
        model = build_single_model([2, 4, 2], seed=1)
        test = gen_two_sinusoids(10, seed=1)
        grid = gen_ood_grid(resolution=5)
        evaluation = evaluate(model, test, grid, 'single/entropy')
        self.assertEqual(20, int((~evaluation.is_ood).sum()))
        self.assertEqual(10, int(evaluation.is_ood.sum()))
        self.assertEqual(0.0, evaluation.report.wall_time_seconds)

    def test_needs_labels_and_ood_points(self):
        model = build_single_model([2, 4, 2])
        grid = gen_ood_grid(resolution=5)
        with pytest.raises(ValidationError, match='labelled'):
            evaluate(model, grid, grid, 'x')
        inside = Dataset(np.zeros((2, 2)), None, in_distribution=np.array([True, True]))
        with pytest.raises(ValidationError, match='no out-of-distribution'):
            evaluate(model, gen_two_sinusoids(5), inside, 'x')


class TestTrain(TestCase):
    def test_zero_learning_rate_keeps_initial_weights(self):
        with TemporaryDirectory() as directory:
            config = small_config(directory, learning_rate=0.0, seed=4)
            model, _ = run_train(config)
        initial = build_model([2, 8, 2], MaskSpec(2, 8, 2.0, seed=4), seed=4)
        for trained, fresh in zip(model.parameters, initial.parameters):
            self.assertEqual(fresh.data.tobytes(), trained.data.tobytes())

    def test_blobs_reach_high_accuracy(self):
        with TemporaryDirectory() as directory:
            config = small_config(directory, dataset='blobs', epochs=20, count_per_class=100,
                                  test_count_per_class=100, m=16, n_values=(4,))
            _, evaluation = run_train(config)
        self.assertGreaterEqual(evaluation.report.accuracy, 0.99)


class TestSeverities(TestCase):
    def test_tags(self):
        self.assertEqual('eval/entropy', severity_tag('eval/entropy', 0, False))
        self.assertEqual('eval/entropy/severity0', severity_tag('eval/entropy', 0, True))
        self.assertEqual('eval/entropy/severity3', severity_tag('eval/entropy', 3, False))

    def test_accuracy_drops_under_corruption(self):
        with TemporaryDirectory() as directory:
            config = small_config(directory, dataset='blobs', epochs=20, count_per_class=100,
                                  test_count_per_class=100, m=16, n_values=(4,))
            model, clean = run_train(config)
        evaluations = evaluate_severities(model, make_test_set(config, config.seed), make_grid(config),
                                          'masksembles/entropy', range(6), config.seed)
        reports = [evaluation.report for evaluation in evaluations]
        self.assertEqual(['masksembles/entropy/severity%d' % severity for severity in range(6)],
                         [report.tag for report in reports])
        self.assertEqual(clean.report.accuracy, reports[0].accuracy)
        self.assertEqual(clean.report.ece, reports[0].ece)
        self.assertLessEqual(reports[5].accuracy, reports[0].accuracy)
        self.assertLess(reports[5].accuracy, 0.99)
        for report in reports:
            self.assertTrue(0.0 <= report.ece <= 1.0)
            self.assertEqual(0.0, report.wall_time_seconds)


class TestFixedWidth(TestCase):
    def test_checkpoint_roundtrip_and_eval(self):
        with TemporaryDirectory() as directory:
            config = small_config(directory, fixed_width=True, width=20, n_values=(4,), s_values=(2.5,))
            model, evaluation = run_train(config)
            checkpoint = os.path.join(directory, const.CHECKPOINT_FILE)
            header = slurp(checkpoint + const.MASK_FILE_SUFFIX).splitlines()[0]
            loaded = load_checkpoint(checkpoint)
        self.assertEqual([2, 20, 2], model.layer_widths)
        self.assertEqual(MaskSpec(4, 8, 2.5, seed=config.seed, width=20), model.mask_set.spec)
        self.assertEqual('4 8 2.5 %d 0 20' % config.seed, header)
        self.assertEqual(model.mask_set, loaded.mask_set)
        self.assertEqual(model.layer_widths, loaded.layer_widths)
        reloaded = evaluate(loaded, make_test_set(config, config.seed), make_grid(config), evaluation.report.tag,
                            config.bins, config.score)
        self.assertEqual(evaluation.report.to_row(), reloaded.report.to_row())


class TestTransitionCells(TestCase):
    def test_labels_and_seeds(self):
        config = load_config(runs=2, seed=10, n_values=(4,), s_values=(1.1, 10.0))
        cells = transition_cells(config)
        self.assertEqual([('masksembles', 1.1), ('masksembles', 10.0), ('single', 'single'),
                          ('ensemble', 'ensemble'), ('mc-dropout', 2.0)],
                         [(cell.config, cell.s) for cell in cells[:5]])
        self.assertEqual([10] * 5 + [11] * 5, [cell.seed for cell in cells])
        self.assertEqual(list(range(5)) * 2, [cell.index for cell in cells])

    def test_several_n_values(self):
        config = load_config(n_values=(2, 4), s_values=(2.0,), include_single=False, include_ensemble=False,
                             include_dropout=False)
        self.assertEqual(['masksembles-n2', 'masksembles-n4'], [cell.config for cell in transition_cells(config)])

    def test_small_sweep_is_reproducible_and_parallel_safe(self):
        with TemporaryDirectory() as first, TemporaryDirectory() as second:
            serial = run_transition(small_config(first, include_ensemble=False))
            threaded = run_transition(small_config(second, include_ensemble=False, workers=3))
        self.assertEqual(serial, threaded)
        self.assertEqual(['masksembles', 'single', 'mc-dropout'], [row[0] for row in serial])
        for row in serial:
            self.assertGreaterEqual(row[4], 0.0)
            self.assertLessEqual(row[5], math.log(2) + 1e-12)


class TestPairRows(TestCase):
    def test_single_member(self):
        rows = pair_rows('single', 'single', 1, np.array([[0, 1, 1, 0]]), np.array([0, 1, 0, 0]))
        self.assertEqual([['single', 'single', '1:0-0', 0.75, 0.0, 0.0, 2.0]], rows)

    def test_pairs(self):
        labels = np.array([0, 1, 1, 0, 1])
        members = np.array([[0, 1, 1, 0, 0], [0, 1, 0, 0, 1], [0, 1, 1, 0, 1]])
        rows = pair_rows('masksembles', 2.0, 0, members, labels)
        self.assertEqual(['0:0-1', '0:0-2', '0:1-2'], [row[2] for row in rows])
        self.assertAlmostEqual(0.8, rows[0][3])
        # 2 disagreements out of 5, mean error 0.2
        self.assertAlmostEqual(2.0, rows[0][4])
        # the third member is perfect: 1 disagreement, mean error 0.1
        self.assertAlmostEqual(0.9, rows[1][3])
        self.assertAlmostEqual(2.0, rows[1][4])

    def test_perfect_pair(self):
        labels = np.array([0, 1])
        rows = pair_rows('ensemble', 'ensemble', 0, np.array([labels, labels]), labels)
        self.assertTrue(all(math.isnan(value) for value in rows[0][4:]))


class TestSurface(TestCase):
    def test_rows(self):
        with TemporaryDirectory() as directory:
            rows = run_surface(load_config(out=directory, n_values=(1, 4), s_values=(1.0, 2.0), m=16, draws=20))
        self.assertEqual([(1, 1.0), (1, 2.0), (4, 1.0), (4, 2.0)], [(row[0], row[1]) for row in rows])
        self.assertEqual([1.0, 1.0], rows[0][2:4])
        # one mask always keeps exactly m columns
        self.assertEqual(1.0, rows[1][2])
        self.assertAlmostEqual(1.0, rows[1][3])
        self.assertTrue(math.isnan(rows[1][4]))
        self.assertEqual(1.0, rows[2][4])
        self.assertEqual(1.0 / 3.0, rows[3][5])

    def test_iou_does_not_depend_on_n(self):
        with TemporaryDirectory() as directory:
            rows = run_surface(load_config(out=directory, n_values=(2, 4, 8), s_values=(1.5, 3.0), m=64,
                                           draws=100))
        for row in rows:
            self.assertLessEqual(abs(row[4] - expected_iou(row[1])), 0.02, row)


class TestDiversitySweep(TestCase):
    def test_small_sweep(self):
        with TemporaryDirectory() as directory:
            rows = run_diversity(small_config(directory, n_values=(3,), ensemble_size=2))
        by_config = defaultdict(list)
        for row in rows:
            by_config[row[0]].append(row)
        self.assertEqual(3, len(by_config['masksembles']))
        self.assertEqual([0.0], [row[4] for row in by_config['single']])
        self.assertEqual(1, len(by_config['ensemble']))
        self.assertNotIn('mc-dropout', by_config)


@requires_slow_env()
class TestToyTransition(TestCase):
    def test_transition_properties(self):
        with TemporaryDirectory() as directory:
            rows = run_transition(load_config(out=directory, runs=5, n_values=(4,), m=100,
                                              s_values=(1.1, 2.0, 3.0, 10.0), include_dropout=False, workers=4))
        entropy_out = {(row[0], row[1], row[2]): row[5] for row in rows}
        seeds = sorted({row[2] for row in rows})
        for row in rows:
            self.assertGreaterEqual(row[3], 0.95, row)
        wider = sum(entropy_out['masksembles', '10', seed] > entropy_out['masksembles', '1.1', seed] for seed in seeds)
        self.assertGreaterEqual(wider, 4)
        ensemble_wins = sum(entropy_out['ensemble', 'ensemble', seed] >= entropy_out['single', 'single', seed]
                            for seed in seeds)
        self.assertGreaterEqual(ensemble_wins, 4)
        for seed in seeds:
            self.assertGreaterEqual(entropy_out['masksembles', '10', seed], entropy_out['single', 'single', seed])

    def test_diversity_ordering(self):
        with TemporaryDirectory() as directory:
            rows = run_diversity(load_config(out=directory, runs=3, n_values=(4,), m=100,
                                             s_values=(2.0, 3.0, 4.0, 5.0), workers=4))
        values = defaultdict(list)
        for config, s, _, _, value, _, _ in rows:
            if not math.isnan(value):
                values[config, s].append(value)
        self.assertEqual({0.0}, set(values['single', 'single']))
        means = {key: float(np.mean(value)) for key, value in values.items()}
        ensemble = means.pop(('ensemble', 'ensemble'))
        self.assertTrue(all(ensemble >= mean for mean in means.values()))
        scales = ['2', '3', '4', '5']
        self.assertGreater(spearman([float(s) for s in scales], [means['masksembles', s] for s in scales]), 0.0)


@requires_slow_env()
class TestSurfaceAtScale(TestCase):
    def test_iou_matches_the_approximation(self):
        with TemporaryDirectory() as directory:
            rows = run_surface(load_config(out=directory, n_values=(4,), s_values=(1.0, 1.5, 2.0, 3.0, 4.0, 6.0),
                                           m=256, draws=100, workers=4))
        for row in rows:
            self.assertLessEqual(abs(row[4] - row[5]), 0.02, row)
