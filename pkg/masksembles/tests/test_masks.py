import math
from unittest import TestCase

import numpy as np
import pytest

from masksembles.errors import FormatError
from masksembles.errors import ValidationError
from masksembles.masks import MaskSet
from masksembles.masks import MaskSpec
from masksembles.masks import dropout_rate_equivalent
from masksembles.masks import empirical_mean_iou
from masksembles.masks import expected_intersection
from masksembles.masks import expected_iou
from masksembles.masks import expected_retention_probability
from masksembles.masks import expected_size
from masksembles.masks import generate_bernoulli_masks
from masksembles.masks import generate_masks
from masksembles.masks import pairwise_iou
from masksembles.masks import round_half_up
from masksembles.masks import solve_m_for_fixed_width
from masksembles.tests.utils import requires_slow_env


def mean_width(n, m, s, draws):
    widths = np.array([generate_masks(MaskSpec(n, m, s, seed)).k for seed in range(draws)], dtype=np.float64)
    return widths.mean(), widths.std(ddof=1) / math.sqrt(draws)


class TestMaskSpec(TestCase):
    def test_rejects_scale_below_one(self):
        with pytest.raises(ValidationError, match=r's must be >= 1 \(got 0.5\)'):
            MaskSpec(4, 2, 0.5)

    def test_rejects_nonpositive_counts(self):
        with pytest.raises(ValidationError, match='n must be >= 1'):
            MaskSpec(0, 2, 2.0)
        with pytest.raises(ValidationError, match='m must be >= 1'):
            MaskSpec(4, 0, 2.0)

    def test_rejects_seed_out_of_range(self):
        with pytest.raises(ValidationError, match='seed'):
            MaskSpec(4, 2, 2.0, seed=-1)

    def test_pre_trim_width_rounds_half_up(self):
        assert MaskSpec(1, 5, 1.5).pre_trim_width == 8
        assert MaskSpec(1, 1, 2.5).pre_trim_width == 3
        assert round_half_up(25.6) == 26
        assert round_half_up(0.5) == 1

    def test_explicit_width_wins(self):
        assert MaskSpec(4, 26, 2.5, width=64).pre_trim_width == 64

    def test_dropout_rate_equivalent(self):
        assert dropout_rate_equivalent(MaskSpec(1, 3, 1.0)) == 0.0
        assert dropout_rate_equivalent(MaskSpec(1, 3, 2.0)) == 0.5
        assert dropout_rate_equivalent(MaskSpec(1, 3, 4.0)) == 0.75
        assert MaskSpec(1, 3, 4.0).dropout_rate == 0.75


class TestGenerateMasks(TestCase):
    def test_scale_one_is_all_ones(self):
        mask_set = generate_masks(MaskSpec(1, 3, 1.0), trim=True)
        assert mask_set.lines == ['111']
        assert mask_set.k == 3
        assert mask_set.dropped_count == 0

    def test_small_pool_shape(self):
        mask_set = generate_masks(MaskSpec(4, 2, 2.0, seed=7), trim=False)
        assert mask_set.masks.shape == (4, 4)
        assert mask_set.pre_trim_width == 4
        assert list(mask_set.masks.sum(axis=1)) == [2, 2, 2, 2]

    def test_row_sum_and_trim_invariants(self):
        rng = np.random.default_rng(1234)
        for index in range(1000):
            spec = MaskSpec(int(rng.integers(1, 9)), int(rng.integers(1, 41)), float(rng.uniform(1.0, 6.0)), index)
            trim = bool(index % 2)
            mask_set = generate_masks(spec, trim)
            assert np.all(mask_set.masks.sum(axis=1) == spec.m)
            if trim:
                assert np.all(mask_set.masks.any(axis=0))
            else:
                assert mask_set.k == spec.pre_trim_width
            assert 0 <= mask_set.dropped_count <= spec.pre_trim_width - spec.m

    def test_identical_inputs_give_identical_masks(self):
        spec = MaskSpec(8, 13, 2.7, seed=99)
        first, second = generate_masks(spec), generate_masks(spec)
        assert first == second
        assert first.masks.tobytes() == second.masks.tobytes()

    def test_rows_do_not_depend_on_pool_size(self):
        small = generate_masks(MaskSpec(3, 10, 3.0, seed=5), trim=False)
        large = generate_masks(MaskSpec(5, 10, 3.0, seed=5), trim=False)
        assert np.array_equal(small.masks, large.masks[:3])

    def test_trimming_keeps_column_order(self):
        spec = MaskSpec(2, 3, 4.0, seed=11)
        full = generate_masks(spec, trim=False)
        trimmed = generate_masks(spec, trim=True)
        assert np.array_equal(trimmed.masks, full.masks[:, full.masks.any(axis=0)])
        assert trimmed.dropped_count == full.k - trimmed.k

    def test_masks_are_read_only(self):
        mask_set = generate_masks(MaskSpec(2, 3, 2.0))
        with pytest.raises(ValueError):
            mask_set.masks[0, 0] = 0


class TestMaskText(TestCase):
    def test_text_roundtrip(self):
        mask_set = generate_masks(MaskSpec(4, 5, 2.5, seed=3))
        text = mask_set.to_text()
        assert text.splitlines()[0] == '4 5 2.5 3 1'
        assert MaskSet.from_text(text) == mask_set

    def test_width_is_a_sixth_header_token(self):
        mask_set = generate_masks(solve_m_for_fixed_width(64, 4, 2.5), trim=False)
        assert mask_set.to_text().splitlines()[0] == '4 26 2.5 0 0 64'
        assert MaskSet.from_text(mask_set.to_text()) == mask_set

    def test_rejects_wrong_row_count(self):
        with pytest.raises(FormatError, match='expected 2 mask rows'):
            MaskSet.from_text('2 1 1.0 0 1\n1\n')

    def test_rejects_wrong_ones_count(self):
        with pytest.raises(FormatError, match='exactly m=2 ones'):
            MaskSet.from_text('1 2 2.0 0 0\n1000\n')

    def test_rejects_zero_column_in_trimmed_set(self):
        with pytest.raises(FormatError, match='all-zero column'):
            MaskSet.from_text('1 1 2.0 0 1\n10\n')

    def test_rejects_unknown_trim_flag(self):
        with pytest.raises(FormatError, match='trim flag must be 0 or 1'):
            MaskSet.from_text('1 2 1.0 0 yes\n11\n')

    def test_rejects_garbage(self):
        with pytest.raises(FormatError):
            MaskSet.from_text('')
        with pytest.raises(FormatError):
            MaskSet.from_text('a b c d e\n')
        with pytest.raises(FormatError):
            MaskSet.from_text('1 1 1.0 0 1\nx\n')


class TestExpectations(TestCase):
    def test_expected_size(self):
        assert expected_size(MaskSpec(1, 5, 1.0)) == 5.0
        assert expected_size(MaskSpec(4, 2, 2.0)) == pytest.approx(3.75, abs=1e-12)
        assert expected_size(MaskSpec(200, 2, 2.0)) == pytest.approx(4.0, abs=1e-12)

    def test_expected_iou(self):
        assert expected_iou(1.0) == 1.0
        assert expected_iou(3.0) == pytest.approx(0.2, abs=1e-15)
        assert expected_iou(5.0) == pytest.approx(1 / 9, abs=1e-15)
        with pytest.raises(ValidationError):
            expected_iou(0.9)

    def test_intersection_and_retention(self):
        spec = MaskSpec(4, 2, 2.0)
        assert expected_intersection(spec) == 1.0
        assert expected_retention_probability(spec) == pytest.approx(15 / 16, abs=1e-15)
        assert expected_retention_probability(MaskSpec(3, 4, 1.0)) == 1.0

    def test_size_matches_monte_carlo(self):
        for n in (1, 2, 4, 8):
            for m in (8, 32):
                for s in (1.0, 1.5, 2.0, 3.0, 6.0):
                    spec = MaskSpec(n, m, s)
                    mean, se = mean_width(n, m, s, 500)
                    if se == 0:
                        assert mean == pytest.approx(expected_size(spec), abs=1e-9)
                    else:
                        assert abs(mean - expected_size(spec)) <= 3 * se, (n, m, s, mean, se)

    def test_iou_decreases_with_scale(self):
        means = [np.mean([empirical_mean_iou(generate_masks(MaskSpec(4, 16, s, seed))) for seed in range(200)])
                 for s in (1.0, 2.0, 4.0, 8.0, 16.0)]
        assert means[0] == 1.0
        assert all(a > b for a, b in zip(means, means[1:]))

    def test_iou_matches_approximation(self):
        for s in (1.0, 1.5, 2.0, 3.0, 4.0, 6.0):
            mean = np.mean([empirical_mean_iou(generate_masks(MaskSpec(4, 256, s, seed))) for seed in range(100)])
            assert abs(mean - expected_iou(s)) <= 0.02, (s, mean)

    @requires_slow_env()
    def test_size_matches_monte_carlo_full_grid(self):
        for n in (1, 2, 4, 8):
            for m in (8, 32, 128):
                for s in (1.0, 1.5, 2.0, 3.0, 6.0):
                    spec = MaskSpec(n, m, s)
                    mean, se = mean_width(n, m, s, 10000)
                    if se == 0:
                        assert mean == pytest.approx(expected_size(spec), abs=1e-9)
                    else:
                        assert abs(mean - expected_size(spec)) <= 3 * se, (n, m, s, mean, se)

    @requires_slow_env()
    def test_small_pool_size_converges(self):
        mean, _ = mean_width(4, 2, 2.0, 100000)
        assert abs(mean - 3.75) <= 0.01


class TestEmpiricalIou(TestCase):
    def test_examples(self):
        assert empirical_mean_iou(np.array([[1, 1, 0], [1, 1, 0]])) == 1.0
        assert empirical_mean_iou(np.array([[1, 1, 0, 0], [0, 0, 1, 1]])) == 0.0
        assert empirical_mean_iou(np.array([[1, 1, 0, 0], [0, 1, 1, 0]])) == pytest.approx(1 / 3, abs=1e-15)

    def test_pairwise_values(self):
        values = pairwise_iou(np.array([[1, 0, 0], [1, 1, 0], [0, 1, 1]]))
        assert list(values) == pytest.approx([0.5, 0.0, 1 / 3])

    def test_needs_two_masks(self):
        with pytest.raises(ValidationError, match='at least 2 masks'):
            empirical_mean_iou(generate_masks(MaskSpec(1, 3, 2.0)))

    def test_scale_one_pool_is_fully_overlapping(self):
        assert empirical_mean_iou(generate_masks(MaskSpec(4, 7, 1.0))) == 1.0


class TestFixedWidth(TestCase):
    def test_examples(self):
        assert solve_m_for_fixed_width(100, 4, 2.0).m == 50
        spec = solve_m_for_fixed_width(3, 4, 1.0)
        assert spec.m == 3
        assert generate_masks(spec, trim=False).lines == ['111'] * 4

    def test_width_is_pinned(self):
        spec = solve_m_for_fixed_width(64, 4, 2.5)
        assert spec.m == 26
        assert spec.pre_trim_width == 64
        assert generate_masks(spec, trim=False).k == 64

    def test_unsatisfiable(self):
        with pytest.raises(ValidationError, match='floor'):
            solve_m_for_fixed_width(3, 4, 4.0)


class TestBernoulliMasks(TestCase):
    def test_shape_and_values(self):
        masks = generate_bernoulli_masks(50, 4, 0.5, seed=1)
        assert masks.shape == (4, 50)
        assert set(np.unique(masks)) <= {0.0, 1.0}

    def test_rate_zero_keeps_everything(self):
        assert np.all(generate_bernoulli_masks(10, 3, 0.0, seed=1) == 1.0)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValidationError):
            generate_bernoulli_masks(10, 3, 1.0, seed=1)
