import os

import numpy as np
import pytest


def assert_file_not_empty(filename):
    assert os.path.isfile(filename)
    assert os.path.getsize(filename) > 0


def assert_file_contents(filename, expected_contents):
    with open(filename) as file_:
        actual_contents = file_.read()
        assert expected_contents == actual_contents, \
            '"%s" != "%s"' % (expected_contents, actual_contents)


def assert_same_files(first, second):
    with open(first, 'rb') as a, open(second, 'rb') as b:
        assert a.read() == b.read(), '%s and %s differ' % (first, second)


def numerical_gradient(function, value: np.ndarray, step: float = 1e-6) -> np.ndarray:
    """Central finite differences of a scalar ``function`` at ``value`` (modified in place, then restored)."""
    grad = np.zeros_like(value)
    flat, flat_grad = value.reshape(-1), grad.reshape(-1)
    for index in range(flat.size):
        original = flat[index]
        flat[index] = original + step
        upper = function()
        flat[index] = original - step
        lower = function()
        flat[index] = original
        flat_grad[index] = (upper - lower) / (2 * step)
    return grad


def max_relative_error(actual: np.ndarray, expected: np.ndarray) -> float:
    scale = np.maximum(np.abs(actual) + np.abs(expected), 1e-5)
    return float(np.max(np.abs(actual - expected) / scale))


def requires_slow_env():
    value = os.environ.get('SLOW_TEST')
    return pytest.mark.skipif(
        value is None,
        reason="Skipped because SLOW_TEST=1 is not set"
    )
