import numpy as np
import pytest


def central_difference_gradient(f, x, h=1e-6):
    """Independent finite-difference gradient used to check analytic ones."""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (f(x + e) - f(x - e)) / (2 * h)
    return grad


def relative_error(actual, expected):
    actual = np.asarray(actual, dtype=float)
    expected = np.asarray(expected, dtype=float)
    scale = np.maximum(np.abs(expected), 1e-12)
    return float(np.max(np.abs(actual - expected) / scale))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
