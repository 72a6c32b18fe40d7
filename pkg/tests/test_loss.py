"""Softmax cross-entropy against analytic values and an extended-precision oracle."""

import math

import mpmath
import numpy as np
import pytest

from memlab import Prng, ShapeError, predictions, softmax_cross_entropy


def test_uniform_logits_loss_is_ln_k():
    logits = np.zeros((8, 10))
    labels = np.arange(8) % 10
    loss, _ = softmax_cross_entropy(logits, labels)
    assert abs(loss - math.log(10)) < 1e-9


def test_saturated_correct_prediction():
    logits = np.zeros((3, 5))
    labels = np.array([1, 2, 4])
    logits[np.arange(3), labels] = 1000.0
    loss, _ = softmax_cross_entropy(logits, labels)
    assert loss < 1e-6


def test_huge_logits_do_not_overflow():
    logits = np.full((2, 4), 1e4)
    logits[0, 0] += 5
    loss, dlogits = softmax_cross_entropy(logits, np.array([0, 1]))
    assert np.isfinite(loss)
    assert np.all(np.isfinite(dlogits))


def mp_oracle(logits, labels):
    """Brute-force loss and gradient at 50 decimal digits."""
    mpmath.mp.dps = 50
    n, k = logits.shape
    total = mpmath.mpf(0)
    grad = np.zeros((n, k))
    for i in range(n):
        exps = [mpmath.exp(mpmath.mpf(v)) for v in logits[i]]
        z = mpmath.fsum(exps)
        total += -mpmath.log(exps[labels[i]] / z)
        for j in range(k):
            p = exps[j] / z
            grad[i, j] = float(p - (1 if j == labels[i] else 0)) / n
    return float(total / n), grad


def test_matches_extended_precision_oracle():
    logits = Prng(404).fill_gaussian(12).reshape(4, 3) * 3.0
    labels = np.array([0, 2, 1, 1])
    loss, dlogits = softmax_cross_entropy(logits, labels)
    want_loss, want_grad = mp_oracle(logits, labels)
    assert abs(loss - want_loss) < 1e-12
    assert np.allclose(dlogits, want_grad, atol=1e-12)


def test_gradient_rows_sum_to_zero():
    logits = Prng(9).fill_gaussian(20).reshape(5, 4)
    _, dlogits = softmax_cross_entropy(logits, np.array([0, 1, 2, 3, 0]))
    assert np.allclose(dlogits.sum(axis=1), 0.0, atol=1e-15)


def test_label_out_of_range():
    logits = np.zeros((2, 3))
    with pytest.raises(ValueError):
        softmax_cross_entropy(logits, np.array([0, 3]))
    with pytest.raises(ValueError):
        softmax_cross_entropy(logits, np.array([-1, 0]))


def test_shape_validation():
    with pytest.raises(ShapeError):
        softmax_cross_entropy(np.zeros(5), np.array([0]))
    with pytest.raises(ShapeError):
        softmax_cross_entropy(np.zeros((2, 3)), np.array([0, 1, 2]))


def test_predictions_tie_breaks_low():
    logits = np.array([[1.0, 1.0, 0.0], [0.0, 2.0, 2.0]])
    assert list(predictions(logits)) == [0, 1]
