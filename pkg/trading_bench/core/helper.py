import math

import numpy as np


def weighted_kl(w, x, y):
    r"""
    Weighted (generalized) Kullback-Leibler divergence between a nonnegative vector and a positive vector.

    Parameters
    ----------
    w : array_like
        Weight vector (the inventory caps in this package).
    x : array_like
        Nonnegative vector.
    y : array_like
        Positive vector of the same length.

    Returns
    -------
    `float`
        :math:`\sum_i w_i [x_i \ln(x_i / y_i) - x_i + y_i]`, with the term :math:`x_i \ln(x_i/y_i)` taken as 0
        when :math:`x_i = 0`. The result is nonnegative for nonnegative weights.

    Raises
    ------
    `ValueError`
        If the vectors have different lengths, if any `y_i` is not positive or any `x_i` is negative.

    """
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (w.shape == x.shape == y.shape) or w.ndim != 1:
        raise ValueError(f"Dimension mismatch in weighted_kl: w has shape {w.shape}, x has shape {x.shape}, "
                         f"y has shape {y.shape}; expected three 1D vectors of equal length")
    if np.any(y <= 0):
        raise ValueError(f"weighted_kl requires a positive reference vector y, but y = {y.tolist()}")
    if np.any(x < 0):
        raise ValueError(f"weighted_kl requires a nonnegative vector x, but x = {x.tolist()}")

    positive = x > 0
    log_terms = np.zeros_like(x)
    log_terms[positive] = x[positive] * np.log(x[positive] / y[positive])
    # Cancellation can leave a term a few ulp below zero
    terms = np.maximum(log_terms - x + y, 0.)
    return float(np.sum(w * terms))


def tolerance(tau, *scales):
    """Absolute tolerance `tau`, widened to `tau * |scale|` for terms larger than one."""
    scale = max((abs(float(value)) for value in scales), default=0.)
    return max(tau, tau * scale)


def log_base(value, base):
    """Logarithm of `value` in base `base`, snapped to the nearest integer when within 1e-9 of it."""
    result = math.log(value) / math.log(base)
    nearest = round(result)
    return float(nearest) if abs(result - nearest) < 1e-9 else result


def is_power_of_two(value):
    return isinstance(value, (int, np.integer)) and value >= 1 and (int(value) & (int(value) - 1)) == 0


def smallest_power_of_two_above(value):
    """Smallest power of 2 strictly greater than `value` (values within 1e-9 relative of a power count as equal)."""
    power = 1
    while power <= value * (1 + 1e-9):
        power *= 2
    return power
