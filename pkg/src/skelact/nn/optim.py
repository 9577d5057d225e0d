from __future__ import annotations

import numpy as np


class DivergenceError(FloatingPointError):
    """Raised when training produces a non-finite loss or gradient."""


def sgd_step(params, lr, momentum=0.9, weight_decay=0.0):
    """One SGD-with-momentum update, in place, then zero the gradients.

    buffer <- momentum * buffer + grad + weight_decay * value  (decay only on
    parameters flagged ``decay``); value <- value - lr * buffer.
    """
    for p in params:
        if not np.all(np.isfinite(p.grad)):
            raise DivergenceError(f"non-finite gradient in {p.name}")
    for p in params:
        g = p.grad
        if weight_decay and p.decay:
            g = g + weight_decay * p.value
        buf = p.momentum_buffer
        buf *= momentum
        buf += g
        p.value -= lr * buf
        p.grad[...] = 0
    return params


def lr_at(schedule, epoch, epochs):
    """Learning rate for ``epoch`` (0-based) under a piecewise-constant schedule.

    ``schedule`` is a list of ``(epoch_fraction, lr)`` pairs; each rate takes
    effect once ``epoch / epochs`` reaches its fraction.
    """
    frac = epoch / epochs if epochs else 0.0
    lr = schedule[0][1]
    for start, rate in schedule:
        if frac >= start:
            lr = rate
    return lr


def validate_schedule(schedule):
    if not schedule:
        raise ValueError("learning-rate schedule is empty")
    fractions = [float(f) for f, _ in schedule]
    if any(f < 0 or f > 1 for f in fractions):
        raise ValueError(f"schedule fractions must lie in [0, 1], got {fractions}")
    if any(b <= a for a, b in zip(fractions, fractions[1:])):
        raise ValueError(f"schedule fractions must be strictly increasing, got {fractions}")
    if any(lr < 0 for _, lr in schedule):
        raise ValueError("learning rates must be non-negative")
