"""Shared oracles for the test suite."""
import numpy as np


def random_posteriors(rng, T, K, peaked=1.0):
    z = peaked * rng.normal(size=(T, K))
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def central_difference(f, x, eps):
    """Numerical derivative of scalar ``f()`` with respect to the array element ``x[idx]``."""
    def grad_at(idx):
        old = x[idx]
        x[idx] = old + eps
        up = f()
        x[idx] = old - eps
        down = f()
        x[idx] = old
        return (up - down) / (2 * eps)
    return grad_at


def rel_error(a, b, floor=1e-8):
    return abs(a - b) / max(abs(a), abs(b), floor)


def five_point_difference(f, x, idx, h):
    """Fourth-order central difference; keeps roundoff small next to tiny gradients."""
    old = x[idx]
    vals = []
    for k in (2, 1, -1, -2):
        x[idx] = old + k * h
        vals.append(f())
    x[idx] = old
    return (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)
