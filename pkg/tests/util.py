"""Shared numeric helpers for the test suite."""

import numpy as np


def central_fd(f, x, h=1e-6):
    """Central finite-difference gradient of a scalar function at x."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2.0 * h)
    return g


def tangential_fd(f, p, h=1e-6):
    """Directional derivatives along e_i - e_0, which span the simplex tangent.

    Returns a list of (direction, derivative) pairs; use these to check
    gradients that are only defined up to a constant shift along ones.
    """
    p = np.asarray(p, dtype=float)
    n = p.shape[0]
    out = []
    for i in range(1, n):
        d = np.zeros(n)
        d[i] = 1.0
        d[0] = -1.0
        out.append((d, (f(p + h * d) - f(p - h * d)) / (2.0 * h)))
    return out


def random_interior(rng, n, floor=0.05):
    """Random simplex point bounded away from the boundary."""
    p = rng.dirichlet(np.ones(n))
    p = (1.0 - n * floor) * p + floor
    return p / p.sum()
