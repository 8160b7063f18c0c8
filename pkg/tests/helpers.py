"""Shared finite-difference oracles and point generators for the test suite."""

from __future__ import annotations

import numpy as np


def fd_grad(f, x, h=1e-6):
    """Central-difference gradient of a scalar function at a point."""
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        g.flat[i] = (f(xp) - f(xm)) / (2.0 * h)
    return g


def fd_jacobian(f, x, h=1e-6):
    """Central-difference Jacobian (m, d) of a vector function at a point."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        cols.append((np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2.0 * h))
    return np.stack(cols, axis=-1)


def rel_err(got, want):
    """Max absolute error scaled by the magnitude of the reference."""
    got = np.asarray(got, dtype=float)
    want = np.asarray(want, dtype=float)
    scale = max(np.max(np.abs(want)), 1e-12)
    return np.max(np.abs(got - want)) / scale


def simplex_interior_points(n, d, rng, margin=0.0):
    """Random points in the open simplex (free coordinates).

    With margin > 0, points are pulled toward the barycenter so every
    category (including the implicit one) stays above margin/(d+1).
    """
    full = rng.dirichlet(np.full(d + 1, 2.0), size=n)
    if margin > 0.0:
        full = (1.0 - margin) * full + margin / (d + 1)
    return full[:, :d]


def orthant_interior_points(n, d, rng, low=0.05, high=3.0):
    return rng.uniform(low, high, size=(n, d))
