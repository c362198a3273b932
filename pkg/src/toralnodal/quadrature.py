"""Composite Gauss-Legendre rules."""

from __future__ import annotations

from functools import lru_cache

import numpy as np


@lru_cache(maxsize=None)
def _reference_rule(order: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(order)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def gl_panels(a: float, b: float, panels: int, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of ``panels`` equal Gauss-Legendre panels on [a, b]."""
    x, w = _reference_rule(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


def gl_on_intervals(lo: np.ndarray, hi: np.ndarray, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """One Gauss-Legendre panel per interval; returns (k, order) node and weight arrays."""
    x, w = _reference_rule(order)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    return mid[..., None] + half[..., None] * x, half[..., None] * w


def converge(estimate, start: int, rtol: float = 1e-10, max_doublings: int = 8, atol: float = 0.0):
    """Double the resolution passed to ``estimate`` until successive values settle.

    Returns ``(value, resolution, converged)``.  ``estimate`` may return a
    scalar or an array; the comparison uses the max norm.
    """
    prev = np.asarray(estimate(start))
    res = start
    for _ in range(max_doublings):
        res *= 2
        cur = np.asarray(estimate(res))
        scale = max(float(np.max(np.abs(cur))), 1e-300)
        if float(np.max(np.abs(cur - prev))) <= max(rtol * scale, atol):
            return cur, res, True
        prev = cur
    return prev, res, False
