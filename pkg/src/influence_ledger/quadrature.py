"""Gauss-Legendre rules on [0, 1] and on axis-aligned rectangles."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np

DEFAULT_NODES = 32


@lru_cache(maxsize=32)
def gauss_legendre_01(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point rule mapped to [0, 1].

    Exact for polynomials of degree <= 2n - 1.
    """
    if n < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (x + 1.0)
    w = 0.5 * w
    t.setflags(write=False)
    w.setflags(write=False)
    return t, w


def integrate_01(fn: Callable[[np.ndarray], np.ndarray], n: int = DEFAULT_NODES) -> np.ndarray:
    """Integrate ``fn`` over [0, 1]; ``fn`` takes the node vector and returns
    values with the node index on axis 0."""
    t, w = gauss_legendre_01(n)
    vals = np.asarray(fn(t), dtype=float)
    return np.tensordot(w, vals, axes=(0, 0))


def integrate_01_checked(fn, n: int = DEFAULT_NODES):
    """Integrate with n and 2n nodes; return (fine value, max abs discrepancy)."""
    coarse = integrate_01(fn, n)
    fine = integrate_01(fn, 2 * n)
    return fine, float(np.max(np.abs(fine - coarse), initial=0.0))


def integrate_rect(fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
                   a: float, c: float, b: float, d: float, n: int = DEFAULT_NODES) -> float:
    """Oriented integral  int_a^c int_b^d fn(s, t) dt ds  (limits may be reversed).

    ``fn`` receives meshgrid arrays and must broadcast.
    """
    t, w = gauss_legendre_01(n)
    s = a + (c - a) * t
    r = b + (d - b) * t
    S, R = np.meshgrid(s, r, indexing="ij")
    vals = np.asarray(fn(S, R), dtype=float)
    return float((c - a) * (d - b) * (w @ vals @ w))
