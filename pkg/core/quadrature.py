"""Composite Gauss-Legendre rules and deterministic reductions.

Panels can be graded geometrically toward one endpoint, which is where every
density handled by this package loses smoothness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import lru_cache
from typing import Tuple

import numpy as np

from core.errors import FinitePartError


@dataclass(frozen=True)
class QuadratureSpec:
    """Panel layout for one-dimensional regular integrals."""

    panel_count: int = 16
    nodes_per_panel: int = 12
    endpoint_grading: float = 2.0
    sqrt_substitution: bool = False

    def __post_init__(self) -> None:
        if self.panel_count < 1 or self.nodes_per_panel < 1:
            raise FinitePartError(
                f"panel_count and nodes_per_panel must be positive, got "
                f"{self.panel_count} and {self.nodes_per_panel}"
            )
        if not self.endpoint_grading >= 1.0:
            raise FinitePartError(f"endpoint_grading must be >= 1, got {self.endpoint_grading}")

    @property
    def total_nodes(self) -> int:
        return self.panel_count * self.nodes_per_panel

    def deeper(self, min_panels: int = 32) -> "QuadratureSpec":
        """Same rule with at least ``min_panels`` panels (for log-singular integrands)."""
        return replace(self, panel_count=max(self.panel_count, min_panels))


@lru_cache(maxsize=64)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [-1, 1]."""
    nodes, weights = np.polynomial.legendre.leggauss(n)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def panel_breaks(length: float, q: QuadratureSpec) -> np.ndarray:
    """Breakpoints on [0, length], smallest panel at 0."""
    n = q.panel_count
    r = q.endpoint_grading
    if r == 1.0:
        return np.linspace(0.0, length, n + 1)
    k = np.arange(n + 1, dtype=float)
    return length * np.expm1(k * math.log(r)) / math.expm1(n * math.log(r))


def graded_rule(length: float, q: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Composite rule on [0, length] graded toward 0.

    Returns flattened nodes and weights in a fixed panel order.
    """
    if length <= 0.0:
        return np.zeros(0), np.zeros(0)
    breaks = panel_breaks(length, q)
    x, w = gauss_legendre(q.nodes_per_panel)
    lo = breaks[:-1, None]
    half = 0.5 * np.diff(breaks)[:, None]
    nodes = lo + half * (x[None, :] + 1.0)
    weights = half * w[None, :]
    return nodes.ravel(), weights.ravel()


def interval_rule(a: float, b: float, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Single-panel Gauss-Legendre rule on [a, b]."""
    x, w = gauss_legendre(n)
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def stable_sum(values: np.ndarray) -> float:
    """Compensated sum in flat C order; identical result for identical input."""
    arr = np.ascontiguousarray(values, dtype=float).ravel()
    return math.fsum(arr.tolist())


def weighted_sum(weights: np.ndarray, values: np.ndarray) -> float:
    return stable_sum(np.asarray(weights) * np.asarray(values))


def two_sided_rule(a: float, b: float, q: QuadratureSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Composite rule on [a, b] graded toward both endpoints.

    Each half carries ``q.panel_count`` panels; used for outer energy
    integrals whose integrands are log-singular at E0 and Em.
    """
    if not b > a:
        raise FinitePartError(f"invalid interval [{a}, {b}]")
    d, w = graded_rule(0.5 * (b - a), replace(q, sqrt_substitution=False))
    nodes = np.concatenate([a + d, (b - d)[::-1]])
    weights = np.concatenate([w, w[::-1]])
    return nodes, weights
