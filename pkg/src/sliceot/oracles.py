"""Brute-force ground-truth references.

Everything here trades speed for being independently trustworthy: the exact
optimal-assignment Wasserstein distance on small instances, a dense grid
search over the circle for the best 1-D projection, and the Monte-Carlo
mini-batch version of that grid search. Downstream tests compare fast
estimators against these.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from .measures import ContractError, Direction, EmpiricalMeasure, sample_minibatch

__all__ = [
    "SIZE_CAP",
    "assignment_cost",
    "exact_wasserstein",
    "grid_angles",
    "grid_max_sw",
    "m_max_sw_oracle",
    "m_max_sw_samples",
]

SIZE_CAP = 1024


def _check_order(p: int) -> None:
    if p not in (1, 2):
        raise ContractError(f"order p must be 1 or 2, got {p!r}")


def assignment_cost(x_pts: np.ndarray, y_pts: np.ndarray, p: int) -> tuple[np.ndarray, float]:
    """Optimal pairing of two equal-size point sets under cost ||x - y||_p^p.

    Returns (sigma, mean_cost) where row i of x is matched to row sigma[i]
    of y and mean_cost = (1/m) * sum_i ||x_i - y_sigma(i)||_p^p. Solved
    exactly as a linear assignment problem (uniform masses make the optimal
    transport plan a permutation).
    """
    _check_order(p)
    metric = "cityblock" if p == 1 else "sqeuclidean"
    cost = cdist(x_pts, y_pts, metric=metric)
    rows, cols = linear_sum_assignment(cost)
    sigma = np.empty(len(rows), dtype=np.intp)
    sigma[rows] = cols
    return sigma, float(cost[rows, cols].mean())


def exact_wasserstein(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: int) -> float:
    """Exact W_p between equal-size uniform empirical measures, O(m^3)."""
    if mu.m != nu.m:
        raise ContractError("exact transport needs equal-size measures")
    if mu.d != nu.d:
        raise ContractError("dimension mismatch")
    if mu.m > SIZE_CAP:
        raise ContractError(f"refusing m={mu.m} > {SIZE_CAP}; the cubic oracle is desk scale only")
    _, mean_cost = assignment_cost(mu.points, nu.points, p)
    return mean_cost if p == 1 else float(np.sqrt(mean_cost))


def grid_angles(n_angles: int) -> np.ndarray:
    """Evenly spaced angles covering [0, pi); antipodal symmetry halves the circle."""
    return np.linspace(0.0, np.pi, num=n_angles, endpoint=False)


def _grid_values(mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: int, angles: np.ndarray) -> np.ndarray:
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    px = np.sort(mu.points @ dirs.T, axis=0)
    py = np.sort(nu.points @ dirs.T, axis=0)
    diff = px - py
    if p == 1:
        return np.abs(diff).mean(axis=0)
    return np.sqrt((diff * diff).mean(axis=0))


def grid_max_sw(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, p: int, n_angles: int
) -> tuple[float, Direction]:
    """Best projected 1-D distance over a dense angle grid (2-D measures only)."""
    _check_order(p)
    if mu.d != 2 or nu.d != 2:
        raise ContractError("grid search over directions is supported in 2-D only")
    if mu.m != nu.m:
        raise ContractError("equal-size measures required")
    if n_angles < 3:
        raise ContractError("need at least 3 grid angles")
    values = _grid_values(mu, nu, p, grid_angles(n_angles))
    best = int(np.argmax(values))
    alpha = float(grid_angles(n_angles)[best])
    return float(values[best]), Direction(np.array([np.cos(alpha), np.sin(alpha)]))


def m_max_sw_samples(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    m: int,
    n_pairs: int,
    n_angles: int,
    rng: np.random.Generator,
    p: int = 2,
) -> np.ndarray:
    """Per-pair grid maxima over ``n_pairs`` sampled mini-batch pairs.

    The mean is the mini-batch grid oracle; the sample spread gives its
    Monte-Carlo standard error. Pairs are drawn with replacement from
    (mu, nu), X before Y, so a caller holding the same generator state can
    reproduce the pair stream.
    """
    _check_order(p)
    if mu.d != 2 or nu.d != 2:
        raise ContractError("grid search over directions is supported in 2-D only")
    angles = grid_angles(n_angles)
    out = np.empty(n_pairs)
    for j in range(n_pairs):
        xb = sample_minibatch(mu, m, rng)
        yb = sample_minibatch(nu, m, rng)
        out[j] = float(_grid_values(xb, yb, p, angles).max())
    return out


def m_max_sw_oracle(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    m: int,
    n_pairs: int,
    n_angles: int,
    rng: np.random.Generator,
    p: int = 2,
) -> float:
    """Monte-Carlo mean of the per-pair grid maximum."""
    return float(m_max_sw_samples(mu, nu, m, n_pairs, n_angles, rng, p).mean())
