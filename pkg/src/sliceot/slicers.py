"""Projection-based distance estimators.

Three ways to reduce a d-dimensional transport problem to a cheap projected
one: average the 1-D distance over random directions (Monte Carlo), ascend
to the best single direction on the sphere (projected gradient ascent with
renormalization), or ascend to the best k-column orthonormal frame (ascent
with QR retraction, exact assignment cost inside the subspace).

The two ascent routines track and return the best iterate seen, so the
reported value is monotone in the iteration budget and never below the
value at the initial point; set ``return_best=False`` for the plain
final-iterate behavior.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import TextIO

import numpy as np

from .grad import S_FLOOR, _wk_value_dpxy, grad_theta_w1d
from .measures import (
    ContractError,
    Direction,
    EmpiricalMeasure,
    ProjectionFrame,
    orthonormalize,
    sample_sphere,
    sample_sphere_batch,
)
from .seeding import make_rng

__all__ = [
    "SliceOptConfig",
    "max_sw",
    "prw",
    "sw_estimate",
    "sw_pow_samples",
]

logger = logging.getLogger(__name__)

CONVERGENCE_TOL = 1e-7
_CHUNK = 65536


@dataclass(frozen=True)
class SliceOptConfig:
    """Budget and step size for the ascent routines.

    ``init`` may be a Direction (for max_sw) or ProjectionFrame (for prw);
    when None the start point is drawn from ``seed``. A ``trace`` sink, if
    given, receives one JSON line per iteration with the iteration index,
    objective, and step norm.
    """

    max_iters: int
    learning_rate: float
    seed: int = 0
    init: Direction | ProjectionFrame | None = None
    return_best: bool = True
    converge_tol: float = CONVERGENCE_TOL
    trace: TextIO | None = None

    def __post_init__(self) -> None:
        if self.max_iters < 1:
            raise ContractError("max_iters must be >= 1")
        if not self.learning_rate > 0.0:
            raise ContractError("learning_rate must be positive")


def _check_pair(mu: EmpiricalMeasure, nu: EmpiricalMeasure) -> None:
    if mu.d != nu.d:
        raise ContractError(f"dimension mismatch: {mu.d} vs {nu.d}")
    if mu.m != nu.m:
        raise ContractError(f"size mismatch: {mu.m} vs {nu.m}")


def _emit(trace: TextIO | None, iteration: int, objective: float, step_norm: float) -> None:
    if trace is not None:
        trace.write(
            json.dumps(
                {"iteration": iteration, "objective": objective, "step_norm": step_norm}
            )
            + "\n"
        )


def sw_pow_samples(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, L: int, p: int, rng: np.random.Generator
) -> np.ndarray:
    """The L per-direction values W_p^p(theta_i # mu, theta_i # nu).

    Directions consume the generator stream exactly like L sequential
    sample_sphere draws; work is chunked so large L stays in bounded memory.
    """
    _check_pair(mu, nu)
    if p not in (1, 2):
        raise ContractError(f"order p must be 1 or 2, got {p!r}")
    if L < 1:
        raise ContractError("need L >= 1 projections")
    out = np.empty(L)
    done = 0
    while done < L:
        n = min(_CHUNK, L - done)
        dirs = sample_sphere_batch(mu.d, n, rng)
        px = np.sort(mu.points @ dirs.T, axis=0)
        py = np.sort(nu.points @ dirs.T, axis=0)
        diff = px - py
        if p == 1:
            out[done : done + n] = np.abs(diff).mean(axis=0)
        else:
            out[done : done + n] = (diff * diff).mean(axis=0)
        done += n
    return out


def sw_estimate(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, L: int, p: int, rng: np.random.Generator
) -> float:
    """Monte-Carlo sliced distance: ((1/L) sum_i W_p^p(theta_i # mu, theta_i # nu))^(1/p)."""
    mean_pow = float(sw_pow_samples(mu, nu, L, p, rng).mean())
    return mean_pow if p == 1 else float(np.sqrt(mean_pow))


def max_sw(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, cfg: SliceOptConfig, p: int = 2
) -> tuple[float, Direction]:
    """Best 1-D projection by ascent on the sphere.

    Each iteration takes a gradient step on the unnormalized objective and
    renormalizes; ascent stops early once the renormalized step is below
    ``converge_tol``.
    """
    _check_pair(mu, nu)
    rng = make_rng(cfg.seed)
    if cfg.init is None:
        theta = sample_sphere(mu.d, rng)
    elif isinstance(cfg.init, Direction):
        theta = cfg.init
    else:
        raise ContractError("max_sw init must be a Direction")

    best_value = -np.inf
    best_theta = theta
    value = 0.0
    for t in range(cfg.max_iters):
        vg = grad_theta_w1d(mu, nu, theta, p)
        value = vg.value
        if value > best_value:
            best_value, best_theta = value, theta
        stepped = theta.vec + cfg.learning_rate * vg.grads["theta"]
        norm = float(np.linalg.norm(stepped))
        if norm < 1e-30:
            _emit(cfg.trace, t, value, 0.0)
            break
        new_theta = Direction(stepped / norm)
        step_norm = float(np.linalg.norm(new_theta.vec - theta.vec))
        _emit(cfg.trace, t, value, step_norm)
        theta = new_theta
        if step_norm < cfg.converge_tol:
            break
    final = grad_theta_w1d(mu, nu, theta, p).value
    if final > best_value:
        best_value, best_theta = final, theta
    if cfg.return_best:
        return best_value, best_theta
    return final, theta


def _random_frame(d: int, k: int, rng: np.random.Generator) -> np.ndarray:
    q, _ = orthonormalize(rng.standard_normal((d, k)))
    return q


def _retract(raw: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """QR retraction; rank-deficient columns are re-randomized until it succeeds."""
    for _ in range(8):
        try:
            q, _ = orthonormalize(raw)
            return q
        except ContractError:
            logger.warning("rank-deficient frame iterate; re-randomizing columns")
            raw = raw + 1e-6 * np.abs(raw).max() * rng.standard_normal(raw.shape)
            raw[:, -1] = rng.standard_normal(raw.shape[0])
    raise ContractError("could not restore a full-rank frame after re-randomization")


def prw(
    mu: EmpiricalMeasure, nu: EmpiricalMeasure, k_sub: int, cfg: SliceOptConfig, p: int = 2
) -> tuple[float, ProjectionFrame]:
    """Best k-dimensional orthonormal projection by ascent with QR retraction.

    The objective inside the subspace is the exact assignment distance
    between the projected batches; the gradient holds the optimal matching
    fixed, which is valid almost everywhere.
    """
    _check_pair(mu, nu)
    if not 1 <= k_sub <= mu.d:
        raise ContractError(f"need 1 <= k_sub <= d, got k_sub={k_sub}, d={mu.d}")
    rng = make_rng(cfg.seed)
    if cfg.init is None:
        u = _random_frame(mu.d, k_sub, rng)
    elif isinstance(cfg.init, ProjectionFrame):
        if cfg.init.d != mu.d or cfg.init.k != k_sub:
            raise ContractError("init frame has wrong shape")
        u = cfg.init.cols
    else:
        raise ContractError("prw init must be a ProjectionFrame")

    def objective_and_grad(frame: np.ndarray) -> tuple[float, np.ndarray]:
        px = mu.points @ frame
        py = nu.points @ frame
        value, dpx, dpy = _wk_value_dpxy(px, py, p)
        grad = mu.points.T @ dpx + nu.points.T @ dpy
        return value, grad

    best_value = -np.inf
    best_u = u
    for t in range(cfg.max_iters):
        value, grad = objective_and_grad(u)
        if value > best_value:
            best_value, best_u = value, u
        new_u = _retract(u + cfg.learning_rate * grad, rng)
        step_norm = float(np.linalg.norm(new_u - u))
        _emit(cfg.trace, t, value, step_norm)
        u = new_u
        if step_norm < cfg.converge_tol:
            break
    final, _ = objective_and_grad(u)
    if final > best_value:
        best_value, best_u = final, u
    if cfg.return_best:
        return best_value, ProjectionFrame(best_u)
    return final, ProjectionFrame(u)
