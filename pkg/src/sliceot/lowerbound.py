"""Trained amortized objective versus the mini-batch grid oracle.

A direction-predicting model can never beat the per-pair maximum over all
directions, so the trained amortized objective estimate must sit at or
below the grid oracle's estimate up to Monte-Carlo noise. This module fits
a model by stochastic ascent on fresh mini-batch pairs, then evaluates both
quantities on one shared pair stream and reports the comparison.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import amortized as am
from .grad import grad_psi_loss
from .measures import EmpiricalMeasure, sample_minibatch
from .oracles import grid_angles, _grid_values
from .optim import adam_step, init_adam
from .seeding import child_seed, make_rng

__all__ = [
    "LowerBoundResult",
    "fit_slice_model",
    "lower_bound_check",
    "lower_bound_suite",
    "random_instance",
]


@dataclass(frozen=True)
class LowerBoundResult:
    kind: str
    asw_estimate: float
    oracle_mean: float
    oracle_se: float
    n_pairs: int
    ok: bool

    def to_record(self, instance: int) -> dict:
        return {
            "instance": instance,
            "kind": self.kind,
            "a_sw": self.asw_estimate,
            "m_max_sw": self.oracle_mean,
            "mc_se": self.oracle_se,
            "pass": self.ok,
        }


def fit_slice_model(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    kind: str,
    m: int,
    n_iters: int,
    eta: float,
    seed: int,
    p: int = 2,
) -> am.AmortizedParams:
    """Ascend the expected projected distance over fresh mini-batch pairs."""
    rng_pairs = make_rng(child_seed(seed, 0))
    rng_init = make_rng(child_seed(seed, 1))
    psi = am.init_amortized(kind, m, mu.d, rng_init)
    state = init_adam(am.params_to_blocks(psi))
    for _ in range(n_iters):
        x = sample_minibatch(mu, m, rng_pairs)
        y = sample_minibatch(nu, m, rng_pairs)
        try:
            vg = grad_psi_loss(psi, x, y, p)
        except am.DegenerateDirectionError:
            lin = psi.linear
            std = float((1.0 / np.sqrt(mu.d)) ** 0.5)
            psi = am.AmortizedParams(
                psi.kind,
                am.LinearAmortizedParams(rng_init.normal(0.0, std, size=lin.d), lin.w1, lin.w2),
                psi.mlp,
            )
            continue
        ascent = {k: -g for k, g in vg.grads.items()}
        blocks, state = adam_step(am.params_to_blocks(psi), ascent, state, eta)
        psi = am.blocks_to_params(psi.kind, blocks)
    return psi


def lower_bound_check(
    mu: EmpiricalMeasure,
    nu: EmpiricalMeasure,
    kind: str,
    m: int,
    n_pairs: int,
    n_angles: int,
    train_iters: int,
    eta: float,
    seed: int,
    p: int = 2,
) -> LowerBoundResult:
    """Fit the model, then compare its objective estimate against the grid
    oracle on the same pair stream, with a two-standard-error allowance."""
    psi = fit_slice_model(mu, nu, kind, m, train_iters, eta, seed, p)
    rng_eval = make_rng(child_seed(seed, 2))
    angles = grid_angles(n_angles)
    asw_vals = np.empty(n_pairs)
    grid_vals = np.empty(n_pairs)
    for j in range(n_pairs):
        x = sample_minibatch(mu, m, rng_eval)
        y = sample_minibatch(nu, m, rng_eval)
        try:
            asw_vals[j] = grad_psi_loss(psi, x, y, p).value
        except am.DegenerateDirectionError:
            asw_vals[j] = 0.0
        grid_vals[j] = float(_grid_values(x, y, p, angles).max())
    asw = float(asw_vals.mean())
    oracle = float(grid_vals.mean())
    se = float(grid_vals.std(ddof=1) / np.sqrt(n_pairs)) if n_pairs > 1 else 0.0
    return LowerBoundResult(kind, asw, oracle, se, n_pairs, asw <= oracle + 2.0 * se)


def random_instance(seed: int) -> tuple[EmpiricalMeasure, EmpiricalMeasure, int]:
    """A random 2-D measure pair and a mini-batch size in 2..8."""
    rng = make_rng(seed)
    clouds = []
    for _ in range(2):
        n = int(rng.integers(8, 33))
        center = rng.normal(0.0, 1.5, size=2)
        scale = float(rng.uniform(0.3, 1.2))
        clouds.append(EmpiricalMeasure(center + scale * rng.standard_normal((n, 2))))
    return clouds[0], clouds[1], int(rng.integers(2, 9))


def lower_bound_suite(
    n_instances: int = 20,
    kinds: tuple[str, ...] = am.KINDS,
    n_pairs: int = 200,
    n_angles: int = 10_000,
    train_iters: int = 300,
    eta: float = 0.01,
    seed: int = 0,
    p: int = 2,
) -> list[dict]:
    """Run the comparison on random instance pairs for every model kind."""
    records = []
    for i in range(n_instances):
        mu, nu, m = random_instance(child_seed(seed, i))
        for j, kind in enumerate(kinds):
            res = lower_bound_check(
                mu, nu, kind, m, n_pairs, n_angles, train_iters, eta,
                seed=child_seed(child_seed(seed, i), j + 1), p=p,
            )
            records.append(res.to_record(i))
    return records
