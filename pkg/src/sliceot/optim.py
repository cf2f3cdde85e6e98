"""Adam over named parameter blocks, functional style.

The update is the standard bias-corrected rule with eps added outside the
square root:

    m_t = b1*m + (1-b1)*g        mhat = m_t / (1 - b1^t)
    v_t = b2*v + (1-b2)*g^2      vhat = v_t / (1 - b2^t)
    x  <- x - lr * mhat / (sqrt(vhat) + eps)

Adam minimizes; callers performing ascent pass the negated gradient.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["AdamState", "adam_step", "init_adam"]

Blocks = dict[str, np.ndarray]

DEFAULT_BETAS = (0.0, 0.9)
ADAM_EPS = 1e-8


@dataclass(frozen=True)
class AdamState:
    m: Blocks = field(default_factory=dict)
    v: Blocks = field(default_factory=dict)
    t: int = 0


def init_adam(params: Blocks) -> AdamState:
    zeros = {k: np.zeros_like(a) for k, a in params.items()}
    return AdamState(m=zeros, v={k: np.zeros_like(a) for k, a in params.items()})


def adam_step(
    params: Blocks,
    grads: Blocks,
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = DEFAULT_BETAS,
    eps: float = ADAM_EPS,
) -> tuple[Blocks, AdamState]:
    """One Adam step; returns fresh parameter and state dicts."""
    if set(params) != set(grads):
        raise ValueError("parameter and gradient blocks do not match")
    b1, b2 = betas
    t = state.t + 1
    new_params: Blocks = {}
    new_m: Blocks = {}
    new_v: Blocks = {}
    for key in params:
        g = grads[key]
        if g.shape != params[key].shape:
            raise ValueError(f"gradient shape mismatch for block {key!r}")
        m = b1 * state.m.get(key, 0.0) + (1.0 - b1) * g
        v = b2 * state.v.get(key, 0.0) + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1**t)
        vhat = v / (1.0 - b2**t)
        new_params[key] = params[key] - lr * mhat / (np.sqrt(vhat) + eps)
        new_m[key] = m
        new_v[key] = v
    return new_params, AdamState(m=new_m, v=new_v, t=t)
