"""Minimax training loops for the push-forward generator.

One engine drives seven loss flavors:

  sw        descent on the Monte-Carlo sliced loss, fresh directions each step
  max_sw    inner ascent over the direction per mini-batch pair, then descent
  prw       inner ascent over a k-column frame (QR retraction), then descent
  la_sw / ga_sw / na_sw
            descent-ascent with a persistent direction-predicting model:
            one model ascent step and one generator descent step per outer
            iteration, no inner loop
  a_prw     as above with the frame-predicting (projected) model

Both networks update with Adam. Runs are deterministic functions of the
config seed; all random streams derive from it by the documented split.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import amortized as am
from .generator import (
    GeneratorParams,
    blocks_to_generator,
    generator_backward,
    generator_forward,
    generator_forward_cached,
    generator_to_blocks,
    init_generator,
)
from .generator import parameter_norm as generator_norm
from .grad import _slice_terms, _w1d_value_dudv, grad_theta_w1d, _wk_value_dpxy
from .measures import (
    ContractError,
    Direction,
    EmpiricalMeasure,
    ProjectionFrame,
    sample_minibatch,
    sample_sphere,
    sample_sphere_batch,
)
from .oracles import exact_wasserstein
from .optim import AdamState, adam_step, init_adam
from .seeding import child_seed, make_rng
from .slicers import _retract

__all__ = [
    "AMORTIZED_DIRECTION_LOSSES",
    "LOSS_KINDS",
    "RunRecord",
    "TrainConfig",
    "TrainResult",
    "TrainingRun",
    "adam_step",
    "generator_forward",
    "train",
    "train_amortized",
    "train_max_sw",
    "train_sw",
]

LOSS_KINDS = ("sw", "max_sw", "la_sw", "ga_sw", "na_sw", "prw", "a_prw")
AMORTIZED_DIRECTION_LOSSES = {
    "la_sw": am.KIND_LINEAR,
    "ga_sw": am.KIND_GENERALIZED,
    "na_sw": am.KIND_NONLINEAR,
}
_SLICE_LOSSES = ("max_sw", "prw")
DIVERGENCE_THRESHOLD = 1e6


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one run; loss-specific fields must be present
    exactly when the loss uses them."""

    loss_kind: str
    m: int
    T1: int
    eta1: float
    k_batches: int = 1
    T2: int | None = None
    L: int | None = None
    eta2: float | None = None
    p: int = 2
    k_sub: int | None = None
    seed: int = 0
    adam_betas: tuple[float, float] = (0.0, 0.9)
    detach_slice: bool = False
    warm_start_slices: bool = False
    noise_dim: int = 16
    gen_hidden: int = 128
    gen_depth: int = 3
    eval_every: int = 0
    eval_samples: int = 512
    divergence_threshold: float = DIVERGENCE_THRESHOLD

    def __post_init__(self) -> None:
        if self.loss_kind not in LOSS_KINDS:
            raise ContractError(f"unknown loss_kind {self.loss_kind!r}")
        if self.m < 1 or self.k_batches < 1 or self.T1 < 0:
            raise ContractError("need m >= 1, k_batches >= 1, T1 >= 0")
        if self.p not in (1, 2):
            raise ContractError("p must be 1 or 2")
        if self.eta1 < 0.0:
            raise ContractError("eta1 must be >= 0")
        needs_t2 = self.loss_kind in _SLICE_LOSSES
        if needs_t2 != (self.T2 is not None):
            raise ContractError("T2 is required exactly for max_sw and prw")
        if needs_t2 and self.T2 < 1:
            raise ContractError("T2 must be >= 1")
        if (self.loss_kind == "sw") != (self.L is not None):
            raise ContractError("L is required exactly for the sw loss")
        if self.loss_kind == "sw" and self.L < 1:
            raise ContractError("L must be >= 1")
        needs_eta2 = self.loss_kind != "sw"
        if needs_eta2 != (self.eta2 is not None):
            raise ContractError("eta2 is required exactly for losses with a slice or model update")
        if needs_eta2 and self.eta2 < 0.0:
            raise ContractError("eta2 must be >= 0")
        needs_ksub = self.loss_kind in ("prw", "a_prw")
        if needs_ksub != (self.k_sub is not None):
            raise ContractError("k_sub is required exactly for prw and a_prw")
        if needs_ksub and self.k_sub < 1:
            raise ContractError("k_sub must be >= 1")


@dataclass(frozen=True)
class RunRecord:
    """One logged outer iteration."""

    iteration: int
    loss: float
    wall_ms: float
    exact_w2: float | None
    phi_norm: float
    psi_norm: float | None
    events: tuple[str, ...] = ()

    def log_fields(self) -> dict:
        """Deterministic fields, JSON-ready (timing excluded)."""
        return {
            "iteration": self.iteration,
            "loss": self.loss,
            "exact_w2": self.exact_w2,
            "phi_norm": self.phi_norm,
            "psi_norm": self.psi_norm,
            "events": list(self.events),
        }

    def timing_fields(self) -> dict:
        return {"iteration": self.iteration, "wall_ms": self.wall_ms}


@dataclass
class TrainResult:
    generator: GeneratorParams
    amortized: am.AmortizedParams | am.ProjectedAmortizedParams | None
    records: list[RunRecord]
    counters: dict[str, int]
    failed: bool
    seconds: float
    final_exact_w2: float | None
    config: TrainConfig


class TrainingRun:
    """Mutable training state; one logical writer over (phi, psi, optimizers).

    Per-mini-batch gradient evaluations within a step are reduced in batch
    index order, so results do not depend on evaluation scheduling.
    """

    def __init__(
        self,
        data: EmpiricalMeasure,
        cfg: TrainConfig,
        holdout: EmpiricalMeasure | None = None,
        init_generator_params: GeneratorParams | None = None,
        init_amortized_params=None,
    ) -> None:
        self.cfg = cfg
        self.data = data
        self.holdout = holdout if holdout is not None else data
        self.rng_data = make_rng(child_seed(cfg.seed, 0))
        self.rng_noise = make_rng(child_seed(cfg.seed, 1))
        self.rng_slice = make_rng(child_seed(cfg.seed, 2))
        self.rng_model = make_rng(child_seed(cfg.seed, 3))
        rng_eval = make_rng(child_seed(cfg.seed, 4))

        if init_generator_params is not None:
            self.phi = init_generator_params
        else:
            self.phi = init_generator(
                cfg.noise_dim, data.d, self.rng_model, hidden=cfg.gen_hidden, depth=cfg.gen_depth
            )
        self.phi_state = init_adam(generator_to_blocks(self.phi))

        self.psi = None
        self.psi_state: AdamState | None = None
        if cfg.loss_kind in AMORTIZED_DIRECTION_LOSSES:
            kind = AMORTIZED_DIRECTION_LOSSES[cfg.loss_kind]
            self.psi = (
                init_amortized_params
                if init_amortized_params is not None
                else am.init_amortized(kind, cfg.m, data.d, self.rng_model)
            )
        elif cfg.loss_kind == "a_prw":
            self.psi = (
                init_amortized_params
                if init_amortized_params is not None
                else am.init_projected(am.KIND_LINEAR, cfg.m, data.d, cfg.k_sub, self.rng_model)
            )
        if self.psi is not None:
            self.psi_state = init_adam(am.params_to_blocks(self.psi))

        n_eval = min(cfg.eval_samples, self.holdout.m)
        self.eval_noise = rng_eval.standard_normal((n_eval, cfg.noise_dim))
        self.counters = {
            "phi_updates": 0,
            "psi_updates": 0,
            "slice_updates": 0,
            "degenerate_restarts": 0,
        }
        self._warm_theta: Direction | None = None
        self._warm_frame: ProjectionFrame | None = None

    # -- inner slice optimization (exactly T2 plain ascent updates per pair) --

    def _ascend_direction(self, X: EmpiricalMeasure, Ym: EmpiricalMeasure) -> Direction:
        cfg = self.cfg
        if cfg.warm_start_slices and self._warm_theta is not None:
            theta = self._warm_theta
        else:
            theta = sample_sphere(X.d, self.rng_slice)
        best_value, best_theta = -np.inf, theta
        for _ in range(cfg.T2):
            vg = grad_theta_w1d(X, Ym, theta, cfg.p)
            if vg.value > best_value:
                best_value, best_theta = vg.value, theta
            stepped = theta.vec + cfg.eta2 * vg.grads["theta"]
            norm = float(np.linalg.norm(stepped))
            if norm >= 1e-30:
                theta = Direction(stepped / norm)
            self.counters["slice_updates"] += 1
        if grad_theta_w1d(X, Ym, theta, cfg.p).value > best_value:
            best_theta = theta
        if cfg.warm_start_slices:
            self._warm_theta = best_theta
        return best_theta

    def _ascend_frame(self, X: EmpiricalMeasure, Ym: EmpiricalMeasure) -> ProjectionFrame:
        cfg = self.cfg
        if cfg.warm_start_slices and self._warm_frame is not None:
            u = self._warm_frame.cols
        else:
            u = _retract(self.rng_slice.standard_normal((X.d, cfg.k_sub)), self.rng_slice)

        def value_grad(frame: np.ndarray) -> tuple[float, np.ndarray]:
            value, dpx, dpy = _wk_value_dpxy(X.points @ frame, Ym.points @ frame, cfg.p)
            return value, X.points.T @ dpx + Ym.points.T @ dpy

        best_value, best_u = -np.inf, u
        for _ in range(cfg.T2):
            value, grad = value_grad(u)
            if value > best_value:
                best_value, best_u = value, u
            u = _retract(u + cfg.eta2 * grad, self.rng_slice)
            self.counters["slice_updates"] += 1
        if value_grad(u)[0] > best_value:
            best_u = u
        frame = ProjectionFrame(best_u)
        if cfg.warm_start_slices:
            self._warm_frame = frame
        return frame

    # -- per-pair gradients --

    def _sw_pair(self, X: EmpiricalMeasure, noise: np.ndarray):
        """Vectorized sliced loss over L fresh directions; logged value is the
        rooted estimate, the descent direction is the mean of the W_p^p grads."""
        cfg = self.cfg
        y_arr, cache = generator_forward_cached(self.phi, noise)
        dirs = sample_sphere_batch(X.d, cfg.L, self.rng_slice)
        u = X.points @ dirs.T
        v = y_arr @ dirs.T
        iy = np.argsort(v, axis=0, kind="stable")
        c = np.take_along_axis(u, np.argsort(u, axis=0, kind="stable"), axis=0) - np.take_along_axis(
            v, iy, axis=0
        )
        m = cfg.m
        if cfg.p == 1:
            pow_means = np.abs(c).mean(axis=0)
            dvs = -np.sign(c) / (m * cfg.L)
        else:
            pow_means = (c * c).mean(axis=0)
            dvs = -2.0 * c / (m * cfg.L)
        dv = np.zeros_like(dvs)
        np.put_along_axis(dv, iy, dvs, axis=0)
        dy = dv @ dirs
        value = float(pow_means.mean())
        if cfg.p == 2:
            value = float(np.sqrt(value))
        return value, generator_backward(self.phi, cache, dy)

    def _fixed_slicer_pair(self, X: EmpiricalMeasure, noise: np.ndarray, ascend):
        y_arr, cache = generator_forward_cached(self.phi, noise)
        ym = EmpiricalMeasure(y_arr)
        slicer = ascend(X, ym)
        value, dy, _, _ = _slice_terms(X, ym, slicer, self.cfg.p, False, False)
        return value, generator_backward(self.phi, cache, dy)

    def _amortized_pair(self, X: EmpiricalMeasure, noise: np.ndarray):
        cfg = self.cfg
        y_arr, cache = generator_forward_cached(self.phi, noise)
        ym = EmpiricalMeasure(y_arr)
        events: list[str] = []
        for attempt in range(2):
            try:
                value, dy, psi_blocks, dy_amortized = _slice_terms(
                    X, ym, self.psi, cfg.p,
                    need_psi=True,
                    need_amortized_input_grad=not cfg.detach_slice,
                )
                break
            except (am.DegenerateDirectionError, am.DegenerateFrameError):
                if attempt == 1:
                    raise
                self._rerandomize_bias()
                events.append("degenerate_slice_restart")
        if dy_amortized is not None:
            dy = dy + dy_amortized
        return value, generator_backward(self.phi, cache, dy), psi_blocks, events

    def _rerandomize_bias(self) -> None:
        """Degenerate pre-normalization output: draw a fresh bias block."""
        self.counters["degenerate_restarts"] += 1
        std = float((1.0 / np.sqrt(self.data.d)) ** 0.5)
        if isinstance(self.psi, am.AmortizedParams):
            lin = self.psi.linear
            new_lin = am.LinearAmortizedParams(
                self.rng_model.normal(0.0, std, size=lin.d), lin.w1, lin.w2
            )
            self.psi = am.AmortizedParams(self.psi.kind, new_lin, self.psi.mlp)
        else:
            self.psi = am.ProjectedAmortizedParams(
                self.psi.kind,
                self.rng_model.normal(0.0, std, size=self.psi.W0.shape),
                self.psi.W1,
                self.psi.W2,
                self.psi.mlp,
            )

    # -- one outer iteration --

    def step(self) -> tuple[float, list[str]]:
        cfg = self.cfg
        phi_accum: dict[str, np.ndarray] | None = None
        psi_accum: dict[str, np.ndarray] | None = None
        loss_sum = 0.0
        events: list[str] = []
        for _ in range(cfg.k_batches):
            X = sample_minibatch(self.data, cfg.m, self.rng_data)
            noise = self.rng_noise.standard_normal((cfg.m, cfg.noise_dim))
            psi_blocks = None
            if cfg.loss_kind == "sw":
                value, phi_blocks = self._sw_pair(X, noise)
            elif cfg.loss_kind == "max_sw":
                value, phi_blocks = self._fixed_slicer_pair(X, noise, self._ascend_direction)
            elif cfg.loss_kind == "prw":
                value, phi_blocks = self._fixed_slicer_pair(X, noise, self._ascend_frame)
            else:
                value, phi_blocks, psi_blocks, pair_events = self._amortized_pair(X, noise)
                events.extend(pair_events)
            loss_sum += value
            scale = 1.0 / cfg.k_batches
            if phi_accum is None:
                phi_accum = {k: scale * g for k, g in phi_blocks.items()}
            else:
                for k, g in phi_blocks.items():
                    phi_accum[k] += scale * g
            if psi_blocks is not None:
                if psi_accum is None:
                    psi_accum = {k: scale * g for k, g in psi_blocks.items()}
                else:
                    for k, g in psi_blocks.items():
                        psi_accum[k] += scale * g

        new_blocks, self.phi_state = adam_step(
            generator_to_blocks(self.phi), phi_accum, self.phi_state, cfg.eta1, cfg.adam_betas
        )
        self.phi = blocks_to_generator(new_blocks, cfg.noise_dim)
        self.counters["phi_updates"] += 1

        if psi_accum is not None:
            ascent = {k: -g for k, g in psi_accum.items()}
            new_psi_blocks, self.psi_state = adam_step(
                am.params_to_blocks(self.psi), ascent, self.psi_state, cfg.eta2, cfg.adam_betas
            )
            k = self.psi.k if isinstance(self.psi, am.ProjectedAmortizedParams) else None
            self.psi = am.blocks_to_params(self.psi.kind, new_psi_blocks, k)
            self.counters["psi_updates"] += 1

        return loss_sum / cfg.k_batches, events

    def exact_w2_to_holdout(self) -> float:
        fake = generator_forward(self.phi, self.eval_noise)
        ref = EmpiricalMeasure(self.holdout.points[: fake.m])
        return exact_wasserstein(fake, ref, 2)

    def _psi_norm(self) -> float | None:
        return None if self.psi is None else am.parameter_norm(self.psi)

    def train(self, callback: Callable[[int, "TrainingRun"], None] | None = None) -> TrainResult:
        cfg = self.cfg
        records: list[RunRecord] = []
        failed = False
        started = time.perf_counter()
        for it in range(cfg.T1):
            t0 = time.perf_counter()
            loss, events = self.step()
            wall_ms = (time.perf_counter() - t0) * 1e3
            if not np.isfinite(loss) or loss > cfg.divergence_threshold:
                failed = True
                records.append(
                    RunRecord(
                        it, float(loss), wall_ms, None,
                        generator_norm(self.phi), self._psi_norm(),
                        tuple(events) + ("divergence_guard",),
                    )
                )
                break
            exact = None
            if cfg.eval_every > 0 and (it + 1) % cfg.eval_every == 0:
                exact = self.exact_w2_to_holdout()
            records.append(
                RunRecord(
                    it, float(loss), wall_ms, exact,
                    generator_norm(self.phi), self._psi_norm(), tuple(events),
                )
            )
            if callback is not None:
                callback(it, self)
        seconds = time.perf_counter() - started
        final = None if failed else self.exact_w2_to_holdout()
        return TrainResult(
            generator=self.phi,
            amortized=self.psi,
            records=records,
            counters=dict(self.counters),
            failed=failed,
            seconds=seconds,
            final_exact_w2=final,
            config=cfg,
        )


def train(
    data: EmpiricalMeasure,
    cfg: TrainConfig,
    holdout: EmpiricalMeasure | None = None,
    callback: Callable[[int, TrainingRun], None] | None = None,
    init_generator_params: GeneratorParams | None = None,
    init_amortized_params=None,
) -> TrainResult:
    """Run a full training loop for any loss kind."""
    run = TrainingRun(
        data, cfg, holdout,
        init_generator_params=init_generator_params,
        init_amortized_params=init_amortized_params,
    )
    return run.train(callback)


def train_sw(data: EmpiricalMeasure, cfg: TrainConfig, **kwargs) -> TrainResult:
    if cfg.loss_kind != "sw":
        raise ContractError("train_sw needs loss_kind == 'sw'")
    return train(data, cfg, **kwargs)


def train_max_sw(data: EmpiricalMeasure, cfg: TrainConfig, **kwargs) -> TrainResult:
    if cfg.loss_kind != "max_sw":
        raise ContractError("train_max_sw needs loss_kind == 'max_sw'")
    return train(data, cfg, **kwargs)


def train_amortized(data: EmpiricalMeasure, cfg: TrainConfig, **kwargs) -> TrainResult:
    if cfg.loss_kind not in AMORTIZED_DIRECTION_LOSSES and cfg.loss_kind != "a_prw":
        raise ContractError("train_amortized needs an amortized loss kind")
    return train(data, cfg, **kwargs)
