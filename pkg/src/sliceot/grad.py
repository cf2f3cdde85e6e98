"""Value-and-gradient computation for the projected-distance objectives.

The computation graph is shallow and fixed, so gradients are closed-form
chain rules rather than a tape: project, match order statistics (or solve a
small assignment in the subspace case), take a power mean. The matching is
locally constant almost everywhere, which makes these gradients exact a.e.

With u_i = theta . x_i, v_j = theta . y_j, sigma the sorted matching,
c_i = u_i - v_sigma(i) and S = (1/m) sum |c_i|^p, the direction gradient is

    grad_theta W_p = S^(1/p - 1) * (1/m) * sum_i |c_i|^(p-1) sign(c_i) (x_i - y_sigma(i))

with the convention that the gradient is zero once S underflows (the true
subdifferential contains zero at the minimum). Ties use sign(0) = 0.

:func:`fd_check` verifies any value-and-gradient callable against central
finite differences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .amortized import (
    KIND_LINEAR,
    AmortizedParams,
    LinearAmortizedParams,
    ProjectedAmortizedParams,
    _direction_cache,
    _projected_cache,
    vjp_direction,
    vjp_projected,
)
from .generator import GeneratorParams, generator_backward, generator_forward_cached
from .measures import ContractError, Direction, EmpiricalMeasure, ProjectionFrame
from .oracles import assignment_cost
from .seeding import make_rng

__all__ = [
    "FdReport",
    "S_FLOOR",
    "ValueGrad",
    "fd_check",
    "grad_phi_loss",
    "grad_psi_loss",
    "grad_theta_w1d",
    "pair_value_grads",
]

S_FLOOR = 1e-300
Blocks = dict[str, np.ndarray]


@dataclass(frozen=True)
class ValueGrad:
    """Objective value plus named gradient blocks matching parameter shapes."""

    value: float
    grads: Blocks

    def __post_init__(self) -> None:
        if not np.isfinite(self.value):
            raise ContractError("objective value is not finite")
        for name, g in self.grads.items():
            if not np.isfinite(g).all():
                raise ContractError(f"gradient block {name!r} has non-finite entries")


def _check_order(p: int) -> None:
    if p not in (1, 2):
        raise ContractError(f"order p must be 1 or 2, got {p!r}")


def _w1d_value_dudv(u: np.ndarray, v: np.ndarray, p: int) -> tuple[float, np.ndarray, np.ndarray]:
    """1-D distance and its derivatives w.r.t. every projected value."""
    m = u.size
    ix = np.argsort(u, kind="stable")
    iy = np.argsort(v, kind="stable")
    c = u[ix] - v[iy]
    du = np.zeros(m)
    dv = np.zeros(m)
    if p == 1:
        value = float(np.abs(c).mean())
        coeff = np.sign(c) / m
    else:
        s = float((c * c).mean())
        if s < S_FLOOR:
            return 0.0, du, dv
        value = float(np.sqrt(s))
        coeff = c / (m * value)
    du[ix] = coeff
    dv[iy] = -coeff
    return value, du, dv


def _wk_value_dpxy(px: np.ndarray, py: np.ndarray, p: int) -> tuple[float, np.ndarray, np.ndarray]:
    """Subspace distance (exact assignment) and derivatives w.r.t. projected rows."""
    m = px.shape[0]
    sigma, mean_cost = assignment_cost(px, py, p)
    c = px - py[sigma]
    dpx = np.zeros_like(px)
    dpy = np.zeros_like(py)
    if p == 1:
        value = mean_cost
        coeff = np.sign(c) / m
    else:
        if mean_cost < S_FLOOR:
            return 0.0, dpx, dpy
        value = float(np.sqrt(mean_cost))
        coeff = c / (m * value)
    dpx[:] = coeff
    dpy[sigma] = -coeff
    return value, dpx, dpy


def _theta_value_grad(X: EmpiricalMeasure, Y: EmpiricalMeasure, vec: np.ndarray, p: int) -> ValueGrad:
    """As grad_theta_w1d but for an arbitrary (not necessarily unit) vector.

    The objective extends smoothly off the sphere, which is what the ascent
    update and the finite-difference checks differentiate.
    """
    u = X.points @ vec
    v = Y.points @ vec
    value, du, dv = _w1d_value_dudv(u, v, p)
    grad = X.points.T @ du + Y.points.T @ dv
    return ValueGrad(value, {"theta": grad})


def grad_theta_w1d(
    X: EmpiricalMeasure, Y: EmpiricalMeasure, theta: Direction, p: int = 2
) -> ValueGrad:
    """Projected 1-D distance and its gradient with respect to the direction."""
    _check_order(p)
    if X.m != Y.m:
        raise ContractError("equal-size measures required")
    if X.d != Y.d or X.d != theta.d:
        raise ContractError("dimension mismatch")
    return _theta_value_grad(X, Y, theta.vec, p)


def _slice_terms(
    X: EmpiricalMeasure,
    Ym: EmpiricalMeasure,
    slicer,
    p: int,
    need_psi: bool,
    need_amortized_input_grad: bool,
):
    """Shared core: value, direct d/dY at fixed slice, psi blocks, amortized d/dY."""
    if isinstance(slicer, LinearAmortizedParams):
        slicer = AmortizedParams(KIND_LINEAR, slicer)

    if isinstance(slicer, Direction):
        value, du, dv = _w1d_value_dudv(X.points @ slicer.vec, Ym.points @ slicer.vec, p)
        return value, np.outer(dv, slicer.vec), None, None
    if isinstance(slicer, ProjectionFrame):
        value, _, dpy = _wk_value_dpxy(X.points @ slicer.cols, Ym.points @ slicer.cols, p)
        return value, dpy @ slicer.cols.T, None, None

    if isinstance(slicer, AmortizedParams):
        cache = _direction_cache(slicer, X, Ym)
        theta = cache["theta"]
        value, du, dv = _w1d_value_dudv(X.points @ theta.vec, Ym.points @ theta.vec, p)
        dy_direct = np.outer(dv, theta.vec)
        psi_blocks = None
        dy_amortized = None
        if need_psi or need_amortized_input_grad:
            g_theta = X.points.T @ du + Ym.points.T @ dv
            psi_blocks, dy_amortized = vjp_direction(
                cache, g_theta, need_input_grad=need_amortized_input_grad
            )
        return value, dy_direct, psi_blocks, dy_amortized

    if isinstance(slicer, ProjectedAmortizedParams):
        cache = _projected_cache(slicer, X, Ym)
        frame = cache["frame"]
        value, dpx, dpy = _wk_value_dpxy(X.points @ frame.cols, Ym.points @ frame.cols, p)
        dy_direct = dpy @ frame.cols.T
        psi_blocks = None
        dy_amortized = None
        if need_psi or need_amortized_input_grad:
            g_frame = X.points.T @ dpx + Ym.points.T @ dpy
            psi_blocks, dy_amortized = vjp_projected(
                cache, g_frame, need_input_grad=need_amortized_input_grad
            )
        return value, dy_direct, psi_blocks, dy_amortized

    raise ContractError(f"unsupported slicer type {type(slicer).__name__}")


def grad_psi_loss(psi, X: EmpiricalMeasure, Y: EmpiricalMeasure, p: int = 2) -> ValueGrad:
    """Projected distance at the model's predicted slice, with model gradients."""
    _check_order(p)
    value, _, psi_blocks, _ = _slice_terms(X, Y, psi, p, need_psi=True, need_amortized_input_grad=False)
    return ValueGrad(value, psi_blocks)


def pair_value_grads(
    phi: GeneratorParams,
    noise: np.ndarray,
    X: EmpiricalMeasure,
    slicer,
    p: int = 2,
    detach_slice: bool = False,
    need_psi: bool = False,
) -> tuple[float, Blocks, Blocks | None]:
    """Fused per-pair gradients for the minimax loops.

    Pushes the noise batch through the generator, evaluates the projected
    distance at the slicer (a fixed direction/frame or a model predicting
    one from (X, Y)), and backpropagates to generator blocks and, when
    ``need_psi``, to model blocks. ``detach_slice`` drops the gradient path
    that flows through the model's dependence on the generated batch.
    """
    _check_order(p)
    y_arr, cache = generator_forward_cached(phi, noise)
    ym = EmpiricalMeasure(y_arr)
    amortized = isinstance(slicer, (AmortizedParams, LinearAmortizedParams, ProjectedAmortizedParams))
    value, dy, psi_blocks, dy_amortized = _slice_terms(
        X, ym, slicer, p,
        need_psi=need_psi and amortized,
        need_amortized_input_grad=amortized and not detach_slice,
    )
    if dy_amortized is not None:
        dy = dy + dy_amortized
    phi_blocks = generator_backward(phi, cache, dy)
    return value, phi_blocks, psi_blocks


def grad_phi_loss(
    phi: GeneratorParams,
    noise_batch: np.ndarray,
    X: EmpiricalMeasure,
    theta_or_psi,
    p: int = 2,
    detach_slice: bool = False,
) -> ValueGrad:
    """Projected distance between X and the pushed-forward noise batch, with
    generator gradients (total derivative unless ``detach_slice``)."""
    value, phi_blocks, _ = pair_value_grads(
        phi, noise_batch, X, theta_or_psi, p, detach_slice=detach_slice
    )
    return ValueGrad(value, phi_blocks)


# ---------------------------------------------------------------------------
# finite-difference verification


@dataclass(frozen=True)
class FdReport:
    """Outcome of a central finite-difference check."""

    max_rel_err: float
    mean_rel_err: float
    n_coords: int
    passed: bool
    step: float
    tol: float

    def to_record(self, op: str, instance_seed: int) -> dict:
        return {
            "op": op,
            "instance_seed": instance_seed,
            "max_rel_err": self.max_rel_err,
            "mean_rel_err": self.mean_rel_err,
            "pass": self.passed,
        }


def fd_check(
    f,
    params: Blocks,
    h: float = 1e-6,
    tol: float = 1e-4,
    rng: np.random.Generator | None = None,
    max_coords: int = 200,
) -> FdReport:
    """Compare the gradients reported by ``f`` against central differences.

    ``f`` maps a block dict to a :class:`ValueGrad`. Blocks larger than
    ``max_coords`` are subsampled at random coordinates (seeded stream 0
    when no generator is passed); results are accumulated in sorted
    coordinate order so reports are canonical. Relative error uses the
    larger of the two magnitudes as scale, with entries below 1e-8 on both
    sides counted as exact.
    """
    if h <= 0.0:
        raise ContractError("finite-difference step must be positive")
    analytic = f(params)
    rels: list[float] = []
    for name in sorted(params):
        base = params[name]
        an_flat = np.asarray(analytic.grads[name]).ravel()
        n = base.size
        if n > max_coords:
            r = rng if rng is not None else make_rng(0)
            coords = np.sort(r.choice(n, size=max_coords, replace=False))
        else:
            coords = np.arange(n)
        work = {k: np.array(v, dtype=np.float64) for k, v in params.items()}
        flat = work[name].ravel()
        for c in coords:
            orig = flat[c]
            flat[c] = orig + h
            f_plus = f(work).value
            flat[c] = orig - h
            f_minus = f(work).value
            flat[c] = orig
            fd = (f_plus - f_minus) / (2.0 * h)
            an = float(an_flat[c])
            scale = max(abs(fd), abs(an))
            rels.append(0.0 if scale < 1e-8 else abs(fd - an) / scale)
    max_rel = max(rels) if rels else 0.0
    mean_rel = float(np.mean(rels)) if rels else 0.0
    return FdReport(max_rel, mean_rel, len(rels), max_rel <= tol, h, tol)


# ---------------------------------------------------------------------------
# randomized verification suite


def _random_pair(rng: np.random.Generator, m: int, d: int) -> tuple[EmpiricalMeasure, EmpiricalMeasure]:
    shift = rng.normal(0.0, 1.0, size=d)
    return (
        EmpiricalMeasure(rng.standard_normal((m, d))),
        EmpiricalMeasure(rng.standard_normal((m, d)) + shift),
    )


def gradcheck_suite(
    n_instances: int = 50,
    tol: float = 1e-4,
    h: float = 1e-6,
    seed: int = 0,
) -> list[dict]:
    """Finite-difference verification of every gradient path, one JSON-ready
    record per (op, instance)."""
    from .amortized import blocks_to_params, init_amortized, init_projected, params_to_blocks
    from .generator import blocks_to_generator, generator_to_blocks, init_generator
    from .seeding import child_seed

    records: list[dict] = []
    sizes = [(4, 2), (16, 5), (8, 3)]
    for i in range(n_instances):
        inst_seed = child_seed(seed, i)
        rng = make_rng(inst_seed)
        m, d = sizes[i % len(sizes)]
        p = 1 if i % 4 == 3 else 2
        X, Y = _random_pair(rng, m, d)

        vec = rng.standard_normal(d)
        vec /= np.linalg.norm(vec)
        report = fd_check(
            lambda b: _theta_value_grad(X, Y, b["theta"], p),
            {"theta": vec}, h=h, tol=tol, rng=rng,
        )
        records.append(report.to_record("grad_theta_w1d", inst_seed))

        for kind in ("linear", "generalized_linear", "nonlinear"):
            psi = init_amortized(kind, m, d, rng)
            report = fd_check(
                lambda b, k=kind: grad_psi_loss(blocks_to_params(k, b), X, Y, p),
                params_to_blocks(psi), h=h, tol=tol, rng=rng,
            )
            records.append(report.to_record(f"grad_psi_loss[{kind}]", inst_seed))

        k_sub = min(2, d)
        proj = init_projected("linear", m, d, k_sub, rng)
        report = fd_check(
            lambda b: grad_psi_loss(blocks_to_params("linear", b, k=k_sub), X, Y, p),
            params_to_blocks(proj), h=h, tol=tol, rng=rng,
        )
        records.append(report.to_record("grad_psi_loss[projected]", inst_seed))

        noise_dim = 3
        phi = init_generator(noise_dim, d, rng, hidden=8, depth=2)
        noise = rng.standard_normal((m, noise_dim))
        theta_fixed = Direction(vec)
        report = fd_check(
            lambda b: grad_phi_loss(blocks_to_generator(b, noise_dim), noise, X, theta_fixed, p),
            generator_to_blocks(phi), h=h, tol=tol, rng=rng,
        )
        records.append(report.to_record("grad_phi_loss[fixed]", inst_seed))

        psi_lin = init_amortized("linear", m, d, rng)
        report = fd_check(
            lambda b: grad_phi_loss(blocks_to_generator(b, noise_dim), noise, X, psi_lin, p),
            generator_to_blocks(phi), h=h, tol=tol, rng=rng,
        )
        records.append(report.to_record("grad_phi_loss[amortized]", inst_seed))
    return records
