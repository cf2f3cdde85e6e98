"""Parametric models that predict a projection from a pair of point batches.

Three families map two batches of m points in R^d to a unit direction:

  linear               f(X, Y) = unit(w0 + T(X) w1 + T(Y) w2)
  generalized linear   f(X, Y) = unit(w0 + T(g(X)) w1 + T(g(Y)) w2)
  non-linear           f(X, Y) = unit(h(w0 + T(X) w1 + T(Y) w2))

where T(X) is the d x m matrix whose columns are the points of X (so
``T(X) w1`` is a weighted sum of support points), g applies
``x -> W_b sigmoid(W_a x) + b0`` to every point, and h applies the same map
once to the aggregated vector. ``unit`` divides by the Euclidean norm.

A fourth, projected family replaces the weight vectors with k-column
matrices and orthonormalizes the d x k result by QR, producing a projection
frame instead of a single direction.

Parameter snapshots are immutable; forward passes are pure. Backward helpers
(`vjp_direction`, `vjp_projected`) return gradients for every block and,
on request, the gradient with respect to the second input batch, which is
what the minimax trainer differentiates through.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np
from scipy.linalg import solve_triangular

from .measures import ContractError, Direction, EmpiricalMeasure, ProjectionFrame, orthonormalize

__all__ = [
    "AmortizedParams",
    "DegenerateDirectionError",
    "DegenerateFrameError",
    "KINDS",
    "KIND_GENERALIZED",
    "KIND_LINEAR",
    "KIND_NONLINEAR",
    "LinearAmortizedParams",
    "MlpBlock",
    "ProjectedAmortizedParams",
    "blocks_to_params",
    "flop_estimate",
    "forward",
    "forward_generalized",
    "forward_linear",
    "forward_nonlinear",
    "forward_projected",
    "init_amortized",
    "init_projected",
    "load_amortized",
    "load_projected",
    "parameter_count",
    "params_to_blocks",
    "parameter_norm",
    "save_amortized",
    "save_projected",
    "vjp_direction",
    "vjp_projected",
]

KIND_LINEAR = "linear"
KIND_GENERALIZED = "generalized_linear"
KIND_NONLINEAR = "nonlinear"
KINDS = (KIND_LINEAR, KIND_GENERALIZED, KIND_NONLINEAR)

_KIND_CODES = {KIND_LINEAR: 0, KIND_GENERALIZED: 1, KIND_NONLINEAR: 2}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_MAGIC_DIRECTION = b"AMSW"
_MAGIC_PROJECTED = b"APSW"
_NORM_FLOOR = 1e-30


class DegenerateDirectionError(RuntimeError):
    """The pre-normalization vector vanished; no direction can be produced."""


class DegenerateFrameError(RuntimeError):
    """The pre-orthonormalization matrix is rank deficient."""


def _freeze(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class LinearAmortizedParams:
    """Weights (w0, w1, w2) of the linear family: d + m + m values."""

    w0: np.ndarray
    w1: np.ndarray
    w2: np.ndarray

    def __post_init__(self) -> None:
        w0, w1, w2 = _freeze(self.w0), _freeze(self.w1), _freeze(self.w2)
        if w0.ndim != 1 or w1.ndim != 1 or w2.ndim != 1:
            raise ContractError("w0, w1, w2 must be 1-d arrays")
        if w1.shape != w2.shape:
            raise ContractError("w1 and w2 must have the same length m")
        object.__setattr__(self, "w0", w0)
        object.__setattr__(self, "w1", w1)
        object.__setattr__(self, "w2", w2)

    @property
    def d(self) -> int:
        return self.w0.size

    @property
    def m(self) -> int:
        return self.w1.size


@dataclass(frozen=True)
class MlpBlock:
    """One sigmoid layer pair x -> W_b sigmoid(W_a x) + b0, all shapes d x d / d."""

    W_a: np.ndarray
    W_b: np.ndarray
    b0: np.ndarray

    def __post_init__(self) -> None:
        wa, wb, b0 = _freeze(self.W_a), _freeze(self.W_b), _freeze(self.b0)
        d = b0.size
        if wa.shape != (d, d) or wb.shape != (d, d) or b0.ndim != 1:
            raise ContractError("MLP block needs W_a, W_b of shape (d, d) and b0 of shape (d,)")
        object.__setattr__(self, "W_a", wa)
        object.__setattr__(self, "W_b", wb)
        object.__setattr__(self, "b0", b0)

    @property
    def d(self) -> int:
        return self.b0.size


@dataclass(frozen=True)
class AmortizedParams:
    """A direction-valued model: kind plus its weights.

    ``mlp`` is present exactly when the kind is not linear.
    """

    kind: str
    linear: LinearAmortizedParams
    mlp: MlpBlock | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ContractError(f"unknown amortized kind {self.kind!r}")
        if (self.mlp is None) != (self.kind == KIND_LINEAR):
            raise ContractError("mlp block must be present iff kind is not linear")
        if self.mlp is not None and self.mlp.d != self.linear.d:
            raise ContractError("mlp block dimension must match w0")

    @property
    def d(self) -> int:
        return self.linear.d

    @property
    def m(self) -> int:
        return self.linear.m


@dataclass(frozen=True)
class ProjectedAmortizedParams:
    """A frame-valued model: weight matrices with k output columns."""

    kind: str
    W0: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    mlp: MlpBlock | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ContractError(f"unknown amortized kind {self.kind!r}")
        if (self.mlp is None) != (self.kind == KIND_LINEAR):
            raise ContractError("mlp block must be present iff kind is not linear")
        w0, w1, w2 = _freeze(self.W0), _freeze(self.W1), _freeze(self.W2)
        if w0.ndim != 2 or w1.ndim != 2 or w2.ndim != 2:
            raise ContractError("W0, W1, W2 must be 2-d arrays")
        k = w0.shape[1]
        if w1.shape[1] != k or w2.shape[1] != k or w1.shape != w2.shape:
            raise ContractError("W0, W1, W2 must share the column count k")
        if self.mlp is not None and self.mlp.d != w0.shape[0]:
            raise ContractError("mlp block dimension must match W0")
        object.__setattr__(self, "W0", w0)
        object.__setattr__(self, "W1", w1)
        object.__setattr__(self, "W2", w2)

    @property
    def d(self) -> int:
        return self.W0.shape[0]

    @property
    def m(self) -> int:
        return self.W1.shape[0]

    @property
    def k(self) -> int:
        return self.W0.shape[1]


# ---------------------------------------------------------------------------
# forward passes


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _check_pair(m: int, d: int, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> None:
    if X.m != m or Y.m != m:
        raise ContractError(f"batch size mismatch: model expects m={m}, got {X.m} and {Y.m}")
    if X.d != d or Y.d != d:
        raise ContractError(f"dimension mismatch: model expects d={d}, got {X.d} and {Y.d}")


def _point_features(mlp: MlpBlock, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Apply x -> W_b sigmoid(W_a x) + b0 to every row; returns (features, sigmoids)."""
    s = _sigmoid(pts @ mlp.W_a.T)
    return s @ mlp.W_b.T + mlp.b0, s


def _normalize(z: np.ndarray) -> tuple[Direction, float]:
    norm = float(np.linalg.norm(z))
    if norm < _NORM_FLOOR:
        raise DegenerateDirectionError("pre-normalization vector has vanishing norm")
    return Direction(z / norm), norm


def _direction_cache(psi, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> dict:
    """Forward pass retaining intermediates for the backward pass."""
    if isinstance(psi, LinearAmortizedParams):
        psi = AmortizedParams(KIND_LINEAR, psi)
    _check_pair(psi.m, psi.d, X, Y)
    lin = psi.linear
    cache: dict = {"psi": psi, "X": X.points, "Y": Y.points}
    if psi.kind == KIND_GENERALIZED:
        fx, sx = _point_features(psi.mlp, X.points)
        fy, sy = _point_features(psi.mlp, Y.points)
        cache.update(fx=fx, sx=sx, fy=fy, sy=sy)
        z = lin.w0 + (fx.T @ lin.w1 + fy.T @ lin.w2)
    else:
        z = lin.w0 + (X.points.T @ lin.w1 + Y.points.T @ lin.w2)
    if psi.kind == KIND_NONLINEAR:
        cache["z_lin"] = z
        s = _sigmoid(psi.mlp.W_a @ z)
        cache["s"] = s
        z = psi.mlp.W_b @ s + psi.mlp.b0
    theta, norm = _normalize(z)
    cache.update(theta=theta, norm=norm)
    return cache


def forward_linear(psi: LinearAmortizedParams, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> Direction:
    """Unit direction w0 + T(X) w1 + T(Y) w2, normalized."""
    return _direction_cache(psi, X, Y)["theta"]


def forward_generalized(psi: AmortizedParams, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> Direction:
    """Linear form applied to per-point sigmoid-MLP features, normalized."""
    if psi.kind != KIND_GENERALIZED:
        raise ContractError("forward_generalized needs a generalized_linear model")
    return _direction_cache(psi, X, Y)["theta"]


def forward_nonlinear(psi: AmortizedParams, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> Direction:
    """Sigmoid-MLP applied once to the aggregated linear form, normalized."""
    if psi.kind != KIND_NONLINEAR:
        raise ContractError("forward_nonlinear needs a nonlinear model")
    return _direction_cache(psi, X, Y)["theta"]


def forward(psi: AmortizedParams, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> Direction:
    """Kind-dispatched direction prediction."""
    return _direction_cache(psi, X, Y)["theta"]


def _projected_cache(psi: ProjectedAmortizedParams, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> dict:
    _check_pair(psi.m, psi.d, X, Y)
    cache: dict = {"psi": psi, "X": X.points, "Y": Y.points}
    if psi.kind == KIND_GENERALIZED:
        fx, sx = _point_features(psi.mlp, X.points)
        fy, sy = _point_features(psi.mlp, Y.points)
        cache.update(fx=fx, sx=sx, fy=fy, sy=sy)
        z = psi.W0 + (fx.T @ psi.W1 + fy.T @ psi.W2)
    else:
        z = psi.W0 + (X.points.T @ psi.W1 + Y.points.T @ psi.W2)
    if psi.kind == KIND_NONLINEAR:
        cache["z_lin"] = z
        s = _sigmoid(psi.mlp.W_a @ z)
        cache["s"] = s
        z = psi.mlp.W_b @ s + psi.mlp.b0[:, None]
    try:
        q, r = orthonormalize(z)
    except ContractError as exc:
        raise DegenerateFrameError(str(exc)) from exc
    cache.update(frame=ProjectionFrame(q), q=q, r=r)
    return cache


def forward_projected(psi: ProjectedAmortizedParams, X: EmpiricalMeasure, Y: EmpiricalMeasure) -> ProjectionFrame:
    """Orthonormal frame: Q factor of the d x k aggregated map, nonnegative-diagonal QR."""
    return _projected_cache(psi, X, Y)["frame"]


# ---------------------------------------------------------------------------
# backward passes


def _mlp_feature_vjp(mlp: MlpBlock, pts: np.ndarray, s: np.ndarray, g_feat: np.ndarray):
    """Grads of sum(g_feat * features(pts)) w.r.t. the block and the points."""
    g_wb = g_feat.T @ s
    g_b0 = g_feat.sum(axis=0)
    g_pre = (g_feat @ mlp.W_b) * s * (1.0 - s)
    g_wa = g_pre.T @ pts
    g_pts = g_pre @ mlp.W_a
    return g_wb, g_b0, g_wa, g_pts


def vjp_direction(cache: dict, g_theta: np.ndarray, need_input_grad: bool = False):
    """Pull a cotangent on the output direction back to parameter blocks.

    Returns (blocks, g_Y) where g_Y is the gradient with respect to the
    second input batch (None unless requested). The normalization Jacobian
    (I - theta theta^T)/||z|| annihilates the radial component first.
    """
    psi: AmortizedParams = cache["psi"]
    theta = cache["theta"].vec
    g_z = (g_theta - theta * float(theta @ g_theta)) / cache["norm"]

    lin = psi.linear
    blocks: dict[str, np.ndarray] = {}
    g_y = None

    if psi.kind == KIND_NONLINEAR:
        mlp = psi.mlp
        s, z_lin = cache["s"], cache["z_lin"]
        blocks["mlp.W_b"] = np.outer(g_z, s)
        blocks["mlp.b0"] = g_z.copy()
        g_pre = (mlp.W_b.T @ g_z) * s * (1.0 - s)
        blocks["mlp.W_a"] = np.outer(g_pre, z_lin)
        g_agg = mlp.W_a.T @ g_pre
    else:
        g_agg = g_z

    if psi.kind == KIND_GENERALIZED:
        fx, fy = cache["fx"], cache["fy"]
        blocks["w0"] = g_agg
        blocks["w1"] = fx @ g_agg
        blocks["w2"] = fy @ g_agg
        gx_feat = np.outer(lin.w1, g_agg)
        gy_feat = np.outer(lin.w2, g_agg)
        g_wb_x, g_b0_x, g_wa_x, _ = _mlp_feature_vjp(psi.mlp, cache["X"], cache["sx"], gx_feat)
        g_wb_y, g_b0_y, g_wa_y, g_pts_y = _mlp_feature_vjp(psi.mlp, cache["Y"], cache["sy"], gy_feat)
        blocks["mlp.W_b"] = g_wb_x + g_wb_y
        blocks["mlp.b0"] = g_b0_x + g_b0_y
        blocks["mlp.W_a"] = g_wa_x + g_wa_y
        if need_input_grad:
            g_y = g_pts_y
    else:
        X, Y = cache["X"], cache["Y"]
        blocks["w0"] = g_agg
        blocks["w1"] = X @ g_agg
        blocks["w2"] = Y @ g_agg
        if need_input_grad:
            g_y = np.outer(lin.w2, g_agg)

    return blocks, g_y


def _qr_vjp(q: np.ndarray, r: np.ndarray, g_q: np.ndarray) -> np.ndarray:
    """Cotangent on Q of a thin QR pulled back to the decomposed matrix."""
    m = q.T @ g_q
    skew = np.tril(m - m.T, k=-1)
    b = q @ skew + g_q - q @ m
    return solve_triangular(r, b.T, lower=False).T


def vjp_projected(cache: dict, g_frame: np.ndarray, need_input_grad: bool = False):
    """Pull a cotangent on the output frame back to parameter blocks."""
    psi: ProjectedAmortizedParams = cache["psi"]
    g_z = _qr_vjp(cache["q"], cache["r"], g_frame)

    blocks: dict[str, np.ndarray] = {}
    g_y = None

    if psi.kind == KIND_NONLINEAR:
        mlp = psi.mlp
        s, z_lin = cache["s"], cache["z_lin"]
        blocks["mlp.W_b"] = g_z @ s.T
        blocks["mlp.b0"] = g_z.sum(axis=1)
        g_pre = (mlp.W_b.T @ g_z) * s * (1.0 - s)
        blocks["mlp.W_a"] = g_pre @ z_lin.T
        g_agg = mlp.W_a.T @ g_pre
    else:
        g_agg = g_z

    if psi.kind == KIND_GENERALIZED:
        fx, fy = cache["fx"], cache["fy"]
        blocks["W0"] = g_agg
        blocks["W1"] = fx @ g_agg
        blocks["W2"] = fy @ g_agg
        gx_feat = psi.W1 @ g_agg.T
        gy_feat = psi.W2 @ g_agg.T
        g_wb_x, g_b0_x, g_wa_x, _ = _mlp_feature_vjp(psi.mlp, cache["X"], cache["sx"], gx_feat)
        g_wb_y, g_b0_y, g_wa_y, g_pts_y = _mlp_feature_vjp(psi.mlp, cache["Y"], cache["sy"], gy_feat)
        blocks["mlp.W_b"] = g_wb_x + g_wb_y
        blocks["mlp.b0"] = g_b0_x + g_b0_y
        blocks["mlp.W_a"] = g_wa_x + g_wa_y
        if need_input_grad:
            g_y = g_pts_y
    else:
        X, Y = cache["X"], cache["Y"]
        blocks["W0"] = g_agg
        blocks["W1"] = X @ g_agg
        blocks["W2"] = Y @ g_agg
        if need_input_grad:
            g_y = psi.W2 @ g_agg.T

    return blocks, g_y


# ---------------------------------------------------------------------------
# accounting

def parameter_count(psi) -> int:
    """Exact number of scalar parameters in the model."""
    if isinstance(psi, LinearAmortizedParams):
        return 2 * psi.m + psi.d
    if isinstance(psi, AmortizedParams):
        if psi.kind == KIND_LINEAR:
            return 2 * psi.m + psi.d
        return 2 * (psi.m + psi.d * psi.d + psi.d)
    if isinstance(psi, ProjectedAmortizedParams):
        total = psi.k * (psi.d + 2 * psi.m)
        if psi.mlp is not None:
            total += 2 * psi.d * psi.d + psi.d
        return total
    raise ContractError(f"not an amortized parameter object: {type(psi).__name__}")


def flop_estimate(psi, m: int, d: int) -> int:
    """Leading-order operation count of one forward evaluation at (m, d).

    Direction kinds: (2m+1)d for linear, 4md^2 + 6md + d for generalized,
    2md + 2d^2 + 3d for non-linear. Projected kinds scale the aggregation
    terms by the column count k.
    """
    kind = psi if isinstance(psi, str) else psi.kind
    if isinstance(psi, ProjectedAmortizedParams):
        k = psi.k
        if kind == KIND_LINEAR:
            return k * (2 * m + 1) * d
        if kind == KIND_GENERALIZED:
            return 4 * m * d * d + 4 * m * d + k * (2 * m + 1) * d
        return k * (2 * m + 1) * d + k * (2 * d * d + 2 * d)
    if kind == KIND_LINEAR:
        return (2 * m + 1) * d
    if kind == KIND_GENERALIZED:
        return 4 * m * d * d + 6 * m * d + d
    if kind == KIND_NONLINEAR:
        return 2 * m * d + 2 * d * d + 3 * d
    raise ContractError(f"unknown amortized kind {kind!r}")


def params_to_blocks(psi) -> dict[str, np.ndarray]:
    """Named parameter blocks, for optimizers and finite-difference checks."""
    if isinstance(psi, AmortizedParams):
        blocks = {"w0": psi.linear.w0, "w1": psi.linear.w1, "w2": psi.linear.w2}
    elif isinstance(psi, ProjectedAmortizedParams):
        blocks = {"W0": psi.W0, "W1": psi.W1, "W2": psi.W2}
    else:
        raise ContractError(f"not an amortized parameter object: {type(psi).__name__}")
    if psi.mlp is not None:
        blocks.update({"mlp.W_a": psi.mlp.W_a, "mlp.W_b": psi.mlp.W_b, "mlp.b0": psi.mlp.b0})
    return blocks


def blocks_to_params(kind: str, blocks: dict[str, np.ndarray], k: int | None = None):
    """Rebuild a parameter object from named blocks (inverse of params_to_blocks)."""
    mlp = None
    if kind != KIND_LINEAR:
        mlp = MlpBlock(blocks["mlp.W_a"], blocks["mlp.W_b"], blocks["mlp.b0"])
    if k is None:
        return AmortizedParams(kind, LinearAmortizedParams(blocks["w0"], blocks["w1"], blocks["w2"]), mlp)
    return ProjectedAmortizedParams(kind, blocks["W0"], blocks["W1"], blocks["W2"], mlp)


def parameter_norm(psi) -> float:
    return float(np.sqrt(sum(float(np.sum(a * a)) for a in params_to_blocks(psi).values())))


# ---------------------------------------------------------------------------
# initialization

_W_VARIANCE_POWER = 0.5  # variance 1/sqrt(d) for the aggregation weights
_MLP_ALPHA = 0.5  # input scaling of the near-identity sigmoid block
_MLP_NOISE = 0.1  # relative symmetry-breaking noise on the block weights


def _init_mlp(d: int, rng: np.random.Generator) -> MlpBlock:
    """Sigmoid-centered near-identity block: x -> W_b sigmoid(W_a x) + b0 = x + O(x^3).

    Starting at (a noisy multiple of) the identity keeps the featurized and
    post-mapped model families anchored to the plain linear family, so the
    extra capacity refines rather than replaces the linear prediction.
    """
    eye = np.eye(d)
    w_a = _MLP_ALPHA * (eye + _MLP_NOISE * rng.standard_normal((d, d)))
    w_b = (4.0 / _MLP_ALPHA) * (eye + _MLP_NOISE * rng.standard_normal((d, d)))
    b0 = -0.5 * w_b.sum(axis=1)
    return MlpBlock(W_a=w_a, W_b=w_b, b0=b0)


def _w_stds(m: int, d: int) -> tuple[float, float]:
    # bias O(1); point weights scaled so the aggregated sum over 2m points
    # stays at the data's own scale (keeps the pre-normalization norm O(1))
    return float((1.0 / np.sqrt(d)) ** _W_VARIANCE_POWER), float(1.0 / np.sqrt(2 * m))


def init_amortized(kind: str, m: int, d: int, rng: np.random.Generator) -> AmortizedParams:
    """Fresh direction-valued model; weights scaled so ||z|| stays O(1)."""
    if kind not in KINDS:
        raise ContractError(f"unknown amortized kind {kind!r}")
    std0, std12 = _w_stds(m, d)
    lin = LinearAmortizedParams(
        w0=rng.normal(0.0, std0, size=d),
        w1=rng.normal(0.0, std12, size=m),
        w2=rng.normal(0.0, std12, size=m),
    )
    mlp = _init_mlp(d, rng) if kind != KIND_LINEAR else None
    return AmortizedParams(kind, lin, mlp)


def init_projected(kind: str, m: int, d: int, k: int, rng: np.random.Generator) -> ProjectedAmortizedParams:
    """Fresh frame-valued model with k output columns."""
    if kind not in KINDS:
        raise ContractError(f"unknown amortized kind {kind!r}")
    if not 1 <= k <= d:
        raise ContractError("need 1 <= k <= d")
    std0, std12 = _w_stds(m, d)
    mlp = _init_mlp(d, rng) if kind != KIND_LINEAR else None
    return ProjectedAmortizedParams(
        kind,
        W0=rng.normal(0.0, std0, size=(d, k)),
        W1=rng.normal(0.0, std12, size=(m, k)),
        W2=rng.normal(0.0, std12, size=(m, k)),
        mlp=mlp,
    )


# ---------------------------------------------------------------------------
# checkpoints

def _write_mlp(sink: BinaryIO, mlp: MlpBlock) -> None:
    for arr in (mlp.W_a, mlp.W_b, mlp.b0):
        sink.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def _read_array(source: BinaryIO, shape: tuple[int, ...]) -> np.ndarray:
    count = int(np.prod(shape))
    raw = source.read(8 * count)
    if len(raw) != 8 * count:
        raise ValueError("amortized checkpoint truncated")
    return np.frombuffer(raw, dtype="<f8").reshape(shape)


def save_amortized(sink: BinaryIO, psi: AmortizedParams) -> None:
    """Layout: magic "AMSW", u8 kind, u32 m, u32 d, then f64 LE arrays in field order."""
    sink.write(struct.pack("<4sBII", _MAGIC_DIRECTION, _KIND_CODES[psi.kind], psi.m, psi.d))
    for arr in (psi.linear.w0, psi.linear.w1, psi.linear.w2):
        sink.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if psi.mlp is not None:
        _write_mlp(sink, psi.mlp)


def load_amortized(source: BinaryIO) -> AmortizedParams:
    header = source.read(13)
    if len(header) < 13 or header[:4] != _MAGIC_DIRECTION:
        raise ValueError("not an AMSW checkpoint (bad magic or truncated header)")
    _, code, m, d = struct.unpack("<4sBII", header)
    if code not in _CODE_KINDS:
        raise ValueError(f"unknown amortized kind code {code}")
    kind = _CODE_KINDS[code]
    lin = LinearAmortizedParams(
        _read_array(source, (d,)), _read_array(source, (m,)), _read_array(source, (m,))
    )
    mlp = None
    if kind != KIND_LINEAR:
        mlp = MlpBlock(_read_array(source, (d, d)), _read_array(source, (d, d)), _read_array(source, (d,)))
    return AmortizedParams(kind, lin, mlp)


def save_projected(sink: BinaryIO, psi: ProjectedAmortizedParams) -> None:
    """Layout: magic "APSW", u8 kind, u32 m, u32 d, u32 k, then f64 LE arrays."""
    sink.write(
        struct.pack("<4sBIII", _MAGIC_PROJECTED, _KIND_CODES[psi.kind], psi.m, psi.d, psi.k)
    )
    for arr in (psi.W0, psi.W1, psi.W2):
        sink.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    if psi.mlp is not None:
        _write_mlp(sink, psi.mlp)


def load_projected(source: BinaryIO) -> ProjectedAmortizedParams:
    header = source.read(17)
    if len(header) < 17 or header[:4] != _MAGIC_PROJECTED:
        raise ValueError("not an APSW checkpoint (bad magic or truncated header)")
    _, code, m, d, k = struct.unpack("<4sBIII", header)
    if code not in _CODE_KINDS:
        raise ValueError(f"unknown amortized kind code {code}")
    kind = _CODE_KINDS[code]
    w0 = _read_array(source, (d, k))
    w1 = _read_array(source, (m, k))
    w2 = _read_array(source, (m, k))
    mlp = None
    if kind != KIND_LINEAR:
        mlp = MlpBlock(_read_array(source, (d, d)), _read_array(source, (d, d)), _read_array(source, (d,)))
    return ProjectedAmortizedParams(kind, w0, w1, w2, mlp)
