"""Uniform empirical measures and the closed-form 1-D Wasserstein distance.

An :class:`EmpiricalMeasure` places mass ``1/m`` on each of its ``m`` support
points. For two such measures of equal size projected to the line, the
optimal transport plan is the sorted matching of order statistics, which
gives the exact distance

    W_p(u, v) = ( (1/m) * sum_i |u_(i) - v_(i)|^p )^(1/p)

where ``u_(i)`` denotes the i-th smallest value. Everything else in the
package reduces to this formula plus geometry on directions and frames.

All types are immutable after construction and every operation is a pure
function of its inputs plus an explicitly passed random generator, so
concurrent use is safe; parallel callers should derive independent streams
with :func:`sliceot.seeding.child_seed`.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO, TextIO

import numpy as np

__all__ = [
    "ContractError",
    "Direction",
    "EmpiricalMeasure",
    "ProjectedSamples",
    "ProjectionFrame",
    "SUPPORTED_ORDERS",
    "UNIT_TOL",
    "ORTHO_TOL",
    "orthonormalize",
    "project",
    "sample_minibatch",
    "sample_sphere",
    "sample_sphere_batch",
    "wasserstein_1d",
    "wasserstein_1d_pow",
]

SUPPORTED_ORDERS = (1, 2)
UNIT_TOL = 1e-12
ORTHO_TOL = 1e-10
_NORM_FLOOR = 1e-30
_BINARY_MAGIC = b"EMSR"


class ContractError(ValueError):
    """An operation was called outside its documented preconditions."""


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ContractError(message)


def _frozen_array(values, dtype=np.float64) -> np.ndarray:
    arr = np.array(values, dtype=dtype, order="C")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class EmpiricalMeasure:
    """``m`` support points in R^d, each carrying probability mass 1/m.

    No weight vector is stored; every operation treats each point as mass
    1/m. Rows are the points.
    """

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = _frozen_array(self.points)
        _require(pts.ndim == 2, "points must be a 2-d array of shape (m, d)")
        _require(pts.shape[0] >= 1 and pts.shape[1] >= 1, "need m >= 1 and d >= 1")
        _require(bool(np.isfinite(pts).all()), "support points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def to_csv(self, sink: str | TextIO) -> None:
        """Write one comma-separated row per point, no header."""
        np.savetxt(sink, self.points, delimiter=",", fmt="%.17g")

    @classmethod
    def from_csv(cls, source: str | TextIO) -> "EmpiricalMeasure":
        pts = np.loadtxt(source, delimiter=",", ndmin=2, dtype=np.float64)
        return cls(pts)

    def to_binary(self, sink: BinaryIO) -> None:
        """Binary layout: magic "EMSR", u32 LE m, u32 LE d, m*d LE f64."""
        sink.write(struct.pack("<4sII", _BINARY_MAGIC, self.m, self.d))
        sink.write(np.ascontiguousarray(self.points, dtype="<f8").tobytes())

    @classmethod
    def from_binary(cls, source: BinaryIO) -> "EmpiricalMeasure":
        header = source.read(12)
        if len(header) < 12 or header[:4] != _BINARY_MAGIC:
            raise ValueError("not an EMSR measure file (bad magic or truncated header)")
        _, m, d = struct.unpack("<4sII", header)
        payload = source.read(8 * m * d)
        if len(payload) != 8 * m * d:
            raise ValueError(
                f"EMSR payload truncated: expected {8 * m * d} bytes, got {len(payload)}"
            )
        pts = np.frombuffer(payload, dtype="<f8").reshape(m, d)
        return cls(pts)


@dataclass(frozen=True)
class Direction:
    """A unit vector on the sphere S^{d-1}."""

    vec: np.ndarray

    def __post_init__(self) -> None:
        v = _frozen_array(self.vec)
        _require(v.ndim == 1 and v.size >= 1, "direction must be a 1-d vector")
        _require(bool(np.isfinite(v).all()), "direction entries must be finite")
        _require(
            abs(float(np.linalg.norm(v)) - 1.0) <= UNIT_TOL,
            "direction must have unit Euclidean norm",
        )
        object.__setattr__(self, "vec", v)

    @property
    def d(self) -> int:
        return self.vec.size


@dataclass(frozen=True)
class ProjectionFrame:
    """A d x k matrix with orthonormal columns (a point on the Stiefel set)."""

    cols: np.ndarray

    def __post_init__(self) -> None:
        u = _frozen_array(self.cols)
        _require(u.ndim == 2, "frame must be a 2-d array of shape (d, k)")
        d, k = u.shape
        _require(1 <= k <= d, "frame needs 1 <= k <= d")
        gram_err = float(np.abs(u.T @ u - np.eye(k)).max())
        _require(gram_err <= ORTHO_TOL, f"frame columns not orthonormal (|U'U - I| = {gram_err:.3e})")
        object.__setattr__(self, "cols", u)

    @property
    def d(self) -> int:
        return self.cols.shape[0]

    @property
    def k(self) -> int:
        return self.cols.shape[1]


def orthonormalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Thin QR with the diagonal of R forced nonnegative, making Q unique.

    Returns (Q, R). Raises ContractError when A is numerically rank
    deficient, since the Q factor is then arbitrary in the null directions.
    """
    a = np.asarray(a, dtype=np.float64)
    q, r = np.linalg.qr(a)
    diag = np.diagonal(r)
    scale = max(float(np.abs(a).max()), 1.0)
    _require(
        bool((np.abs(diag) > 1e-12 * scale).all()),
        "matrix is numerically rank deficient; cannot orthonormalize",
    )
    signs = np.where(diag < 0.0, -1.0, 1.0)
    return q * signs, r * signs[:, None]


@dataclass(frozen=True)
class ProjectedSamples:
    """Projections of a measure's support onto a line, plus their sort order.

    ``sort_ranks`` is the permutation of 0..m-1 that lists values in
    ascending order (stable, so ties keep input order).
    """

    values: np.ndarray
    sort_ranks: np.ndarray

    def __post_init__(self) -> None:
        vals = _frozen_array(self.values)
        ranks = _frozen_array(self.sort_ranks, dtype=np.intp)
        _require(vals.ndim == 1 and vals.size >= 1, "values must be a nonempty 1-d array")
        _require(bool(np.isfinite(vals).all()), "projected values must be finite")
        _require(ranks.shape == vals.shape, "sort_ranks must match values in length")
        _require(
            bool(np.array_equal(np.sort(ranks), np.arange(vals.size))),
            "sort_ranks must be a permutation of 0..m-1",
        )
        ordered = vals[ranks]
        _require(bool((np.diff(ordered) >= 0.0).all()), "sort_ranks must sort values ascending")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "sort_ranks", ranks)

    @property
    def m(self) -> int:
        return self.values.size

    @property
    def sorted_values(self) -> np.ndarray:
        return self.values[self.sort_ranks]


def project(mu: EmpiricalMeasure, theta: Direction) -> ProjectedSamples:
    """Push ``mu`` forward through x -> theta . x."""
    _require(theta.d == mu.d, f"dimension mismatch: measure is {mu.d}-d, direction is {theta.d}-d")
    values = mu.points @ theta.vec
    ranks = np.argsort(values, kind="stable")
    return ProjectedSamples(values, ranks)


def _check_order(p: int) -> None:
    _require(p in SUPPORTED_ORDERS, f"order p must be one of {SUPPORTED_ORDERS}, got {p!r}")


def wasserstein_1d_pow(u: ProjectedSamples, v: ProjectedSamples, p: int) -> float:
    """p-th power of the 1-D distance: (1/m) sum |u_(i) - v_(i)|^p."""
    _check_order(p)
    _require(
        u.m == v.m,
        "1-D transport needs equal sizes (unequal-mass transport is unsupported)",
    )
    diff = u.sorted_values - v.sorted_values
    if p == 1:
        return float(np.mean(np.abs(diff)))
    return float(np.mean(diff * diff))


def wasserstein_1d(u: ProjectedSamples, v: ProjectedSamples, p: int) -> float:
    """Closed-form 1-D Wasserstein distance between equal-size uniform samples."""
    s = wasserstein_1d_pow(u, v, p)
    return s if p == 1 else float(np.sqrt(s))


def sample_minibatch(mu: EmpiricalMeasure, m_batch: int, rng: np.random.Generator) -> EmpiricalMeasure:
    """Draw ``m_batch`` points i.i.d. uniformly with replacement from ``mu``."""
    _require(m_batch >= 1, "m_batch must be >= 1")
    idx = rng.integers(0, mu.m, size=m_batch)
    return EmpiricalMeasure(mu.points[idx])


def sample_sphere(d: int, rng: np.random.Generator) -> Direction:
    """Uniform direction on S^{d-1}: a normalized d-vector of standard normals."""
    _require(d >= 1, "dimension must be >= 1")
    while True:
        g = rng.standard_normal(d)
        norm = float(np.linalg.norm(g))
        if norm >= _NORM_FLOOR:
            return Direction(g / norm)


def sample_sphere_batch(d: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` uniform directions as rows of an (n, d) array.

    Consumes the generator stream exactly as ``n`` sequential
    :func:`sample_sphere` calls, so batched and sequential sampling agree
    bit for bit (outside the measure-zero renormalization event).
    """
    _require(d >= 1 and n >= 1, "need d >= 1 and n >= 1")
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    while bool((norms < _NORM_FLOOR).any()):
        bad = norms < _NORM_FLOOR
        g[bad] = rng.standard_normal((int(bad.sum()), d))
        norms = np.linalg.norm(g, axis=1)
    return g / norms[:, None]
