"""Synthetic 2-D distributions for desk-scale experiments, plus an IDX
image loader for optional small-image runs.

All generators are deterministic under their seed. Pixel data is scaled to
[-1, 1] so it matches a tanh-ranged generator output.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .measures import ContractError, EmpiricalMeasure
from .seeding import make_rng

__all__ = ["IdxParseError", "KINDS", "SyntheticSpec", "generate", "load_idx"]

KINDS = ("gaussian_ring", "two_moons", "swiss_roll_2d", "checkerboard")

_IDX3_MAGIC = 0x00000803


class IdxParseError(ValueError):
    """Malformed IDX file; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


@dataclass(frozen=True)
class SyntheticSpec:
    """Which distribution to draw, how many samples, and the seed.

    Only the fields the kind uses matter: gaussian_ring reads (n_modes,
    radius, sigma); two_moons and swiss_roll_2d read noise; checkerboard
    reads cells.
    """

    kind: str
    n_samples: int
    seed: int = 0
    n_modes: int = 8
    radius: float = 2.0
    sigma: float = 0.02
    noise: float = 0.05
    cells: int = 4

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ContractError(f"unknown synthetic kind {self.kind!r}")
        if self.n_samples < 1:
            raise ContractError("n_samples must be >= 1")
        if self.sigma < 0.0 or self.noise < 0.0:
            raise ContractError("sigma and noise must be >= 0")
        if self.n_modes < 1 or self.cells < 1:
            raise ContractError("n_modes and cells must be >= 1")
        if self.radius <= 0.0:
            raise ContractError("radius must be positive")


def _gaussian_ring(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(spec.n_modes) / spec.n_modes
    centers = spec.radius * np.stack([np.cos(angles), np.sin(angles)], axis=1)
    modes = rng.integers(0, spec.n_modes, size=spec.n_samples)
    return centers[modes] + spec.sigma * rng.standard_normal((spec.n_samples, 2))


def _two_moons(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    t = rng.uniform(0.0, np.pi, size=spec.n_samples)
    upper = rng.integers(0, 2, size=spec.n_samples).astype(bool)
    x = np.where(upper, np.cos(t), 1.0 - np.cos(t))
    y = np.where(upper, np.sin(t), 0.5 - np.sin(t))
    pts = np.stack([x, y], axis=1)
    return pts + spec.noise * rng.standard_normal(pts.shape)


def _swiss_roll_2d(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    t = rng.uniform(1.5 * np.pi, 4.5 * np.pi, size=spec.n_samples)
    pts = np.stack([t * np.cos(t), t * np.sin(t)], axis=1) / (4.5 * np.pi)
    return 2.0 * pts + spec.noise * rng.standard_normal(pts.shape)


def _checkerboard(spec: SyntheticSpec, rng: np.random.Generator) -> np.ndarray:
    # uniform over the dark squares of a cells x cells board on [-2, 2]^2
    n = spec.cells
    grid = np.indices((n, n)).reshape(2, -1).T
    dark = grid[(grid.sum(axis=1) % 2) == 0]
    cell = dark[rng.integers(0, len(dark), size=spec.n_samples)].astype(np.float64)
    offset = rng.uniform(0.0, 1.0, size=(spec.n_samples, 2))
    return (cell + offset) * (4.0 / n) - 2.0


_GENERATORS = {
    "gaussian_ring": _gaussian_ring,
    "two_moons": _two_moons,
    "swiss_roll_2d": _swiss_roll_2d,
    "checkerboard": _checkerboard,
}


def generate(spec: SyntheticSpec) -> EmpiricalMeasure:
    """Draw the distribution described by ``spec``; same spec, same points."""
    rng = make_rng(spec.seed)
    return EmpiricalMeasure(_GENERATORS[spec.kind](spec, rng))


def load_idx(path: str) -> EmpiricalMeasure:
    """Parse an IDX3 image file into rows of flattened pixels scaled to [-1, 1].

    Layout (big endian): u32 magic 0x00000803, u32 count, u32 rows,
    u32 cols, then count*rows*cols unsigned bytes. Scaling is x/127.5 - 1.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < 4:
        raise IdxParseError("file too short for magic", 0)
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != _IDX3_MAGIC:
        raise IdxParseError(f"bad magic 0x{magic:08x}, expected 0x{_IDX3_MAGIC:08x}", 0)
    if len(raw) < 16:
        raise IdxParseError("truncated header", len(raw))
    n, rows, cols = struct.unpack(">III", raw[4:16])
    expected = 16 + n * rows * cols
    if len(raw) < expected:
        raise IdxParseError(f"truncated pixel data: need {expected} bytes, have {len(raw)}", len(raw))
    pixels = np.frombuffer(raw[16:expected], dtype=np.uint8).reshape(n, rows * cols)
    return EmpiricalMeasure(pixels.astype(np.float64) / 127.5 - 1.0)
