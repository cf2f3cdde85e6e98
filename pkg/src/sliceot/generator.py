"""Small MLP push-forward generator mapping noise rows to data-space rows.

Hidden layers use leaky-relu with slope 0.2; the output layer is identity.
Parameters are immutable snapshots; training produces new snapshots.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .measures import ContractError, EmpiricalMeasure

__all__ = [
    "GeneratorParams",
    "LEAKY_SLOPE",
    "blocks_to_generator",
    "generator_backward",
    "generator_forward",
    "generator_forward_cached",
    "generator_to_blocks",
    "init_generator",
    "load_generator",
    "parameter_norm",
    "save_generator",
]

LEAKY_SLOPE = 0.2
_MAGIC = b"GMLP"


def _freeze(arr) -> np.ndarray:
    out = np.array(arr, dtype=np.float64, order="C")
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class GeneratorParams:
    """Dense layers as (weights, biases) pairs; weights are (fan_in, fan_out)."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    noise_dim: int

    def __post_init__(self) -> None:
        ws = tuple(_freeze(w) for w in self.weights)
        bs = tuple(_freeze(b) for b in self.biases)
        if len(ws) != len(bs) or not ws:
            raise ContractError("need one bias per weight matrix, at least one layer")
        fan_in = self.noise_dim
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.ndim != 1 or w.shape != (fan_in, b.size):
                raise ContractError(f"layer {i} shapes do not chain: {w.shape} after fan-in {fan_in}")
            fan_in = b.size
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    @property
    def out_dim(self) -> int:
        return self.biases[-1].size


def init_generator(
    noise_dim: int, out_dim: int, rng: np.random.Generator, hidden: int = 128, depth: int = 3
) -> GeneratorParams:
    """He-scaled random weights, zero biases; ``depth`` hidden layers of width ``hidden``."""
    dims = [noise_dim] + [hidden] * depth + [out_dim]
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return GeneratorParams(tuple(weights), tuple(biases), noise_dim)


def generator_forward_cached(phi: GeneratorParams, noise: np.ndarray) -> tuple[np.ndarray, list]:
    """Row-wise forward pass; the cache holds pre-activations for backprop."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.ndim != 2 or noise.shape[1] != phi.noise_dim:
        raise ContractError(f"noise must be (n, {phi.noise_dim})")
    cache = []
    h = noise
    last = phi.n_layers - 1
    for i, (w, b) in enumerate(zip(phi.weights, phi.biases)):
        a = h @ w + b
        cache.append((h, a))
        h = a if i == last else np.where(a > 0.0, a, LEAKY_SLOPE * a)
    return h, cache


def generator_forward(phi: GeneratorParams, noise: np.ndarray) -> EmpiricalMeasure:
    """Push a batch of noise rows through the network."""
    out, _ = generator_forward_cached(phi, noise)
    return EmpiricalMeasure(out)


def generator_backward(phi: GeneratorParams, cache: list, g_out: np.ndarray) -> dict[str, np.ndarray]:
    """Backprop an output cotangent to per-layer blocks ``layers.i.W`` / ``layers.i.b``."""
    grads: dict[str, np.ndarray] = {}
    g = np.asarray(g_out, dtype=np.float64)
    last = phi.n_layers - 1
    for i in range(last, -1, -1):
        h, a = cache[i]
        if i != last:
            g = g * np.where(a > 0.0, 1.0, LEAKY_SLOPE)
        grads[f"layers.{i}.W"] = h.T @ g
        grads[f"layers.{i}.b"] = g.sum(axis=0)
        if i > 0:
            g = g @ phi.weights[i].T
    return grads


def generator_to_blocks(phi: GeneratorParams) -> dict[str, np.ndarray]:
    blocks: dict[str, np.ndarray] = {}
    for i, (w, b) in enumerate(zip(phi.weights, phi.biases)):
        blocks[f"layers.{i}.W"] = w
        blocks[f"layers.{i}.b"] = b
    return blocks


def blocks_to_generator(blocks: dict[str, np.ndarray], noise_dim: int) -> GeneratorParams:
    n = len(blocks) // 2
    weights = tuple(blocks[f"layers.{i}.W"] for i in range(n))
    biases = tuple(blocks[f"layers.{i}.b"] for i in range(n))
    return GeneratorParams(weights, biases, noise_dim)


def parameter_norm(phi: GeneratorParams) -> float:
    total = sum(float(np.sum(w * w)) for w in phi.weights)
    total += sum(float(np.sum(b * b)) for b in phi.biases)
    return float(np.sqrt(total))


def save_generator(sink: BinaryIO, phi: GeneratorParams) -> None:
    """Layout: magic "GMLP", u32 noise_dim, u32 n_layers, per layer u32 in/out then f64 LE W, b."""
    sink.write(struct.pack("<4sII", _MAGIC, phi.noise_dim, phi.n_layers))
    for w, b in zip(phi.weights, phi.biases):
        sink.write(struct.pack("<II", w.shape[0], w.shape[1]))
        sink.write(np.ascontiguousarray(w, dtype="<f8").tobytes())
        sink.write(np.ascontiguousarray(b, dtype="<f8").tobytes())


def load_generator(source: BinaryIO) -> GeneratorParams:
    header = source.read(12)
    if len(header) < 12 or header[:4] != _MAGIC:
        raise ValueError("not a GMLP checkpoint (bad magic or truncated header)")
    _, noise_dim, n_layers = struct.unpack("<4sII", header)
    weights = []
    biases = []
    for _ in range(n_layers):
        dims = source.read(8)
        if len(dims) != 8:
            raise ValueError("GMLP checkpoint truncated")
        fan_in, fan_out = struct.unpack("<II", dims)
        raw_w = source.read(8 * fan_in * fan_out)
        raw_b = source.read(8 * fan_out)
        if len(raw_w) != 8 * fan_in * fan_out or len(raw_b) != 8 * fan_out:
            raise ValueError("GMLP checkpoint truncated")
        weights.append(np.frombuffer(raw_w, dtype="<f8").reshape(fan_in, fan_out))
        biases.append(np.frombuffer(raw_b, dtype="<f8"))
    return GeneratorParams(tuple(weights), tuple(biases), noise_dim)
