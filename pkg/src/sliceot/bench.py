"""Per-iteration timing and peak-allocation sweep across training losses.

Each grid point times ``inner_iters`` full outer iterations of a fresh
training run (median of >= 5 repetitions after >= 3 discarded warmup
iterations, monotonic clock). Peak allocation is taken from a separate
traced pass so instrumentation never pollutes the timings. Grid points run
strictly sequentially; keep the machine otherwise idle, since only
orderings and fitted slopes are meaningful, not absolute numbers.
"""

from __future__ import annotations

import csv
import statistics
import time
import tracemalloc
from dataclasses import dataclass
from typing import Iterable, TextIO

from .datasets import SyntheticSpec, generate
from .measures import ContractError, EmpiricalMeasure
from .seeding import child_seed, make_rng
from .trainer import TrainConfig, TrainingRun

__all__ = ["BenchPoint", "BenchRecord", "bench_sweep", "check_orderings", "write_csv"]

CSV_HEADER = ("method", "param", "m", "d", "iters_per_sec", "peak_bytes", "seed")

_DEFAULT_ETA1 = 2e-4
_DEFAULT_ETA2 = 1e-2


@dataclass(frozen=True)
class BenchPoint:
    """One grid entry: a loss kind plus its varying knob."""

    loss_kind: str
    L: int | None = None
    T2: int | None = None
    k_sub: int | None = None

    def label(self) -> str:
        if self.L is not None:
            return f"L={self.L}"
        if self.T2 is not None:
            return f"T2={self.T2}"
        if self.k_sub is not None:
            return f"k={self.k_sub}"
        return "-"


@dataclass(frozen=True)
class BenchRecord:
    method: str
    param: str
    m: int
    d: int
    iters_per_sec: float
    peak_bytes: int | None
    seed: int

    def __post_init__(self) -> None:
        if not self.iters_per_sec > 0.0:
            raise ContractError("timings must be positive")


def _config_for(point: BenchPoint, m: int, seed: int) -> TrainConfig:
    kind = point.loss_kind
    eta2 = None if kind == "sw" else _DEFAULT_ETA2
    return TrainConfig(
        loss_kind=kind,
        m=m,
        T1=1,
        eta1=_DEFAULT_ETA1,
        T2=point.T2,
        L=point.L,
        eta2=eta2,
        k_sub=point.k_sub,
        seed=seed,
    )


def _bench_data(m: int, d: int, seed: int) -> EmpiricalMeasure:
    n = max(8 * m, 1024)
    if d == 2:
        return generate(SyntheticSpec("gaussian_ring", n_samples=n, seed=seed))
    rng = make_rng(seed)
    return EmpiricalMeasure(rng.standard_normal((n, d)))


def bench_sweep(
    points: Iterable[BenchPoint],
    m: int = 256,
    d: int = 2,
    reps: int = 5,
    warmup: int = 3,
    inner_iters: int = 10,
    seed: int = 0,
    measure_memory: bool = True,
) -> list[BenchRecord]:
    """Time every grid point; returns one record per point, in grid order."""
    if reps < 5:
        raise ContractError("need at least 5 timed repetitions")
    if warmup < 3:
        raise ContractError("need at least 3 warmup iterations")
    data = _bench_data(m, d, child_seed(seed, 0))
    records = []
    for idx, point in enumerate(points):
        cfg = _config_for(point, m, child_seed(seed, idx + 1))
        run = TrainingRun(data, cfg)
        for _ in range(warmup):
            run.step()
        times = []
        for _ in range(reps):
            t0 = time.perf_counter()
            for _ in range(inner_iters):
                run.step()
            times.append(time.perf_counter() - t0)
        median = statistics.median(times)
        peak = None
        if measure_memory:
            traced = TrainingRun(data, cfg)
            tracemalloc.start()
            try:
                for _ in range(max(1, warmup)):
                    traced.step()
                tracemalloc.reset_peak()
                for _ in range(inner_iters):
                    traced.step()
                peak = tracemalloc.get_traced_memory()[1]
            finally:
                tracemalloc.stop()
        records.append(
            BenchRecord(
                method=point.loss_kind,
                param=point.label(),
                m=m,
                d=d,
                iters_per_sec=inner_iters / median,
                peak_bytes=peak,
                seed=cfg.seed,
            )
        )
    return records


def _rate(records: list[BenchRecord], method: str, param: str) -> float | None:
    for rec in records:
        if rec.method == method and rec.param == param:
            return rec.iters_per_sec
    return None


def check_orderings(records: list[BenchRecord]) -> list[str]:
    """Violations of the expected cost orderings present in the record set.

    More work per iteration must mean fewer iterations per second: the sw
    rate decreases with L, the max_sw rate with T2, and la_sw runs faster
    than both max_sw at T2=10 and sw at L=100.
    """
    problems = []
    for method, key in (("sw", "L"), ("max_sw", "T2")):
        mine = sorted(
            (int(r.param.split("=")[1]), r.iters_per_sec)
            for r in records
            if r.method == method and r.param.startswith(f"{key}=")
        )
        for (lo_knob, lo_rate), (hi_knob, hi_rate) in zip(mine, mine[1:]):
            if not hi_rate < lo_rate:
                problems.append(
                    f"{method} rate not decreasing: {key}={lo_knob} gives {lo_rate:.2f}/s, "
                    f"{key}={hi_knob} gives {hi_rate:.2f}/s"
                )
    la = _rate(records, "la_sw", "-")
    for other, param in (("max_sw", "T2=10"), ("sw", "L=100")):
        rate = _rate(records, other, param)
        if la is not None and rate is not None and not la > rate:
            problems.append(f"la_sw ({la:.2f}/s) not faster than {other} {param} ({rate:.2f}/s)")
    return problems


def write_csv(records: list[BenchRecord], sink: TextIO) -> None:
    writer = csv.writer(sink)
    writer.writerow(CSV_HEADER)
    for rec in records:
        writer.writerow(
            [
                rec.method,
                rec.param,
                rec.m,
                rec.d,
                f"{rec.iters_per_sec:.6g}",
                "unavailable" if rec.peak_bytes is None else rec.peak_bytes,
                rec.seed,
            ]
        )
