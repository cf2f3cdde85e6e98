"""Command-line front end.

Subcommands: distance, train, gradcheck, bench, oracle. Configuration is a
plain text file with one ``key = value`` per line and ``#`` comments;
unknown keys are rejected before any computation starts. All randomness
flows from --seed through the package's seed splitting.

Exit codes: 0 success, 1 check failure, 2 configuration error, 3 numerical
failure. Timing sidecar files (run.timing.jsonl, timing.json) are the only
outputs that vary between same-seed runs; everything else is byte-stable.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from . import amortized as am
from .bench import BenchPoint, bench_sweep, check_orderings, write_csv
from .datasets import SyntheticSpec, generate
from .generator import save_generator
from .grad import gradcheck_suite
from .lowerbound import lower_bound_suite
from .measures import ContractError, EmpiricalMeasure
from .oracles import exact_wasserstein
from .seeding import child_seed, make_rng
from .slicers import SliceOptConfig, max_sw, prw, sw_estimate
from .trainer import TrainConfig, TrainingRun

__all__ = ["main"]

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_CONFIG = 2
EXIT_NUMERIC = 3

logger = logging.getLogger("sliceot")

_REQUIRED = object()


class ConfigError(Exception):
    pass


class NumericalError(Exception):
    pass


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split(",") if tok.strip()]


def _strs(text: str) -> list[str]:
    return [tok.strip() for tok in text.split(",") if tok.strip()]


def parse_config(path: str | None, schema: dict) -> dict:
    """Read ``key = value`` lines, validate against the schema, fill defaults."""
    values: dict = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                lines = fh.readlines()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        for lineno, line in enumerate(lines, start=1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {text!r}")
            key, raw = (part.strip() for part in text.split("=", 1))
            if key not in schema:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            parser, _ = schema[key]
            try:
                values[key] = parser(raw)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    for key, (_, default) in schema.items():
        if key in values:
            continue
        if default is _REQUIRED:
            raise ConfigError(f"missing required config key {key!r}")
        values[key] = default
    return values


def _atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _atomic_write_binary(path: str, writer) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        writer(fh)
    os.replace(tmp, path)


def _json_line(obj) -> str:
    return json.dumps(obj, sort_keys=True)


def _load_measure(path: str) -> EmpiricalMeasure:
    if not os.path.exists(path):
        raise ConfigError(f"input measure file does not exist: {path}")
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == b"EMSR":
        with open(path, "rb") as fh:
            return EmpiricalMeasure.from_binary(fh)
    return EmpiricalMeasure.from_csv(path)


def _spec_from_keys(cfg: dict, prefix: str, seed: int) -> SyntheticSpec:
    return SyntheticSpec(
        kind=cfg[f"{prefix}_kind"],
        n_samples=cfg[f"{prefix}_samples"],
        seed=seed,
        n_modes=cfg[f"{prefix}_modes"],
        radius=cfg[f"{prefix}_radius"],
        sigma=cfg[f"{prefix}_sigma"],
        noise=cfg[f"{prefix}_noise"],
        cells=cfg[f"{prefix}_cells"],
    )


def _synthetic_keys(prefix: str, kind_default=None) -> dict:
    return {
        f"{prefix}_kind": (str, kind_default if kind_default else _REQUIRED),
        f"{prefix}_samples": (int, 512),
        f"{prefix}_modes": (int, 8),
        f"{prefix}_radius": (float, 2.0),
        f"{prefix}_sigma": (float, 0.02),
        f"{prefix}_noise": (float, 0.05),
        f"{prefix}_cells": (int, 4),
    }


# ---------------------------------------------------------------------------
# distance

_DISTANCE_SCHEMA = {
    "method": (str, None),
    "p": (int, 2),
    "projections": (int, 100),
    "slice_iters": (int, 100),
    "slice_lr": (float, 0.01),
    "k_sub": (int, 2),
    **{k: (t, None if k.endswith("_kind") else d) for k, (t, d) in _synthetic_keys("x").items()},
    **{k: (t, None if k.endswith("_kind") else d) for k, (t, d) in _synthetic_keys("y").items()},
}


def cmd_distance(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _DISTANCE_SCHEMA)
    method = args.method or cfg["method"]
    if method not in ("sw", "max_sw", "prw", "exact"):
        raise ConfigError(f"method must be one of sw/max_sw/prw/exact, got {method!r}")

    if args.x is not None and args.y is not None:
        x, y = _load_measure(args.x), _load_measure(args.y)
        x_desc, y_desc = args.x, args.y
    elif cfg["x_kind"] is not None and cfg["y_kind"] is not None:
        x = generate(_spec_from_keys(cfg, "x", child_seed(args.seed, 10)))
        y = generate(_spec_from_keys(cfg, "y", child_seed(args.seed, 11)))
        x_desc, y_desc = f"synthetic:{cfg['x_kind']}", f"synthetic:{cfg['y_kind']}"
    else:
        raise ConfigError("provide two measure paths or x_kind/y_kind synthetic specs")

    p = cfg["p"]
    meta: dict = {"method": method, "p": p, "seed": args.seed, "x": x_desc, "y": y_desc}
    if method == "sw":
        value = sw_estimate(x, y, cfg["projections"], p, make_rng(child_seed(args.seed, 0)))
        meta["projections"] = cfg["projections"]
    elif method == "exact":
        value = exact_wasserstein(x, y, p)
    else:
        opt = SliceOptConfig(
            max_iters=cfg["slice_iters"],
            learning_rate=cfg["slice_lr"],
            seed=child_seed(args.seed, 0),
        )
        meta["slice_iters"] = cfg["slice_iters"]
        meta["slice_lr"] = cfg["slice_lr"]
        if method == "max_sw":
            value, theta = max_sw(x, y, opt, p)
            meta["theta"] = list(theta.vec)
        else:
            value, frame = prw(x, y, cfg["k_sub"], opt, p)
            meta["k_sub"] = cfg["k_sub"]
            meta["frame"] = [list(col) for col in frame.cols.T]
    if not np.isfinite(value):
        raise NumericalError("distance value is not finite")
    meta["value"] = float(value)
    print(_json_line(meta))
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

_TRAIN_SCHEMA = {
    "loss": (str, _REQUIRED),
    "m": (int, 128),
    "k_batches": (int, 1),
    "t1": (int, _REQUIRED),
    "t2": (int, None),
    "projections": (int, None),
    "eta1": (float, 2e-4),
    "eta2": (float, None),
    "p": (int, 2),
    "k_sub": (int, None),
    "detach_slice": (_bool, False),
    "warm_start_slices": (_bool, False),
    "noise_dim": (int, 16),
    "gen_hidden": (int, 128),
    "gen_depth": (int, 3),
    "eval_every": (int, 0),
    "eval_samples": (int, 512),
    "checkpoint_every": (int, 0),
    "holdout_samples": (int, 512),
    **_synthetic_keys("data", kind_default="gaussian_ring"),
}


def _train_config(cfg: dict, seed: int) -> TrainConfig:
    loss = cfg["loss"]
    t2 = cfg["t2"]
    eta2 = cfg["eta2"]
    L = cfg["projections"]
    k_sub = cfg["k_sub"]
    if loss in ("max_sw", "prw") and t2 is None:
        t2 = 10
    if loss != "sw" and eta2 is None:
        eta2 = 0.01
    if loss == "sw" and L is None:
        L = 100
    if loss in ("prw", "a_prw") and k_sub is None:
        k_sub = 2
    return TrainConfig(
        loss_kind=loss,
        m=cfg["m"],
        T1=cfg["t1"],
        eta1=cfg["eta1"],
        k_batches=cfg["k_batches"],
        T2=t2,
        L=L,
        eta2=eta2,
        p=cfg["p"],
        k_sub=k_sub,
        seed=child_seed(seed, 102),
        detach_slice=cfg["detach_slice"],
        warm_start_slices=cfg["warm_start_slices"],
        noise_dim=cfg["noise_dim"],
        gen_hidden=cfg["gen_hidden"],
        gen_depth=cfg["gen_depth"],
        eval_every=cfg["eval_every"],
        eval_samples=cfg["eval_samples"],
    )


def _write_checkpoint(out: str, tag: str, run: TrainingRun) -> None:
    _atomic_write_binary(os.path.join(out, f"generator_{tag}.bin"), lambda fh: save_generator(fh, run.phi))
    if run.psi is not None:
        if isinstance(run.psi, am.ProjectedAmortizedParams):
            _atomic_write_binary(
                os.path.join(out, f"amortized_{tag}.bin"), lambda fh: am.save_projected(fh, run.psi)
            )
        else:
            _atomic_write_binary(
                os.path.join(out, f"amortized_{tag}.bin"), lambda fh: am.save_amortized(fh, run.psi)
            )


def cmd_train(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _TRAIN_SCHEMA)
    out = args.out
    os.makedirs(out, exist_ok=True)
    data = generate(_spec_from_keys(cfg, "data", child_seed(args.seed, 100)))
    holdout_spec = SyntheticSpec(
        kind=cfg["data_kind"],
        n_samples=cfg["holdout_samples"],
        seed=child_seed(args.seed, 101),
        n_modes=cfg["data_modes"],
        radius=cfg["data_radius"],
        sigma=cfg["data_sigma"],
        noise=cfg["data_noise"],
        cells=cfg["data_cells"],
    )
    holdout = generate(holdout_spec)
    tcfg = _train_config(cfg, args.seed)

    run = TrainingRun(data, tcfg, holdout)
    every = cfg["checkpoint_every"]
    callback = None
    if every > 0:
        def callback(it: int, current: TrainingRun) -> None:
            if (it + 1) % every == 0:
                _write_checkpoint(out, f"{it + 1:06d}", current)

    result = run.train(callback)

    log_lines = [_json_line(rec.log_fields()) for rec in result.records]
    _atomic_write_text(os.path.join(out, "run.log.jsonl"), "".join(line + "\n" for line in log_lines))
    timing_lines = [_json_line(rec.timing_fields()) for rec in result.records]
    _atomic_write_text(
        os.path.join(out, "run.timing.jsonl"), "".join(line + "\n" for line in timing_lines)
    )

    summary = {
        "loss_kind": tcfg.loss_kind,
        "seed": args.seed,
        "iterations": len(result.records),
        "final_exact_w2": result.final_exact_w2,
        "failed": result.failed,
        "counters": result.counters,
    }
    _atomic_write_text(os.path.join(out, "summary.json"), _json_line(summary) + "\n")
    _atomic_write_text(os.path.join(out, "timing.json"), _json_line({"seconds": result.seconds}) + "\n")

    manifest = {
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in vars(tcfg).items()},
        "seed": args.seed,
        "iteration": len(result.records),
    }
    _atomic_write_text(os.path.join(out, "manifest.json"), _json_line(manifest) + "\n")
    _write_checkpoint(out, "final", run)

    print(_json_line(summary))
    return EXIT_NUMERIC if result.failed else EXIT_OK


# ---------------------------------------------------------------------------
# gradcheck / bench / oracle suites

_GRADCHECK_SCHEMA = {
    "instances": (int, 20),
    "tol": (float, 1e-4),
    "step": (float, 1e-6),
}


def cmd_gradcheck(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _GRADCHECK_SCHEMA)
    os.makedirs(args.out, exist_ok=True)
    records = gradcheck_suite(cfg["instances"], cfg["tol"], cfg["step"], seed=args.seed)
    _atomic_write_text(
        os.path.join(args.out, "fd_report.jsonl"),
        "".join(_json_line(rec) + "\n" for rec in records),
    )
    failures = [rec for rec in records if not rec["pass"]]
    for rec in failures:
        logger.warning("gradient check failed: %s", rec)
    print(_json_line({"checks": len(records), "failures": len(failures)}))
    return EXIT_CHECK_FAILED if failures else EXIT_OK


_BENCH_SCHEMA = {
    "m": (int, 256),
    "d": (int, 2),
    "l_values": (_ints, [1, 100, 1000]),
    "t2_values": (_ints, [1, 10, 100]),
    "include_amortized": (_bool, True),
    "reps": (int, 5),
    "warmup": (int, 3),
    "inner_iters": (int, 10),
    "memory": (_bool, True),
}


def cmd_bench(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _BENCH_SCHEMA)
    os.makedirs(args.out, exist_ok=True)
    points = [BenchPoint("sw", L=l) for l in cfg["l_values"]]
    points += [BenchPoint("max_sw", T2=t) for t in cfg["t2_values"]]
    if cfg["include_amortized"]:
        points.append(BenchPoint("la_sw"))
    records = bench_sweep(
        points,
        m=cfg["m"],
        d=cfg["d"],
        reps=cfg["reps"],
        warmup=cfg["warmup"],
        inner_iters=cfg["inner_iters"],
        seed=args.seed,
        measure_memory=cfg["memory"],
    )
    csv_path = os.path.join(args.out, "bench.csv")
    tmp = csv_path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        write_csv(records, fh)
    os.replace(tmp, csv_path)
    problems = check_orderings(records)
    for problem in problems:
        logger.warning("bench ordering violated: %s", problem)
    print(_json_line({"points": len(records), "ordering_violations": len(problems)}))
    return EXIT_CHECK_FAILED if problems else EXIT_OK


_ORACLE_SCHEMA = {
    "instances": (int, 20),
    "pairs": (int, 200),
    "angles": (int, 10_000),
    "train_iters": (int, 300),
    "slice_lr": (float, 0.01),
    "kinds": (_strs, list(am.KINDS)),
    "p": (int, 2),
}


def cmd_oracle(args: argparse.Namespace) -> int:
    cfg = parse_config(args.config, _ORACLE_SCHEMA)
    os.makedirs(args.out, exist_ok=True)
    for kind in cfg["kinds"]:
        if kind not in am.KINDS:
            raise ConfigError(f"unknown amortized kind {kind!r}")
    records = lower_bound_suite(
        n_instances=cfg["instances"],
        kinds=tuple(cfg["kinds"]),
        n_pairs=cfg["pairs"],
        n_angles=cfg["angles"],
        train_iters=cfg["train_iters"],
        eta=cfg["slice_lr"],
        seed=args.seed,
        p=cfg["p"],
    )
    _atomic_write_text(
        os.path.join(args.out, "oracle.jsonl"),
        "".join(_json_line(rec) + "\n" for rec in records),
    )
    failures = [rec for rec in records if not rec["pass"]]
    for rec in failures:
        logger.warning("lower-bound check failed: %s", rec)
    print(_json_line({"checks": len(records), "failures": len(failures)}))
    return EXIT_CHECK_FAILED if failures else EXIT_OK


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sliceot", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", default=None, help="key = value config file")
        p.add_argument("--seed", type=int, default=0, help="master seed (u64)")
        p.add_argument("--out", default="sliceot_out", help="output directory")
        p.add_argument("--quiet", action="store_true", help="suppress informational logging")

    p_dist = sub.add_parser("distance", help="distance between two measures")
    p_dist.add_argument("x", nargs="?", default=None, help="first measure (CSV or EMSR binary)")
    p_dist.add_argument("y", nargs="?", default=None, help="second measure")
    p_dist.add_argument("--method", default=None, choices=("sw", "max_sw", "prw", "exact"))
    common(p_dist)
    p_dist.set_defaults(func=cmd_distance)

    p_train = sub.add_parser("train", help="train a generator against a synthetic dataset")
    common(p_train)
    p_train.set_defaults(func=cmd_train)

    p_grad = sub.add_parser("gradcheck", help="finite-difference gradient verification suite")
    common(p_grad)
    p_grad.set_defaults(func=cmd_gradcheck)

    p_bench = sub.add_parser("bench", help="per-iteration timing sweep")
    common(p_bench)
    p_bench.set_defaults(func=cmd_bench)

    p_oracle = sub.add_parser("oracle", help="trained objective vs grid oracle lower-bound suite")
    common(p_oracle)
    p_oracle.set_defaults(func=cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.ERROR if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ContractError, FileNotFoundError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, am.DegenerateDirectionError, am.DegenerateFrameError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
