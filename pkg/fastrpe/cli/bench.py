"""Forward-pass timing of the attention variants over a (variant, n, m) grid."""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from fastrpe.cli import config
from fastrpe.cli.reports import bench_to_csv, csv_to_rows, to_json, write_report
from fastrpe.core.attention import (
    AttentionConfig, RpeBias, kernelized_attention, kernelized_attention_rpe_naive, project_qk, rpe_nka,
    rpe_nka_features, softmax_attention,
)
from fastrpe.core.features import FeatureKind, FeatureMapSpec, apply_feature_map, sample_feature_map
from fastrpe.core.tensor import Mat, RngState, gaussian_matrix
from fastrpe.shared.errors import PreconditionError
from fastrpe.shared.protocol import (
    BENCH_FIELDS, EXIT_OK, VARIANT_KERNELIZED, VARIANT_RPE_NAIVE, VARIANT_RPE_NKA, VARIANT_SOFTMAX, VARIANTS,
)
from fastrpe.shared.utils import log, now_s

DEFAULT_NS = (1024, 2048, 4096, 8192, 16384)
DEFAULT_MS = (16, 64, 256)
DEFAULT_D = 64
DEFAULT_VARIANTS = (VARIANT_SOFTMAX, VARIANT_RPE_NKA)
QUADRATIC = (VARIANT_SOFTMAX, VARIANT_RPE_NAIVE)


@dataclass
class BenchRecord:
    variant: str
    n: int
    m: int
    d: int
    repeats: int
    median_seconds: float
    mad_seconds: float

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise PreconditionError(f"unknown variant {self.variant!r}")
        if self.repeats < 3:
            raise PreconditionError(f"need at least 3 repeats, got {self.repeats}")
        if not self.median_seconds > 0:
            raise PreconditionError(f"median must be positive, got {self.median_seconds}")


@dataclass
class BenchInputs:
    q: Mat
    k: Mat
    v: Mat
    wq: Mat
    wk: Mat
    wv: Mat
    bias: RpeBias
    spec: FeatureMapSpec


@dataclass
class BenchResult:
    records: list[BenchRecord] = field(default_factory=list)
    skipped: list[dict] = field(default_factory=list)


def make_inputs(n: int, m: int, d: int, rng: RngState, float32: bool = False) -> BenchInputs:
    """Synthetic Gaussian inputs and a sampled PRF map, all drawn before any timing."""
    dtype = np.float32 if float32 else np.float64
    q, k, v = (gaussian_matrix(rng, n, d).astype(dtype) for _ in range(3))
    wq, wk, wv = ((gaussian_matrix(rng, d, d) / np.sqrt(d)).astype(dtype) for _ in range(3))
    bias = RpeBias.gaussian(rng, n)
    spec = sample_feature_map(FeatureKind.PRF, m, d, rng)
    return BenchInputs(q, k, v, wq, wk, wv, bias, spec)


def forward_fn(variant: str, x: BenchInputs) -> Callable[[], Mat]:
    cfg = AttentionConfig(normalize_qk=True, denom_guard=config.DENOM_GUARD_DEFAULT)
    if variant == VARIANT_SOFTMAX:
        return lambda: softmax_attention(x.q, x.k, x.v, x.wq, x.wk, x.wv, None, AttentionConfig())
    if variant == VARIANT_KERNELIZED:
        def run():
            qp, kp, _ = project_qk(x.q, x.k, x.wq, x.wk, cfg, kernel_path=True)
            return kernelized_attention(apply_feature_map(x.spec, qp), apply_feature_map(x.spec, kp),
                                        x.v @ x.wv, cfg.denom_guard)
        return run
    if variant == VARIANT_RPE_NKA:
        return lambda: rpe_nka(x.q, x.k, x.v, x.wq, x.wk, x.wv, x.bias, x.spec, cfg)
    if variant == VARIANT_RPE_NAIVE:
        def run():
            phi_q, phi_k, vp, kernel = rpe_nka_features(x.q, x.k, x.v, x.wq, x.wk, x.wv, x.bias, x.spec, cfg)
            return kernelized_attention_rpe_naive(phi_q, phi_k, vp, kernel, cfg.denom_guard)
        return run
    raise PreconditionError(f"unknown variant {variant!r}")


def time_fn(fn: Callable[[], object], repeats: int, warmup: int) -> tuple[float, float]:
    """Median and median absolute deviation of ``repeats`` timed calls."""
    for _ in range(warmup):
        fn()
    times = np.empty(repeats)
    for i in range(repeats):
        start = now_s()
        fn()
        times[i] = now_s() - start
    median = float(np.median(times))
    return median, float(np.median(np.abs(times - median)))


def run_bench(variants, ns, ms, d: int, repeats: int, warmup: int, seed: int, float32: bool = False,
              max_quadratic_n: int = DEFAULT_NS[-1]) -> BenchResult:
    if repeats < 3:
        raise PreconditionError(f"need at least 3 repeats, got {repeats}")
    for n in ns:
        if n < 1:
            raise PreconditionError(f"lengths must be positive, got {n}")
    result = BenchResult()
    for variant in variants:
        if variant not in VARIANTS:
            raise PreconditionError(f"unknown variant {variant!r}, choose from {', '.join(VARIANTS)}")
        for m in ms:
            for n in sorted(ns):
                cell = {"variant": variant, "n": n, "m": m, "d": d}
                if variant in QUADRATIC and n > max_quadratic_n:
                    log("BENCH", f"skip {variant} n={n} m={m}: above --max-quadratic-n {max_quadratic_n}")
                    result.skipped.append({**cell, "reason": "max_quadratic_n"})
                    continue
                try:
                    inputs = make_inputs(n, m, d, RngState(seed).child(n, m), float32)
                    median, mad = time_fn(forward_fn(variant, inputs), repeats, warmup)
                except MemoryError:
                    log("BENCH", f"skip {variant} n={n} m={m}: out of memory")
                    result.skipped.append({**cell, "reason": "out_of_memory"})
                    continue
                record = BenchRecord(variant, n, m, d, repeats, median, mad)
                log("BENCH", f"{variant} n={n} m={m} d={d} median={median * 1e3:.2f}ms mad={mad * 1e3:.2f}ms")
                result.records.append(record)
    return result


def doubling_ratios(records, variant: str, m: int | None = None) -> list[float]:
    """time(2n) / time(n) for every consecutive doubling present in ``records``."""
    times = {r.n: r.median_seconds for r in records if r.variant == variant and (m is None or r.m == m)}
    return [times[2 * n] / times[n] for n in sorted(times) if 2 * n in times]


def bench_from_csv(text: str) -> list[BenchRecord]:
    return [BenchRecord(**row) for row in csv_to_rows(text, BENCH_FIELDS)]


def cmd_bench(args) -> int:
    result = run_bench(
        variants=args.variant,
        ns=args.n,
        ms=args.m,
        d=args.d,
        repeats=args.repeats,
        warmup=args.warmup,
        seed=args.seed,
        float32=args.float32,
        max_quadratic_n=args.max_quadratic_n,
    )
    for variant in dict.fromkeys(r.variant for r in result.records):
        for m in dict.fromkeys(r.m for r in result.records if r.variant == variant):
            ratios = doubling_ratios(result.records, variant, m)
            if ratios:
                log("BENCH", f"{variant} m={m} mean doubling ratio {np.mean(ratios):.2f}")
    if args.json:
        text = to_json({"records": [r.__dict__ for r in result.records], "skipped": result.skipped})
    else:
        text = bench_to_csv(result.records)
    sys.stdout.write(text)
    out = config.resolve_out(args.out)
    if out is not None:
        write_report(out, text)
    return EXIT_OK
