"""Oracle-equivalence suite run by ``selftest``.

Each check compares a fast path against its quadratic oracle at fixed seeds
and reports the worst relative error it saw next to its tolerance.
"""
from __future__ import annotations

import contextlib
import sys
from dataclasses import dataclass, field

import numpy as np

from fastrpe.cli import config
from fastrpe.cli.reports import to_json, write_report
from fastrpe.core.analysis import rpe_expressiveness_demo
from fastrpe.core.attention import (
    AttentionConfig, RpeBias, kernelized_attention, kernelized_attention_rpe_naive, project_qk, rpe_nka,
    rpe_nka_features,
)
from fastrpe.core.backward import rpe_nka_backward
from fastrpe.core.features import FeatureKind, apply_feature_map, sample_feature_map
from fastrpe.core.fft import dft_naive, fft, twiddle_fault
from fastrpe.core.tensor import RngState, gaussian_matrix
from fastrpe.core.toeplitz import ToeplitzKernel, toeplitz_matmul, toeplitz_matmul_naive
from fastrpe.shared.protocol import EXIT_CHECK_FAILED, EXIT_OK
from fastrpe.shared.utils import log, now_s

FFT_SIZES = (1, 2, 4, 8, 16, 64, 256)
TOEPLITZ_NS = (1, 2, 3, 7, 64, 257, 512)
NKA_GRID_NS = (1, 7, 64, 257, 1024)
NKA_GRID_MS = (4, 16)
NKA_GRID_DS = (4, 8)
FD_STEP = 1e-5


@dataclass
class CheckResult:
    name: str
    passed: bool
    max_error: float
    tolerance: float


@dataclass
class SelftestSummary:
    seed: int
    perturb_fft: bool
    passed: bool = True
    failed: list[str] = field(default_factory=list)
    checks: list[CheckResult] = field(default_factory=list)


def rel_error(approx, exact) -> float:
    """||approx - exact||_F / ||exact||_F, absolute when exact is zero."""
    approx, exact = np.asarray(approx), np.asarray(exact)
    scale = np.linalg.norm(exact)
    diff = np.linalg.norm(approx - exact)
    return float(diff / scale) if scale > 0 else float(diff)


def _result(name: str, errors, tolerance: float) -> CheckResult:
    worst = float(np.max(errors)) if errors else 0.0
    # NaN never passes
    return CheckResult(name, bool(worst <= tolerance), float(worst), tolerance)


def _attention_instance(rng: RngState, n: int, d: int, m: int, bias_scale: float = 0.5):
    q, k, v = (gaussian_matrix(rng, n, d) for _ in range(3))
    wq, wk, wv = (gaussian_matrix(rng, d, d) / np.sqrt(d) for _ in range(3))
    bias = RpeBias.gaussian(rng, n, bias_scale)
    spec = sample_feature_map(FeatureKind.PRF, m, d, rng)
    return q, k, v, wq, wk, wv, bias, spec


def check_fft_equivalence(rng: RngState) -> CheckResult:
    errors = []
    for size in FFT_SIZES:
        buf = rng.normal((size, 2)) + 1j * rng.normal((size, 2))
        spectrum = fft(buf)
        errors.append(rel_error(spectrum, dft_naive(buf)))
        errors.append(rel_error(fft(spectrum, inverse=True), buf))
    return _result("fft_equivalence", errors, 1e-9)


def check_toeplitz_fft_equivalence(rng: RngState) -> CheckResult:
    errors = []
    for idx, n in enumerate(TOEPLITZ_NS):
        sub = rng.child(idx)
        kernel = ToeplitzKernel(n, sub.normal(2 * n - 1))
        x = sub.normal((n, 3))
        errors.append(rel_error(toeplitz_matmul(kernel, x), toeplitz_matmul_naive(kernel, x)))
    return _result("toeplitz_fft_equivalence", errors, 1e-9)


def check_rpe_nka_equivalence(rng: RngState) -> CheckResult:
    errors = []
    for i, n in enumerate(NKA_GRID_NS):
        for j, m in enumerate(NKA_GRID_MS):
            for l, d in enumerate(NKA_GRID_DS):
                q, k, v, wq, wk, wv, bias, spec = _attention_instance(rng.child(i, j, l), n, d, m)
                for causal in (False, True):
                    cfg = AttentionConfig(normalize_qk=True, causal=causal)
                    fast = rpe_nka(q, k, v, wq, wk, wv, bias, spec, cfg)
                    phi_q, phi_k, vp, kernel = rpe_nka_features(q, k, v, wq, wk, wv, bias, spec, cfg)
                    errors.append(rel_error(fast, kernelized_attention_rpe_naive(phi_q, phi_k, vp, kernel)))
    return _result("rpe_nka_equivalence", errors, 1e-8)


def check_reduction_identity(rng: RngState) -> CheckResult:
    n, d, m = 64, 4, 16
    q, k, v, wq, wk, wv, _, spec = _attention_instance(rng, n, d, m)
    cfg = AttentionConfig(normalize_qk=False)
    with_rpe = rpe_nka(q, k, v, wq, wk, wv, RpeBias.zeros(n), spec, cfg)
    qp, kp, _ = project_qk(q, k, wq, wk, cfg, kernel_path=True)
    plain = kernelized_attention(apply_feature_map(spec, qp), apply_feature_map(spec, kp), v @ wv)
    return _result("reduction_identity", [rel_error(with_rpe, plain)], 1e-10)


def check_causal_locality(rng: RngState) -> CheckResult:
    n, d, m = 32, 4, 16
    q, k, v, wq, wk, wv, bias, spec = _attention_instance(rng, n, d, m)
    cfg = AttentionConfig(normalize_qk=True, causal=True)
    base = rpe_nka(q, k, v, wq, wk, wv, bias, spec, cfg)
    errors = []
    for t, i in enumerate((0, 5, n // 2, n - 2)):
        noise = rng.child(t)
        q2, k2, v2 = q.copy(), k.copy(), v.copy()
        for mat in (q2, k2, v2):
            mat[i + 1:] += noise.normal((n - i - 1, d))
        out = rpe_nka(q2, k2, v2, wq, wk, wv, bias, spec, cfg)
        errors.append(float(np.max(np.abs(out[:i + 1] - base[:i + 1]))))
    return _result("causal_locality", errors, 1e-12)


def _fd_gradient(loss, x: np.ndarray) -> np.ndarray:
    """Central differences of ``loss`` with respect to every entry of ``x``."""
    grad = np.empty_like(x)
    flat, out = x.reshape(-1), grad.reshape(-1)
    for idx in range(flat.size):
        keep = flat[idx]
        flat[idx] = keep + FD_STEP
        up = loss()
        flat[idx] = keep - FD_STEP
        down = loss()
        flat[idx] = keep
        out[idx] = (up - down) / (2.0 * FD_STEP)
    return grad


def gradient_errors(rng: RngState, causal: bool, n: int = 8, d: int = 4, m: int = 4) -> dict[str, float]:
    """Relative gap between analytic and finite-difference gradients per input block."""
    q, k, v, wq, wk, wv, bias, spec = _attention_instance(rng, n, d, m)
    cfg = AttentionConfig(normalize_qk=True, causal=causal)
    g = rng.normal((n, d))
    b = bias.b.copy()

    def loss():
        out = rpe_nka(q, k, v, wq, wk, wv, RpeBias(n, b, bias.mask), spec, cfg)
        return float(np.sum(g * out))

    grads = rpe_nka_backward(q, k, v, wq, wk, wv, bias, spec, cfg, g)
    return {
        "q": rel_error(grads.grad_q_input, _fd_gradient(loss, q)),
        "k": rel_error(grads.grad_k_input, _fd_gradient(loss, k)),
        "v": rel_error(grads.grad_v_input, _fd_gradient(loss, v)),
        "b": rel_error(grads.grad_b, _fd_gradient(loss, b)),
    }


def check_gradient(rng: RngState) -> CheckResult:
    errors = []
    for causal in (False, True):
        errors.extend(gradient_errors(rng.child(int(causal)), causal).values())
    return _result("gradient_check", errors, 1e-5)


def check_rank_demo(rng: RngState) -> CheckResult:
    result = rpe_expressiveness_demo(16, 4, rng)
    return CheckResult("rank_demo", result.exceeds, float(not result.exceeds), 0.0)


CHECKS = (
    check_fft_equivalence,
    check_toeplitz_fft_equivalence,
    check_rpe_nka_equivalence,
    check_reduction_identity,
    check_causal_locality,
    check_gradient,
    check_rank_demo,
)


def run_selftest(seed: int, perturb_fft: bool = False) -> SelftestSummary:
    summary = SelftestSummary(seed=seed, perturb_fft=perturb_fft)
    root = RngState(seed)
    guard = twiddle_fault() if perturb_fft else contextlib.nullcontext()
    with guard:
        for idx, check in enumerate(CHECKS):
            start = now_s()
            result = check(root.child(idx))
            summary.checks.append(result)
            status = "ok" if result.passed else "FAIL"
            log("SELFTEST", f"{result.name}: {status} max_error={result.max_error:.3e} "
                            f"tol={result.tolerance:.0e} ({now_s() - start:.2f}s)")
            if not result.passed:
                summary.failed.append(result.name)
    summary.passed = not summary.failed
    return summary


def cmd_selftest(args) -> int:
    summary = run_selftest(args.seed, perturb_fft=args.perturb_fft)
    text = to_json(summary)
    sys.stdout.write(text)
    out = config.resolve_out(args.out)
    if out is not None:
        write_report(out, text)
    if not summary.passed:
        log("SELFTEST", f"failed: {', '.join(summary.failed)}")
        return EXIT_CHECK_FAILED
    return EXIT_OK
