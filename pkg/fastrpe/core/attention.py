"""Softmax, kernelized and FFT-accelerated RPE attention.

All variants take single-head inputs; ``multihead_rpe_nka`` is a loop over
independent heads with their own bias.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from fastrpe.core.features import FeatureMapSpec, apply_feature_map
from fastrpe.core.tensor import Mat, RngState, as_mat, matmul, row_l2_normalize
from fastrpe.core.toeplitz import ToeplitzKernel, causal_mask, circulant_spectrum, toeplitz_matmul
from fastrpe.shared.errors import DegenerateRowError, PreconditionError, ShapeError
from fastrpe.shared.protocol import DENOM_GUARD, EXP_LIMIT

# logits per softmax block
_SCORE_BLOCK_ELEMS = 1 << 22


class Temperature(str, enum.Enum):
    SOFTMAX_SCALED = "softmax_scaled"  # 1/sqrt(d) inside softmax logits
    KERNEL_MATCHED = "kernel_matched"  # q, k scaled by d**-0.25 on every path
    NONE = "none"


@dataclass(frozen=True)
class AttentionConfig:
    normalize_qk: bool = False
    causal: bool = False
    temperature: Temperature = Temperature.SOFTMAX_SCALED
    denom_guard: float = DENOM_GUARD

    def __post_init__(self):
        object.__setattr__(self, "temperature", Temperature(self.temperature))
        if not self.denom_guard > 0:
            raise PreconditionError(f"denom_guard must be positive, got {self.denom_guard}")


@dataclass(frozen=True, eq=False)
class RpeBias:
    """b_k for offsets k = j - i in [-(n-1), n-1], stored at index k + n - 1.

    Masked offsets stand for b_k = -inf; their stored value is 0 and ignored.
    """
    n: int
    b: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.b, dtype=np.float64).reshape(-1).copy()
        mask = np.asarray(self.mask, dtype=bool).reshape(-1).copy()
        if self.n < 1:
            raise DegenerateRowError("bias needs n >= 1")
        if b.shape[0] != 2 * self.n - 1 or mask.shape != b.shape:
            raise ShapeError(f"bias for n={self.n} needs {2 * self.n - 1} offsets, got {b.shape[0]}")
        b[mask] = 0.0
        if not np.all(np.isfinite(b)):
            raise ShapeError("unmasked bias entries must be finite")
        if b.size and b.max() > EXP_LIMIT:
            raise ShapeError(f"bias entry {b.max():.3g} overflows exp")
        b.setflags(write=False)
        mask.setflags(write=False)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "mask", mask)

    @classmethod
    def from_values(cls, values) -> "RpeBias":
        values = np.asarray(values, dtype=np.float64).reshape(-1)
        if values.shape[0] % 2 == 0:
            raise ShapeError(f"bias needs odd length 2n-1, got {values.shape[0]}")
        mask = np.isneginf(values)
        return cls((values.shape[0] + 1) // 2, np.where(mask, 0.0, values), mask)

    @classmethod
    def zeros(cls, n: int) -> "RpeBias":
        return cls(n, np.zeros(2 * n - 1), np.zeros(2 * n - 1, dtype=bool))

    @classmethod
    def gaussian(cls, rng: RngState, n: int, scale: float = 1.0) -> "RpeBias":
        return cls(n, scale * rng.normal(2 * n - 1), np.zeros(2 * n - 1, dtype=bool))

    def causal(self) -> "RpeBias":
        mask = self.mask.copy()
        mask[self.n:] = True
        return RpeBias(self.n, self.b, mask)

    def kernel(self) -> ToeplitzKernel:
        # masked offsets become exact zeros, never exp(-inf)
        return ToeplitzKernel(self.n, np.where(self.mask, 0.0, np.exp(self.b)))

    def logits(self, start: int = 0, stop: int | None = None) -> Mat:
        """Rows [start, stop) of the n x n matrix b_{j-i}, -inf where masked."""
        stop = self.n if stop is None else stop
        i = np.arange(start, stop)[:, None]
        j = np.arange(self.n)[None, :]
        values = np.where(self.mask, -np.inf, self.b)
        return values[j - i + self.n - 1]


def check_inputs(q, k, v, wq, wk, wv):
    q, k, v = as_mat(q, "queries"), as_mat(k, "keys"), as_mat(v, "values")
    wq, wk, wv = as_mat(wq, "W^Q"), as_mat(wk, "W^K"), as_mat(wv, "W^V")
    n = q.shape[0]
    if n == 0:
        raise DegenerateRowError("attention needs at least one position")
    if k.shape[0] != n or v.shape[0] != n:
        raise ShapeError(f"queries, keys, values must share n rows, got {q.shape[0]}, {k.shape[0]}, {v.shape[0]}")
    for x, w, name in ((q, wq, "W^Q"), (k, wk, "W^K"), (v, wv, "W^V")):
        if w.shape[0] != x.shape[1]:
            raise ShapeError(f"{name} expects {w.shape[0]} input columns, got {x.shape[1]}")
    if wq.shape[1] != wk.shape[1]:
        raise ShapeError(f"query and key projections differ in width: {wq.shape[1]} vs {wk.shape[1]}")
    return q, k, v, wq, wk, wv


def _check_bias(bias: RpeBias | None, n: int):
    if bias is not None and bias.n != n:
        raise ShapeError(f"bias covers n={bias.n}, inputs have n={n}")


def project_qk(q, k, wq, wk, cfg: AttentionConfig, kernel_path: bool) -> tuple[Mat, Mat, float]:
    """Projected queries and keys plus the logit scale the softmax path applies."""
    qp = matmul(q, wq)
    kp = matmul(k, wk)
    d = qp.shape[1]
    if cfg.normalize_qk:
        return row_l2_normalize(qp), row_l2_normalize(kp), 1.0
    if cfg.temperature is Temperature.KERNEL_MATCHED:
        s = d ** -0.25
        return qp * s, kp * s, 1.0
    if cfg.temperature is Temperature.SOFTMAX_SCALED and not kernel_path:
        return qp, kp, 1.0 / math.sqrt(d)
    return qp, kp, 1.0


def rpe_kernel(bias: RpeBias, causal: bool) -> ToeplitzKernel:
    kernel = bias.kernel()
    return causal_mask(kernel) if causal else kernel


def guard_denominator(den: np.ndarray, guard: float) -> np.ndarray:
    """sign(den) * max(|den|, guard), with sign(0) taken as +1."""
    den = np.asarray(den)
    sign = np.where(den < 0, -1.0, 1.0).astype(den.dtype, copy=False)
    return sign * np.maximum(np.abs(den), guard)


def _score_blocks(qp: Mat, kp: Mat, scale: float, bias: RpeBias | None, causal: bool):
    n = qp.shape[0]
    rows = max(1, _SCORE_BLOCK_ELEMS // max(kp.shape[0], 1))
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        logits = (qp[start:stop] @ kp.T) * scale
        if bias is not None:
            logits = logits + bias.logits(start, stop)
        if causal:
            i = np.arange(start, stop)[:, None]
            j = np.arange(kp.shape[0])[None, :]
            logits = np.where(j > i, -np.inf, logits)
        peak = logits.max(axis=1, keepdims=True)
        if np.any(np.isneginf(peak)):
            row = start + int(np.argmax(np.isneginf(peak[:, 0])))
            raise DegenerateRowError(f"attention row {row} has no unmasked key")
        weights = np.exp(logits - peak)
        weights /= weights.sum(axis=1, keepdims=True)
        yield start, stop, weights


def attention_scores(q, k, wq, wk, bias: RpeBias | None = None, cfg: AttentionConfig = AttentionConfig()) -> Mat:
    """The n x n row-stochastic softmax weight matrix."""
    q, k = as_mat(q, "queries"), as_mat(k, "keys")
    if q.shape[0] == 0:
        raise DegenerateRowError("attention needs at least one position")
    if k.shape[0] != q.shape[0]:
        raise ShapeError(f"queries and keys must share n rows, got {q.shape[0]} and {k.shape[0]}")
    _check_bias(bias, q.shape[0])
    qp, kp, scale = project_qk(q, k, wq, wk, cfg, kernel_path=False)
    out = np.empty((qp.shape[0], kp.shape[0]))
    for start, stop, weights in _score_blocks(qp, kp, scale, bias, cfg.causal):
        out[start:stop] = weights
    return out


def softmax_attention(q, k, v, wq, wk, wv, bias: RpeBias | None = None,
                      cfg: AttentionConfig = AttentionConfig()) -> Mat:
    """Quadratic reference: z_i = sum_j softmax_j(alpha_ij) (x_j W^V).

    Query rows are processed in blocks so memory stays O(block x n).
    """
    q, k, v, wq, wk, wv = check_inputs(q, k, v, wq, wk, wv)
    _check_bias(bias, q.shape[0])
    qp, kp, scale = project_qk(q, k, wq, wk, cfg, kernel_path=False)
    vp = v @ wv
    out = np.empty((q.shape[0], vp.shape[1]), dtype=vp.dtype)
    for start, stop, weights in _score_blocks(qp, kp, scale, bias, cfg.causal):
        out[start:stop] = weights @ vp
    return out


def _check_features(phi_q, phi_k, v):
    phi_q, phi_k, v = as_mat(phi_q, "query features"), as_mat(phi_k, "key features"), as_mat(v, "values")
    if phi_q.shape[1] != phi_k.shape[1]:
        raise ShapeError(f"feature widths differ: {phi_q.shape[1]} vs {phi_k.shape[1]}")
    if phi_k.shape[0] != v.shape[0]:
        raise ShapeError(f"{phi_k.shape[0]} key rows but {v.shape[0]} value rows")
    if phi_q.shape[0] == 0:
        raise DegenerateRowError("attention needs at least one position")
    return phi_q, phi_k, v


def kernelized_attention(phi_q, phi_k, v, denom_guard: float = DENOM_GUARD) -> Mat:
    """Linear-time attention: both key sums are formed once and reused for every query."""
    phi_q, phi_k, v = _check_features(phi_q, phi_k, v)
    kv = phi_k.T @ v
    k_sum = phi_k.sum(axis=0)
    den = guard_denominator(phi_q @ k_sum, denom_guard)
    return (phi_q @ kv) / den[:, None]


def kernelized_attention_rpe_naive(phi_q, phi_k, v, kernel: ToeplitzKernel,
                                   denom_guard: float = DENOM_GUARD) -> Mat:
    """O(n^2) evaluation of RPE kernelized attention, one query at a time."""
    phi_q, phi_k, v = _check_features(phi_q, phi_k, v)
    n = phi_k.shape[0]
    if kernel.n != n or phi_q.shape[0] != n:
        raise ShapeError(f"kernel covers n={kernel.n}, features have {phi_q.shape[0]} and {n} rows")
    out = np.empty((n, v.shape[1]))
    for i in range(n):
        weights = kernel.c[n - 1 - i:2 * n - 1 - i] * (phi_k @ phi_q[i])
        den = guard_denominator(np.array([weights.sum()]), denom_guard)[0]
        out[i] = (weights @ v) / den
    return out


@dataclass(frozen=True, eq=False)
class RpeProducts:
    a1: Mat  # n x (width * dv), row i = vec(phi(k_i)^T v_i)
    d1: Mat  # n x width x dv
    d2: Mat  # n x width
    den: np.ndarray
    out: Mat


def rpe_products(phi_q: Mat, phi_k: Mat, v: Mat, kernel: ToeplitzKernel, denom_guard: float) -> RpeProducts:
    n, width = phi_k.shape
    dv = v.shape[1]
    spectrum = circulant_spectrum(kernel)
    a1 = (phi_k[:, :, None] * v[:, None, :]).reshape(n, width * dv)
    d1 = toeplitz_matmul(kernel, a1, spectrum=spectrum).reshape(n, width, dv)
    d2 = toeplitz_matmul(kernel, phi_k, spectrum=spectrum)
    num = np.einsum("ia,iae->ie", phi_q, d1)
    den = np.einsum("ia,ia->i", phi_q, d2)
    out = num / guard_denominator(den, denom_guard)[:, None]
    return RpeProducts(a1, d1, d2, den, out)


def rpe_kernelized_attention(phi_q, phi_k, v, kernel: ToeplitzKernel, denom_guard: float = DENOM_GUARD) -> Mat:
    """FFT path of RPE kernelized attention; one kernel spectrum serves both products."""
    phi_q, phi_k, v = _check_features(phi_q, phi_k, v)
    if kernel.n != phi_k.shape[0] or phi_q.shape[0] != kernel.n:
        raise ShapeError(f"kernel covers n={kernel.n}, features have {phi_q.shape[0]} and {phi_k.shape[0]} rows")
    return rpe_products(phi_q, phi_k, v, kernel, denom_guard).out


def rpe_nka_features(q, k, v, wq, wk, wv, bias: RpeBias, spec: FeatureMapSpec, cfg: AttentionConfig):
    """Shared prelude of the RPE paths: (phi_q, phi_k, projected values, kernel)."""
    q, k, v, wq, wk, wv = check_inputs(q, k, v, wq, wk, wv)
    _check_bias(bias, q.shape[0])
    qp, kp, _ = project_qk(q, k, wq, wk, cfg, kernel_path=True)
    vp = v @ wv
    kernel = rpe_kernel(bias, cfg.causal)
    return apply_feature_map(spec, qp), apply_feature_map(spec, kp), vp, kernel


def rpe_nka(q, k, v, wq, wk, wv, bias: RpeBias, spec: FeatureMapSpec,
            cfg: AttentionConfig = AttentionConfig(normalize_qk=True)) -> Mat:
    """Normalized kernelized attention with RPE in O(n log n)."""
    phi_q, phi_k, vp, kernel = rpe_nka_features(q, k, v, wq, wk, wv, bias, spec, cfg)
    return rpe_products(phi_q, phi_k, vp, kernel, cfg.denom_guard).out


def rpe_nka_weights(q, k, v, wq, wk, wv, bias: RpeBias, spec: FeatureMapSpec,
                    cfg: AttentionConfig = AttentionConfig(normalize_qk=True)) -> Mat:
    """The n x n weights rpe_nka applies implicitly, materialized in O(n^2)."""
    phi_q, phi_k, _, kernel = rpe_nka_features(q, k, v, wq, wk, wv, bias, spec, cfg)
    weights = kernel.dense() * (phi_q @ phi_k.T)
    den = guard_denominator(weights.sum(axis=1), cfg.denom_guard)
    return weights / den[:, None]


@dataclass(frozen=True, eq=False)
class HeadParams:
    wq: Mat
    wk: Mat
    wv: Mat
    bias: RpeBias
    spec: FeatureMapSpec


def multihead_rpe_nka(q, k, v, heads: Sequence[HeadParams],
                      cfg: AttentionConfig = AttentionConfig(normalize_qk=True)) -> Mat:
    if not heads:
        raise PreconditionError("multihead attention needs at least one head")
    return np.hstack([rpe_nka(q, k, v, h.wq, h.wk, h.wv, h.bias, h.spec, cfg) for h in heads])
