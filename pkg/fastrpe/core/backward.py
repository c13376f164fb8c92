"""Analytic gradients of rpe_nka.

The scalar loss is L = sum(grad_out * output). Toeplitz adjoints reuse the
FFT product with the offset sequence reversed; the bias gradient is one FFT
cross-correlation times the chain factor c_k = exp(b_k).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fastrpe.core.attention import (
    AttentionConfig, RpeBias, Temperature, check_inputs, guard_denominator, project_qk, rpe_kernel, rpe_products,
)
from fastrpe.core.features import FeatureMapSpec, apply_feature_map, feature_map_vjp
from fastrpe.core.tensor import Mat, as_mat, row_l2_normalize_vjp
from fastrpe.core.toeplitz import circulant_spectrum, diagonal_correlation, toeplitz_transpose_matmul
from fastrpe.shared.errors import ShapeError


@dataclass(frozen=True, eq=False)
class RpeGradients:
    grad_q: Mat  # rows fed to phi (projected, then normalized or scaled)
    grad_k: Mat
    grad_v: Mat  # projected values
    grad_b: np.ndarray
    grad_q_input: Mat | None = None
    grad_k_input: Mat | None = None
    grad_v_input: Mat | None = None
    grad_wq: Mat | None = None
    grad_wk: Mat | None = None
    grad_wv: Mat | None = None


def rpe_core_backward(q_hat, k_hat, v_hat, bias: RpeBias, spec: FeatureMapSpec, causal: bool,
                      denom_guard: float, grad_out) -> RpeGradients:
    """Gradients with respect to the phi inputs, the projected values and b."""
    q_hat, k_hat, v_hat = as_mat(q_hat, "queries"), as_mat(k_hat, "keys"), as_mat(v_hat, "values")
    kernel = rpe_kernel(bias, causal)
    phi_q = apply_feature_map(spec, q_hat)
    phi_k = apply_feature_map(spec, k_hat)
    fwd = rpe_products(phi_q, phi_k, v_hat, kernel, denom_guard)
    g = as_mat(grad_out, "grad_out")
    if g.shape != fwd.out.shape:
        raise ShapeError(f"grad_out shape {g.shape} != output shape {fwd.out.shape}")
    n, width = phi_k.shape

    den = guard_denominator(fwd.den, denom_guard)
    d_num = g / den[:, None]
    d_den = -np.einsum("ie,ie->i", g, fwd.out) / den
    # the clamp is flat where |den| <= guard
    d_den = np.where(np.abs(fwd.den) > denom_guard, d_den, 0.0)

    d_phi_q = np.einsum("ie,iae->ia", d_num, fwd.d1) + d_den[:, None] * fwd.d2
    d_d1 = (phi_q[:, :, None] * d_num[:, None, :]).reshape(n, -1)
    d_d2 = d_den[:, None] * phi_q

    adjoint = circulant_spectrum(kernel.transposed())
    d_a1 = toeplitz_transpose_matmul(kernel, d_d1, spectrum=adjoint).reshape(n, width, -1)
    d_phi_k = np.einsum("jae,je->ja", d_a1, v_hat) + toeplitz_transpose_matmul(kernel, d_d2, spectrum=adjoint)
    grad_v = np.einsum("jae,ja->je", d_a1, phi_k)

    d_c = diagonal_correlation(np.hstack([d_d1, d_d2]), np.hstack([fwd.a1, phi_k]))
    grad_b = d_c * kernel.c
    masked = bias.mask.copy()
    if causal:
        masked[bias.n:] = True
    grad_b[masked] = 0.0

    return RpeGradients(
        grad_q=feature_map_vjp(spec, q_hat, d_phi_q),
        grad_k=feature_map_vjp(spec, k_hat, d_phi_k),
        grad_v=grad_v,
        grad_b=grad_b,
    )


def _projection_vjp(projected: Mat, grad_hat: Mat, cfg: AttentionConfig) -> Mat:
    if cfg.normalize_qk:
        return row_l2_normalize_vjp(projected, grad_hat)
    if cfg.temperature is Temperature.KERNEL_MATCHED:
        return grad_hat * projected.shape[1] ** -0.25
    return grad_hat


def rpe_nka_backward(q, k, v, wq, wk, wv, bias: RpeBias, spec: FeatureMapSpec, cfg: AttentionConfig,
                     grad_out) -> RpeGradients:
    q, k, v, wq, wk, wv = check_inputs(q, k, v, wq, wk, wv)
    q_hat, k_hat, _ = project_qk(q, k, wq, wk, cfg, kernel_path=True)
    v_hat = v @ wv
    core = rpe_core_backward(q_hat, k_hat, v_hat, bias, spec, cfg.causal, cfg.denom_guard, grad_out)
    grad_qp = _projection_vjp(q @ wq, core.grad_q, cfg)
    grad_kp = _projection_vjp(k @ wk, core.grad_k, cfg)
    return RpeGradients(
        grad_q=core.grad_q,
        grad_k=core.grad_k,
        grad_v=core.grad_v,
        grad_b=core.grad_b,
        grad_q_input=grad_qp @ wq.T,
        grad_k_input=grad_kp @ wk.T,
        grad_v_input=core.grad_v @ wv.T,
        grad_wq=q.T @ grad_qp,
        grad_wk=k.T @ grad_kp,
        grad_wv=v.T @ core.grad_v,
    )
