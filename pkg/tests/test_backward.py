import math

import numpy as np
import pytest

from fastrpe.core.attention import (
    AttentionConfig, RpeBias, Temperature, rpe_kernel, rpe_kernelized_attention, rpe_nka,
)
from fastrpe.core.backward import rpe_core_backward, rpe_nka_backward
from fastrpe.core.features import apply_feature_map, sample_feature_map
from fastrpe.core.tensor import RngState, gaussian_matrix
from fastrpe.shared.errors import ShapeError

STEP = 1e-5


def _instance(rng, n=8, d=4, m=4, kind="prf"):
    q, k, v = (gaussian_matrix(rng, n, d) for _ in range(3))
    wq, wk, wv = (gaussian_matrix(rng, d, d) / math.sqrt(d) for _ in range(3))
    return q, k, v, wq, wk, wv, RpeBias.gaussian(rng, n, 0.5), sample_feature_map(kind, m, d, rng)


def _numeric(loss, x):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        keep = x[idx]
        x[idx] = keep + STEP
        up = loss()
        x[idx] = keep - STEP
        down = loss()
        x[idx] = keep
        grad[idx] = (up - down) / (2 * STEP)
    return grad


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestRpeNkaBackward:
    @pytest.mark.parametrize("causal", [False, True])
    @pytest.mark.parametrize("cfg_kwargs", [
        {"normalize_qk": True},
        {"normalize_qk": False, "temperature": Temperature.KERNEL_MATCHED},
        {"normalize_qk": False, "temperature": Temperature.NONE},
    ])
    def test_matches_central_differences(self, rng, causal, cfg_kwargs):
        q, k, v, wq, wk, wv, bias, spec = _instance(rng)
        cfg = AttentionConfig(causal=causal, **cfg_kwargs)
        g = rng.normal((8, 4))
        b = bias.b.copy()

        def loss():
            return float(np.sum(g * rpe_nka(q, k, v, wq, wk, wv, RpeBias(8, b, bias.mask), spec, cfg)))

        grads = rpe_nka_backward(q, k, v, wq, wk, wv, bias, spec, cfg, g)
        assert _rel(grads.grad_q_input, _numeric(loss, q)) < 1e-5
        assert _rel(grads.grad_k_input, _numeric(loss, k)) < 1e-5
        assert _rel(grads.grad_v_input, _numeric(loss, v)) < 1e-5
        assert _rel(grads.grad_b, _numeric(loss, b)) < 1e-5
        assert _rel(grads.grad_wq, _numeric(loss, wq)) < 1e-5
        assert _rel(grads.grad_wk, _numeric(loss, wk)) < 1e-5
        assert _rel(grads.grad_wv, _numeric(loss, wv)) < 1e-5

    def test_causal_bias_gradient_ignores_future(self, rng):
        q, k, v, wq, wk, wv, bias, spec = _instance(rng)
        grads = rpe_nka_backward(q, k, v, wq, wk, wv, bias, spec, AttentionConfig(normalize_qk=True, causal=True),
                                 rng.normal((8, 4)))
        np.testing.assert_array_equal(grads.grad_b[8:], 0.0)
        assert np.any(grads.grad_b[:8] != 0.0)

    def test_masked_offsets_get_no_gradient(self, rng):
        q, k, v, wq, wk, wv, _, spec = _instance(rng)
        values = rng.normal(15)
        values[[0, 3, 12]] = -np.inf
        grads = rpe_nka_backward(q, k, v, wq, wk, wv, RpeBias.from_values(values), spec,
                                 AttentionConfig(normalize_qk=True), rng.normal((8, 4)))
        np.testing.assert_array_equal(grads.grad_b[[0, 3, 12]], 0.0)

    def test_grad_out_shape(self, rng):
        q, k, v, wq, wk, wv, bias, spec = _instance(rng)
        with pytest.raises(ShapeError):
            rpe_nka_backward(q, k, v, wq, wk, wv, bias, spec, AttentionConfig(), np.zeros((8, 3)))


class TestCoreBackward:
    @pytest.mark.parametrize("kind", ["orf", "sphere_prf", "elu_plus_one"])
    def test_phi_input_gradients(self, kind):
        rng = RngState(77)
        n, d = 6, 3
        q_hat = 0.5 * rng.normal((n, d))
        k_hat = 0.5 * rng.normal((n, d))
        v_hat = rng.normal((n, 2))
        bias = RpeBias.gaussian(rng, n, 0.3)
        spec = sample_feature_map(kind, 5, d, rng)
        g = rng.normal((n, 2))

        def loss():
            out = rpe_kernelized_attention(apply_feature_map(spec, q_hat), apply_feature_map(spec, k_hat), v_hat,
                                           rpe_kernel(bias, False))
            return float(np.sum(g * out))

        grads = rpe_core_backward(q_hat, k_hat, v_hat, bias, spec, False, 1e-6, g)
        assert _rel(grads.grad_q, _numeric(loss, q_hat)) < 1e-5
        assert _rel(grads.grad_k, _numeric(loss, k_hat)) < 1e-5
        assert _rel(grads.grad_v, _numeric(loss, v_hat)) < 1e-5
        assert grads.grad_q_input is None
