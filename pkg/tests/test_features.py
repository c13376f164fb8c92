import math

import numpy as np
import pytest

from fastrpe.core.features import (
    FeatureKind, FeatureMapSpec, apply_feature_map, feature_map_vjp, kernel_estimate, load_feature_map,
    prf_variance_closed_form, sample_feature_map, sample_kernel_estimates, save_feature_map,
)
from fastrpe.core.tensor import RngState, unit_sphere_rows
from fastrpe.shared.errors import FeatureOverflowError, PreconditionError, ShapeError


def _unit_pair(rng, d=4, scale=1.0):
    rows = unit_sphere_rows(rng, 2, d) * scale
    return rows[0], rows[1]


def _assert_unbiased(estimates, target):
    se = estimates.std(ddof=1) / math.sqrt(estimates.size)
    assert abs(estimates.mean() - target) < 4 * se


class TestSampling:
    @pytest.mark.parametrize("kind,width", [("prf", 8), ("trf", 16), ("sphere_prf", 8), ("orf", 8)])
    def test_widths(self, rng, kind, width):
        spec = sample_feature_map(kind, 8, 3, rng)
        assert spec.width == width
        assert apply_feature_map(spec, rng.normal((5, 3))).shape == (5, width)

    def test_elu_keeps_input_dimension(self, rng):
        spec = sample_feature_map(FeatureKind.ELU_PLUS_ONE, 32, 5, rng)
        assert spec.w is None
        assert spec.width == 5

    def test_sphere_rows_have_norm_sqrt_d(self, rng):
        spec = sample_feature_map("sphere_prf", 20, 6, rng)
        np.testing.assert_allclose(np.linalg.norm(spec.w, axis=1), math.sqrt(6), rtol=1e-12)

    def test_sphere_estimates_have_sphere_rows(self):
        # biased for exp(x . y); only positivity and row norms are fixed
        rng = RngState(24)
        x, y = _unit_pair(rng, 4, scale=0.7)
        estimates = sample_kernel_estimates("sphere_prf", x, y, 4, 2000, rng.child(1))
        assert np.all(estimates > 0)
        spec = sample_feature_map("sphere_prf", 4, 4, rng.child(2))
        np.testing.assert_allclose(np.linalg.norm(spec.w, axis=1), 2.0, rtol=1e-12)


    def test_bad_width(self, rng):
        with pytest.raises(PreconditionError):
            sample_feature_map("prf", 0, 4, rng)

    def test_projection_shape_checked(self):
        with pytest.raises(ShapeError):
            FeatureMapSpec(FeatureKind.PRF, 4, 3, np.zeros((3, 3)), 0)

    def test_sampling_is_seeded(self):
        a = sample_feature_map("orf", 6, 3, RngState(9))
        b = sample_feature_map("orf", 6, 3, RngState(9))
        np.testing.assert_array_equal(a.w, b.w)


class TestApply:
    @pytest.mark.parametrize("kind", ["prf", "sphere_prf", "orf", "elu_plus_one"])
    def test_positive_kinds(self, rng, kind):
        spec = sample_feature_map(kind, 16, 4, rng)
        assert np.all(apply_feature_map(spec, 2.0 * rng.normal((10, 4))) > 0)

    def test_elu_plus_one_kernel_at_origin(self, rng):
        spec = sample_feature_map("elu_plus_one", 8, 4, rng)
        assert kernel_estimate(spec, np.zeros(4), np.zeros(4)) == 4.0


    def test_elu_plus_one_values(self):
        spec = FeatureMapSpec(FeatureKind.ELU_PLUS_ONE, 3, 3, None, 0)
        np.testing.assert_allclose(apply_feature_map(spec, [[-1.0, 0.0, 2.0]]), [[math.exp(-1.0), 1.0, 3.0]])

    def test_prf_overflow(self):
        spec = FeatureMapSpec(FeatureKind.PRF, 1, 1, np.array([[100.0]]), 0)
        with pytest.raises(FeatureOverflowError) as err:
            apply_feature_map(spec, [[20.0]])
        assert err.value.exponent == pytest.approx(1800.0)

    def test_trf_overflow(self, rng):
        spec = sample_feature_map("trf", 4, 2, rng)
        with pytest.raises(FeatureOverflowError):
            apply_feature_map(spec, [[40.0, 0.0]])

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            apply_feature_map(sample_feature_map("prf", 4, 3, rng), np.zeros((2, 4)))

    def test_estimate_is_inner_product(self, rng):
        spec = sample_feature_map("trf", 8, 3, rng)
        x, y = _unit_pair(rng, 3)
        phi = apply_feature_map(spec, np.vstack([x, y]))
        assert kernel_estimate(spec, x, y) == pytest.approx(phi[0] @ phi[1])


class TestVjp:
    @pytest.mark.parametrize("kind", ["prf", "trf", "sphere_prf", "orf", "elu_plus_one"])
    def test_matches_finite_differences(self, rng, kind):
        spec = sample_feature_map(kind, 5, 3, rng)
        x = 0.5 * rng.normal((4, 3))
        g = rng.normal((4, spec.width))
        analytic = feature_map_vjp(spec, x, g)
        numeric = np.zeros_like(x)
        h = 1e-6
        for idx in np.ndindex(x.shape):
            up, down = x.copy(), x.copy()
            up[idx] += h
            down[idx] -= h
            numeric[idx] = np.sum(g * (apply_feature_map(spec, up) - apply_feature_map(spec, down))) / (2 * h)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-6, atol=1e-8)


class TestUnbiasedness:
    @pytest.mark.parametrize("kind", ["prf", "trf"])
    def test_single_pair(self, kind):
        rng = RngState(21)
        x, y = _unit_pair(rng, 4, scale=0.7)
        estimates = sample_kernel_estimates(kind, x, y, 4, 40_000, rng.child(1))
        _assert_unbiased(estimates, math.exp(x @ y))

    def test_orf_single_pair(self):
        rng = RngState(22)
        x, y = _unit_pair(rng, 3, scale=0.7)
        estimates = sample_kernel_estimates("orf", x, y, 3, 3000, rng.child(1))
        _assert_unbiased(estimates, math.exp(x @ y))

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", ["prf", "trf"])
    def test_twenty_unit_pairs(self, kind):
        rng = RngState(23)
        for pair in range(20):
            x, y = _unit_pair(rng.child(pair), 8)
            estimates = sample_kernel_estimates(kind, x, y, 1, 100_000, rng.child(pair, 1))
            _assert_unbiased(estimates, math.exp(x @ y))


class TestClosedForm:
    def test_known_pair(self):
        x = np.array([1.0, 0.0])
        y = np.array([-0.5, math.sqrt(3.0) / 2.0])
        expected = (math.e - 1.0) * math.exp(-1.0) / 4
        assert prf_variance_closed_form(x, y, 4) == pytest.approx(expected, rel=1e-12)

    def test_zero_inputs_have_no_variance(self):
        assert prf_variance_closed_form(np.zeros(3), np.zeros(3), 1) == 0.0

    def test_bad_m(self):
        with pytest.raises(PreconditionError):
            prf_variance_closed_form(np.zeros(2), np.zeros(2), 0)


class TestPersistence:
    def test_round_trip(self, rng, tmp_path):
        spec = sample_feature_map("orf", 6, 4, rng)
        meta = save_feature_map(spec, tmp_path / "map.tatt")
        assert meta.name == "map.tatt.json"
        loaded = load_feature_map(tmp_path / "map.tatt")
        assert (loaded.kind, loaded.m, loaded.d, loaded.seed) == (spec.kind, spec.m, spec.d, spec.seed)
        np.testing.assert_array_equal(loaded.w, spec.w)

    def test_deterministic_map_writes_header_only(self, rng, tmp_path):
        spec = sample_feature_map("elu_plus_one", 3, 3, rng)
        save_feature_map(spec, tmp_path / "elu")
        assert not (tmp_path / "elu").exists()
        assert load_feature_map(tmp_path / "elu").kind is FeatureKind.ELU_PLUS_ONE
