"""Feature maps phi whose inner products estimate exp(x . y).

Randomized kinds share one projection matrix ``w`` (m x d) between queries
and keys. Positive kinds (PRF, SpherePRF, ORF) output m columns, TRF outputs
2m (sines then cosines), EluPlusOne is deterministic and keeps d columns.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from fastrpe.core.tensor import Mat, RngState, as_mat, as_row, gaussian_matrix, orthogonal_block_sample
from fastrpe.shared import codec
from fastrpe.shared.errors import FeatureOverflowError, PreconditionError, ShapeError
from fastrpe.shared.protocol import EXP_LIMIT


class FeatureKind(str, enum.Enum):
    PRF = "prf"
    TRF = "trf"
    SPHERE_PRF = "sphere_prf"
    ORF = "orf"
    ELU_PLUS_ONE = "elu_plus_one"

    @property
    def randomized(self) -> bool:
        return self is not FeatureKind.ELU_PLUS_ONE


@dataclass(frozen=True, eq=False)
class FeatureMapSpec:
    kind: FeatureKind
    m: int
    d: int
    w: np.ndarray | None
    seed: int

    def __post_init__(self):
        kind = FeatureKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if kind.randomized:
            if self.w is None or self.w.shape != (self.m, self.d):
                got = None if self.w is None else self.w.shape
                raise ShapeError(f"{kind.value} projection must be {self.m}x{self.d}, got {got}")
            self.w.setflags(write=False)

    @property
    def width(self) -> int:
        if self.kind is FeatureKind.TRF:
            return 2 * self.m
        return self.m


def sample_feature_map(kind, m: int, d: int, rng: RngState) -> FeatureMapSpec:
    kind = FeatureKind(kind)
    if m < 1 or d < 1:
        raise PreconditionError(f"feature map needs m, d >= 1, got m={m}, d={d}")
    if kind is FeatureKind.ELU_PLUS_ONE:
        # deterministic map; its width is the input dimension
        return FeatureMapSpec(kind, d, d, None, rng.seed)
    if kind is FeatureKind.ORF:
        w = orthogonal_block_sample(rng, m, d)
    else:
        w = gaussian_matrix(rng, m, d)
        if kind is FeatureKind.SPHERE_PRF:
            w = w / np.linalg.norm(w, axis=1, keepdims=True) * math.sqrt(d)
    return FeatureMapSpec(kind, m, d, w, rng.seed)


def _guard_exponent(exponent: np.ndarray):
    if exponent.size and np.max(exponent) > EXP_LIMIT:
        raise FeatureOverflowError(float(np.max(exponent)), EXP_LIMIT)


def apply_feature_map(spec: FeatureMapSpec, x) -> Mat:
    x = as_mat(x, "feature input")
    if x.shape[1] != spec.d:
        raise ShapeError(f"feature map expects {spec.d} columns, got {x.shape[1]}")
    if spec.kind is FeatureKind.ELU_PLUS_ONE:
        return np.where(x >= 0, x + 1.0, np.exp(np.minimum(x, 0.0)))
    w = spec.w.astype(x.dtype, copy=False)
    proj = x @ w.T
    half_sq = 0.5 * np.einsum("ij,ij->i", x, x)
    scale = 1.0 / math.sqrt(spec.m)
    if spec.kind is FeatureKind.TRF:
        _guard_exponent(half_sq)
        pre = np.exp(half_sq)[:, None] * scale
        return np.hstack([np.sin(proj) * pre, np.cos(proj) * pre])
    exponent = proj - half_sq[:, None]
    _guard_exponent(exponent)
    return np.exp(exponent) * scale


def feature_map_vjp(spec: FeatureMapSpec, x, grad_phi) -> Mat:
    """Pull a gradient on phi(x) back to x."""
    x = as_mat(x, "feature input")
    grad_phi = as_mat(grad_phi, "feature gradient")
    phi = apply_feature_map(spec, x)
    if grad_phi.shape != phi.shape:
        raise ShapeError(f"feature gradient shape {grad_phi.shape} != {phi.shape}")
    if spec.kind is FeatureKind.ELU_PLUS_ONE:
        return grad_phi * np.where(x >= 0, 1.0, phi)
    if spec.kind is FeatureKind.TRF:
        m = spec.m
        s, c = phi[:, :m], phi[:, m:]
        gs, gc = grad_phi[:, :m], grad_phi[:, m:]
        radial = np.einsum("ij,ij->i", gs, s) + np.einsum("ij,ij->i", gc, c)
        return x * radial[:, None] + (gs * c - gc * s) @ spec.w
    weighted = grad_phi * phi
    return weighted @ spec.w - x * weighted.sum(axis=1, keepdims=True)


def kernel_estimate(spec: FeatureMapSpec, x, y) -> float:
    x = as_row(x, "x")
    y = as_row(y, "y")
    if x.shape != y.shape:
        raise ShapeError(f"rows differ in dimension: {x.shape[0]} vs {y.shape[0]}")
    phi = apply_feature_map(spec, np.vstack([x, y]))
    return float(phi[0] @ phi[1])


def sample_kernel_estimates(kind, x, y, m: int, samples: int, rng: RngState, batch: int = 65536) -> np.ndarray:
    """``samples`` draws of phi(x) . phi(y), each under a freshly sampled map.

    PRF, SpherePRF and TRF are drawn in vectorized batches; ORF and
    EluPlusOne go through ``sample_feature_map`` one map at a time.
    """
    kind = FeatureKind(kind)
    x = as_row(x, "x")
    y = as_row(y, "y")
    if x.shape != y.shape:
        raise ShapeError(f"rows differ in dimension: {x.shape[0]} vs {y.shape[0]}")
    d = x.shape[0]
    if kind not in (FeatureKind.PRF, FeatureKind.SPHERE_PRF, FeatureKind.TRF):
        return np.array([kernel_estimate(sample_feature_map(kind, m, d, rng.child(s)), x, y)
                         for s in range(samples)])
    out = np.empty(samples)
    per_batch = max(1, batch // m)
    for start in range(0, samples, per_batch):
        count = min(per_batch, samples - start)
        w = rng.normal((count, m, d))
        if kind is FeatureKind.SPHERE_PRF:
            w *= math.sqrt(d) / np.linalg.norm(w, axis=2, keepdims=True)
        px = w @ x
        py = w @ y
        if kind is FeatureKind.TRF:
            _guard_exponent(np.array([0.5 * (x @ x + y @ y)]))
            pre = math.exp(0.5 * (x @ x + y @ y))
            out[start:start + count] = pre * np.cos(px - py).mean(axis=1)
        else:
            exponent = px + py - 0.5 * (x @ x + y @ y)
            _guard_exponent(exponent)
            out[start:start + count] = np.exp(exponent).mean(axis=1)
    return out


def prf_variance_closed_form(x, y, m: int) -> float:
    """Var[phi(x) . phi(y)] = (exp(|x + y|^2) - 1) exp(x . y)^2 / m for PRF."""
    x = as_row(x, "x")
    y = as_row(y, "y")
    if x.shape != y.shape:
        raise ShapeError(f"rows differ in dimension: {x.shape[0]} vs {y.shape[0]}")
    if m < 1:
        raise PreconditionError(f"m must be >= 1, got {m}")
    s = x + y
    return float(np.expm1(s @ s) * np.exp(2.0 * (x @ y)) / m)


def save_feature_map(spec: FeatureMapSpec, path) -> Path:
    """Write ``w`` as TATT to ``path`` and the header to ``path`` + ``.json``."""
    path = Path(path)
    header = {"kind": spec.kind.value, "m": spec.m, "d": spec.d, "seed": spec.seed}
    if spec.w is not None:
        codec.write_mat(path, spec.w)
    meta = path.with_name(path.name + ".json")
    meta.write_text(json.dumps(header, indent=2), encoding="utf-8")
    return meta


def load_feature_map(path) -> FeatureMapSpec:
    path = Path(path)
    header = json.loads(path.with_name(path.name + ".json").read_text(encoding="utf-8"))
    kind = FeatureKind(header["kind"])
    w = codec.read_mat(path) if kind.randomized else None
    return FeatureMapSpec(kind, int(header["m"]), int(header["d"]), w, int(header["seed"]))
