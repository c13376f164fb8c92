"""Dense matrices and seeded sampling.

A ``Mat`` is a 2-D C-contiguous ``float64`` ndarray (``float32`` only on the
benchmark path). ``RngState`` wraps a PCG64 stream and draws normals with a
Box-Muller transform of its uniforms, so samples depend only on the seed.
"""
from __future__ import annotations

import math

import numpy as np
import numpy.typing as npt

from fastrpe.shared.errors import PreconditionError, ShapeError
from fastrpe.shared.protocol import NORM_GUARD, ORTHO_DEGENERACY_TOL, RANK_TOL_SCALE

Mat = npt.NDArray[np.floating]

_MAX_RESAMPLE = 32


def as_mat(x, name: str = "matrix") -> Mat:
    arr = np.asarray(x)
    if arr.dtype not in (np.float32, np.float64):
        arr = arr.astype(np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {arr.shape}")
    return np.ascontiguousarray(arr)


def as_row(x, name: str = "row") -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2 and 1 in arr.shape:
        arr = arr.reshape(-1)
    if arr.ndim != 1:
        raise ShapeError(f"{name} must be a vector, got shape {arr.shape}")
    return arr


class RngState:
    """Deterministic sample source.

    ``child(i, j, ...)`` derives an independent stream keyed on
    (seed, key + indices), so trials can run in any order.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        self.seed = int(seed)
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(self.seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def __repr__(self):
        return f"RngState(seed={self.seed}, key={self.key})"

    def child(self, *indices: int) -> "RngState":
        return RngState(self.seed, self.key + tuple(indices))

    def integers(self, size) -> np.ndarray:
        return self._gen.integers(0, 2**63 - 1, size=size, dtype=np.int64)

    def uniform(self, size) -> np.ndarray:
        return self._gen.random(size)

    def normal(self, size) -> np.ndarray:
        shape = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
        count = int(np.prod(shape, dtype=np.int64))
        pairs = (count + 1) // 2
        u1 = 1.0 - self.uniform(pairs)  # (0, 1]
        u2 = self.uniform(pairs)
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = 2.0 * math.pi * u2
        out = np.empty(2 * pairs)
        out[0::2] = radius * np.cos(angle)
        out[1::2] = radius * np.sin(angle)
        return out[:count].reshape(shape)


def matmul(a, b) -> Mat:
    a = as_mat(a, "left factor")
    b = as_mat(b, "right factor")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def gaussian_matrix(rng: RngState, r: int, c: int) -> Mat:
    if r < 1 or c < 1:
        raise PreconditionError(f"gaussian_matrix needs r, c >= 1, got {r}x{c}")
    return rng.normal((r, c))


def unit_sphere_rows(rng: RngState, r: int, c: int) -> Mat:
    """Rows uniform on the unit (c-1)-sphere: Gaussian draw, then normalize."""
    return row_l2_normalize(gaussian_matrix(rng, r, c))


def row_l2_normalize(m, guard: float = NORM_GUARD) -> Mat:
    if guard <= 0:
        raise PreconditionError(f"guard must be positive, got {guard}")
    m = as_mat(m)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.maximum(norms, guard)


def orthogonal_block_sample(rng: RngState, m: int, d: int) -> Mat:
    """m x d rows, mutually orthogonal within each block of d rows.

    Each row is rescaled to the norm of an independent Gaussian d-vector so
    the marginal row norms follow those of N(0, I_d).
    """
    if m < 1 or d < 1:
        raise PreconditionError(f"orthogonal_block_sample needs m, d >= 1, got {m}, {d}")
    blocks = []
    for start in range(0, m, d):
        rows = min(d, m - start)
        for _ in range(_MAX_RESAMPLE):
            q, r = np.linalg.qr(rng.normal((d, d)))
            diag = np.abs(np.diag(r))
            if diag.min() > ORTHO_DEGENERACY_TOL * diag.max():
                break
        else:
            raise PreconditionError(f"could not draw a non-degenerate {d}x{d} Gaussian block")
        # sign fix makes the block Haar distributed
        q = q * np.sign(np.diag(r))
        blocks.append(q.T[:rows])
    directions = np.vstack(blocks)
    norms = np.linalg.norm(rng.normal((m, d)), axis=1)
    return directions * norms[:, None]


def numerical_rank(m, tol_scale: float = RANK_TOL_SCALE) -> int:
    """Rank by row elimination with partial pivoting.

    A pivot counts when |pivot| > tol_scale * max|m| * max(rows, cols).
    """
    if tol_scale <= 0:
        raise PreconditionError(f"tol_scale must be positive, got {tol_scale}")
    a = np.array(m, dtype=np.float64, copy=True)
    if a.size == 0:
        return 0
    a = a.reshape(a.shape[0], -1)
    rows, cols = a.shape
    peak = np.abs(a).max()
    if peak == 0.0:
        return 0
    threshold = tol_scale * peak * max(rows, cols)
    rank = 0
    for col in range(cols):
        if rank == rows:
            break
        pivot = rank + int(np.argmax(np.abs(a[rank:, col])))
        if abs(a[pivot, col]) <= threshold:
            continue
        if pivot != rank:
            a[[rank, pivot]] = a[[pivot, rank]]
        factors = a[rank + 1:, col] / a[rank, col]
        a[rank + 1:] -= np.outer(factors, a[rank])
        rank += 1
    return rank


def row_l2_normalize_vjp(m, grad, guard: float = NORM_GUARD) -> Mat:
    """Pull a gradient on row_l2_normalize(m) back to m."""
    m = as_mat(m)
    grad = as_mat(grad, "gradient")
    if grad.shape != m.shape:
        raise ShapeError(f"gradient shape {grad.shape} != {m.shape}")
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    unit = m / np.maximum(norms, guard)
    radial = np.einsum("ij,ij->i", unit, grad)[:, None]
    return np.where(norms > guard, (grad - unit * radial) / np.maximum(norms, guard), grad / guard)
