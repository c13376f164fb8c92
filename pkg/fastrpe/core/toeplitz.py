"""Toeplitz position-correlation matrices and their O(n log n) products.

``ToeplitzKernel.c`` stores c_k for k = -(n-1) .. n-1 at index k + n - 1;
the implied matrix has entry (i, j) = c_{j-i}.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from fastrpe.core.fft import fft, next_power_of_two
from fastrpe.core.tensor import Mat, as_mat
from fastrpe.shared.errors import ShapeError

# complex entries per FFT batch
_BATCH_ELEMS = 1 << 20


@dataclass(frozen=True, eq=False)
class ToeplitzKernel:
    n: int
    c: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=np.float64).reshape(-1)
        if self.n < 1:
            raise ShapeError(f"kernel length must be >= 1, got {self.n}")
        if c.shape[0] != 2 * self.n - 1:
            raise ShapeError(f"kernel for n={self.n} needs {2 * self.n - 1} offsets, got {c.shape[0]}")
        if not np.all(np.isfinite(c)):
            raise ShapeError("kernel offsets must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "c", c)

    @classmethod
    def from_offsets(cls, c) -> "ToeplitzKernel":
        c = np.asarray(c, dtype=np.float64).reshape(-1)
        if c.shape[0] % 2 == 0:
            raise ShapeError(f"offset sequence must have odd length 2n-1, got {c.shape[0]}")
        return cls((c.shape[0] + 1) // 2, c)

    @classmethod
    def identity(cls, n: int) -> "ToeplitzKernel":
        c = np.zeros(2 * n - 1)
        c[n - 1] = 1.0
        return cls(n, c)

    @classmethod
    def ones(cls, n: int) -> "ToeplitzKernel":
        return cls(n, np.ones(2 * n - 1))

    def offset(self, k: int) -> float:
        if abs(k) > self.n - 1:
            raise ShapeError(f"offset {k} outside [-{self.n - 1}, {self.n - 1}]")
        return float(self.c[k + self.n - 1])

    def dense(self) -> Mat:
        i = np.arange(self.n)
        return self.c[(i[None, :] - i[:, None]) + self.n - 1]

    def transposed(self) -> "ToeplitzKernel":
        return ToeplitzKernel(self.n, self.c[::-1].copy())


def _check_rows(kernel: ToeplitzKernel, x: Mat):
    if x.shape[0] != kernel.n:
        raise ShapeError(f"right factor has {x.shape[0]} rows, kernel expects {kernel.n}")


def circulant_column(kernel: ToeplitzKernel, size: int | None = None) -> np.ndarray:
    """First column of the circulant embedding: c_0, c_-1, ..., c_-(n-1), 0, ..., c_(n-1), ..., c_1."""
    n = kernel.n
    size = size or next_power_of_two(2 * n - 1)
    col = np.zeros(size)
    col[:n] = kernel.c[n - 1::-1]
    if n > 1:
        col[size - n + 1:] = kernel.c[n:][::-1]
    return col


def circulant_spectrum(kernel: ToeplitzKernel) -> np.ndarray:
    return fft(circulant_column(kernel))


def toeplitz_matmul(kernel: ToeplitzKernel, x, spectrum: np.ndarray | None = None) -> Mat:
    """T @ x through a circulant embedding.

    ``spectrum`` is the kernel's circulant FFT; pass it to reuse one transform
    across several right factors.
    """
    x = as_mat(x, "right factor")
    _check_rows(kernel, x)
    n, cols = x.shape
    if spectrum is None:
        spectrum = circulant_spectrum(kernel)
    size = spectrum.shape[0]
    if size < 2 * n - 1:
        raise ShapeError(f"spectrum length {size} too short for n={n}")
    out = np.empty((n, cols), dtype=x.dtype)
    batch = max(1, _BATCH_ELEMS // size)
    padded = np.zeros((size, min(batch, max(cols, 1))), dtype=x.dtype)
    for start in range(0, cols, batch):
        stop = min(cols, start + batch)
        width = stop - start
        padded[:n, :width] = x[:, start:stop]
        spec = fft(padded[:, :width])
        spec *= spectrum[:, None]
        out[:, start:stop] = fft(spec, inverse=True)[:n].real
    return out


def toeplitz_matmul_naive(kernel: ToeplitzKernel, x) -> Mat:
    """O(n^2) product, one output row per offset window; the oracle for ``toeplitz_matmul``."""
    x = as_mat(x, "right factor")
    _check_rows(kernel, x)
    n = kernel.n
    out = np.empty(x.shape, dtype=np.float64)
    for i in range(n):
        # row i of T is c_{-i}, ..., c_{n-1-i}
        out[i] = kernel.c[n - 1 - i:2 * n - 1 - i] @ x
    return out


def toeplitz_transpose_matmul(kernel: ToeplitzKernel, x, spectrum: np.ndarray | None = None) -> Mat:
    """T^T @ x; T^T is Toeplitz with the offset sequence reversed."""
    return toeplitz_matmul(kernel.transposed(), x, spectrum=spectrum)


def causal_mask(kernel: ToeplitzKernel) -> ToeplitzKernel:
    """Zero every c_k with k > 0, so row i never sees columns j > i."""
    c = kernel.c.copy()
    c[kernel.n:] = 0.0
    return ToeplitzKernel(kernel.n, c)


def diagonal_correlation(left, right) -> np.ndarray:
    """s_k = sum_i sum_p left[i, p] * right[i + k, p] for k = -(n-1) .. n-1.

    This is the gradient of <left, T @ right> with respect to c_k, computed
    as one FFT cross-correlation summed over columns.
    """
    left = as_mat(left, "left")
    right = as_mat(right, "right")
    if left.shape != right.shape:
        raise ShapeError(f"correlation operands differ: {left.shape} vs {right.shape}")
    n, cols = left.shape
    size = next_power_of_two(2 * n - 1)
    acc = np.zeros(size, dtype=np.complex128)
    batch = max(1, _BATCH_ELEMS // size)
    for start in range(0, cols, batch):
        stop = min(cols, start + batch)
        a = np.zeros((size, stop - start))
        b = np.zeros((size, stop - start))
        a[:n] = left[:, start:stop]
        b[:n] = right[:, start:stop]
        acc += (np.conj(fft(a)) * fft(b)).sum(axis=1)
    corr = fft(acc, inverse=True).real
    out = np.empty(2 * n - 1)
    out[n - 1:] = corr[:n]
    if n > 1:
        out[:n - 1] = corr[size - n + 1:]
    return out
