"""Iterative radix-2 FFT over axis 0.

A ComplexBuf is a complex ndarray whose first axis has power-of-two length;
trailing axes are independent signals transformed together.
"""
from __future__ import annotations

import contextlib
from functools import lru_cache

import numpy as np
import numpy.typing as npt

from fastrpe.shared.errors import ShapeError

ComplexBuf = npt.NDArray[np.complexfloating]

_twiddle_fault = False


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def next_power_of_two(n: int) -> int:
    return 1 if n <= 1 else 1 << (int(n) - 1).bit_length()


@lru_cache(maxsize=64)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=256)
def _twiddles(size: int, inverse: bool, fault: bool) -> np.ndarray:
    half = size // 2
    sign = 1.0 if inverse else -1.0
    tw = np.exp(sign * 2j * np.pi * np.arange(half) / size)
    if fault and half >= 2:
        tw = tw.copy()
        tw[-1] = -tw[-1]
    tw.setflags(write=False)
    return tw


@contextlib.contextmanager
def twiddle_fault():
    """Flip the sign of one twiddle per stage; a sabotage hook for selftest."""
    global _twiddle_fault
    previous = _twiddle_fault
    _twiddle_fault = True
    try:
        yield
    finally:
        _twiddle_fault = previous


def fft(buf, inverse: bool = False) -> ComplexBuf:
    """Forward: X_k = sum_t x_t exp(-2 pi i k t / N). Inverse carries the 1/N."""
    x = np.asarray(buf)
    dtype = np.complex64 if x.dtype in (np.float32, np.complex64) else np.complex128
    n = x.shape[0] if x.ndim else 0
    if not is_power_of_two(n):
        raise ShapeError(f"FFT length must be a power of two, got {n}")
    tail = x.shape[1:]
    out = x[_bit_reversal(n)].astype(dtype, copy=False)
    out = np.ascontiguousarray(out)
    expand = (slice(None),) + (None,) * len(tail)
    size = 2
    while size <= n:
        half = size // 2
        tw = _twiddles(size, inverse, _twiddle_fault).astype(dtype, copy=False)[expand]
        blocks = out.reshape((n // size, size) + tail)
        even = blocks[:, :half]
        odd = blocks[:, half:] * tw
        top = even + odd
        blocks[:, half:] = even - odd
        blocks[:, :half] = top
        size *= 2
    if inverse:
        out /= n
    return out


def dft_naive(buf, inverse: bool = False) -> ComplexBuf:
    """O(N^2) DFT, the oracle for ``fft``."""
    x = np.asarray(buf, dtype=np.complex128)
    n = x.shape[0]
    sign = 1.0 if inverse else -1.0
    k = np.arange(n)
    basis = np.exp(sign * 2j * np.pi * np.outer(k, k) / n)
    out = np.tensordot(basis, x, axes=(1, 0))
    return out / n if inverse else out
