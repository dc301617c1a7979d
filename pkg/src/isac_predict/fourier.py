"""Unitary DFT/IDFT along a chosen axis of complex arrays.

Convention: both directions carry 1/sqrt(K), so idft(dft(x)) == x and energy
is preserved (Parseval). Channel synthesis and the preprocessor share this
single pair so delay-domain views agree everywhere.
"""

from __future__ import annotations

import numpy as np


def dft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unitary forward DFT along `axis`."""
    x = np.asarray(x)
    return np.fft.fft(x, axis=axis, norm="ortho")


def idft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Unitary inverse DFT along `axis`; exact inverse of `dft`."""
    x = np.asarray(x)
    return np.fft.ifft(x, axis=axis, norm="ortho")


def complex_to_real(x: np.ndarray, dtype=np.float32) -> np.ndarray:
    """Stack real/imag parts as a new leading size-2 axis."""
    x = np.asarray(x)
    return np.stack([x.real, x.imag], axis=0).astype(dtype)


def real_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of `complex_to_real`: leading size-2 axis back to complex."""
    x = np.asarray(x)
    if x.shape[0] != 2:
        raise ValueError(f"expected leading size-2 axis, got shape {x.shape}")
    return x[0] + 1j * x[1]
