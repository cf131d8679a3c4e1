"""Complex 2D plane arithmetic and the unitary FFT pair.

All planes are float64 / complex128 numpy arrays. Every transform here is
orthonormal (scaled by 1/sqrt(H*W) in both directions) so that the adjoint
of the forward transform is exactly the inverse transform. The solver and
learning modules rely on that identity; do not swap in a differently
normalized FFT.

Functions accept arrays with extra leading (batch) axes; the transform and
elementwise ops always act on the last two axes.
"""

from __future__ import annotations

import numpy as np


class ShapeMismatchError(ValueError):
    """Operands do not share a common H x W footprint (caller bug)."""


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def as_complex_plane(a) -> np.ndarray:
    """Coerce to a finite complex128 array with at least 2 dims."""
    out = np.asarray(a, dtype=np.complex128)
    if out.ndim < 2:
        raise ValueError(f"expected a 2D plane, got ndim={out.ndim}")
    if not np.all(np.isfinite(out.view(np.float64))):
        raise ValueError("non-finite entries in complex plane")
    return out


def as_real_plane(a) -> np.ndarray:
    """Coerce to a finite float64 array with at least 2 dims."""
    out = np.asarray(a, dtype=np.float64)
    if out.ndim < 2:
        raise ValueError(f"expected a 2D plane, got ndim={out.ndim}")
    if not np.all(np.isfinite(out)):
        raise ValueError("non-finite entries in real plane")
    return out


def fft2u(a: np.ndarray) -> np.ndarray:
    """Unitary 2D DFT over the last two axes (norm preserved)."""
    return np.fft.fft2(np.asarray(a, dtype=np.complex128), norm="ortho")


def ifft2u(a: np.ndarray) -> np.ndarray:
    """Inverse of :func:`fft2u`; also its adjoint under the unitary scaling."""
    return np.fft.ifft2(np.asarray(a, dtype=np.complex128), norm="ortho")


def cmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Elementwise complex product."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _check_same_shape(a, b)
    return a * b


def cconj(a: np.ndarray) -> np.ndarray:
    """Elementwise complex conjugate."""
    return np.conj(np.asarray(a, dtype=np.complex128))


def cabs(a: np.ndarray) -> np.ndarray:
    """Elementwise complex modulus, returned as float64."""
    return np.abs(np.asarray(a, dtype=np.complex128))


def cphase(a: np.ndarray) -> np.ndarray:
    """Elementwise z/|z|, with the convention cphase(0) = 1+0i.

    The zero convention matters: the solver starts from the zero estimate,
    and a zero phase there would make the first gradient vanish identically.
    Phase 1 at zero turns the first iteration into a backprojection of the
    measurements instead.
    """
    a = np.asarray(a, dtype=np.complex128)
    mag = np.abs(a)
    out = np.ones_like(a)
    nz = mag > 0.0
    np.divide(a, mag, out=out, where=nz)
    return out


def norm2(a: np.ndarray) -> float:
    """Frobenius norm over all entries (real or complex)."""
    return float(np.linalg.norm(np.asarray(a).ravel()))


def inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Complex inner product <a, b> = sum(conj(a) * b)."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    _check_same_shape(a, b)
    return complex(np.vdot(a, b))
