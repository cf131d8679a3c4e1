import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cdp_forge.numerics import (
    ShapeMismatchError,
    cabs,
    cconj,
    cmul,
    cphase,
    fft2u,
    ifft2u,
    inner,
    norm2,
)


def dft2_bruteforce(a: np.ndarray) -> np.ndarray:
    """O(n^2) direct DFT summation with unitary scaling; the oracle."""
    h, w = a.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for u in range(h):
        for v in range(w):
            acc = 0.0 + 0.0j
            for m in range(h):
                for n in range(w):
                    acc += a[m, n] * np.exp(-2j * np.pi * (u * m / h + v * n / w))
            out[u, v] = acc
    return out / np.sqrt(h * w)


def random_complex(rng, h, w):
    return rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))


class TestFFT:
    def test_constant_concentrates_at_dc(self):
        out = fft2u(np.ones((2, 2), dtype=complex))
        expected = np.zeros((2, 2), dtype=complex)
        expected[0, 0] = 2.0
        np.testing.assert_allclose(out, expected, atol=1e-14)

    def test_impulse_flat_spectrum(self):
        a = np.zeros((4, 4), dtype=complex)
        a[0, 0] = 1.0
        np.testing.assert_allclose(fft2u(a), np.full((4, 4), 0.25 + 0j), atol=1e-14)

    def test_matches_bruteforce_dft(self):
        rng = np.random.default_rng(42)
        a = random_complex(rng, 8, 8)
        np.testing.assert_allclose(fft2u(a), dft2_bruteforce(a), atol=1e-12)

    def test_ifft_matches_bruteforce_adjoint(self):
        rng = np.random.default_rng(43)
        a = random_complex(rng, 8, 8)
        np.testing.assert_allclose(ifft2u(a), dft2_bruteforce(a.conj()).conj(), atol=1e-12)

    def test_roundtrip(self):
        rng = np.random.default_rng(1)
        a = random_complex(rng, 8, 8)
        np.testing.assert_allclose(ifft2u(fft2u(a)), a, atol=1e-12)

    def test_zeros(self):
        np.testing.assert_array_equal(ifft2u(np.zeros((3, 5))), np.zeros((3, 5)))

    def test_dc_only_inverse(self):
        a = np.zeros((2, 2), dtype=complex)
        a[0, 0] = 2.0
        np.testing.assert_allclose(ifft2u(a), np.ones((2, 2)), atol=1e-14)

    def test_batched_axes(self):
        rng = np.random.default_rng(2)
        a = random_complex(rng, 4, 4)
        batched = fft2u(np.stack([a, 2 * a]))
        np.testing.assert_allclose(batched[0], fft2u(a), atol=1e-13)
        np.testing.assert_allclose(batched[1], 2 * fft2u(a), atol=1e-13)


@st.composite
def complex_planes(draw, max_side=8):
    h = draw(st.integers(1, max_side))
    w = draw(st.integers(1, max_side))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return random_complex(rng, h, w)


class TestFFTProperties:
    @given(complex_planes())
    @settings(max_examples=50, deadline=None)
    def test_parseval(self, a):
        assert abs(norm2(fft2u(a)) - norm2(a)) < 1e-10 * max(norm2(a), 1e-30)

    @given(complex_planes())
    @settings(max_examples=50, deadline=None)
    def test_roundtrip_property(self, a):
        np.testing.assert_allclose(ifft2u(fft2u(a)), a, atol=1e-12)

    @given(complex_planes(), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_adjoint_identity(self, a, seed):
        rng = np.random.default_rng(seed)
        b = random_complex(rng, *a.shape)
        lhs = inner(fft2u(a), b)
        rhs = inner(a, ifft2u(b))
        assert abs(lhs.real - rhs.real) < 1e-10
        assert abs(lhs.imag - rhs.imag) < 1e-10

    @given(complex_planes(), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_linearity(self, a, seed):
        rng = np.random.default_rng(seed)
        b = random_complex(rng, *a.shape)
        alpha, beta = rng.standard_normal(2)
        np.testing.assert_allclose(
            fft2u(alpha * a + beta * b),
            alpha * fft2u(a) + beta * fft2u(b),
            atol=1e-12,
        )


class TestElementwise:
    def test_cmul_hand_value(self):
        a = np.array([[1 + 2j]])
        b = np.array([[3 + 4j]])
        np.testing.assert_allclose(cmul(a, b), np.array([[-5 + 10j]]))

    def test_cabs_hand_value(self):
        np.testing.assert_allclose(cabs(np.array([[3 + 4j]])), np.array([[5.0]]))

    def test_cconj_involution(self):
        rng = np.random.default_rng(7)
        a = random_complex(rng, 6, 6)
        np.testing.assert_array_equal(cconj(cconj(a)), a)

    def test_cmul_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            cmul(np.ones((2, 2), complex), np.ones((3, 3), complex))

    def test_cphase_hand_value(self):
        np.testing.assert_allclose(cphase(np.array([[3 + 4j]])), np.array([[0.6 + 0.8j]]))

    def test_cphase_zero_convention(self):
        np.testing.assert_array_equal(cphase(np.zeros((2, 2))), np.ones((2, 2), complex))

    @given(complex_planes())
    @settings(max_examples=50, deadline=None)
    def test_cphase_unit_modulus(self, a):
        np.testing.assert_allclose(cabs(cphase(a)), np.ones(a.shape), atol=1e-12)
