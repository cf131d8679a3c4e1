"""Coded diffraction forward model.

A signal x (H x W, real) is modulated by T illumination masks d_t in [0,1]
and the sensor records the Fourier amplitude of each modulated copy:

    y_t = |F(d_t * x)|      with F the unitary 2D DFT.

Masks are parametrized through a sigmoid over unconstrained parameters
theta_t, which keeps them strictly inside (0,1) during learning.

Pattern stacks are stored as (T, H, W) float64 arrays. Signals may carry
leading batch axes; measurements then come out as (..., T, H, W).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .numerics import ShapeMismatchError, cabs, fft2u

RNG_ALGORITHM = "numpy-pcg64"  # recorded in reports so noise draws are replayable

NOISE_KINDS = ("none", "gaussian", "poisson")


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement-noise description for test-time evaluation.

    target_snr_db is the ratio (in dB) of clean measurement energy to the
    expected noise energy, summed over all T*H*W measurement entries of one
    signal. Training always uses noiseless measurements.
    """

    kind: str = "none"
    target_snr_db: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.kind != "none" and not np.isfinite(self.target_snr_db):
            raise ValueError("target_snr_db must be finite")


def check_pattern_stack(masks: np.ndarray, *, unit_range: bool = True) -> np.ndarray:
    """Validate a (T, H, W) mask stack; optionally enforce entries in [0,1]."""
    masks = np.asarray(masks, dtype=np.float64)
    if masks.ndim != 3 or masks.shape[0] < 1:
        raise ValueError(f"pattern stack must be (T, H, W) with T >= 1, got {masks.shape}")
    if not np.all(np.isfinite(masks)):
        raise ValueError("non-finite pattern entries")
    if unit_range and (masks.min() < 0.0 or masks.max() > 1.0):
        raise ValueError("mask entries must lie in [0, 1]")
    return masks


def ground_truth_signal(plane) -> np.ndarray:
    """Validate a ground-truth image: finite, 2D, entries in [0,1]."""
    x = np.asarray(plane, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"signal must be 2D, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite signal entries")
    if x.min() < 0.0 or x.max() > 1.0:
        raise ValueError("ground-truth entries must lie in [0, 1]")
    return x


def sigmoid(t: np.ndarray) -> np.ndarray:
    """Numerically stable logistic function."""
    t = np.asarray(t, dtype=np.float64)
    out = np.empty_like(t)
    pos = t >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-t[pos]))
    et = np.exp(t[~pos])
    out[~pos] = et / (1.0 + et)
    return out


def patterns_from_params(thetas: np.ndarray) -> np.ndarray:
    """Map unconstrained parameters to masks: d_t = sigmoid(theta_t)."""
    thetas = np.asarray(thetas, dtype=np.float64)
    if thetas.ndim != 3 or thetas.shape[0] < 1:
        raise ValueError(f"theta stack must be (T, H, W), got {thetas.shape}")
    if not np.all(np.isfinite(thetas)):
        raise ValueError("non-finite theta entries")
    d = sigmoid(thetas)
    # sigmoid saturates below 1.0 in float64 only for |t| < ~36; clamp the
    # tails back into the open interval so downstream invariants hold
    tiny = np.finfo(np.float64).tiny
    eps = np.finfo(np.float64).eps
    return np.clip(d, tiny, 1.0 - eps)


def modulated_spectra(x: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """z_t = F(d_t * x) for every mask; x may carry leading batch axes."""
    x = np.asarray(x, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    if x.shape[-2:] != masks.shape[-2:]:
        raise ShapeMismatchError(
            f"signal {x.shape[-2:]} vs pattern {masks.shape[-2:]}"
        )
    return fft2u(x[..., None, :, :] * masks)


def measure(x: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Noiseless amplitude measurements y_t = |F(d_t * x)|, shape (..., T, H, W)."""
    return cabs(modulated_spectra(x, masks))


def gaussian_sigma(z: np.ndarray, target_snr_db: float) -> float:
    """Per-entry noise std for i.i.d. Gaussian noise at the target SNR."""
    energy = float(np.sum(np.abs(z) ** 2))
    m_total = z.size
    return float(np.sqrt(energy / (m_total * 10.0 ** (target_snr_db / 10.0))))

def poisson_lambda(z: np.ndarray, target_snr_db: float) -> float:
    """Scale lambda for the Poisson surrogate eta_i ~ N(0, lambda*|z_i|).

    Expected noise energy is lambda * sum|z|, so lambda solves
    sum|z|^2 / (lambda * sum|z|) = 10^(SNR/10).
    """
    amp = np.abs(z)
    total_amp = float(np.sum(amp))
    if total_amp == 0.0:
        return 0.0
    return float(np.sum(amp**2) / (total_amp * 10.0 ** (target_snr_db / 10.0)))


def add_noise(x: np.ndarray, masks: np.ndarray, spec: NoiseSpec) -> np.ndarray:
    """Noisy measurements max(0, |z| + eta); kind='none' returns clean measure().

    Draws come from a PCG64 generator seeded with spec.seed, so identical
    specs produce bitwise-identical measurements.
    """
    z = modulated_spectra(x, masks)
    amp = np.abs(z)
    if spec.kind == "none":
        return amp
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    if spec.kind == "gaussian":
        sigma = gaussian_sigma(z, spec.target_snr_db)
        eta = rng.normal(0.0, sigma, size=amp.shape)
    else:  # poisson surrogate
        lam = poisson_lambda(z, spec.target_snr_db)
        eta = rng.normal(0.0, 1.0, size=amp.shape) * np.sqrt(lam * amp)
    return np.maximum(amp + eta, 0.0)


# ---------------------------------------------------------------------------
# Pattern file format (shared with the learning module):
# {"height": H, "width": W, "count": T, "kind": "theta"|"mask",
#  "data": [row-major float64, plane by plane]}
# ---------------------------------------------------------------------------

PATTERN_KINDS = ("theta", "mask")


def save_pattern_file(path, stack: np.ndarray, kind: str) -> None:
    """Write a (T, H, W) stack as a pattern JSON document."""
    if kind not in PATTERN_KINDS:
        raise ValueError(f"kind must be one of {PATTERN_KINDS}, got {kind!r}")
    stack = np.asarray(stack, dtype=np.float64)
    if stack.ndim != 3:
        raise ValueError(f"pattern stack must be (T, H, W), got {stack.shape}")
    t, h, w = stack.shape
    doc = {
        "height": h,
        "width": w,
        "count": t,
        "kind": kind,
        "data": stack.ravel().tolist(),
    }
    Path(path).write_text(json.dumps(doc))


def load_pattern_file(path) -> tuple[np.ndarray, str]:
    """Read a pattern JSON document; returns ((T, H, W) stack, kind)."""
    doc = json.loads(Path(path).read_text())
    for key in ("height", "width", "count", "kind", "data"):
        if key not in doc:
            raise ValueError(f"pattern file missing field {key!r}")
    kind = doc["kind"]
    if kind not in PATTERN_KINDS:
        raise ValueError(f"bad pattern kind {kind!r}")
    h, w, t = int(doc["height"]), int(doc["width"]), int(doc["count"])
    data = np.asarray(doc["data"], dtype=np.float64)
    if data.size != t * h * w:
        raise ValueError(
            f"pattern file declares {t}x{h}x{w} entries but carries {data.size}"
        )
    stack = data.reshape(t, h, w)
    if kind == "mask":
        check_pattern_stack(stack, unit_range=True)
    elif not np.all(np.isfinite(stack)):
        raise ValueError("non-finite theta entries in pattern file")
    return stack, kind
