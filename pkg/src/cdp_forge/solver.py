"""Fixed-cost reconstruction from coded diffraction measurements.

The workhorse is alternating minimization with one gradient step per phase
refresh: estimate the measurement phase at the current iterate, then take a
gradient step on the phase-split quadratic loss

    L_{x,p} = (1/T) * sum_t || p_t * y_t - F(d_t * x) ||_2^2 .

Two classical baselines are included for comparison runs: an exact
least-squares alternating solver (Gerchberg-Saxton style) and Wirtinger
flow on the intensity loss.

Estimates are kept real (grayscale images); the update takes the real part
of the adjoint term, which is the exact gradient restricted to real x.

All entry points accept measurements shaped (T, H, W) for a single image
or (N, T, H, W) for a batch; batched inputs return (N, H, W) estimates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .numerics import ShapeMismatchError, cphase, fft2u, ifft2u

ALGORITHMS = ("altmin", "gs_exact", "wirtinger")


class DivergenceError(RuntimeError):
    """An iterate went non-finite (step size too large for the instance)."""


@dataclass(frozen=True)
class SolverConfig:
    """Reconstruction hyperparameters.

    step_size None resolves to 4/T at solve time (the grid-searched optimum
    alpha*T = 4). wf_step None resolves to 0.1/T. wf_init_seed seeds the
    small random start Wirtinger flow needs (zero is a stationary point of
    the intensity loss).
    """

    k: int = 50
    step_size: float | None = None
    algorithm: str = "altmin"
    record_trace: bool = False
    wf_step: float | None = None
    wf_init_std: float = 0.1
    wf_init_seed: int = 0

    def __post_init__(self):
        if self.k < 0:
            raise ValueError(f"iteration count must be >= 0, got {self.k}")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

    def resolved_step(self, t: int) -> float:
        return 4.0 / t if self.step_size is None else self.step_size

    def resolved_wf_step(self, t: int) -> float:
        return 0.1 / t if self.wf_step is None else self.wf_step


@dataclass
class SolveTrace:
    """Optional per-iteration diagnostics (residual loss, PSNR vs reference)."""

    losses: list = field(default_factory=list)
    psnrs: list = field(default_factory=list)


def _check_shapes(masks: np.ndarray, meas: np.ndarray) -> None:
    if meas.shape[-3:] != masks.shape:
        raise ShapeMismatchError(
            f"measurements {meas.shape} incompatible with patterns {masks.shape}"
        )


def _check_finite(x: np.ndarray, k: int) -> None:
    if not np.all(np.isfinite(x)):
        raise DivergenceError(f"non-finite iterate at iteration {k}")


def residual_loss(x: np.ndarray, masks: np.ndarray, meas: np.ndarray) -> float:
    """Amplitude residual (1/T) * sum_t ||y_t - |F(d_t*x)|||^2, summed over any batch."""
    x = np.asarray(x, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    meas = np.asarray(meas, dtype=np.float64)
    _check_shapes(masks, meas)
    if x.shape[-2:] != masks.shape[-2:]:
        raise ShapeMismatchError(f"signal {x.shape} vs patterns {masks.shape}")
    pred = np.abs(fft2u(x[..., None, :, :] * masks))
    t = masks.shape[0]
    return float(np.sum((meas - pred) ** 2) / t)


def phase_estimate(x: np.ndarray, d: np.ndarray) -> np.ndarray:
    """Unit-modulus phase of F(d * x) under the cphase(0)=1 convention."""
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if x.shape[-2:] != d.shape[-2:]:
        raise ShapeMismatchError(f"signal {x.shape} vs mask {d.shape}")
    return cphase(fft2u(d * x))


def _phases(x: np.ndarray, masks: np.ndarray) -> np.ndarray:
    """Stacked phase estimates for all T masks; x may be batched."""
    return cphase(fft2u(x[..., None, :, :] * masks))


def altmin_gradient(
    x: np.ndarray,
    masks: np.ndarray,
    phases: np.ndarray,
    meas: np.ndarray,
) -> np.ndarray:
    """Gradient of the phase-split loss at fixed phases, restricted to real x.

    (2/T) * sum_t [ d_t^2 * x - d_t * Re(F^{-1}(p_t * y_t)) ]
    """
    x = np.asarray(x, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    meas = np.asarray(meas, dtype=np.float64)
    _check_shapes(masks, meas)
    if phases.shape != meas.shape:
        raise ShapeMismatchError(f"phases {phases.shape} vs measurements {meas.shape}")
    t = masks.shape[0]
    back = np.real(ifft2u(phases * meas))
    term = masks**2 * x[..., None, :, :] - masks * back
    return (2.0 / t) * np.sum(term, axis=-3)


def solve_cdp(
    meas: np.ndarray,
    masks: np.ndarray,
    cfg: SolverConfig,
    reference: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveTrace]:
    """K alternating-minimization iterations from the zero estimate.

    Per iteration: refresh phases at the current iterate, then take one
    fixed-size gradient step. Deterministic for fixed inputs. Passing a
    reference image enables per-iteration PSNR in the trace.
    """
    if cfg.algorithm != "altmin":
        raise ValueError(f"solve_cdp drives 'altmin', got {cfg.algorithm!r}")
    masks = np.asarray(masks, dtype=np.float64)
    meas = np.asarray(meas, dtype=np.float64)
    _check_shapes(masks, meas)
    t = masks.shape[0]
    alpha = cfg.resolved_step(t)
    x = np.zeros(meas.shape[:-3] + meas.shape[-2:], dtype=np.float64)
    trace = SolveTrace()
    for k in range(1, cfg.k + 1):
        p = _phases(x, masks)
        with np.errstate(over="ignore", invalid="ignore"):
            x = x - alpha * altmin_gradient(x, masks, p, meas)
        _check_finite(x, k)
        if cfg.record_trace:
            trace.losses.append(residual_loss(x, masks, meas))
            if reference is not None:
                from .bench import psnr

                trace.psnrs.append(psnr(reference, x))
    return x, trace


def gs_exact_step(
    phases: np.ndarray, masks: np.ndarray, meas: np.ndarray
) -> np.ndarray:
    """Exact minimizer of the phase-split loss in x for fixed phases.

    x = Re(sum_t d_t * F^{-1}(p_t * y_t)) / sum_t d_t^2, elementwise.
    """
    masks = np.asarray(masks, dtype=np.float64)
    meas = np.asarray(meas, dtype=np.float64)
    _check_shapes(masks, meas)
    denom = np.sum(masks**2, axis=0)
    if np.any(denom < 1e-12):
        raise ValueError("degenerate masks: sum_t d_t^2 below 1e-12 somewhere")
    numer = np.sum(masks * np.real(ifft2u(phases * meas)), axis=-3)
    return numer / denom


def solve_gs(
    meas: np.ndarray,
    masks: np.ndarray,
    cfg: SolverConfig,
    reference: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveTrace]:
    """Alternating exact least-squares steps (Gerchberg-Saxton style)."""
    masks = np.asarray(masks, dtype=np.float64)
    meas = np.asarray(meas, dtype=np.float64)
    _check_shapes(masks, meas)
    x = np.zeros(meas.shape[:-3] + meas.shape[-2:], dtype=np.float64)
    trace = SolveTrace()
    for k in range(1, cfg.k + 1):
        p = _phases(x, masks)
        x = gs_exact_step(p, masks, meas)
        _check_finite(x, k)
        if cfg.record_trace:
            trace.losses.append(residual_loss(x, masks, meas))
            if reference is not None:
                from .bench import psnr

                trace.psnrs.append(psnr(reference, x))
    return x, trace


def wirtinger_gradient(
    x: np.ndarray, masks: np.ndarray, meas: np.ndarray
) -> np.ndarray:
    """Gradient of the intensity loss (1/T) * sum_t ||y_t^2 - |F(d_t*x)|^2||^2.

    (4/T) * sum_t d_t * Re(F^{-1}((|z_t|^2 - y_t^2) * z_t)), z_t = F(d_t*x).
    """
    x = np.asarray(x, dtype=np.float64)
    masks = np.asarray(masks, dtype=np.float64)
    meas = np.asarray(meas, dtype=np.float64)
    _check_shapes(masks, meas)
    z = fft2u(x[..., None, :, :] * masks)
    t = masks.shape[0]
    resid = (np.abs(z) ** 2 - meas**2) * z
    return (4.0 / t) * np.sum(masks * np.real(ifft2u(resid)), axis=-3)


def solve_wf(
    meas: np.ndarray,
    masks: np.ndarray,
    cfg: SolverConfig,
    reference: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveTrace]:
    """Wirtinger flow on the intensity loss.

    Starts from small i.i.d. Gaussian entries rather than zero: the zero
    signal is a stationary point of the intensity loss, so a zero start
    would never move.
    """
    masks = np.asarray(masks, dtype=np.float64)
    meas = np.asarray(meas, dtype=np.float64)
    _check_shapes(masks, meas)
    t = masks.shape[0]
    step = cfg.resolved_wf_step(t)
    rng = np.random.Generator(np.random.PCG64(cfg.wf_init_seed))
    shape = meas.shape[:-3] + meas.shape[-2:]
    x = rng.normal(0.0, cfg.wf_init_std, size=shape)
    trace = SolveTrace()
    for k in range(1, cfg.k + 1):
        x = x - step * wirtinger_gradient(x, masks, meas)
        _check_finite(x, k)
        if cfg.record_trace:
            trace.losses.append(residual_loss(x, masks, meas))
            if reference is not None:
                from .bench import psnr

                trace.psnrs.append(psnr(reference, x))
    return x, trace


def solve(
    meas: np.ndarray,
    masks: np.ndarray,
    cfg: SolverConfig,
    reference: np.ndarray | None = None,
) -> tuple[np.ndarray, SolveTrace]:
    """Dispatch on cfg.algorithm."""
    if cfg.algorithm == "altmin":
        return solve_cdp(meas, masks, cfg, reference)
    if cfg.algorithm == "gs_exact":
        return solve_gs(meas, masks, cfg, reference)
    return solve_wf(meas, masks, cfg, reference)
