"""Learning illumination patterns through the unrolled solver.

The K-iteration alternating-minimization reconstruction is treated as a
fixed feedforward computation. For a training batch x_1..x_N the objective
is

    L(theta) = sum_n || x_n - x_n^K(theta) ||_2^2 ,

where x_n^K is the solver output on measurements synthesized with masks
d_t = sigmoid(theta_t). The gradient is accumulated by a hand-written
reverse pass through every unrolled iteration, through the measurement
synthesis, and through the sigmoid; no autodiff framework is involved.

Two backpropagation modes:

* ``phase_detached`` (default): the per-iteration phase estimates are
  treated as constants, mirroring the alternating-minimization semantics
  (phase held fixed within each gradient step). Smooth everywhere.
* ``full``: the phase map z -> z/|z| is differentiated through its
  real-imaginary Jacobian wherever |z| > 0 (zero cotangent at z = 0).

Optimization uses a from-scratch bias-corrected Adam.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .forward_model import patterns_from_params, save_pattern_file, load_pattern_file
from .numerics import cphase, fft2u, ifft2u
from .solver import DivergenceError, SolverConfig

GRAD_MODES = ("phase_detached", "full")


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of the pattern-learning loop."""

    t_patterns: int = 4
    epochs: int = 500
    lr: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    batch_size: int | str = "full"
    grad_mode: str = "phase_detached"
    init_low: float = 0.0
    init_high: float = 1.0
    seed: int = 0
    solver: SolverConfig = field(default_factory=SolverConfig)
    checkpoint_every: int = 50
    checkpoint_dir: str | None = None

    def __post_init__(self):
        if self.t_patterns < 1:
            raise ValueError("t_patterns must be >= 1")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if not 0.0 < self.adam_beta1 < 1.0:
            raise ValueError("adam_beta1 must be in (0, 1)")
        if not 0.0 < self.adam_beta2 < 1.0:
            raise ValueError("adam_beta2 must be in (0, 1)")
        if self.adam_eps <= 0.0:
            raise ValueError("adam_eps must be positive")
        if self.grad_mode not in GRAD_MODES:
            raise ValueError(f"grad_mode must be one of {GRAD_MODES}")
        if self.batch_size != "full" and (
            not isinstance(self.batch_size, int) or self.batch_size < 1
        ):
            raise ValueError("batch_size must be 'full' or a positive int")


@dataclass
class AdamState:
    """First/second moment accumulators and the step counter."""

    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(m=np.zeros_like(params), v=np.zeros_like(params), t=0)


@dataclass
class TrainHistory:
    """Per-epoch loss and wall time, plus optional held-out PSNR."""

    losses: list = field(default_factory=list)
    seconds: list = field(default_factory=list)
    holdout_psnr: list = field(default_factory=list)

    def to_csv(self, path) -> None:
        lines = ["epoch,loss,seconds" + (",holdout_psnr" if self.holdout_psnr else "")]
        for i, (loss, sec) in enumerate(zip(self.losses, self.seconds), start=1):
            row = f"{i},{loss!r},{sec!r}"
            if self.holdout_psnr:
                row += f",{self.holdout_psnr[i - 1]!r}"
            lines.append(row)
        Path(path).write_text("\n".join(lines) + "\n")


def _as_batch(batch) -> np.ndarray:
    arr = np.stack([np.asarray(b, dtype=np.float64) for b in batch]) \
        if isinstance(batch, (list, tuple)) else np.asarray(batch, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"batch must stack to (N, H, W), got {arr.shape}")
    return arr


def _unrolled_forward(thetas, batch, k, alpha, keep_tape):
    """Run measurement synthesis plus K solver iterations.

    Returns (loss, x_final, tape). The tape keeps what the reverse pass
    needs: masks, measurements, spectra w, and per-iteration (x_prev, z).
    """
    x_gt = _as_batch(batch)
    d = patterns_from_params(thetas)
    t = d.shape[0]
    coef = 2.0 / t
    w = fft2u(d * x_gt[:, None])
    y = np.abs(w)
    x = np.zeros_like(x_gt)
    steps = []
    for _ in range(k):
        z = fft2u(d * x[:, None])
        p = cphase(z)
        b = ifft2u(p * y)
        g = coef * np.sum(d**2 * x[:, None] - d * np.real(b), axis=1)
        if keep_tape:
            steps.append((x, z))
        x = x - alpha * g
        if not np.all(np.isfinite(x)):
            raise DivergenceError("non-finite iterate in unrolled forward pass")
    loss = float(np.sum((x_gt - x) ** 2))
    tape = (x_gt, d, w, y, steps) if keep_tape else None
    return loss, x, tape


def unrolled_loss(thetas: np.ndarray, batch, cfg: TrainConfig) -> float:
    """sum_n ||x_n - x_n^K(theta)||^2 with measurements synthesized from theta."""
    alpha = cfg.solver.resolved_step(np.asarray(thetas).shape[0])
    loss, _, _ = _unrolled_forward(thetas, batch, cfg.solver.k, alpha, keep_tape=False)
    return loss


def pattern_gradient(
    thetas: np.ndarray, batch, cfg: TrainConfig
) -> np.ndarray:
    """dL/dtheta via reverse accumulation through the unrolled computation."""
    loss, grad = loss_and_gradient(thetas, batch, cfg)
    return grad


def loss_and_gradient(
    thetas: np.ndarray, batch, cfg: TrainConfig
) -> tuple[float, np.ndarray]:
    """One forward pass plus the reverse pass; returns (loss, dL/dtheta).

    Cotangent convention for a complex intermediate z: zbar holds
    dL/dRe(z) + i*dL/dIm(z). Under the unitary transforms the adjoint of
    ifft2u is fft2u and vice versa.
    """
    thetas = np.asarray(thetas, dtype=np.float64)
    k = cfg.solver.k
    t = thetas.shape[0]
    alpha = cfg.solver.resolved_step(t)
    full = cfg.grad_mode == "full"

    loss, x_final, tape = _unrolled_forward(thetas, batch, k, alpha, keep_tape=True)
    x_gt, d, w, y, steps = tape
    coef = 2.0 / t
    s = np.sum(d**2, axis=0)

    xbar = 2.0 * (x_final - x_gt)
    dbar = np.zeros_like(d)
    ybar = np.zeros_like(y)

    for x_prev, z in reversed(steps):
        p = cphase(z)
        b = ifft2u(p * y)
        gbar = -alpha * xbar
        # the gradient-step term g = coef * sum_t [d^2 x - d Re(b)]
        dbar += coef * np.sum(
            gbar[:, None] * (2.0 * d * x_prev[:, None] - np.real(b)), axis=0
        )
        bbar = (-coef) * d * gbar[:, None]  # cotangent lives in Re(b) only
        qbar = fft2u(bbar.astype(np.complex128))
        ybar += np.real(np.conj(p) * qbar)
        xbar_prev = xbar + coef * s * gbar
        if full:
            pbar = y * qbar
            r = np.abs(z)
            nz = r > 0.0
            zbar = np.zeros_like(z)
            np.divide(pbar, 2.0 * r, out=zbar, where=nz)
            corr = np.zeros_like(z)
            np.divide(z * z * np.conj(pbar), 2.0 * r**3, out=corr, where=nz)
            zbar -= corr
            ubar = np.real(ifft2u(zbar))
            dbar += np.sum(ubar * x_prev[:, None], axis=0)
            xbar_prev = xbar_prev + np.sum(d * ubar, axis=1)
        xbar = xbar_prev
        if not np.all(np.isfinite(xbar)):
            raise DivergenceError("non-finite cotangent in reverse pass")

    # measurement synthesis y = |F(d * x_gt)|
    aw = np.abs(w)
    wbar = np.zeros_like(w)
    np.divide(ybar * w, aw, out=wbar, where=aw > 0.0)
    vbar = np.real(ifft2u(wbar))
    dbar += np.sum(vbar * x_gt[:, None], axis=0)

    thetabar = dbar * d * (1.0 - d)
    if not np.all(np.isfinite(thetabar)):
        raise DivergenceError("non-finite pattern gradient")
    return loss, thetabar


def adam_step(
    state: AdamState, params: np.ndarray, grad: np.ndarray, cfg: TrainConfig
) -> tuple[AdamState, np.ndarray]:
    """One bias-corrected Adam update; returns fresh (state, params)."""
    if grad.shape != params.shape:
        raise ValueError(f"gradient shape {grad.shape} vs params {params.shape}")
    t = state.t + 1
    m = cfg.adam_beta1 * state.m + (1.0 - cfg.adam_beta1) * grad
    v = cfg.adam_beta2 * state.v + (1.0 - cfg.adam_beta2) * grad**2
    m_hat = m / (1.0 - cfg.adam_beta1**t)
    v_hat = v / (1.0 - cfg.adam_beta2**t)
    new_params = params - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.adam_eps)
    return AdamState(m=m, v=v, t=t), new_params


# ---------------------------------------------------------------------------
# Checkpointing: theta in the shared pattern file format, Adam state in a
# JSON sidecar {"t": int, "m": [...], "v": [...]} with the same plane layout.
# ---------------------------------------------------------------------------


def save_checkpoint(directory, thetas: np.ndarray, state: AdamState, epoch: int,
                    history: TrainHistory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_pattern_file(directory / "patterns_theta.json", thetas, "theta")
    sidecar = {"t": state.t, "m": state.m.ravel().tolist(), "v": state.v.ravel().tolist()}
    (directory / "adam_state.json").write_text(json.dumps(sidecar))
    meta = {
        "epoch": epoch,
        "losses": history.losses,
        "seconds": history.seconds,
        "holdout_psnr": history.holdout_psnr,
    }
    (directory / "checkpoint_meta.json").write_text(json.dumps(meta))


def load_checkpoint(directory) -> tuple[np.ndarray, AdamState, int, TrainHistory]:
    directory = Path(directory)
    thetas, kind = load_pattern_file(directory / "patterns_theta.json")
    if kind != "theta":
        raise ValueError("checkpoint pattern file must carry kind 'theta'")
    sidecar = json.loads((directory / "adam_state.json").read_text())
    m = np.asarray(sidecar["m"], dtype=np.float64).reshape(thetas.shape)
    v = np.asarray(sidecar["v"], dtype=np.float64).reshape(thetas.shape)
    state = AdamState(m=m, v=v, t=int(sidecar["t"]))
    meta = json.loads((directory / "checkpoint_meta.json").read_text())
    history = TrainHistory(
        losses=list(meta["losses"]),
        seconds=list(meta["seconds"]),
        holdout_psnr=list(meta.get("holdout_psnr") or []),
    )
    return thetas, state, int(meta["epoch"]), history


def init_params(cfg: TrainConfig, h: int, w: int) -> np.ndarray:
    """Seeded i.i.d. Uniform(init_low, init_high) theta stack."""
    rng = np.random.Generator(np.random.PCG64(cfg.seed))
    return rng.uniform(cfg.init_low, cfg.init_high, size=(cfg.t_patterns, h, w))


def _batches(n: int, batch_size) -> list[slice]:
    if batch_size == "full" or batch_size >= n:
        return [slice(0, n)]
    return [slice(i, min(i + batch_size, n)) for i in range(0, n, batch_size)]


def train(
    dataset,
    cfg: TrainConfig,
    holdout=None,
    resume_dir: str | None = None,
) -> tuple[np.ndarray, np.ndarray, TrainHistory]:
    """Run the pattern-learning loop; returns (theta, masks, history).

    Deterministic: the only randomness is the seeded theta initialization,
    and batches are visited in fixed index order. Resuming from a
    checkpoint written by this function reproduces the uninterrupted
    parameter trajectory bitwise (wall times differ).
    """
    data = _as_batch(dataset)
    if data.shape[0] == 0:
        raise ValueError("empty training dataset")
    n, h, w = data.shape

    if resume_dir is not None:
        thetas, state, start_epoch, history = load_checkpoint(resume_dir)
        if thetas.shape != (cfg.t_patterns, h, w):
            raise ValueError("checkpoint shape does not match config/dataset")
    else:
        thetas = init_params(cfg, h, w)
        state = AdamState.zeros_like(thetas)
        start_epoch = 0
        history = TrainHistory()

    for epoch in range(start_epoch + 1, cfg.epochs + 1):
        t0 = time.monotonic()
        epoch_loss = 0.0
        for sl in _batches(n, cfg.batch_size):
            try:
                loss, grad = loss_and_gradient(thetas, data[sl], cfg)
            except DivergenceError as exc:
                raise DivergenceError(f"epoch {epoch}: {exc}") from exc
            epoch_loss += loss
            state, thetas = adam_step(state, thetas, grad, cfg)
        history.losses.append(epoch_loss)
        history.seconds.append(time.monotonic() - t0)
        if holdout is not None:
            from .bench import mean_psnr_for_masks

            masks = patterns_from_params(thetas)
            history.holdout_psnr.append(
                mean_psnr_for_masks(masks, holdout, cfg.solver)
            )
        if (
            cfg.checkpoint_dir is not None
            and cfg.checkpoint_every > 0
            and epoch % cfg.checkpoint_every == 0
        ):
            save_checkpoint(cfg.checkpoint_dir, thetas, state, epoch, history)

    if cfg.checkpoint_dir is not None:
        save_checkpoint(cfg.checkpoint_dir, thetas, state, cfg.epochs, history)
    return thetas, patterns_from_params(thetas), history
