"""Continuous cosine noise schedule, velocity parameterization, sampling.

Time runs over [0, 1] with alpha(0)=1, sigma(0)=0 at the clean end and
alpha(1)=0, sigma(1)=1 at pure noise; alpha^2 + sigma^2 = 1 everywhere.
The network predicts the velocity v = alpha*eps - sigma*x0, from which both
the clean latent and the noise are algebraically recoverable.  Sampling is
a deterministic reverse pass on a uniform time grid with classifier-free
guidance mixed at the velocity level.
"""

from __future__ import annotations

import numpy as np

from .autodiff import no_grad
from .errors import TempogenError
from .validation import ensure_rng

__all__ = [
    "OutOfRangeError",
    "noise_schedule",
    "q_sample",
    "velocity_target",
    "recover_x0",
    "recover_eps",
    "cfg_velocity",
    "cfg_sample",
]


class OutOfRangeError(TempogenError):
    pass


def noise_schedule(t):
    """Cosine schedule: (alpha, sigma) = (cos(pi t / 2), sin(pi t / 2))."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t < 0.0) or np.any(t > 1.0):
        raise OutOfRangeError(f"diffusion time must lie in [0, 1], got {t}")
    angle = 0.5 * np.pi * t
    return np.cos(angle), np.sin(angle)


def q_sample(x0: np.ndarray, eps: np.ndarray, t) -> np.ndarray:
    """Noisy latent x_t = alpha*x0 + sigma*eps."""
    alpha, sigma = noise_schedule(t)
    return alpha * x0 + sigma * eps


def velocity_target(x0: np.ndarray, eps: np.ndarray, t) -> np.ndarray:
    """Training target v = alpha*eps - sigma*x0."""
    x0, eps = np.asarray(x0), np.asarray(eps)
    if x0.shape != eps.shape:
        raise TempogenError(f"x0 shape {x0.shape} != eps shape {eps.shape}")
    alpha, sigma = noise_schedule(t)
    return alpha * eps - sigma * x0


def recover_x0(x_t: np.ndarray, v: np.ndarray, t) -> np.ndarray:
    alpha, sigma = noise_schedule(t)
    return alpha * x_t - sigma * v


def recover_eps(x_t: np.ndarray, v: np.ndarray, t) -> np.ndarray:
    alpha, sigma = noise_schedule(t)
    return sigma * x_t + alpha * v


def cfg_velocity(v_cond: np.ndarray, v_uncond: np.ndarray, scale: float) -> np.ndarray:
    """Guided velocity, affine in the scale.

    The endpoints return the inputs untouched so that scale 1 is bitwise
    the conditional prediction and scale 0 bitwise the unconditional one.
    """
    if scale == 1.0:
        return v_cond
    if scale == 0.0:
        return v_uncond
    return v_uncond + scale * (v_cond - v_uncond)


def cfg_sample(
    model,
    captions,
    t_mats,
    steps: int = 50,
    scale: float = 7.5,
    rng=None,
    frames: int | None = None,
) -> np.ndarray:
    """Deterministic reverse sampler with classifier-free guidance.

    captions / t_mats: per-item conditioning as in ``DiT.forward``.  Returns
    the final clean-latent estimate, shape (B, frames, latent_dim).  Given a
    seeded rng and fixed inputs the output is byte-reproducible.
    """
    if steps < 1:
        raise OutOfRangeError(f"steps must be >= 1, got {steps}")
    if scale < 0:
        raise OutOfRangeError(f"guidance scale must be >= 0, got {scale}")
    rng = ensure_rng(rng)
    b = len(captions)
    if len(t_mats) != b:
        raise TempogenError("captions and t_mats must have equal length")
    frames = frames if frames is not None else model.config.frames

    x = rng.standard_normal((b, frames, model.config.latent_dim))
    grid = np.linspace(1.0, 0.0, steps + 1)
    nones = [None] * b
    x0 = np.zeros_like(x)
    with no_grad():
        for t_now, t_next in zip(grid[:-1], grid[1:]):
            t_vec = np.full(b, t_now)
            if scale == 0.0:
                v = model.forward(x, t_vec, nones, nones).data
            elif scale == 1.0:
                v = model.forward(x, t_vec, t_mats, captions).data
            else:
                v_cond = model.forward(x, t_vec, t_mats, captions).data
                v_uncond = model.forward(x, t_vec, nones, nones).data
                v = cfg_velocity(v_cond, v_uncond, scale)
            x0 = recover_x0(x, v, t_now)
            eps = recover_eps(x, v, t_now)
            x = q_sample(x0, eps, t_next)
    return x0
