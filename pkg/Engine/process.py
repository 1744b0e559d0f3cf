"""Forward-process arithmetic under v-prediction.

Every operation takes latents as tensors of matching shape (N x C, or with a
leading batch dimension) and an integer timestep t in [1, T]. The `*_at`
variants take the sqrt(alpha_bar) coefficient directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import Tensor

from .errors import NumericError, ParameterError
from .schedule import NoiseSchedule


@dataclass
class Posterior:
    mean: Tensor
    variance: float


def _check_shapes(a: Tensor, b: Tensor, names: str) -> None:
    if a.shape != b.shape:
        raise ParameterError(f"shape mismatch between {names}: {tuple(a.shape)} vs {tuple(b.shape)}")


def _coefficients(s: NoiseSchedule, t: int) -> tuple[float, float]:
    s.check_timestep(t)
    return s.sqrt_alpha_bar_at(t), s.sqrt_one_minus_alpha_bar_at(t)


def _split(alpha_bar: float) -> tuple[float, float]:
    if not 0.0 <= alpha_bar <= 1.0:
        raise ParameterError(f"alpha_bar must lie in [0, 1], got {alpha_bar}")
    return math.sqrt(alpha_bar), math.sqrt(1.0 - alpha_bar)


def forward_sample_at(x0: Tensor, eps: Tensor, alpha_bar: float) -> Tensor:
    _check_shapes(x0, eps, "x0 and eps")
    a, b = _split(alpha_bar)
    return a * x0 + b * eps


def velocity_at(x0: Tensor, eps: Tensor, alpha_bar: float) -> Tensor:
    _check_shapes(x0, eps, "x0 and eps")
    a, b = _split(alpha_bar)
    return a * eps - b * x0


def recover_x0_at(x_t: Tensor, v: Tensor, alpha_bar: float) -> Tensor:
    _check_shapes(x_t, v, "x_t and v")
    a, b = _split(alpha_bar)
    return a * x_t - b * v


def forward_sample(x0: Tensor, eps: Tensor, t: int, s: NoiseSchedule) -> Tensor:
    _check_shapes(x0, eps, "x0 and eps")
    a, b = _coefficients(s, t)
    return a * x0 + b * eps


def velocity(x0: Tensor, eps: Tensor, t: int, s: NoiseSchedule) -> Tensor:
    _check_shapes(x0, eps, "x0 and eps")
    a, b = _coefficients(s, t)
    return a * eps - b * x0


def recover_x0(x_t: Tensor, v: Tensor, t: int, s: NoiseSchedule) -> Tensor:
    _check_shapes(x_t, v, "x_t and v")
    a, b = _coefficients(s, t)
    return a * x_t - b * v


def recover_noise(x_t: Tensor, v: Tensor, t: int, s: NoiseSchedule) -> Tensor:
    _check_shapes(x_t, v, "x_t and v")
    a, b = _coefficients(s, t)
    return b * x_t + a * v


def posterior_coefficients(
    s: NoiseSchedule, t: int, prev_t: int | None = None
) -> tuple[float, float, float]:
    """Return (coef_x0, coef_xt, variance) of q(x_prev | x_t, x0).

    prev_t defaults to t - 1. When stepping along a subsequence, beta and alpha
    are the effective values between the two visited steps.
    """
    s.check_timestep(t)
    if prev_t is None:
        prev_t = t - 1
    if not 0 <= prev_t < t:
        raise ParameterError(f"previous timestep must be in [0, {t}), got {prev_t}")

    alpha_bar_t = s.alpha_bar_at(t)
    alpha_bar_prev = s.alpha_bar_at(prev_t)
    if prev_t == t - 1 and prev_t > 0:
        beta_t = float(s.beta[t - 1])
        alpha_t = float(s.alpha[t - 1])
    else:
        alpha_t = alpha_bar_t / alpha_bar_prev
        beta_t = 1.0 - alpha_t

    denom = 1.0 - alpha_bar_t
    if denom <= 0.0:
        raise NumericError(f"1 - alpha_bar is zero at t={t}; posterior undefined")
    variance = (1.0 - alpha_bar_prev) / denom * beta_t
    coef_x0 = math.sqrt(alpha_bar_prev) * beta_t / denom
    coef_xt = math.sqrt(alpha_t) * (1.0 - alpha_bar_prev) / denom
    return coef_x0, coef_xt, max(variance, 0.0)


def posterior(
    x_t: Tensor, x0: Tensor, t: int, s: NoiseSchedule, prev_t: int | None = None
) -> Posterior:
    _check_shapes(x_t, x0, "x_t and x0")
    coef_x0, coef_xt, variance = posterior_coefficients(s, t, prev_t)
    return Posterior(mean=coef_x0 * x0 + coef_xt * x_t, variance=variance)


def cfg_combine(v_cond: Tensor, v_uncond: Tensor, gamma: float) -> Tensor:
    _check_shapes(v_cond, v_uncond, "v_cond and v_uncond")
    if gamma < 0:
        raise ParameterError(f"guidance scale must be >= 0, got {gamma}")
    if gamma == 1:
        return v_cond.clone()
    if gamma == 0:
        return v_uncond.clone()
    return v_uncond + gamma * (v_cond - v_uncond)


def batch_coefficients(s: NoiseSchedule, t: Tensor, like: Tensor) -> tuple[Tensor, Tensor]:
    """Per-item sqrt(alpha_bar_t) and sqrt(1 - alpha_bar_t), broadcastable against `like`."""
    t = torch.as_tensor(t).reshape(-1).long().cpu()
    if t.numel() and (int(t.min()) < 1 or int(t.max()) > s.T):
        raise ParameterError(f"timesteps must lie in [1, {s.T}]")
    index = (t - 1).numpy()
    shape = (-1,) + (1,) * (like.dim() - 1)
    a = torch.as_tensor(s.sqrt_alpha_bar[index], dtype=like.dtype, device=like.device).reshape(shape)
    b = torch.as_tensor(s.sqrt_one_minus_alpha_bar[index], dtype=like.dtype, device=like.device).reshape(shape)
    return a, b
