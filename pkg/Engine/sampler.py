"""Reverse sampling with classifier-free guidance."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Callable, Optional, Protocol

import numpy as np
import torch
from torch import Tensor

from .errors import ConfigurationError, ParameterError
from .process import cfg_combine, posterior, recover_x0
from .schedule import NoiseSchedule


logger = logging.getLogger(__name__)

AUDIO_GUIDANCE = 2.5
TEXT_GUIDANCE = 3.0


@dataclass
class SamplerConfig:
    steps: int = 50
    guidance_scale: float = AUDIO_GUIDANCE
    seed: int = 0

    def validate(self, T: int) -> None:
        if not 1 <= self.steps <= T:
            raise ParameterError(f"sampler steps must be in [1, {T}], got {self.steps}")
        if self.guidance_scale < 0:
            raise ParameterError(f"guidance scale must be >= 0, got {self.guidance_scale}")


def default_guidance(modality: str) -> float:
    if modality == "text":
        return TEXT_GUIDANCE
    if modality == "audio":
        return AUDIO_GUIDANCE
    raise ParameterError(f"unknown reference modality {modality!r}")


class VelocityPredictor(Protocol):
    def __call__(self, x_t: Tensor, x_m: Tensor, ref: Tensor, t: Tensor) -> Tensor: ...

    def null_embedding(self) -> Any: ...


def inference_timesteps(T: int, steps: int) -> list[int]:
    """Descending uniform-stride subsequence of 1..T that always holds T and 1."""
    if not 1 <= steps <= T:
        raise ParameterError(f"steps must be in [1, {T}], got {steps}")
    if steps == 1:
        return [int(T)]
    grid = np.rint(np.linspace(T, 1, steps)).astype(np.int64)
    return [int(t) for t in sorted(set(grid.tolist()), reverse=True)]


def _as_tensor(embedding: Any, like: Tensor) -> Tensor:
    data = getattr(embedding, "data", embedding)
    return torch.as_tensor(data).to(device=like.device, dtype=like.dtype)


@torch.no_grad()
def sample(
    predictor: VelocityPredictor,
    mixture_latent: Tensor,
    ref: Any,
    s: NoiseSchedule,
    cfg: SamplerConfig,
    progress: Optional[Callable[[int, int], None]] = None,
) -> Tensor:
    """Draw a target latent for `mixture_latent` given a reference embedding.

    Noise is drawn on the CPU from one generator seeded with cfg.seed: x_T first,
    then one draw per non-final step. The final step adds no noise. `progress`
    is called once per visited timestep, the final one included.
    """
    if not s.rescaled:
        raise ConfigurationError("the sampler needs a zero-terminal-SNR (rescaled) schedule")
    cfg.validate(s.T)

    squeeze = mixture_latent.dim() == 2
    x_m = mixture_latent.unsqueeze(0) if squeeze else mixture_latent
    batch = x_m.shape[0]

    ref_vec = _as_tensor(ref, x_m)
    null_vec = _as_tensor(predictor.null_embedding(), x_m)
    if ref_vec.dim() == 1:
        ref_vec = ref_vec.unsqueeze(0).expand(batch, -1)
    null_vec = null_vec.reshape(1, -1).expand(batch, -1)

    generator = torch.Generator(device="cpu").manual_seed(int(cfg.seed))

    def draw() -> Tensor:
        noise = torch.randn(x_m.shape, generator=generator, dtype=torch.float64)
        return noise.to(device=x_m.device, dtype=x_m.dtype)

    x = draw()
    timesteps = inference_timesteps(s.T, cfg.steps)
    x0_hat = x
    for i, t in enumerate(timesteps):
        prev_t = timesteps[i + 1] if i + 1 < len(timesteps) else 0
        t_batch = torch.full((batch,), t, dtype=torch.long, device=x_m.device)
        v_cond = predictor(x, x_m, ref_vec, t_batch)
        v_uncond = predictor(x, x_m, null_vec, t_batch)
        v = cfg_combine(v_cond, v_uncond, cfg.guidance_scale)
        x0_hat = recover_x0(x, v, t, s)
        if progress is not None:
            progress(i, t)
        if prev_t == 0:
            break
        post = posterior(x, x0_hat, t, s, prev_t=prev_t)
        x = post.mean + post.variance**0.5 * draw()

    logger.debug("sampled %d steps (gamma=%.2f, seed=%d)", len(timesteps), cfg.guidance_scale, cfg.seed)
    return x0_hat.squeeze(0) if squeeze else x0_hat
