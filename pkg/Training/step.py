from __future__ import annotations

from typing import Any, Mapping

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from Engine.errors import TrainingDivergedError
from Engine.process import batch_coefficients
from Engine.schedule import NoiseSchedule


def draw_training_noise(
    x0: Tensor, schedule: NoiseSchedule, generator: torch.Generator, uncond_fraction: float
) -> tuple[Tensor, Tensor, Tensor]:
    """Draw (t, eps, drop) on the CPU generator: t uniform in [1, T], eps ~ N(0, I), drop ~ Bernoulli."""
    batch = x0.shape[0]
    t = torch.randint(1, schedule.T + 1, (batch,), generator=generator)
    eps = torch.randn(x0.shape, generator=generator, dtype=torch.float64)
    drop = torch.rand(batch, generator=generator, dtype=torch.float64) < uncond_fraction
    return t, eps.to(device=x0.device, dtype=x0.dtype), drop.to(x0.device)


def training_step(
    batch: Mapping[str, Any],
    model: nn.Module,
    schedule: NoiseSchedule,
    generator: torch.Generator,
    uncond_fraction: float = 0.1,
) -> Tensor:
    """v-prediction loss on one batch; the reference is swapped for the null embedding per dropped item.

    The mixture latent is always given to the model.
    """
    x0, x_m, ref = batch["x0"], batch["x_m"], batch["ref"]
    t, eps, drop = draw_training_noise(x0, schedule, generator, uncond_fraction)

    a, b = batch_coefficients(schedule, t, x0)
    x_t = a * x0 + b * eps
    v_target = a * eps - b * x0

    null = model.null_embedding().to(ref.dtype).unsqueeze(0).expand_as(ref)
    ref = torch.where(drop.unsqueeze(-1), null, ref)

    v_pred = model(x_t, x_m, ref, t.to(x0.device))
    loss = F.mse_loss(v_pred, v_target)
    if not torch.isfinite(loss):
        raise TrainingDivergedError(
            f"non-finite training loss {loss.item()}",
            {
                "t": t.tolist(),
                "x0_norm": float(x0.detach().norm()),
                "x_m_norm": float(x_m.detach().norm()),
                "ref_norm": float(ref.detach().norm()),
                "v_pred_norm": float(v_pred.detach().norm()),
            },
        )
    return loss
