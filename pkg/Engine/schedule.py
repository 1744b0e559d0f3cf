"""Noise schedules: the beta / alpha / alpha-bar ladder and its zero-terminal-SNR rescale.

Timesteps are 1-based throughout (t = 1 .. T). Arrays are stored 0-based, so the
value for timestep t lives at index t - 1. alpha_bar at t = 0 is taken as 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from Storage.atomic import atomic_write_text

from .errors import NumericError, ParameterError


SCHEDULE_VERSION = 1


@dataclass(frozen=True)
class NoiseSchedule:
    T: int
    beta: np.ndarray
    alpha: np.ndarray
    alpha_bar: np.ndarray
    sqrt_alpha_bar: np.ndarray
    sqrt_one_minus_alpha_bar: np.ndarray
    rescaled: bool = False

    def check_timestep(self, t: int) -> int:
        t = int(t)
        if not 1 <= t <= self.T:
            raise ParameterError(f"timestep must be in [1, {self.T}], got {t}")
        return t

    def alpha_bar_at(self, t: int) -> float:
        """alpha_bar for timestep t, with alpha_bar_0 := 1."""
        t = int(t)
        if t == 0:
            return 1.0
        return float(self.alpha_bar[self.check_timestep(t) - 1])

    def sqrt_alpha_bar_at(self, t: int) -> float:
        if int(t) == 0:
            return 1.0
        return float(self.sqrt_alpha_bar[self.check_timestep(t) - 1])

    def sqrt_one_minus_alpha_bar_at(self, t: int) -> float:
        if int(t) == 0:
            return 0.0
        return float(self.sqrt_one_minus_alpha_bar[self.check_timestep(t) - 1])


def schedule_from_betas(beta: Any, rescaled: bool = False) -> NoiseSchedule:
    beta = np.asarray(beta, dtype=np.float64).reshape(-1)
    if beta.size < 2:
        raise ParameterError(f"a schedule needs at least 2 steps, got {beta.size}")
    if not np.all(np.isfinite(beta)) or np.any(beta <= 0.0) or np.any(beta > 1.0):
        raise ParameterError("every beta must lie in (0, 1]")
    alpha = 1.0 - beta
    alpha_bar = np.cumprod(alpha)
    return _from_alpha_bar(beta, alpha, alpha_bar, rescaled=rescaled)


def build_schedule(T: int, beta_start: float, beta_end: float) -> NoiseSchedule:
    """Scaled-linear schedule: beta interpolates linearly in sqrt(beta)."""
    if int(T) != T or T < 2:
        raise ParameterError(f"T must be an integer >= 2, got {T}")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}"
        )
    beta = np.linspace(np.sqrt(beta_start), np.sqrt(beta_end), int(T), dtype=np.float64) ** 2
    # squaring the square root is not exact in floating point
    beta[0] = beta_start
    beta[-1] = beta_end
    return schedule_from_betas(beta)


def rescale_terminal(s: NoiseSchedule) -> NoiseSchedule:
    """Shift and scale sqrt(alpha_bar) so the last step has zero SNR.

    sqrt(alpha_bar_1) keeps its value, sqrt(alpha_bar_T) becomes 0 and every
    step in between is mapped linearly.
    """
    if s.rescaled:
        raise ParameterError("schedule is already rescaled")
    old = s.sqrt_alpha_bar
    first, last = float(old[0]), float(old[-1])
    if not first > last:
        raise NumericError(
            f"degenerate schedule: sqrt_alpha_bar[1]={first} is not above sqrt_alpha_bar[T]={last}"
        )
    sqrt_ab = (old - last) * (first / (first - last))
    sqrt_ab[0] = first
    sqrt_ab[-1] = 0.0

    alpha_bar = sqrt_ab**2
    alpha = np.empty_like(alpha_bar)
    alpha[0] = alpha_bar[0]
    alpha[1:] = alpha_bar[1:] / alpha_bar[:-1]
    beta = 1.0 - alpha
    return _from_alpha_bar(beta, alpha, alpha_bar, rescaled=True, sqrt_alpha_bar=sqrt_ab)


def _from_alpha_bar(
    beta: np.ndarray,
    alpha: np.ndarray,
    alpha_bar: np.ndarray,
    rescaled: bool,
    sqrt_alpha_bar: np.ndarray | None = None,
) -> NoiseSchedule:
    if np.any(np.diff(alpha_bar) >= 0.0):
        raise NumericError("alpha_bar must be strictly decreasing")
    if sqrt_alpha_bar is None:
        sqrt_alpha_bar = np.sqrt(alpha_bar)
    sqrt_one_minus = np.sqrt(1.0 - alpha_bar)
    for array in (beta, alpha, alpha_bar, sqrt_alpha_bar, sqrt_one_minus):
        array.setflags(write=False)
    return NoiseSchedule(
        T=int(beta.size),
        beta=beta,
        alpha=alpha,
        alpha_bar=alpha_bar,
        sqrt_alpha_bar=sqrt_alpha_bar,
        sqrt_one_minus_alpha_bar=sqrt_one_minus,
        rescaled=rescaled,
    )


def schedule_to_dict(s: NoiseSchedule) -> dict[str, Any]:
    # rescaled tables store beta_T = 1, which rebuilds alpha_bar_T = 0 exactly
    return {
        "version": SCHEDULE_VERSION,
        "T": s.T,
        "beta": [float(b) for b in s.beta],
        "rescaled": bool(s.rescaled),
    }


def schedule_from_dict(payload: dict[str, Any]) -> NoiseSchedule:
    version = payload.get("version")
    if version != SCHEDULE_VERSION:
        raise ParameterError(f"unsupported schedule table version {version!r}")
    beta = np.asarray(payload["beta"], dtype=np.float64)
    if beta.size != int(payload["T"]):
        raise ParameterError(f"schedule table lists {beta.size} betas for T={payload['T']}")
    return schedule_from_betas(beta, rescaled=bool(payload.get("rescaled", False)))


def save_schedule(s: NoiseSchedule, path: str | Path) -> Path:
    text = yaml.safe_dump(schedule_to_dict(s), sort_keys=False)
    return atomic_write_text(path, text)


def load_schedule(path: str | Path) -> NoiseSchedule:
    payload = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    if not isinstance(payload, dict):
        raise ParameterError(f"schedule file does not hold a table: {path}")
    return schedule_from_dict(payload)
