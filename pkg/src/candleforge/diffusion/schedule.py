"""Forward-process noise schedule: linear betas and their cumulative alpha products."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class NoiseSchedule:
    betas: np.ndarray       # (T,) float64, strictly increasing in (0, 1)
    alphas_cum: np.ndarray  # (T,) float64, strictly decreasing in (0, 1)

    @property
    def T(self) -> int:
        return len(self.betas)


def make_schedule(T: int = 1000, beta_start: float = 1e-4,
                  beta_end: float = 0.02) -> NoiseSchedule:
    if T < 1:
        raise ValueError(f"T must be >= 1, got {T}")
    if not (0.0 < beta_start < beta_end < 1.0) and not (T == 1 and 0.0 < beta_start < 1.0):
        raise ValueError(f"need 0 < beta_start < beta_end < 1, got {beta_start}, {beta_end}")
    betas = np.linspace(beta_start, beta_end, T, dtype=np.float64)
    alphas_cum = np.cumprod(1.0 - betas)
    return NoiseSchedule(betas=betas, alphas_cum=alphas_cum)


def add_noise(x0: np.ndarray, t: int, eps: np.ndarray, schedule: NoiseSchedule) -> np.ndarray:
    """x_t = sqrt(abar_t) * x0 + sqrt(1 - abar_t) * eps."""
    if not (0 <= t < schedule.T):
        raise ValueError(f"t must be in [0, {schedule.T}), got {t}")
    abar = schedule.alphas_cum[t]
    return np.sqrt(abar) * x0 + np.sqrt(1.0 - abar) * eps
