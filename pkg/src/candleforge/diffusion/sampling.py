"""Ancestral Euler sampler with dual guidance (image scale and text scale).

The discrete schedule is mapped to noise levels sigma_t = sqrt((1-abar)/abar);
iterates live in the sigma-scaled frame and are rescaled by 1/sqrt(sigma^2+1)
before each denoiser call, matching how the forward process was trained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .schedule import NoiseSchedule

BRANCH_UNCOND = "uncond"  # text and image both dropped
BRANCH_IMAGE = "image"    # image kept, text dropped
BRANCH_FULL = "full"      # both kept


@dataclass(frozen=True)
class SamplerConfig:
    steps: int = 20
    text_guidance: float = 2.0
    image_guidance: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if not (np.isfinite(self.text_guidance) and np.isfinite(self.image_guidance)):
            raise ValueError("guidance scales must be finite")


def sigmas_from_schedule(schedule: NoiseSchedule) -> np.ndarray:
    abar = schedule.alphas_cum
    return np.sqrt((1.0 - abar) / abar)


def select_timesteps(T: int, steps: int) -> np.ndarray:
    """`steps` timestep indices, evenly spaced in index space, descending."""
    if steps > T:
        raise ValueError(f"steps ({steps}) must not exceed schedule length ({T})")
    return np.linspace(0, T - 1, steps).round().astype(np.int64)[::-1]


def guided_epsilon(eps_uncond, eps_img, eps_full,
                   image_scale: float, text_scale: float):
    """eps_uncond + s_I*(eps_img - eps_uncond) + s_T*(eps_full - eps_img).

    Evaluated in coefficient form so unit scales telescope exactly:
    with s_I = s_T = 1 the result is eps_full to the bit.
    """
    return (eps_uncond * (1.0 - image_scale)
            + eps_img * (image_scale - text_scale)
            + eps_full * text_scale)


def ancestral_step_sigmas(sigma: float, sigma_next: float) -> tuple[float, float]:
    """(sigma_down, sigma_up) with sigma_down^2 + sigma_up^2 = sigma_next^2."""
    if sigma_next <= 0.0:
        return 0.0, 0.0
    up_sq = sigma_next ** 2 * (sigma ** 2 - sigma_next ** 2) / sigma ** 2
    up = float(np.sqrt(up_sq))
    down = float(np.sqrt(sigma_next ** 2 - up_sq))
    return down, up


def sample(eps_fn, shape: tuple, sampler: SamplerConfig, schedule: NoiseSchedule,
           rng: np.random.Generator) -> np.ndarray:
    """Draw one latent. `eps_fn(x_model, t, branch)` returns the predicted noise
    for a guidance branch; branches whose guidance coefficient is zero are
    never evaluated."""
    sigmas = sigmas_from_schedule(schedule)
    ts = select_timesteps(schedule.T, sampler.steps)
    sigs = sigmas[ts]

    s_i = float(sampler.image_guidance)
    s_t = float(sampler.text_guidance)
    coeffs = {BRANCH_UNCOND: 1.0 - s_i, BRANCH_IMAGE: s_i - s_t, BRANCH_FULL: s_t}

    x = rng.standard_normal(shape) * sigs[0]
    for i, t in enumerate(ts):
        sigma = float(sigs[i])
        sigma_next = float(sigs[i + 1]) if i + 1 < len(ts) else 0.0
        x_model = x / np.sqrt(sigma * sigma + 1.0)
        parts = {b: eps_fn(x_model, int(t), b) for b, c in coeffs.items() if c != 0.0}
        some = next(iter(parts.values()))
        eps_tilde = guided_epsilon(parts.get(BRANCH_UNCOND, some),
                                   parts.get(BRANCH_IMAGE, some),
                                   parts.get(BRANCH_FULL, some), s_i, s_t)
        denoised = x - sigma * eps_tilde
        direction = (x - denoised) / sigma
        down, up = ancestral_step_sigmas(sigma, sigma_next)
        x = x + direction * (down - sigma)
        if up > 0.0:
            x = x + up * rng.standard_normal(shape)
    return x
