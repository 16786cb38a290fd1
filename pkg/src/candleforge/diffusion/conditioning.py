"""Prompt conditioning: parsed RSI/MACD values mapped to a fixed sinusoidal code.

The prompt carries exactly two scalars, so the conditioning pathway is a small
feature vector rather than a token sequence: RSI is squashed to [0, 1], MACD
through tanh at a configurable scale, and each gets half the feature width.
Dropped-out text resolves to a learned null embedding stored with the weights.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset_builder import parse_prompt

MACD_SCALE = 1000.0


@dataclass(frozen=True)
class Conditioning:
    features: np.ndarray | None  # (cond_width,) or None until the null vector is resolved
    is_null_text: bool = False
    is_null_image: bool = False


def encode_scalar(value: float, dim: int) -> np.ndarray:
    """Sinusoidal features of one scalar over `dim` dimensions (half sin, half cos)."""
    if dim < 2 or dim % 2:
        raise ValueError(f"scalar feature dim must be even and >= 2, got {dim}")
    half = dim // 2
    freqs = np.exp(np.linspace(0.0, np.log(100.0), half))
    angles = value * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)])


def embed_condition(prompt: str | None, null_text: bool = False, *,
                    width: int = 16, macd_scale: float = MACD_SCALE,
                    null_embedding: np.ndarray | None = None) -> Conditioning:
    """Deterministic features for a prompt; null_text swaps in the null embedding."""
    if null_text:
        features = None if null_embedding is None else np.array(null_embedding, copy=True)
        return Conditioning(features=features, is_null_text=True)
    if prompt is None:
        raise ValueError("prompt required unless null_text is set")
    rsi, macd = parse_prompt(prompt)
    v_rsi = float(rsi) / 100.0
    v_macd = float(np.tanh(float(macd) / macd_scale))
    features = np.concatenate([
        encode_scalar(v_rsi, width // 2),
        encode_scalar(v_macd, width // 2),
    ])
    return Conditioning(features=features)
