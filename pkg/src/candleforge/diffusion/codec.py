"""Fixed deterministic latent codec: 4x space-to-depth + seeded orthonormal projection.

Stands in for a frozen pretrained autoencoder: same latent geometry (4 channels
at 1/4 resolution), deterministic, and linear. Reconstruction is lossy; both
training and sampling run through this same codec, so the loss is shared.
"""

from __future__ import annotations

import numpy as np

CODEC_SEED = 1105
BLOCK = 4
LATENT_CHANNELS = 4


def projection_matrix(seed: int = CODEC_SEED) -> np.ndarray:
    """Row-orthonormal (4, 48) projection, fixed by seed: P @ P.T = I."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((BLOCK * BLOCK * 3, LATENT_CHANNELS))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))  # canonical sign, independent of LAPACK conventions
    return np.ascontiguousarray(q.T)


def encode_latent(image: np.ndarray, matrix: np.ndarray | None = None) -> np.ndarray:
    """(H, W, 3) pixel-scale image -> (4, H/4, W/4) float32 latent."""
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected (H, W, 3) image, got {image.shape}")
    h, w = image.shape[:2]
    if h % BLOCK or w % BLOCK:
        raise ValueError(f"image dimensions must be divisible by {BLOCK}, got {h}x{w}")
    p = projection_matrix() if matrix is None else matrix
    x = image.astype(np.float64) / 127.5 - 1.0
    # (H/4, 4, W/4, 4, 3) -> channel-major blocks (48, H/4, W/4)
    blocks = x.reshape(h // BLOCK, BLOCK, w // BLOCK, BLOCK, 3)
    stacked = blocks.transpose(1, 3, 4, 0, 2).reshape(BLOCK * BLOCK * 3, h // BLOCK, w // BLOCK)
    latent = np.tensordot(p, stacked, axes=(1, 0))
    return latent.astype(np.float32)


def decode_latent(latent: np.ndarray, matrix: np.ndarray | None = None,
                  quantize: bool = True) -> np.ndarray:
    """(4, h, w) latent -> (4h, 4w, 3) uint8 image; zero latent decodes to mid-gray.

    With quantize=False the continuous pixel-scale float image is returned,
    which re-encodes to the same latent (the projection has orthonormal rows).
    """
    if latent.ndim != 3 or latent.shape[0] != LATENT_CHANNELS:
        raise ValueError(f"expected (4, h, w) latent, got {latent.shape}")
    p = projection_matrix() if matrix is None else matrix
    _, h, w = latent.shape
    stacked = np.tensordot(p.T, latent.astype(np.float64), axes=(1, 0))
    blocks = stacked.reshape(BLOCK, BLOCK, 3, h, w).transpose(3, 0, 4, 1, 2)
    x = blocks.reshape(h * BLOCK, w * BLOCK, 3)
    pixels = (x + 1.0) * 127.5
    if not quantize:
        return pixels
    return np.rint(np.clip(pixels, 0.0, 255.0)).astype(np.uint8)
