"""Epsilon-prediction training objective and a seeded Adam loop.

All randomness in a run flows through one numpy Generator, so identical
settings and seed reproduce the loss trajectory and final weights bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .conditioning import MACD_SCALE, embed_condition
from .schedule import NoiseSchedule
from .unet import UNet

# guidance dropout: P(drop text only), P(drop image only), P(drop both)
DROPOUT_TEXT = 0.05
DROPOUT_IMAGE = 0.05
DROPOUT_BOTH = 0.05


@dataclass(frozen=True)
class TrainSettings:
    steps: int = 500
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0


def training_loss(params, unet: UNet, schedule: NoiseSchedule, batch, rng,
                  *, macd_scale: float = MACD_SCALE, want_grads: bool = False):
    """Mean squared error between drawn and predicted noise for one mini-batch.

    `batch` is a sequence of (input_latent, edited_latent, prompt) triples.
    Per sample: t ~ U[0, T), eps ~ N(0, I), guidance dropout applied, and the
    noisy edited latent is concatenated with the (possibly zeroed) input
    latent along channels.
    """
    batch = list(batch)
    if not batch:
        raise ValueError("batch must be nonempty")
    dtype = params["stem.w"].dtype
    inputs = np.stack([np.asarray(b[0], dtype=dtype) for b in batch])
    editeds = np.stack([np.asarray(b[1], dtype=dtype) for b in batch])
    feats = np.stack([
        embed_condition(b[2], width=unet.cfg.cond_width, macd_scale=macd_scale).features
        for b in batch
    ]).astype(dtype)

    n = len(batch)
    t = rng.integers(0, schedule.T, size=n)
    eps = rng.standard_normal(editeds.shape, dtype=dtype)
    u = rng.random(n)
    null_text = u < DROPOUT_TEXT
    null_image = (u >= DROPOUT_TEXT) & (u < DROPOUT_TEXT + DROPOUT_IMAGE)
    both = (u >= DROPOUT_TEXT + DROPOUT_IMAGE) \
        & (u < DROPOUT_TEXT + DROPOUT_IMAGE + DROPOUT_BOTH)
    null_text = null_text | both
    null_image = null_image | both

    abar = schedule.alphas_cum[t]
    x_t = (np.sqrt(abar)[:, None, None, None] * editeds
           + np.sqrt(1.0 - abar)[:, None, None, None] * eps).astype(dtype)
    cond_input = inputs.copy()
    cond_input[null_image] = 0.0
    x = np.concatenate([x_t, cond_input], axis=1)

    out, tape = unet.forward(params, x, t, feats, null_text, want_tape=want_grads)
    r = out - eps
    loss = float(np.mean(r.astype(np.float64) ** 2))
    if not want_grads:
        return loss
    dout = ((2.0 / r.size) * r).astype(dtype)
    grads, _ = unet.backward(params, tape, dout)
    return loss, grads


class Adam:
    """Plain Adam with bias correction; state dtype follows the parameters."""

    def __init__(self, params, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, params, grads) -> None:
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            params[k] = p - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def train(unet: UNet, schedule: NoiseSchedule, dataset, settings: TrainSettings,
          *, params=None, macd_scale: float = MACD_SCALE, log_rows=None):
    """Run the optimization loop over (input_latent, edited_latent, prompt) triples.

    Returns (params, losses). A fresh zero-init network is created unless
    `params` is passed. `log_rows`, when given, receives one
    (step, loss, lr, seed) tuple per optimizer step.
    """
    dataset = list(dataset)
    if not dataset:
        raise ValueError("dataset must be nonempty")
    from ..util import derive_seed

    if params is None:
        params = unet.init_params(derive_seed(settings.seed, "init"), dtype=np.float32)
    rng = np.random.default_rng(derive_seed(settings.seed, "train"))
    opt = Adam(params, lr=settings.lr, beta1=settings.beta1,
               beta2=settings.beta2, eps=settings.eps)

    losses = []
    for step in range(settings.steps):
        idx = rng.integers(0, len(dataset), size=settings.batch_size)
        batch = [dataset[i] for i in idx]
        loss, grads = training_loss(params, unet, schedule, batch, rng,
                                    macd_scale=macd_scale, want_grads=True)
        if not np.isfinite(loss):
            raise RuntimeError(f"non-finite loss {loss} at step {step}; aborting")
        opt.step(params, grads)
        losses.append(loss)
        if log_rows is not None:
            log_rows.append((step, loss, settings.lr, settings.seed))
    return params, losses


def smoothed(losses, window: int = 50) -> list[float]:
    """Trailing-window moving average of a loss trajectory."""
    out = []
    for i in range(len(losses)):
        lo = max(0, i - window + 1)
        out.append(float(np.mean(losses[lo:i + 1])))
    return out
