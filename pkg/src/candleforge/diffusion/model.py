"""Bundles codec, schedule, denoiser weights and sampler into one model object."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from ..chart_renderer import load_png
from ..util import derive_seed
from .checkpoint import load_checkpoint, save_checkpoint
from .codec import CODEC_SEED, decode_latent, encode_latent, projection_matrix
from .conditioning import MACD_SCALE, Conditioning, embed_condition
from .sampling import BRANCH_FULL, BRANCH_UNCOND, SamplerConfig, sample
from .schedule import make_schedule
from .training import TrainSettings, train
from .unet import ArchConfig, UNet


class DiffusionModel:
    """A loadable/saveable conditional denoiser plus everything needed to run it."""

    def __init__(self, arch: ArchConfig, params: dict, *,
                 schedule_T: int = 1000, beta_start: float = 1e-4, beta_end: float = 0.02,
                 codec_seed: int = CODEC_SEED, macd_scale: float = MACD_SCALE):
        self.arch = arch
        self.unet = UNet(arch)
        self.params = params
        self.schedule_T = schedule_T
        self.beta_start = beta_start
        self.beta_end = beta_end
        self.codec_seed = codec_seed
        self.macd_scale = macd_scale
        self.schedule = make_schedule(schedule_T, beta_start, beta_end)
        self.codec_matrix = projection_matrix(codec_seed)

    # ---- construction ----------------------------------------------------

    @classmethod
    def create(cls, arch: ArchConfig, seed: int = 0, **kwargs) -> "DiffusionModel":
        unet = UNet(arch)
        params = unet.init_params(derive_seed(seed, "init"), dtype=np.float32)
        return cls(arch, params, **kwargs)

    def config_dict(self) -> dict:
        return {
            "arch": self.arch.to_dict(),
            "schedule": {"T": self.schedule_T, "beta_start": self.beta_start,
                         "beta_end": self.beta_end},
            "codec_seed": self.codec_seed,
            "macd_scale": self.macd_scale,
        }

    def save(self, path) -> None:
        save_checkpoint(path, self.config_dict(), self.params)

    @classmethod
    def load(cls, path) -> "DiffusionModel":
        config, params = load_checkpoint(path)
        arch = ArchConfig.from_dict(config["arch"])
        sched = config["schedule"]
        return cls(arch, params, schedule_T=sched["T"], beta_start=sched["beta_start"],
                   beta_end=sched["beta_end"], codec_seed=config["codec_seed"],
                   macd_scale=config["macd_scale"])

    # ---- codec and conditioning -------------------------------------------

    def encode(self, image: np.ndarray) -> np.ndarray:
        return encode_latent(image, self.codec_matrix)

    def decode(self, latent: np.ndarray) -> np.ndarray:
        return decode_latent(latent, self.codec_matrix)

    def embed(self, prompt: str | None, null_text: bool = False) -> Conditioning:
        return embed_condition(prompt, null_text, width=self.arch.cond_width,
                               macd_scale=self.macd_scale,
                               null_embedding=self.params["cond_null"])

    # ---- training ----------------------------------------------------------

    def train_on_pairs(self, dataset, settings: TrainSettings, log_rows=None):
        """dataset: (input_latent, edited_latent, prompt) triples; updates params."""
        self.params, losses = train(self.unet, self.schedule, dataset, settings,
                                    params=self.params, macd_scale=self.macd_scale,
                                    log_rows=log_rows)
        return losses

    def load_manifest_latents(self, manifest) -> list:
        triples = []
        for rec in manifest.records:
            input_img = load_png(Path(manifest.root) / rec.input_path)
            edited_img = load_png(Path(manifest.root) / rec.edited_path)
            triples.append((self.encode(input_img), self.encode(edited_img), rec.prompt))
        return triples

    # ---- sampling ------------------------------------------------------------

    def eps_fn(self, input_latent: np.ndarray, cond: Conditioning):
        """Denoiser closure for the sampler, one guidance branch per call."""
        dtype = self.params["stem.w"].dtype
        inp = np.asarray(input_latent, dtype=dtype)
        feats = cond.features
        if feats is None and not cond.is_null_text:
            raise ValueError("conditioning has no features and is not null")

        def fn(x_model: np.ndarray, t: int, branch: str) -> np.ndarray:
            null_image = branch == BRANCH_UNCOND
            null_text = branch != BRANCH_FULL or cond.is_null_text
            channels = np.zeros_like(inp) if null_image else inp
            x = np.concatenate([x_model.astype(dtype), channels], axis=0)[None]
            cond_row = None if feats is None else feats[None]
            out, _ = self.unet.forward(self.params, x, np.array([t]), cond_row,
                                       np.array([null_text]))
            return out[0].astype(np.float64)

        return fn

    def sample_latent(self, input_latent: np.ndarray, cond: Conditioning,
                      sampler: SamplerConfig, rng=None) -> np.ndarray:
        if rng is None:
            rng = np.random.default_rng(sampler.seed)
        shape = input_latent.shape
        return sample(self.eps_fn(input_latent, cond), shape, sampler,
                      self.schedule, rng)

    def generate(self, input_image: np.ndarray, prompt: str,
                 sampler: SamplerConfig) -> np.ndarray:
        """Input chart image + prompt -> generated next-chart image."""
        latent = self.encode(input_image)
        cond = self.embed(prompt)
        rng = np.random.default_rng(sampler.seed)
        out_latent = self.sample_latent(latent, cond, sampler, rng)
        return self.decode(out_latent.astype(np.float32))
