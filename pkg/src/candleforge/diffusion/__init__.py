"""Desk-scale conditional latent diffusion over chart images.

A fixed orthonormal channel codec stands in for a pretrained autoencoder; the
denoiser is a small feature-modulated U-Net trained with the epsilon-prediction
objective and sampled with an ancestral Euler scheme under dual guidance.
"""

from .codec import decode_latent, encode_latent, projection_matrix
from .conditioning import Conditioning, embed_condition
from .checkpoint import load_checkpoint, save_checkpoint
from .model import DiffusionModel
from .sampling import SamplerConfig, ancestral_step_sigmas, guided_epsilon, sample, sigmas_from_schedule
from .schedule import NoiseSchedule, add_noise, make_schedule
from .training import TrainSettings, train, training_loss
from .unet import ArchConfig, UNet

__all__ = [
    "ArchConfig", "Conditioning", "DiffusionModel", "NoiseSchedule", "SamplerConfig",
    "TrainSettings", "UNet", "add_noise", "ancestral_step_sigmas", "decode_latent",
    "embed_condition", "encode_latent", "guided_epsilon", "load_checkpoint",
    "make_schedule", "projection_matrix", "sample", "save_checkpoint",
    "sigmas_from_schedule", "train", "training_loss",
]
