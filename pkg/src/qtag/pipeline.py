"""Watermarked and plain circuit generation with the reference backends."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .circuit import Circuit
from .codec import DEFAULT_SHAPE, decode_latent, decode_tokens, unflatten
from .diffusion import DEFAULT_GUIDANCE, DiffusionSchedule, ddim_sample
from .watermark import WatermarkKey, ecc_encode, gaussian_draws, ssm_sample


@dataclass(frozen=True)
class Generated:
    circuit: Circuit
    z_T: np.ndarray
    z_0: np.ndarray


def embed(key: WatermarkKey, backend, schedule: DiffusionSchedule, shape=DEFAULT_SHAPE,
          guidance: float = DEFAULT_GUIDANCE) -> Generated:
    """Encode the key's message into a starting latent, denoise it and decode a circuit."""
    n = int(np.prod(shape))
    z_T = ssm_sample(ecc_encode(key.message, key, n), key, shape)
    z_0 = ddim_sample(z_T, backend, schedule, guidance)
    return Generated(decode_latent(z_0), z_T, z_0)


def generate_plain(seed: int, backend, schedule: DiffusionSchedule, shape=DEFAULT_SHAPE,
                   guidance: float = DEFAULT_GUIDANCE) -> Generated:
    """Circuit from an ordinary Gaussian starting latent (no watermark)."""
    z_T = unflatten(gaussian_draws(seed, int(np.prod(shape))), shape)
    z_0 = ddim_sample(z_T, backend, schedule, guidance)
    return Generated(decode_latent(z_0), z_T, z_0)


def embed_batch(keys: list[WatermarkKey], backend, schedule: DiffusionSchedule, shape=DEFAULT_SHAPE,
                guidance: float = DEFAULT_GUIDANCE) -> list[Circuit]:
    """Vectorized :func:`embed` returning only the circuits."""
    n = int(np.prod(shape))
    z_T = np.stack([ssm_sample(ecc_encode(k.message, k, n), k, shape) for k in keys])
    z_0 = ddim_sample(z_T, backend, schedule, guidance)
    return [Circuit(g) for g in decode_tokens(z_0)]


def generate_plain_batch(seeds: list[int], backend, schedule: DiffusionSchedule, shape=DEFAULT_SHAPE,
                         guidance: float = DEFAULT_GUIDANCE) -> list[Circuit]:
    n = int(np.prod(shape))
    z_T = np.stack([unflatten(gaussian_draws(s, n), shape) for s in seeds])
    z_0 = ddim_sample(z_T, backend, schedule, guidance)
    return [Circuit(g) for g in decode_tokens(z_0)]
