"""Deterministic sampling helpers shared by the CLI and the evaluation path.

Noise derivation convention: every noise vector comes from a stream keyed by
(seed, row), so the j-th image of a caption row depends only on those two
integers and not on what other rows are present. Interpolation endpoints
therefore reproduce direct sampling draws bit-for-bit.
"""

from __future__ import annotations

import numpy as np

from .config import ModelConfig
from .network import NetworkParams, generator_forward
from .text import TextEmbedding, interpolate_embeddings


def noise_stream(seed: int, row: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed), int(row)])


def draw_noise(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(n, dim)).astype(np.float32)


def sample_images(
    net: NetworkParams, cfg: ModelConfig, embedding: TextEmbedding, z: np.ndarray
) -> np.ndarray:
    """Generate one image per noise row, all conditioned on one caption."""
    z = np.atleast_2d(np.asarray(z, dtype=np.float32))
    emb = np.repeat(embedding.vector[None, :].astype(np.float32), z.shape[0], axis=0)
    return generator_forward(net, cfg, emb, z)


def interp_grid(steps: int) -> np.ndarray:
    """Uniform interpolation weights including both endpoints."""
    if steps < 2:
        raise ValueError(f"need at least 2 interpolation steps, got {steps}")
    return np.linspace(0.0, 1.0, steps)


def interpolate_noise(z1: np.ndarray, z2: np.ndarray, alphas: np.ndarray) -> np.ndarray:
    """Rows (1-a) * z1 + a * z2; exact copies at the endpoints."""
    z1 = np.asarray(z1, dtype=np.float32)
    z2 = np.asarray(z2, dtype=np.float32)
    return np.stack([(1.0 - a) * z1 + a * z2 for a in alphas]).astype(np.float32)


def interpolate_text_row(
    net: NetworkParams,
    cfg: ModelConfig,
    emb_a: TextEmbedding,
    emb_b: TextEmbedding,
    z: np.ndarray,
    alphas: np.ndarray,
) -> np.ndarray:
    """One image per alpha, noise held fixed, caption embedding interpolated."""
    images = []
    for a in alphas:
        emb = interpolate_embeddings(emb_a, emb_b, float(a))
        images.append(sample_images(net, cfg, emb, z[None, :])[0])
    return np.stack(images)
