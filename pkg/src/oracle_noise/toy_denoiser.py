"""Frozen multi-layer cross-attention network standing in for a diffusion
backbone. Produces per-layer pre-softmax logits (positions x tokens) for
any text input.

Every layer is linear maps plus a zero-mean/unit-variance feature
normalization with **epsilon = 0** and **no bias terms**, which makes the
logits exactly degree-zero homogeneous in the latent: scaling z by any
c > 0 changes nothing. That exactness is what turns gradient-orthogonality
into a hard invariant downstream, so a zero-variance position is an error
here rather than a clamped epsilon.

The network is time-independent: it always represents the maximum-noise
evaluation point, and no timestep embedding exists.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .encoding import TokenEmbeddingMatrix
from .errors import DegenerateFeatures, ShapeMismatch
from .latent import Latent

LayerLogits = list[np.ndarray]  # one (P x n) float64 matrix per layer


@dataclass(frozen=True)
class DenoiserConfig:
    num_layers: int = 3
    d_model: int = 32
    d_proj: int = 16
    channels: int = 4
    height: int = 8
    width: int = 8
    d_text: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.num_layers < 1:
            raise ValueError("num_layers must be >= 1")
        if self.d_model < 2:
            raise ValueError("d_model must be >= 2 (single-feature variance is always 0)")
        if self.d_proj < 2:
            raise ValueError("d_proj must be >= 2")
        if min(self.channels, self.height, self.width) < 1:
            raise ValueError("non-positive latent shape")

    @property
    def positions(self) -> int:
        return self.height * self.width

    @property
    def latent_shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)


@dataclass(frozen=True)
class _LayerCache:
    """Forward intermediates one layer needs for an exact backward pass."""

    f_hat: np.ndarray  # (d_model, P) normalized features
    sigma: np.ndarray  # (P,) per-position feature std
    q: np.ndarray  # (d_proj, P)


class Denoiser:
    """Weights are drawn once from the config seed and never change.

    Per layer: a latent lift ``w_phi`` (d_model x channels), a query
    projection ``w_q`` (d_proj x d_model) and a key projection ``w_k``
    (d_proj x d_text). No value projection: nothing downstream consumes
    one. Entries are N(0, 1/fan_in) from a PCG64 stream, drawn in layer
    order phi, q, k.
    """

    def __init__(self, config: DenoiserConfig):
        self.config = config
        rng = np.random.Generator(np.random.PCG64(config.seed))
        self.w_phi: list[np.ndarray] = []
        self.w_q: list[np.ndarray] = []
        self.w_k: list[np.ndarray] = []
        for _ in range(config.num_layers):
            self.w_phi.append(
                rng.standard_normal((config.d_model, config.channels)) / math.sqrt(config.channels)
            )
            self.w_q.append(
                rng.standard_normal((config.d_proj, config.d_model)) / math.sqrt(config.d_model)
            )
            self.w_k.append(
                rng.standard_normal((config.d_proj, config.d_text)) / math.sqrt(config.d_text)
            )

    def features(self, z: Latent) -> list[_LayerCache]:
        """Lift, normalize and project the latent once per layer.

        The text side never touches this path, so conditional and
        unconditional passes share it exactly.
        """
        cfg = self.config
        if z.shape != cfg.latent_shape:
            raise ShapeMismatch(f"latent shape {z.shape} vs config {cfg.latent_shape}")
        z_cols = z.values.reshape(cfg.channels, cfg.positions)
        caches = []
        for layer in range(cfg.num_layers):
            f = self.w_phi[layer] @ z_cols
            centered = f - f.mean(axis=0)
            var = np.mean(centered * centered, axis=0)
            if (var == 0.0).any():
                raise DegenerateFeatures(
                    f"layer {layer}: zero feature variance at positions "
                    f"{np.flatnonzero(var == 0.0).tolist()}"
                )
            sigma = np.sqrt(var)
            f_hat = centered / sigma
            caches.append(_LayerCache(f_hat=f_hat, sigma=sigma, q=self.w_q[layer] @ f_hat))
        return caches

    def keys(self, text: TokenEmbeddingMatrix) -> list[np.ndarray]:
        """Per-layer key matrices, (n x d_proj)."""
        if text.rows.shape[1] != self.config.d_text:
            raise ShapeMismatch(
                f"text dim {text.rows.shape[1]} vs config d_text {self.config.d_text}"
            )
        return [text.rows @ wk.T for wk in self.w_k]

    def logits_from(self, caches: list[_LayerCache], keys: list[np.ndarray]) -> LayerLogits:
        scale = 1.0 / math.sqrt(self.config.d_proj)
        return [(cache.q.T @ k.T) * scale for cache, k in zip(caches, keys)]


def build_denoiser(config: DenoiserConfig) -> Denoiser:
    return Denoiser(config)


def forward_logits(denoiser: Denoiser, z: Latent, text: TokenEmbeddingMatrix) -> LayerLogits:
    """Pre-softmax attention logits, one (P x n) matrix per layer.

    logits[p, j] = <Q[:, p], K[j, :]> / sqrt(d_proj) with Q from the
    normalized latent features and K from the text rows. Exactly invariant
    under z -> c z for c > 0.
    """
    return denoiser.logits_from(denoiser.features(z), denoiser.keys(text))
