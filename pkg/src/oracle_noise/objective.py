"""Guidance-aware attention objective over the toy denoiser, with an exact
analytic gradient and a finite-difference oracle to check it against.

The scalar being ascended is the token-weighted total attention mass

    value = sum_l alpha_l * sum_p sum_j A_l[p, j] * M[j]

where A_l is the row-softmax of guidance-extrapolated logits
L_null + s (L_cond - L_null). The gradient is reverse-mode by hand through
the softmax, the logit mix (both text passes share the latent), the query
projection, the zero-epsilon feature normalization and the latent lift.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .encoding import TokenEmbeddingMatrix, WeightVector
from .errors import ShapeMismatch
from .latent import Latent
from .toy_denoiser import Denoiser, LayerLogits


@dataclass(frozen=True)
class ObjectiveConfig:
    guidance_scale: float
    layer_weights: tuple[float, ...]
    token_weights: WeightVector

    def __post_init__(self):
        object.__setattr__(self, "layer_weights", tuple(float(a) for a in self.layer_weights))
        if not math.isfinite(self.guidance_scale):
            raise ValueError("guidance_scale must be finite")
        if any(a <= 0 for a in self.layer_weights):
            raise ValueError("layer weights must be positive")


@dataclass(frozen=True)
class ObjectiveResult:
    value: float
    gradient: Latent
    per_layer_values: tuple[float, ...]

    def to_dict(self) -> dict:
        return {"value": self.value, "per_layer_values": list(self.per_layer_values)}


def cfg_logits(l_cond: LayerLogits, l_null: LayerLogits, s: float) -> LayerLogits:
    """Extrapolate in logit space: L_null + s (L_cond - L_null) per entry.

    s == 1 and s == 0 return exact copies of the conditional / null logits
    (the general expression is only 1-ulp close).
    """
    if len(l_cond) != len(l_null):
        raise ShapeMismatch(f"{len(l_cond)} vs {len(l_null)} layers")
    for lc, ln in zip(l_cond, l_null):
        if lc.shape != ln.shape:
            raise ShapeMismatch(f"logit shapes {lc.shape} vs {ln.shape}")
    if s == 1.0:
        return [lc.copy() for lc in l_cond]
    if s == 0.0:
        return [ln.copy() for ln in l_null]
    return [ln + s * (lc - ln) for lc, ln in zip(l_cond, l_null)]


def attention_map(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax over token columns, stabilized by per-row max."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_inputs(
    denoiser: Denoiser,
    text_c: TokenEmbeddingMatrix,
    text_null: TokenEmbeddingMatrix,
    cfg: ObjectiveConfig,
) -> None:
    n = text_c.num_tokens
    if text_null.num_tokens != n:
        raise ShapeMismatch(f"conditional has {n} tokens, null has {text_null.num_tokens}")
    if cfg.token_weights.weights.size != n:
        raise ShapeMismatch(
            f"{cfg.token_weights.weights.size} token weights for {n} tokens"
        )
    if len(cfg.layer_weights) != denoiser.config.num_layers:
        raise ShapeMismatch(
            f"{len(cfg.layer_weights)} layer weights for {denoiser.config.num_layers} layers"
        )


def evaluate(
    denoiser: Denoiser,
    z: Latent,
    text_c: TokenEmbeddingMatrix,
    text_null: TokenEmbeddingMatrix,
    cfg: ObjectiveConfig,
) -> ObjectiveResult:
    """Objective value, per-layer terms and the exact gradient wrt z.

    Both text passes consume the same latent, so the gradient carries the
    conditional path with coefficient s and the null path with 1 - s;
    neither is detached.
    """
    _check_inputs(denoiser, text_c, text_null, cfg)
    dcfg = denoiser.config
    s = float(cfg.guidance_scale)
    m = cfg.token_weights.weights
    scale = 1.0 / math.sqrt(dcfg.d_proj)

    caches = denoiser.features(z)
    keys_c = denoiser.keys(text_c)
    keys_n = denoiser.keys(text_null)

    d_z_cols = np.zeros((dcfg.channels, dcfg.positions))
    per_layer = []
    for layer in range(dcfg.num_layers):
        cache = caches[layer]
        k_c, k_n = keys_c[layer], keys_n[layer]
        l_c = (cache.q.T @ k_c.T) * scale
        l_n = (cache.q.T @ k_n.T) * scale
        mix = cfg_logits([l_c], [l_n], s)[0]
        attn = attention_map(mix)
        alpha = cfg.layer_weights[layer]
        per_layer.append(alpha * float((attn @ m).sum()))

        # reverse pass: d value / d attn = alpha * M on every row
        d_attn = np.broadcast_to(alpha * m, attn.shape)
        row_dot = (d_attn * attn).sum(axis=1, keepdims=True)
        d_mix = attn * (d_attn - row_dot)
        # d mix / d l_c = s, d mix / d l_n = 1 - s; both flow into Q
        d_qt = np.zeros((dcfg.positions, dcfg.d_proj))
        if s != 0.0:
            d_qt += (s * d_mix) @ k_c
        if s != 1.0:
            d_qt += ((1.0 - s) * d_mix) @ k_n
        d_q = d_qt.T * scale
        d_f_hat = denoiser.w_q[layer].T @ d_q
        # zero-epsilon normalization backward (population statistics)
        mean_d = d_f_hat.mean(axis=0)
        mean_dh = (d_f_hat * cache.f_hat).mean(axis=0)
        d_f = (d_f_hat - mean_d - cache.f_hat * mean_dh) / cache.sigma
        d_z_cols += denoiser.w_phi[layer].T @ d_f

    value = float(sum(per_layer))
    gradient = Latent(d_z_cols.reshape(-1), z.shape)
    return ObjectiveResult(value=value, gradient=gradient, per_layer_values=tuple(per_layer))


def central_difference(
    f: Callable[[np.ndarray], float], values: np.ndarray, h: float, coords: Sequence[int]
) -> np.ndarray:
    """(f(x + h e_i) - f(x - h e_i)) / 2h at the requested coordinates."""
    if h <= 0:
        raise ValueError(f"h must be positive, got {h}")
    out = np.empty(len(coords))
    for idx, coord in enumerate(coords):
        plus = values.copy()
        minus = values.copy()
        plus[coord] += h
        minus[coord] -= h
        out[idx] = (f(plus) - f(minus)) / (2.0 * h)
    return out


def finite_difference_gradient(
    denoiser: Denoiser,
    z: Latent,
    text_c: TokenEmbeddingMatrix,
    text_null: TokenEmbeddingMatrix,
    cfg: ObjectiveConfig,
    h: float,
    coords: Sequence[int],
) -> np.ndarray:
    """Numerical gradient of the objective at selected coordinates.

    Independent oracle for :func:`evaluate`'s analytic backward pass; it
    only ever calls the forward value.
    """

    def value_at(values: np.ndarray) -> float:
        return evaluate(denoiser, z.with_values(values), text_c, text_null, cfg).value

    return central_difference(value_at, z.values, h, coords)
