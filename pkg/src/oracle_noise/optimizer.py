"""End-to-end noise optimization: token weighting, then gradient ascent on
the norm sphere (or the unconstrained Euclidean baseline), with a
per-iteration trajectory and a single-step overshoot diagnostic.

Token weights are computed once before the loop and held fixed. The
spherical loop re-measures ||z|| each iteration (self-correcting under
roundoff) and treats a vanishing tangent gradient as convergence: the run
stops early, returns the current latent and flags the trajectory; it does
not raise.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .encoding import (
    EncoderInterface,
    TokenSequence,
    WeightVector,
    affine_normalize,
    encode_tokens,
    impact_scores,
)
from .errors import DegenerateGradient, EmptyValidSet
from .latent import Latent
from .manifold import (
    DEGENERATE_TANGENT_RTOL,
    TangentVector,
    geodesic_step,
    project_to_tangent,
    sphere_radius,
)
from .objective import ObjectiveConfig, evaluate
from .toy_denoiser import Denoiser

TRAJECTORY_HEADER = (
    "iter",
    "objective",
    "norm",
    "grad_norm",
    "tangent_grad_norm",
    "radial_cosine",
    "millis",
)

SPHERICAL = "spherical"
EUCLIDEAN = "euclidean"


@dataclass(frozen=True)
class OptimizerConfig:
    eta: float
    iterations: int
    mode: str = SPHERICAL
    guidance_scale: float = 7.5
    w_min: float = 0.5
    w_max: float = 3.0
    layer_weights: tuple[float, ...] = (1.0, 1.5, 2.0)
    seed: int = 0
    max_timestep: int = 999  # recorded only; the toy denoiser is time-free

    def __post_init__(self):
        object.__setattr__(self, "layer_weights", tuple(float(a) for a in self.layer_weights))
        if not math.isfinite(self.eta) or self.eta < 0:
            raise ValueError(f"eta must be finite and >= 0, got {self.eta}")
        if self.iterations < 1:
            raise ValueError(f"iterations must be >= 1, got {self.iterations}")
        if self.mode not in (SPHERICAL, EUCLIDEAN):
            raise ValueError(f"unknown mode {self.mode!r}")


@dataclass
class TrajectoryRecord:
    """One row per completed objective evaluation inside the loop.

    Row fields follow TRAJECTORY_HEADER; ``millis`` is the measured
    per-iteration wall time. CSV export zeroes the millis column by
    default so artifacts stay byte-reproducible across runs.
    """

    rows: list[tuple] = field(default_factory=list)
    final_objective: float = math.nan
    final_norm: float = math.nan
    terminated_early: bool = False
    termination_reason: str | None = None

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> np.ndarray:
        idx = TRAJECTORY_HEADER.index(name)
        return np.array([row[idx] for row in self.rows])

    def write_csv(self, path, deterministic: bool = True) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(TRAJECTORY_HEADER)
            for row in self.rows:
                out = list(row)
                if deterministic:
                    out[-1] = 0.0
                writer.writerow([row[0]] + [f"{v:.17g}" for v in out[1:]])


@dataclass(frozen=True)
class OvershootReport:
    """Single-step gain across a grid of angles vs. the curvature bound.

    ``predicted_threshold`` is -2<g,u>/(u^T H u) with the curvature taken
    from a symmetric second difference along the geodesic; +inf when the
    measured curvature is non-negative (no overshoot predicted).
    """

    eta_grid: tuple[float, ...]
    single_step_gains: tuple[float, ...]
    empirical_peak_eta: float
    predicted_threshold: float
    curvature_uHu: float

    def to_dict(self) -> dict:
        return {
            "eta_grid": list(self.eta_grid),
            "single_step_gains": list(self.single_step_gains),
            "empirical_peak_eta": self.empirical_peak_eta,
            "predicted_threshold": self.predicted_threshold,
            "curvature_uHu": self.curvature_uHu,
        }


def _objective_config(cfg: OptimizerConfig, weights: WeightVector) -> ObjectiveConfig:
    return ObjectiveConfig(
        guidance_scale=cfg.guidance_scale,
        layer_weights=cfg.layer_weights,
        token_weights=weights,
    )


def _null_text(encoder: EncoderInterface, tokens: TokenSequence):
    return encode_tokens(encoder, tokens.all_pad())


def compute_token_weights(
    tokens: TokenSequence, encoders: Sequence[EncoderInterface], cfg: OptimizerConfig
) -> WeightVector:
    """Stage one: impact scores from all encoders, affinely normalized."""
    return affine_normalize(impact_scores(tokens, encoders), cfg.w_min, cfg.w_max)


def optimize_with_weights(
    denoiser: Denoiser,
    text_c,
    text_null,
    weights: WeightVector,
    z0: Latent,
    cfg: OptimizerConfig,
) -> tuple[Latent, TrajectoryRecord]:
    """The ascent loop itself, given a fixed weight vector.

    mode "spherical": project the gradient to the tangent plane and take a
    geodesic step of angle eta. mode "euclidean": z <- z + eta g, the
    unconstrained baseline whose norm provably inflates.
    """
    obj_cfg = _objective_config(cfg, weights)
    record = TrajectoryRecord()
    z = z0
    for i in range(1, cfg.iterations + 1):
        tic = time.perf_counter()
        result = evaluate(denoiser, z, text_c, text_null, obj_cfg)
        g = result.gradient
        norm_z = sphere_radius(z)
        norm_g = float(np.linalg.norm(g.values))
        tangent = project_to_tangent(z, g)
        radial_cos = 0.0
        if norm_g > 0.0:
            radial_cos = float(np.dot(z.values, g.values)) / (norm_z * norm_g)
        millis = (time.perf_counter() - tic) * 1e3
        record.rows.append(
            (i, result.value, norm_z, norm_g, tangent.norm, radial_cos, millis)
        )
        if cfg.mode == SPHERICAL:
            if tangent.norm <= DEGENERATE_TANGENT_RTOL * norm_z:
                record.terminated_early = True
                record.termination_reason = "degenerate tangent gradient (converged)"
                break
            z = geodesic_step(z, tangent, cfg.eta)
        else:
            if norm_g <= DEGENERATE_TANGENT_RTOL * norm_z:
                record.terminated_early = True
                record.termination_reason = "degenerate gradient (converged)"
                break
            z = z.with_values(z.values + cfg.eta * g.values)
    record.final_objective = evaluate(denoiser, z, text_c, text_null, obj_cfg).value
    record.final_norm = sphere_radius(z)
    return z, record


def _prepare(denoiser, encoders, tokens, cfg):
    if not tokens.valid_indices:
        raise EmptyValidSet("prompt has no valid tokens")
    weights = compute_token_weights(tokens, encoders, cfg)
    # encoders[0] feeds the denoiser text path; all encoders vote on weights
    text_c = encode_tokens(encoders[0], tokens)
    text_null = _null_text(encoders[0], tokens)
    return weights, text_c, text_null


def oracle_optimize(
    denoiser: Denoiser,
    encoders: Sequence[EncoderInterface],
    tokens: TokenSequence,
    z0: Latent,
    cfg: OptimizerConfig,
) -> tuple[Latent, WeightVector, TrajectoryRecord]:
    """Both stages: token weighting, then the spherical geodesic loop."""
    weights, text_c, text_null = _prepare(denoiser, encoders, tokens, cfg)
    spherical_cfg = cfg if cfg.mode == SPHERICAL else _with_mode(cfg, SPHERICAL)
    z, record = optimize_with_weights(denoiser, text_c, text_null, weights, z0, spherical_cfg)
    return z, weights, record


def euclidean_optimize(
    denoiser: Denoiser,
    encoders: Sequence[EncoderInterface],
    tokens: TokenSequence,
    z0: Latent,
    cfg: OptimizerConfig,
) -> tuple[Latent, WeightVector, TrajectoryRecord]:
    """Same weighting stage, unconstrained z <- z + eta g updates."""
    weights, text_c, text_null = _prepare(denoiser, encoders, tokens, cfg)
    euclid_cfg = cfg if cfg.mode == EUCLIDEAN else _with_mode(cfg, EUCLIDEAN)
    z, record = optimize_with_weights(denoiser, text_c, text_null, weights, z0, euclid_cfg)
    return z, weights, record


def _with_mode(cfg: OptimizerConfig, mode: str) -> OptimizerConfig:
    return OptimizerConfig(
        eta=cfg.eta,
        iterations=cfg.iterations,
        mode=mode,
        guidance_scale=cfg.guidance_scale,
        w_min=cfg.w_min,
        w_max=cfg.w_max,
        layer_weights=cfg.layer_weights,
        seed=cfg.seed,
        max_timestep=cfg.max_timestep,
    )


def geodesic_second_difference(
    f: Callable[[Latent], float], z: Latent, direction: TangentVector, h: float = 1e-3
) -> float:
    """Symmetric second difference of f along the geodesic through z.

    Estimates d^2/d eta^2 f(gamma(eta)) at eta = 0, which for a
    scale-invariant f equals the Hessian quadratic form along the
    (radius-scaled) tangent direction.
    """
    center = f(z)
    fwd = f(geodesic_step(z, direction, h))
    back = f(geodesic_step(z, direction, -h))
    return (fwd - 2.0 * center + back) / (h * h)


def overshoot_diagnostic(
    denoiser: Denoiser,
    encoders: Sequence[EncoderInterface],
    tokens: TokenSequence,
    z0: Latent,
    eta_grid: Sequence[float],
    guidance_scale: float,
    layer_weights: Sequence[float],
    bounds: tuple[float, float],
) -> OvershootReport:
    """Measure single-step objective gains over an angle grid and compare
    the peak against the second-order overshoot bound.

    The gradient-gain term <g, u> uses u = ||z|| g_perp/||g_perp||, so it
    reduces to ||z|| ||g_perp||; curvature comes from a second difference
    with h = 1e-3.
    """
    grid = tuple(float(e) for e in eta_grid)
    if not grid or any(e <= 0 for e in grid):
        raise ValueError("eta_grid must be non-empty and positive")
    if list(grid) != sorted(grid):
        raise ValueError("eta_grid must be sorted increasing")
    w_min, w_max = bounds
    cfg = OptimizerConfig(
        eta=grid[0],
        iterations=1,
        mode=SPHERICAL,
        guidance_scale=guidance_scale,
        w_min=w_min,
        w_max=w_max,
        layer_weights=tuple(layer_weights),
    )
    weights, text_c, text_null = _prepare(denoiser, encoders, tokens, cfg)
    obj_cfg = _objective_config(cfg, weights)

    def value(latent: Latent) -> float:
        return evaluate(denoiser, latent, text_c, text_null, obj_cfg).value

    base = evaluate(denoiser, z0, text_c, text_null, obj_cfg)
    norm_z = sphere_radius(z0)
    tangent = project_to_tangent(z0, base.gradient)
    if tangent.norm <= DEGENERATE_TANGENT_RTOL * norm_z:
        raise DegenerateGradient("tangent gradient vanished at the diagnostic base point")

    gains = tuple(value(geodesic_step(z0, tangent, eta)) - base.value for eta in grid)
    curvature = geodesic_second_difference(value, z0, tangent, h=1e-3)
    gradient_gain = norm_z * tangent.norm  # <g, u> with u = ||z|| g_perp/||g_perp||
    threshold = math.inf if curvature >= 0 else -2.0 * gradient_gain / curvature
    peak_eta = grid[int(np.argmax(gains))]
    return OvershootReport(
        eta_grid=grid,
        single_step_gains=gains,
        empirical_peak_eta=peak_eta,
        predicted_threshold=threshold,
        curvature_uHu=curvature,
    )
