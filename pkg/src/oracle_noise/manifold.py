"""Exact geometry of the norm sphere the latent lives on.

All updates move strictly along great circles, so the latent's norm is
preserved by the step formula itself -- there is deliberately no
renormalization anywhere in this module; holding the sphere is part of
what the tests check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGradient, ShapeMismatch, ZeroLatent
from .latent import Latent

# Below this, the tangent direction cannot be normalized meaningfully and
# the caller is effectively at a stationary point.
DEGENERATE_TANGENT_RTOL = 1e-12


@dataclass(frozen=True)
class TangentVector:
    """A vector in the tangent plane at some sphere point.

    Produced by :func:`project_to_tangent`; ``base_norm`` is the norm of
    the latent it is tangent at.
    """

    values: np.ndarray
    base_norm: float

    def __post_init__(self):
        object.__setattr__(
            self, "values", np.ascontiguousarray(self.values, dtype=np.float64).reshape(-1)
        )

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.values))


def sphere_radius(z: Latent) -> float:
    """l2 norm of the latent, i.e. the radius of its sphere."""
    r = float(np.linalg.norm(z.values))
    if r == 0.0:
        raise ZeroLatent("latent has zero norm")
    return r


def project_to_tangent(z: Latent, g: Latent) -> TangentVector:
    """Remove the radial component of ``g`` at ``z``.

    Returns g - (<z,g>/||z||^2) z, which is orthogonal to z. A gradient
    parallel to z projects to the zero vector.
    """
    if z.dimension != g.dimension:
        raise ShapeMismatch(f"latent dim {z.dimension} vs gradient dim {g.dimension}")
    zv = z.values
    r2 = float(np.dot(zv, zv))
    if r2 == 0.0:
        raise ZeroLatent("cannot project at a zero latent")
    coeff = float(np.dot(zv, g.values)) / r2
    return TangentVector(g.values - coeff * zv, math.sqrt(r2))


def geodesic_step(z: Latent, g_perp: TangentVector, eta: float) -> Latent:
    """Move along the great circle through z in the direction of g_perp.

        z_new = z cos(eta) + ||z|| (g_perp/||g_perp||) sin(eta)

    eta is an angle in radians; cos^2 + sin^2 = 1 makes ||z_new|| = ||z||
    up to roundoff, with no renormalization.
    """
    if not math.isfinite(eta):
        raise ValueError(f"step angle must be finite, got {eta}")
    zv = z.values
    if g_perp.values.size != zv.size:
        raise ShapeMismatch(f"tangent dim {g_perp.values.size} vs latent dim {zv.size}")
    r = sphere_radius(z)
    gn = g_perp.norm
    if gn <= DEGENERATE_TANGENT_RTOL * r:
        raise DegenerateGradient(
            f"tangent gradient norm {gn:.3e} <= {DEGENERATE_TANGENT_RTOL:g} * ||z|| = "
            f"{DEGENERATE_TANGENT_RTOL * r:.3e}; stationary point"
        )
    direction = g_perp.values / gn
    return z.with_values(zv * math.cos(eta) + (r * math.sin(eta)) * direction)


def exponential_map(z: Latent, v: TangentVector) -> Latent:
    """Endpoint of the geodesic leaving z with initial velocity v.

    Geodesics of the radius-R sphere are great circles; with arc length
    s = ||v|| the endpoint is

        z cos(s/R) + R (v/||v||) sin(s/R)

    and v = 0 maps to z itself. Equivalent to :func:`geodesic_step` with
    angle eta = ||v||/R.
    """
    zv = z.values
    if v.values.size != zv.size:
        raise ShapeMismatch(f"tangent dim {v.values.size} vs latent dim {zv.size}")
    r = sphere_radius(z)
    s = v.norm
    if s == 0.0:
        return z.with_values(zv.copy())
    angle = s / r
    direction = v.values / s
    return z.with_values(zv * math.cos(angle) + (r * math.sin(angle)) * direction)
