"""Spectral shallow-water solver on the rotating sphere with parallel-in-time
rational-approximation exponential integrators."""

from .sphere import (
    EARTH_GRAVITY,
    EARTH_OMEGA,
    EARTH_RADIUS,
    GridField,
    SphereConfig,
    SpectralField,
    analysis,
    inv_laplacian,
    laplacian,
    synthesis,
    uv_from_vortdiv,
    vortdiv_from_uv,
)

__all__ = [
    "EARTH_GRAVITY",
    "EARTH_OMEGA",
    "EARTH_RADIUS",
    "GridField",
    "SphereConfig",
    "SpectralField",
    "analysis",
    "inv_laplacian",
    "laplacian",
    "synthesis",
    "uv_from_vortdiv",
    "vortdiv_from_uv",
]
