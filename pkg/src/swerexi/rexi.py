"""Rational-approximation coefficients from Cauchy contour integrals.

A circle contour of radius R centered at mu, sampled at N trapezoid nodes
theta_n = 2*pi*n/N (n = 1..N), turns a holomorphic f into

    f(x) ~= sum_n beta_n / (x + alpha_n),
    alpha_n = -(R e^{i theta_n} + mu),
    beta_n  = -(R e^{i theta_n} / N) * f(R e^{i theta_n} + mu).

Origin-centered circles suffer exponential growth of |beta_n| with R when
f = exp; the shifted contour through a real point p0 and +-i*p1 bounds
Re(z) on the contour by p0 and suppresses that cancellation.
"""

from __future__ import annotations

import csv
import dataclasses
import math

import numpy as np

from .errors import ContourError

DEFAULT_P0 = 10.0
DEFAULT_P1_IMAG = 30.0
DEFAULT_NUM_POLES = 128
SCALED_NUM_POLES = 32
FUNCTION_IDS = ("psi0", "psi1", "psi2")

_TAYLOR_SWITCH = 1e-2
_TAYLOR_TERMS = 8


@dataclasses.dataclass(frozen=True)
class ContourSpec:
    """Circle contour: radius, complex center, and quadrature pole count."""

    radius: float
    center: complex = 0.0 + 0.0j
    num_poles: int = DEFAULT_NUM_POLES
    p0: float | None = None
    p1_imag: float | None = None

    def __post_init__(self):
        if self.radius <= 0:
            raise ContourError(f"contour radius must be positive, got {self.radius}")
        if self.num_poles < 1:
            raise ContourError("need at least one quadrature pole")


@dataclasses.dataclass(frozen=True)
class RexiCoefficients:
    """Poles and weights of one rational approximation."""

    alphas: np.ndarray
    betas: np.ndarray
    function_id: str
    contour: ContourSpec

    def __post_init__(self):
        if self.alphas.shape != self.betas.shape or self.alphas.ndim != 1:
            raise ContourError("alpha/beta lists must be 1-d and equally long")
        if self.function_id not in FUNCTION_IDS:
            raise ContourError(f"unknown function id {self.function_id!r}")
        self.alphas.setflags(write=False)
        self.betas.setflags(write=False)

    @property
    def num_terms(self) -> int:
        return self.alphas.size


def phi_function(k: int, z):
    """ETD stage functions psi_0 = exp, psi_1 = (e^z - 1)/z, psi_2 = (e^z - 1 - z)/z^2.

    Near z = 0 the removable singularities are evaluated by a truncated
    Taylor series (8 terms below |z| = 1e-2), which realizes the L'Hopital
    limits with bounded rounding error.
    """
    if k not in (0, 1, 2):
        raise ContourError(f"psi_{k} is not supported")
    z = np.asarray(z, dtype=np.complex128)
    if k == 0:
        return np.exp(z)
    small = np.abs(z) < _TAYLOR_SWITCH
    out = np.empty_like(z)
    zs = np.where(small, 1.0, z)  # avoid 0/0 in the direct branch
    if k == 1:
        out[...] = (np.exp(zs) - 1.0) / zs
    else:
        out[...] = (np.exp(zs) - 1.0 - zs) / (zs * zs)
    if np.any(small):
        acc = np.zeros_like(z)
        for j in reversed(range(_TAYLOR_TERMS)):
            acc = acc * z + 1.0 / math.factorial(j + k)
        out[small] = acc[small]
    return out if out.shape else complex(out)


def shifted_contour_from_points(
    p0: float, p1_imag: float, num_poles: int = DEFAULT_NUM_POLES
) -> ContourSpec:
    """Circle through the real point p0 and the imaginary points +-i*p1.

    Radius r = (p0^2 + p1^2) / (2 p0) and center p0 - r on the real axis.
    """
    if p0 <= 0:
        raise ContourError("p0 = 0 gives a degenerate (infinite-radius) contour")
    if p1_imag <= 0:
        raise ContourError("p1_imag must be positive")
    r = (p0 * p0 + p1_imag * p1_imag) / (2.0 * p0)
    return ContourSpec(
        radius=r, center=complex(p0 - r), num_poles=num_poles, p0=p0, p1_imag=p1_imag
    )


def _function_values(function_id: str, z: np.ndarray, extended: bool) -> np.ndarray:
    if not extended:
        with np.errstate(over="ignore", invalid="ignore"):
            return phi_function(FUNCTION_IDS.index(function_id), z)
    import mpmath

    k = FUNCTION_IDS.index(function_id)
    with mpmath.workdps(34):
        vals = []
        for zz in z:
            w = mpmath.mpc(zz.real, zz.imag)
            e = mpmath.exp(w)
            if k == 0:
                f = e
            elif k == 1:
                f = (e - 1) / w if abs(zz) > 1e-8 else mpmath.mpf(1)
            else:
                f = (e - 1 - w) / (w * w) if abs(zz) > 1e-8 else mpmath.mpf("0.5")
            vals.append(complex(f))
    return np.asarray(vals, dtype=np.complex128)


def circle_contour_coeffs(
    function_id: str,
    radius: float,
    center: complex = 0.0,
    num_poles: int = DEFAULT_NUM_POLES,
    extended: bool = False,
) -> RexiCoefficients:
    """Trapezoid-rule poles and weights on a circle contour.

    ``extended=True`` evaluates the weights in 34-digit arithmetic, useful
    for observing (rather than suffering) the cancellation growth of the
    origin-centered contour beyond R ~ 30.
    """
    contour = ContourSpec(radius, complex(center), num_poles)
    n = np.arange(1, num_poles + 1)
    theta = 2.0 * np.pi * n / num_poles
    ring = radius * np.exp(1j * theta)
    z = ring + contour.center
    fvals = _function_values(function_id, z, extended)
    if not np.all(np.isfinite(fvals)):
        bad = int(np.argmax(~np.isfinite(fvals)))
        raise ContourError(
            f"function overflow at contour node {bad + 1} (z = {z[bad]:.3g}); "
            "shift the contour away from large positive real parts"
        )
    alphas = -z
    betas = -(ring / num_poles) * fvals
    return RexiCoefficients(alphas, betas, function_id, contour)


def coeffs_for_contour(
    function_id: str, contour: ContourSpec, extended: bool = False
) -> RexiCoefficients:
    return circle_contour_coeffs(
        function_id, contour.radius, contour.center, contour.num_poles, extended
    )


def scale_radius_with_dt(
    dt: float,
    base_radius: float = 30.0,
    base_dt: float = 480.0,
    min_radius: float = 5.0,
) -> float:
    """Contour radius scaled linearly with the step size, floored below."""
    if dt <= 0:
        raise ContourError("time step must be positive")
    return max(min_radius, base_radius * dt / base_dt)


def eval_rational(coeffs: RexiCoefficients, x) -> complex:
    """Evaluate sum beta_n / (x + alpha_n), accumulated in index order."""
    x = complex(x)
    dens = x + coeffs.alphas
    if np.any(dens == 0.0):
        bad = int(np.argmax(dens == 0.0))
        raise ContourError(f"evaluation point collides with pole {bad + 1}")
    total = 0.0 + 0.0j
    for b, d in zip(coeffs.betas, dens):
        total += b / d
    return total


def cancellation_diagnostic(radius: float, num_poles: int) -> dict:
    """Max |beta_n| of the origin-centered exp contour at the given radius."""
    coeffs = circle_contour_coeffs("psi0", radius, 0.0, num_poles, extended=radius > 30)
    max_abs_beta = float(np.max(np.abs(coeffs.betas)))
    return {"max_abs_beta": max_abs_beta, "log_max_abs_beta": math.log(max_abs_beta)}


@dataclasses.dataclass(frozen=True)
class RexiSetup:
    """Run-level choice between the fixed shifted contour and the
    radius-scaled small-step circle."""

    p0: float = DEFAULT_P0
    p1_imag: float = DEFAULT_P1_IMAG
    num_poles: int = DEFAULT_NUM_POLES
    radius_scaling: bool = False
    min_radius: float = 5.0
    scaling_base_radius: float = 30.0
    scaling_base_dt: float = 480.0
    scaled_num_poles: int = SCALED_NUM_POLES

    def contour_for_dt(self, dt: float) -> ContourSpec:
        if self.radius_scaling:
            r = scale_radius_with_dt(
                dt, self.scaling_base_radius, self.scaling_base_dt, self.min_radius
            )
            return ContourSpec(radius=r, center=0.0, num_poles=self.scaled_num_poles)
        return shifted_contour_from_points(self.p0, self.p1_imag, self.num_poles)

    def coefficients(self, function_id: str, dt: float) -> RexiCoefficients:
        return coeffs_for_contour(function_id, self.contour_for_dt(dt))


def export_coefficients_csv(path, coeffs: RexiCoefficients):
    """CSV rows of (Re alpha, Im alpha, Re beta, Im beta) for cross-checks."""
    c = coeffs.contour
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "# function_id",
                coeffs.function_id,
                "radius",
                repr(float(c.radius)),
                "center_re",
                repr(float(c.center.real)),
                "center_im",
                repr(float(c.center.imag)),
                "num_poles",
                c.num_poles,
            ]
        )
        writer.writerow(["alpha_re", "alpha_im", "beta_re", "beta_im"])
        for a, b in zip(coeffs.alphas, coeffs.betas):
            writer.writerow([repr(float(a.real)), repr(float(a.imag)), repr(float(b.real)), repr(float(b.imag))])


def import_coefficients_csv(path) -> RexiCoefficients:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    meta = rows[0]
    function_id = meta[1]
    radius = float(meta[3])
    center = complex(float(meta[5]), float(meta[7]))
    num_poles = int(meta[9])
    alphas, betas = [], []
    for row in rows[2:]:
        alphas.append(complex(float(row[0]), float(row[1])))
        betas.append(complex(float(row[2]), float(row[3])))
    return RexiCoefficients(
        np.asarray(alphas),
        np.asarray(betas),
        function_id,
        ContourSpec(radius, center, num_poles),
    )
