"""Spherical-harmonic pseudo-spectral kernel: grids, transforms, operators.

Normalization convention, used consistently everywhere in this package:
orthonormal complex spherical harmonics WITHOUT the Condon-Shortley phase,

    Y_l^m(lat, lon) = Pbar_l^m(sin lat) * exp(i*m*lon),
    integral over the unit sphere of Y_l^m * conj(Y_l'^m') = delta_ll'*delta_mm',

so Pbar_0^0 = 1/sqrt(4*pi) and Pbar_l^m >= 0 near the equator for all m.
Coefficient arrays are dense complex squares indexed ``[l, m]`` with the
upper triangle m > l identically zero.  Fields of real origin store only
m >= 0 and imply a_{l,-m} = conj(a_{l,m}); complex-origin fields carry an
additional ``neg_coeffs`` block holding a_{l,-m} for m >= 1.
"""

from __future__ import annotations

import dataclasses
import functools
import math

import numpy as np

from .errors import ConfigurationError, DataError

EARTH_RADIUS = 6.37122e6
EARTH_OMEGA = 7.292e-5
EARTH_GRAVITY = 9.80616


def gauss_legendre_nodes(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of n-point Gauss-Legendre quadrature on [-1, 1].

    Newton iteration on P_n from the standard cosine initial guess;
    converges to ~1e-16 in a handful of sweeps for desk-scale n.
    """
    if n < 1:
        raise ConfigurationError(f"need at least one latitude node, got {n}")
    k = np.arange(n)
    x = np.cos(np.pi * (k + 0.75) / (n + 0.5))
    for _ in range(100):
        p_prev = np.zeros_like(x)
        p = np.ones_like(x)
        for deg in range(1, n + 1):
            p_prev, p = p, ((2 * deg - 1) * x * p - (deg - 1) * p_prev) / deg
        dp = n * (x * p - p_prev) / (x * x - 1.0)
        dx = p / dp
        x = x - dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    p_prev = np.zeros_like(x)
    p = np.ones_like(x)
    for deg in range(1, n + 1):
        p_prev, p = p, ((2 * deg - 1) * x * p - (deg - 1) * p_prev) / deg
    dp = n * (x * p - p_prev) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    return x[order], w[order]


def _epsilon(l: np.ndarray, m: int) -> np.ndarray:
    """Recurrence coefficient eps_l^m = sqrt((l^2 - m^2) / (4 l^2 - 1))."""
    l = np.asarray(l, dtype=float)
    num = l * l - m * m
    den = 4.0 * l * l - 1.0
    out = np.zeros_like(l)
    good = num > 0
    out[good] = np.sqrt(num[good] / den[good])
    return out


def _legendre_tables(trunc: int, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Tables of Pbar and dPbar/dlat at the latitude nodes.

    Returns (P, H) with P[j, l, m] for l <= trunc+1 and H[j, l, m] for
    l <= trunc (H needs degree l+1 of P).  The sectoral seed is accumulated
    in mantissa/exponent form so it cannot underflow before ldexp
    reconstitutes it.
    """
    nlat = x.size
    sin_lat = x
    cos_lat = np.sqrt(1.0 - x * x)
    lmax = trunc + 1
    p = np.zeros((nlat, lmax + 1, trunc + 1))

    mant = np.full(nlat, 1.0 / math.sqrt(4.0 * math.pi))
    expo = np.zeros(nlat, dtype=np.int64)
    for m in range(trunc + 1):
        if m > 0:
            mant = mant * (math.sqrt((2 * m + 1) / (2.0 * m)) * cos_lat)
            mant, e = np.frexp(mant)
            expo += e
        seed = np.ldexp(mant, expo)
        p[:, m, m] = seed
        if m + 1 <= lmax:
            p[:, m + 1, m] = math.sqrt(2 * m + 3) * sin_lat * seed
        for l in range(m + 2, lmax + 1):
            e_l = math.sqrt((l * l - m * m) / (4.0 * l * l - 1.0))
            e_lm1 = math.sqrt(((l - 1) ** 2 - m * m) / (4.0 * (l - 1) ** 2 - 1.0))
            p[:, l, m] = (sin_lat * p[:, l - 1, m] - e_lm1 * p[:, l - 2, m]) / e_l

    # dPbar/dlat = [(l+1)*eps_l*Pbar_{l-1} - l*eps_{l+1}*Pbar_{l+1}] / cos(lat)
    h = np.zeros((nlat, trunc + 1, trunc + 1))
    for m in range(trunc + 1):
        ls = np.arange(m, trunc + 1)
        e_l = _epsilon(ls, m)
        e_lp1 = _epsilon(ls + 1, m)
        lower = np.zeros((nlat, ls.size))
        lower[:, 1:] = p[:, m : trunc + 1, m][:, :-1]
        upper = p[:, m + 1 : trunc + 2, m]
        h[:, m:, m] = ((ls + 1) * e_l * lower - ls * e_lp1 * upper) / cos_lat[:, None]
    return p, h


@dataclasses.dataclass(frozen=True)
class SphereConfig:
    """Grid and planetary constants for one triangular truncation."""

    trunc: int
    nlat: int
    nlon: int
    radius_a: float = EARTH_RADIUS
    omega: float = EARTH_OMEGA
    gravity_g: float = EARTH_GRAVITY

    def __post_init__(self):
        if self.trunc < 0:
            raise ConfigurationError(f"truncation must be >= 0, got {self.trunc}")
        if self.nlat < self.trunc + 1:
            raise ConfigurationError(
                f"nlat={self.nlat} too small for T{self.trunc} (need >= {self.trunc + 1})"
            )
        min_lat = math.ceil((3 * self.trunc + 1) / 2)
        if self.nlat < min_lat:
            raise ConfigurationError(
                f"nlat={self.nlat} violates 3/2-rule dealiasing for T{self.trunc}"
                f" (need >= {min_lat})"
            )
        if self.nlon < 2 * self.nlat:
            raise ConfigurationError(
                f"nlon={self.nlon} must be at least 2*nlat={2 * self.nlat}"
            )
        if self.radius_a <= 0 or self.gravity_g <= 0:
            raise ConfigurationError("radius and gravity must be positive")
        if self.omega < 0:
            raise ConfigurationError("rotation rate must be >= 0")

    @classmethod
    def for_truncation(
        cls,
        trunc: int,
        radius_a: float = EARTH_RADIUS,
        omega: float = EARTH_OMEGA,
        gravity_g: float = EARTH_GRAVITY,
    ) -> "SphereConfig":
        """Smallest even dealiased grid for a truncation (T42 -> 64 x 128)."""
        nlat = math.ceil((3 * trunc + 1) / 2)
        if nlat % 2:
            nlat += 1
        return cls(trunc, nlat, 2 * nlat, radius_a, omega, gravity_g)


class SpherePlan:
    """Immutable transform plan (nodes, weights, Legendre tables) for a grid.

    Safe to share across threads: every array is marked read-only and each
    transform call works on caller-owned temporaries only.
    """

    def __init__(self, trunc: int, nlat: int, nlon: int):
        self.trunc = trunc
        self.nlat = nlat
        self.nlon = nlon
        x, w = gauss_legendre_nodes(nlat)
        p_ext, h = _legendre_tables(trunc, x)
        self.sin_lat = x
        self.weights = w
        self.cos_lat = np.sqrt(1.0 - x * x)
        self.lats = np.arcsin(x)
        self.lons = 2.0 * np.pi * np.arange(nlon) / nlon
        self.p = np.ascontiguousarray(p_ext[:, : trunc + 1, :])
        self.h = h
        self.w_over_cos = w / self.cos_lat
        self.dlon = 2.0 * np.pi / nlon
        self.m = np.arange(trunc + 1)
        self.l = np.arange(trunc + 1)
        self.ll1 = (self.l * (self.l + 1)).astype(float)
        # transposed copies so the Legendre contractions run as small
        # batched real matmuls (one block per zonal wavenumber)
        self._ana = {
            "p": np.ascontiguousarray(self.p.transpose(2, 1, 0)),
            "h": np.ascontiguousarray(self.h.transpose(2, 1, 0)),
        }
        self._syn = {
            "p": np.ascontiguousarray(self.p.transpose(2, 0, 1)),
            "h": np.ascontiguousarray(self.h.transpose(2, 0, 1)),
        }
        for arr in (
            self.sin_lat,
            self.weights,
            self.cos_lat,
            self.lats,
            self.lons,
            self.p,
            self.h,
            self.w_over_cos,
            *self._ana.values(),
            *self._syn.values(),
        ):
            arr.setflags(write=False)

    def analyze_cols(self, fourier: np.ndarray, table: str, weights: np.ndarray) -> np.ndarray:
        """Quadrature contraction: sum_j weights_j * table[j,l,m] * fourier[j,m]."""
        fw = fourier * weights[:, None]
        stacked = np.stack([fw.real.T, fw.imag.T], axis=2)  # (M, J, 2)
        out = np.matmul(self._ana[table], stacked)  # (M, L, 2)
        return np.ascontiguousarray((out[..., 0] + 1j * out[..., 1]).T)

    def synth_cols(self, coeffs: np.ndarray, table: str) -> np.ndarray:
        """Legendre synthesis: G[j, m] = sum_l table[j,l,m] * coeffs[l,m]."""
        stacked = np.stack([coeffs.real.T, coeffs.imag.T], axis=2)  # (M, L, 2)
        out = np.matmul(self._syn[table], stacked)  # (M, J, 2)
        return np.ascontiguousarray((out[..., 0] + 1j * out[..., 1]).T)


@functools.lru_cache(maxsize=32)
def _plan(trunc: int, nlat: int, nlon: int) -> SpherePlan:
    return SpherePlan(trunc, nlat, nlon)


def plan_for(cfg: SphereConfig) -> SpherePlan:
    return _plan(cfg.trunc, cfg.nlat, cfg.nlon)


@dataclasses.dataclass
class SpectralField:
    """Triangular-truncated SH coefficients of one scalar field.

    ``coeffs[l, m]`` holds a_l^m for 0 <= m <= l; entries with m > l are
    zero.  ``neg_coeffs`` is None for real-origin fields (the m < 0 side is
    implied by conjugation) and holds a_l^{-m} in column m >= 1 for fields
    transformed from complex-valued grids.
    """

    coeffs: np.ndarray
    neg_coeffs: np.ndarray | None = None

    @property
    def trunc(self) -> int:
        return self.coeffs.shape[0] - 1

    @property
    def value_kind(self) -> str:
        return "real-origin" if self.neg_coeffs is None else "complex-origin"

    def copy(self) -> "SpectralField":
        neg = None if self.neg_coeffs is None else self.neg_coeffs.copy()
        return SpectralField(self.coeffs.copy(), neg)

    @classmethod
    def zeros(cls, trunc: int) -> "SpectralField":
        return cls(np.zeros((trunc + 1, trunc + 1), dtype=np.complex128))


@dataclasses.dataclass
class GridField:
    """Physical-space values on the Gauss-Legendre x equiangular grid."""

    values: np.ndarray
    grid: SphereConfig


def _tri_mask(trunc: int) -> np.ndarray:
    l = np.arange(trunc + 1)[:, None]
    m = np.arange(trunc + 1)[None, :]
    return m <= l


def _check_grid(field: GridField, cfg: SphereConfig):
    if field.values.shape != (cfg.nlat, cfg.nlon):
        raise ConfigurationError(
            f"grid shape {field.values.shape} does not match ({cfg.nlat}, {cfg.nlon})"
        )
    if not np.all(np.isfinite(field.values)):
        raise DataError("grid field contains non-finite values")


def _pad_coeffs(coeffs: np.ndarray, trunc: int) -> np.ndarray:
    n = coeffs.shape[0]
    if n == trunc + 1:
        return coeffs
    out = np.zeros((trunc + 1, trunc + 1), dtype=np.complex128)
    out[:n, :n] = coeffs
    return out


def analysis(grid: GridField, cfg: SphereConfig) -> SpectralField:
    """Forward transform: grid samples -> SH coefficients.

    Exact (to quadrature precision) for inputs band-limited within the
    dealiased grid.  Complex-valued grids yield a complex-origin field.
    """
    _check_grid(grid, cfg)
    plan = plan_for(cfg)
    nm = cfg.trunc + 1
    fourier = np.fft.fft(grid.values, axis=1) * plan.dlon
    coeffs = plan.analyze_cols(fourier[:, :nm], "p", plan.weights)
    coeffs = np.ascontiguousarray(coeffs, dtype=np.complex128)
    if not np.iscomplexobj(grid.values):
        return SpectralField(coeffs)
    neg_idx = (-plan.m) % cfg.nlon
    neg = plan.analyze_cols(fourier[:, neg_idx], "p", plan.weights)
    neg = np.ascontiguousarray(neg, dtype=np.complex128)
    neg[:, 0] = 0.0
    return SpectralField(coeffs, neg)


def synthesis(spec: SpectralField, cfg: SphereConfig) -> GridField:
    """Inverse transform: SH coefficients -> grid samples.

    Accepts fields truncated below cfg.trunc (zero padding); real-origin
    fields synthesize to real grids through the implied conjugate modes.
    """
    if spec.trunc > cfg.trunc:
        raise ConfigurationError(
            f"field truncation T{spec.trunc} exceeds grid truncation T{cfg.trunc}"
        )
    plan = plan_for(cfg)
    coeffs = _pad_coeffs(spec.coeffs, cfg.trunc)
    g = plan.synth_cols(coeffs, "p")
    if spec.neg_coeffs is None:
        return GridField(_real_fourier_synth(g, cfg.nlon), cfg)
    neg = _pad_coeffs(spec.neg_coeffs, cfg.trunc)
    g_neg = plan.synth_cols(neg, "p")
    bins = np.zeros((cfg.nlat, cfg.nlon), dtype=np.complex128)
    bins[:, : cfg.trunc + 1] = g
    for m in range(1, cfg.trunc + 1):
        bins[:, cfg.nlon - m] = g_neg[:, m]
    return GridField(np.fft.ifft(bins, axis=1) * cfg.nlon, cfg)


def _real_fourier_synth(g: np.ndarray, nlon: int) -> np.ndarray:
    """Assemble a real grid from m >= 0 Fourier columns (implied conjugates)."""
    nlat, nm = g.shape
    half = np.zeros((nlat, nlon // 2 + 1), dtype=np.complex128)
    half[:, :nm] = g
    return np.fft.irfft(half, n=nlon, axis=1) * nlon


def laplacian(spec: SpectralField, cfg: SphereConfig) -> SpectralField:
    """Multiply each (l, m) coefficient by -l(l+1)/a^2."""
    plan = plan_for(cfg)
    eig = (-plan.ll1 / cfg.radius_a**2)[: spec.trunc + 1, None]
    neg = None if spec.neg_coeffs is None else spec.neg_coeffs * eig
    return SpectralField(spec.coeffs * eig, neg)


def inv_laplacian(spec: SpectralField, cfg: SphereConfig) -> SpectralField:
    """Inverse Laplacian with the (0,0) gauge mode mapped to zero."""
    plan = plan_for(cfg)
    n = spec.trunc + 1
    inv = np.zeros(n)
    inv[1:] = -(cfg.radius_a**2) / plan.ll1[1:n]
    inv = inv[:, None]
    neg = None if spec.neg_coeffs is None else spec.neg_coeffs * inv
    return SpectralField(spec.coeffs * inv, neg)


def _require_real_origin(*fields: SpectralField):
    for f in fields:
        if f.neg_coeffs is not None:
            raise ConfigurationError("velocity operators expect real-origin fields")


def uv_from_vortdiv(
    zeta: SpectralField, delta: SpectralField, cfg: SphereConfig
) -> tuple[GridField, GridField]:
    """Velocities on the grid from vorticity/divergence coefficients.

    Uses the stream function psi = inv_lap(zeta) and velocity potential
    chi = inv_lap(delta); the meridional derivative is evaluated through
    the dPbar/dlat tables so grid values are pointwise exact.
    """
    _require_real_origin(zeta, delta)
    if zeta.trunc != delta.trunc:
        raise ConfigurationError("vorticity/divergence truncations differ")
    plan = plan_for(cfg)
    a = cfg.radius_a
    psi = inv_laplacian(zeta, cfg).coeffs
    chi = inv_laplacian(delta, cfg).coeffs
    psi = _pad_coeffs(psi, cfg.trunc)
    chi = _pad_coeffs(chi, cfg.trunc)
    im = 1j * plan.m[None, :]

    dpsi_dlat = _real_fourier_synth(plan.synth_cols(psi, "h"), cfg.nlon)
    dchi_dlat = _real_fourier_synth(plan.synth_cols(chi, "h"), cfg.nlon)
    dpsi_dlon = _real_fourier_synth(plan.synth_cols(psi * im, "p"), cfg.nlon)
    dchi_dlon = _real_fourier_synth(plan.synth_cols(chi * im, "p"), cfg.nlon)
    sec = 1.0 / plan.cos_lat[:, None]
    u = (dchi_dlon * sec - dpsi_dlat) / a
    v = (dpsi_dlon * sec + dchi_dlat) / a
    return GridField(u, cfg), GridField(v, cfg)


def vortdiv_from_uv(
    u: GridField, v: GridField, cfg: SphereConfig
) -> tuple[SpectralField, SpectralField]:
    """Vorticity and divergence coefficients from grid velocities.

    The meridional part integrates by parts against the dPbar/dlat tables,
    which keeps the quadrature alias-free for band-limited vector fields.
    """
    _check_grid(u, cfg)
    _check_grid(v, cfg)
    plan = plan_for(cfg)
    a = cfg.radius_a
    nm = cfg.trunc + 1
    fu = np.fft.fft(u.values, axis=1)[:, :nm] * plan.dlon
    fv = np.fft.fft(v.values, axis=1)[:, :nm] * plan.dlon
    im = 1j * plan.m[None, :]

    iq_u = plan.analyze_cols(fu, "p", plan.w_over_cos)
    iq_v = plan.analyze_cols(fv, "p", plan.w_over_cos)
    ih_u = plan.analyze_cols(fu, "h", plan.weights)
    ih_v = plan.analyze_cols(fv, "h", plan.weights)
    zeta = (im * iq_v + ih_u) / a
    delta = (im * iq_u - ih_v) / a
    return SpectralField(zeta.astype(np.complex128)), SpectralField(
        delta.astype(np.complex128)
    )
