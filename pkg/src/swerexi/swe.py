"""Right-hand side of the rotating-sphere shallow-water equations.

State variables are the geopotential perturbation, vorticity, and
divergence in spectral space.  The right-hand side splits into three term
groups addressed by short ids: ``lg`` (linear gravity), ``lc`` (linear
Coriolis), and ``n`` (nonlinear advection/divergence); ``l`` = lg+lc and
``ln`` = everything.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import ConfigurationError, DataError
from .sphere import (
    GridField,
    SphereConfig,
    SpectralField,
    analysis,
    laplacian,
    plan_for,
    synthesis,
    uv_from_vortdiv,
    vortdiv_from_uv,
)

_ATOMS = ("lg", "lc", "n")
_GROUP_TOKENS = {
    "lg": frozenset({"lg"}),
    "lc": frozenset({"lc"}),
    "l": frozenset({"lg", "lc"}),
    "n": frozenset({"n"}),
    "ln": frozenset({"lg", "lc", "n"}),
}


@dataclasses.dataclass(frozen=True)
class TermGroup:
    """A subset of the shallow-water term atoms {lg, lc, n}."""

    atoms: frozenset

    @classmethod
    def parse(cls, token: str) -> "TermGroup":
        if token not in _GROUP_TOKENS:
            raise ConfigurationError(f"unknown term group {token!r}")
        return cls(_GROUP_TOKENS[token])

    @property
    def token(self) -> str:
        if self.atoms == frozenset({"lg", "lc"}):
            return "l"
        if self.atoms == frozenset({"lg", "lc", "n"}):
            return "ln"
        return "_".join(a for a in _ATOMS if a in self.atoms)

    @property
    def is_linear(self) -> bool:
        return "n" not in self.atoms

    def __or__(self, other: "TermGroup") -> "TermGroup":
        return TermGroup(self.atoms | other.atoms)

    def __contains__(self, atom: str) -> bool:
        return atom in self.atoms


LG = TermGroup.parse("lg")
LC = TermGroup.parse("lc")
L = TermGroup.parse("l")
N = TermGroup.parse("n")
LC_N = TermGroup(frozenset({"lc", "n"}))
LN = TermGroup.parse("ln")


@dataclasses.dataclass(frozen=True)
class ModelParams:
    """Mean geopotential and grid for one model configuration."""

    mean_geopotential: float
    cfg: SphereConfig

    def __post_init__(self):
        if self.mean_geopotential <= 0:
            raise ConfigurationError("mean geopotential must be positive")


@dataclasses.dataclass
class PrognosticState:
    """Spectral state (geopotential perturbation, vorticity, divergence)."""

    phi_pert: SpectralField
    vort: SpectralField
    div: SpectralField
    cfg: SphereConfig

    @classmethod
    def zeros(cls, cfg: SphereConfig) -> "PrognosticState":
        t = cfg.trunc
        return cls(
            SpectralField.zeros(t), SpectralField.zeros(t), SpectralField.zeros(t), cfg
        )

    @classmethod
    def from_stack(cls, stacked: np.ndarray, cfg: SphereConfig) -> "PrognosticState":
        return cls(
            SpectralField(stacked[0].copy()),
            SpectralField(stacked[1].copy()),
            SpectralField(stacked[2].copy()),
            cfg,
        )

    def stack(self) -> np.ndarray:
        """Stacked (3, trunc+1, trunc+1) complex coefficient array."""
        return np.stack(
            [self.phi_pert.coeffs, self.vort.coeffs, self.div.coeffs]
        ).astype(np.complex128)

    def copy(self) -> "PrognosticState":
        return PrognosticState(
            self.phi_pert.copy(), self.vort.copy(), self.div.copy(), self.cfg
        )

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.phi_pert.coeffs))
            and np.all(np.isfinite(self.vort.coeffs))
            and np.all(np.isfinite(self.div.coeffs))
        )

    def __add__(self, other: "PrognosticState") -> "PrognosticState":
        return PrognosticState(
            SpectralField(self.phi_pert.coeffs + other.phi_pert.coeffs),
            SpectralField(self.vort.coeffs + other.vort.coeffs),
            SpectralField(self.div.coeffs + other.div.coeffs),
            self.cfg,
        )

    def __sub__(self, other: "PrognosticState") -> "PrognosticState":
        return PrognosticState(
            SpectralField(self.phi_pert.coeffs - other.phi_pert.coeffs),
            SpectralField(self.vort.coeffs - other.vort.coeffs),
            SpectralField(self.div.coeffs - other.div.coeffs),
            self.cfg,
        )

    def __mul__(self, scalar) -> "PrognosticState":
        return PrognosticState(
            SpectralField(self.phi_pert.coeffs * scalar),
            SpectralField(self.vort.coeffs * scalar),
            SpectralField(self.div.coeffs * scalar),
            self.cfg,
        )

    __rmul__ = __mul__


def validate_state(state: PrognosticState):
    t = state.cfg.trunc
    for f in (state.phi_pert, state.vort, state.div):
        if f.trunc != t:
            raise ConfigurationError("state fields disagree with the grid truncation")
    if not state.is_finite():
        raise DataError("state contains non-finite coefficients")


def tendency_lg(state: PrognosticState, params: ModelParams) -> PrognosticState:
    """Linear gravity terms: (-mean_phi * div, 0, -lap(phi_pert)).

    Diagonal per (l, m) mode; the Laplacian of the full geopotential equals
    that of the perturbation because the mean is spatially constant.
    """
    cfg = params.cfg
    plan = plan_for(cfg)
    kappa = (plan.ll1 / cfg.radius_a**2)[:, None]
    dphi = -params.mean_geopotential * state.div.coeffs
    ddiv = kappa * state.phi_pert.coeffs
    return PrognosticState(
        SpectralField(dphi.astype(np.complex128)),
        SpectralField.zeros(cfg.trunc),
        SpectralField(ddiv.astype(np.complex128)),
        cfg,
    )


def tendency_lc(
    state: PrognosticState,
    params: ModelParams,
    uv: tuple[GridField, GridField] | None = None,
) -> PrognosticState:
    """Linear Coriolis terms: (0, -f*div - V.grad(f), f*vort + k.(grad f)xV).

    Evaluated pseudo-spectrally: multiply by f = 2*Omega*sin(lat) on the
    grid and re-analyze, matching the treatment of the other products.
    """
    cfg = params.cfg
    plan = plan_for(cfg)
    if cfg.omega == 0.0:
        return PrognosticState.zeros(cfg)
    if uv is None:
        uv = uv_from_vortdiv(state.vort, state.div, cfg)
    u, v = uv
    f = 2.0 * cfg.omega * plan.sin_lat[:, None]
    dfdlat_over_a = 2.0 * cfg.omega * plan.cos_lat[:, None] / cfg.radius_a
    vort_grid = synthesis(state.vort, cfg).values
    div_grid = synthesis(state.div, cfg).values
    dvort = analysis(GridField(-f * div_grid - dfdlat_over_a * v.values, cfg), cfg)
    ddiv = analysis(GridField(f * vort_grid - dfdlat_over_a * u.values, cfg), cfg)
    return PrognosticState(SpectralField.zeros(cfg.trunc), dvort, ddiv, cfg)


def tendency_n(
    state: PrognosticState,
    params: ModelParams,
    uv: tuple[GridField, GridField] | None = None,
) -> PrognosticState:
    """Nonlinear terms in flux form.

    phi:  -div(phi' V)            (equals -V.grad(phi') - phi' div(V))
    vort: -div(vort V)
    div:  k.curl(vort V) - lap(|V|^2 / 2)

    Products are formed on the 3/2-dealiased grid; derivatives come from
    the quadrature identities in the transform kernel, so the (0,0) mass
    mode of the phi tendency vanishes identically.
    """
    cfg = params.cfg
    if uv is None:
        uv = uv_from_vortdiv(state.vort, state.div, cfg)
    u, v = uv
    phi_grid = synthesis(state.phi_pert, cfg).values
    vort_grid = synthesis(state.vort, cfg).values

    _, div_phi_flux = vortdiv_from_uv(
        GridField(phi_grid * u.values, cfg), GridField(phi_grid * v.values, cfg), cfg
    )
    curl_zeta_flux, div_zeta_flux = vortdiv_from_uv(
        GridField(vort_grid * u.values, cfg), GridField(vort_grid * v.values, cfg), cfg
    )
    kinetic = analysis(
        GridField(0.5 * (u.values**2 + v.values**2), cfg), cfg
    )
    lap_ke = laplacian(kinetic, cfg)
    return PrognosticState(
        SpectralField(-div_phi_flux.coeffs),
        SpectralField(-div_zeta_flux.coeffs),
        SpectralField(curl_zeta_flux.coeffs - lap_ke.coeffs),
        cfg,
    )


def tendency_group(
    group: TermGroup, state: PrognosticState, params: ModelParams
) -> PrognosticState:
    """Sum of the per-atom tendencies, in the fixed order lg, lc, n.

    Composite groups are literal sums of the atomic results, which makes
    additivity (l = lg + lc, ln = lg + lc + n) exact in floating point; the
    velocity synthesis is shared between lc and n.
    """
    if not group.atoms:
        raise ConfigurationError("empty term group")
    uv = None
    if ("lc" in group and params.cfg.omega != 0.0) or "n" in group:
        uv = uv_from_vortdiv(state.vort, state.div, params.cfg)
    total = None
    for atom in _ATOMS:
        if atom not in group:
            continue
        if atom == "lg":
            part = tendency_lg(state, params)
        elif atom == "lc":
            part = tendency_lc(state, params, uv)
        else:
            part = tendency_n(state, params, uv)
        total = part if total is None else total + part
    return total
