"""Initial conditions, reference solutions, error metrics, and sweeps.

The main test case is a balanced mid-latitude zonal jet whose height
field integrates the gravity-Coriolis balance relation along latitude,
optionally disturbed by a Gaussian height bump that triggers a slowly
growing instability.  Jet and bump constants live in ``galewsky.cfg`` next
to this module; the mean geopotential is an independent stiffness knob.
"""

from __future__ import annotations

import dataclasses
import importlib.resources
import time
from pathlib import Path

import numpy as np
from scipy.integrate import quad

from .errors import ConfigurationError, DataError
from .fieldio import read_spectral_fields, write_spectral_fields
from .rexi import RexiSetup
from .sphere import (
    EARTH_GRAVITY,
    EARTH_OMEGA,
    EARTH_RADIUS,
    GridField,
    SphereConfig,
    SpectralField,
    analysis,
    plan_for,
    synthesis,
    vortdiv_from_uv,
)
from .steppers import build_stepper, integrate, parse_stepper_id
from .swe import ModelParams, PrognosticState

BENCHMARK_NAMES = (
    "barotropic_instability",
    "barotropic_instability_no_bump",
    "linear_gravity_wave",
)

ERROR_FILTER_METERS = 100.0

# desk-scale step-size grids mirroring the production study structure
DT_GRID_EXPLICIT = (15.0 / 8, 15.0 / 4, 15.0 / 2, 15.0, 30.0, 60.0)
DT_GRID_REXI = (15.0, 30.0, 60.0, 120.0, 180.0, 360.0, 480.0, 600.0)
DT_GRID_IMPLICIT = tuple(sorted(set(DT_GRID_EXPLICIT) | set(DT_GRID_REXI)))


@dataclasses.dataclass(frozen=True)
class BenchmarkSpec:
    """One benchmark configuration (case, stiffness, horizon, constants)."""

    name: str
    mean_geopotential: float
    horizon_hours: float = 24.0
    radius_a: float = EARTH_RADIUS
    omega: float = EARTH_OMEGA
    gravity_g: float = EARTH_GRAVITY

    def __post_init__(self):
        if self.name not in BENCHMARK_NAMES:
            raise ConfigurationError(f"unknown benchmark {self.name!r}")
        if self.horizon_hours <= 0 or self.mean_geopotential <= 0:
            raise ConfigurationError("horizon and mean geopotential must be positive")

    def sphere_config(self, trunc: int) -> SphereConfig:
        return SphereConfig.for_truncation(
            trunc, self.radius_a, self.omega, self.gravity_g
        )

    def model_params(self, cfg: SphereConfig) -> ModelParams:
        return ModelParams(self.mean_geopotential, cfg)


def default_benchmark(name: str = "barotropic_instability", horizon_hours: float = 24.0) -> BenchmarkSpec:
    return BenchmarkSpec(
        name=name, mean_geopotential=1e4 * EARTH_GRAVITY, horizon_hours=horizon_hours
    )


def load_benchmark_constants() -> dict[str, float]:
    """Jet/bump constants from the plain-text key=value config file."""
    text = (
        importlib.resources.files("swerexi").joinpath("galewsky.cfg").read_text()
    )
    constants: dict[str, float] = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, value = line.partition("=")
        constants[key.strip()] = float(value)
    return constants


def _jet_velocity(lat, c) -> np.ndarray:
    """Zonal jet profile, zero outside (lat_south, lat_north)."""
    lat = np.asarray(lat, dtype=float)
    lat0, lat1 = c["jet_lat_south"], c["jet_lat_north"]
    e_n = np.exp(-4.0 / (lat1 - lat0) ** 2)
    out = np.zeros_like(lat)
    inside = (lat > lat0) & (lat < lat1)
    x = lat[inside]
    out[inside] = (c["u_max"] / e_n) * np.exp(1.0 / ((x - lat0) * (x - lat1)))
    return out


def _zonal_velocity_evaluator(vort: SpectralField, cfg: SphereConfig):
    """Pointwise u(lat) of a zonal state, from its m = 0 stream function.

    Needed because the balance integral must see the truncation-projected
    jet (the one the discrete state carries), not the raw analytic
    profile; otherwise the unresolved spectral tail shows up as a spurious
    imbalance of order 1e-2 at desk truncations.
    """
    trunc = vort.trunc
    ll1 = np.arange(trunc + 1) * (np.arange(trunc + 1) + 1.0)
    psi = np.zeros(trunc + 1)
    psi[1:] = -cfg.radius_a**2 * vort.coeffs[1:, 0].real / ll1[1:]

    def u_at(lat: float) -> float:
        x = np.sin(lat)
        cos = np.cos(lat)
        p = np.zeros(trunc + 2)
        p[0] = 1.0 / np.sqrt(4.0 * np.pi)
        p[1] = np.sqrt(3.0) * x * p[0]
        for l in range(2, trunc + 2):
            e_l = np.sqrt(l * l / (4.0 * l * l - 1.0))
            e_lm1 = np.sqrt((l - 1) ** 2 / (4.0 * (l - 1) ** 2 - 1.0))
            p[l] = (x * p[l - 1] - e_lm1 * p[l - 2]) / e_l
        dp_dlat = 0.0
        for l in range(1, trunc + 1):
            e_l = np.sqrt(l * l / (4.0 * l * l - 1.0))
            e_lp1 = np.sqrt((l + 1) ** 2 / (4.0 * (l + 1) ** 2 - 1.0))
            dp_dlat += psi[l] * ((l + 1) * e_l * p[l - 1] - l * e_lp1 * p[l + 1]) / cos
        return -dp_dlat / cfg.radius_a

    return u_at


_INIT_CACHE: dict[tuple, PrognosticState] = {}


def init_barotropic_instability(
    cfg: SphereConfig, with_bump: bool = True
) -> PrognosticState:
    """Balanced zonal jet, optionally disturbed by a Gaussian height bump.

    The perturbation height integrates u*(f + u*tan(lat)/a) along latitude
    by adaptive quadrature, with u the truncation-projected jet, and is
    recentered so its global mean vanishes (the mean geopotential enters
    separately through the model parameters).
    """
    key = (cfg, with_bump)
    cached = _INIT_CACHE.get(key)
    if cached is not None:
        return cached.copy()
    constants = load_benchmark_constants()
    plan = plan_for(cfg)
    a, g = cfg.radius_a, cfg.gravity_g

    u_lat = _jet_velocity(plan.lats, constants)
    u_grid = np.repeat(u_lat[:, None], cfg.nlon, axis=1)
    v_grid = np.zeros_like(u_grid)
    vort, _ = vortdiv_from_uv(GridField(u_grid, cfg), GridField(v_grid, cfg), cfg)
    vort.coeffs[:, 1:] = 0.0  # the state is exactly zonal
    div = SpectralField.zeros(cfg.trunc)

    u_t = _zonal_velocity_evaluator(vort, cfg)

    def balance_integrand(lat):
        u = u_t(lat)
        f = 2.0 * cfg.omega * np.sin(lat)
        return a * u * (f + np.tan(lat) * u / a)

    gh = np.empty(cfg.nlat)
    lat0 = constants["jet_lat_south"]
    lat1 = constants["jet_lat_north"]
    for j, lat in enumerate(plan.lats):
        val, _err = quad(
            balance_integrand,
            -np.pi / 2,
            lat,
            points=[p for p in (lat0, lat1) if -np.pi / 2 < p < lat],
            limit=200,
            epsabs=1e-12,
            epsrel=1e-12,
        )
        if not np.isfinite(val):
            raise DataError("balance integral failed to converge")
        gh[j] = -val
    # recenter so the global mean of the perturbation is zero
    mean = np.sum(plan.weights * gh) / 2.0
    phi_grid = np.repeat((gh - mean)[:, None], cfg.nlon, axis=1)

    if with_bump:
        lon = plan.lons[None, :]
        lat = plan.lats[:, None]
        lon_c = np.where(lon > np.pi, lon - 2.0 * np.pi, lon)  # bump at lon = 0
        shape = (
            np.cos(lat)
            * np.exp(-((lon_c / constants["bump_half_width_lon"]) ** 2))
            * np.exp(
                -(((constants["bump_center_lat"] - lat) / constants["bump_half_width_lat"]) ** 2)
            )
        )
        phi_grid = phi_grid + g * constants["bump_amplitude"] * shape

    phi = analysis(GridField(phi_grid, cfg), cfg)
    state = PrognosticState(phi, vort, div, cfg)
    _INIT_CACHE[key] = state.copy()
    return state


def init_linear_gravity_wave(
    cfg: SphereConfig, degree: int = 5, order: int = 0, amplitude: float = 1e-3
) -> PrognosticState:
    """Single-mode geopotential disturbance for dispersion checks.

    Amplitude is in m^2/s^2, tiny by default so nonlinear feedback is
    negligible; run it on a non-rotating sphere to compare against the
    analytic frequency sqrt(mean_phi * l(l+1)) / a.
    """
    state = PrognosticState.zeros(cfg)
    state.phi_pert.coeffs[degree, order] = amplitude
    return state


def benchmark_initial_state(spec: BenchmarkSpec, cfg: SphereConfig) -> PrognosticState:
    if spec.name == "barotropic_instability":
        return init_barotropic_instability(cfg, with_bump=True)
    if spec.name == "barotropic_instability_no_bump":
        return init_barotropic_instability(cfg, with_bump=False)
    return init_linear_gravity_wave(cfg)


def stiffness_sweep_configs(horizon_hours: float = 24.0) -> list[BenchmarkSpec]:
    """Nine configs varying the mean surface height from 2000 m to 18000 m."""
    return [
        BenchmarkSpec(
            name="barotropic_instability",
            mean_geopotential=h * EARTH_GRAVITY,
            horizon_hours=horizon_hours,
        )
        for h in range(2000, 20000, 2000)
    ]


def reference_solution(
    spec: BenchmarkSpec,
    cfg: SphereConfig,
    dt_ref: float,
    path: str | Path,
) -> PrognosticState:
    """Fourth-order fully explicit reference run, persisted as a field dump."""
    params = spec.model_params(cfg)
    state0 = benchmark_initial_state(spec, cfg)
    stepper = build_stepper(parse_stepper_id("ln_erk", order=4), params)
    horizon = spec.horizon_hours * 3600.0
    result = integrate(stepper, state0, dt_ref, horizon)
    if result.diverged:
        raise DataError(
            f"reference run diverged at step {result.blow_up_step} (dt={dt_ref})"
        )
    final = result.state
    write_spectral_fields(path, [final.phi_pert, final.vort, final.div], cfg)
    return final


def load_reference(path: str | Path, cfg: SphereConfig) -> PrognosticState:
    fields, header = read_spectral_fields(path, 3)
    if header[0] != cfg.trunc:
        raise ConfigurationError(
            f"reference truncation T{header[0]} does not match grid T{cfg.trunc}"
        )
    return PrognosticState(fields[0], fields[1], fields[2], cfg)


def reference_filename(spec: BenchmarkSpec, trunc: int, dt_ref: float) -> str:
    """Content-describing name to prevent stale-reference comparisons."""
    return (
        f"ref_{spec.name}_T{trunc}_h{spec.horizon_hours:g}"
        f"_phibar{spec.mean_geopotential:.6g}_dt{dt_ref:g}.bin"
    )


def linf_error(
    state: PrognosticState, reference: PrognosticState, field: str = "h"
) -> float:
    """Max-abs grid difference; the height field is reported in meters."""
    if state.cfg != reference.cfg:
        raise ConfigurationError("state and reference use different grids")
    cfg = state.cfg
    pick = {"h": "phi_pert", "vort": "vort", "div": "div"}
    if field not in pick:
        raise ConfigurationError(f"unknown error field {field!r}")
    attr = pick[field]
    a = synthesis(getattr(state, attr), cfg).values
    b = synthesis(getattr(reference, attr), cfg).values
    if field == "h":
        a = a / cfg.gravity_g
        b = b / cfg.gravity_g
    return float(np.max(np.abs(a - b)))


@dataclasses.dataclass(frozen=True)
class SweepRow:
    stepper_id: str
    dt: float
    error: float | None
    status: str  # ok | filtered | diverged
    wallclock: float

    def csv_fields(self) -> list[str]:
        err = "" if self.error is None else f"{self.error:.12g}"
        return [
            self.stepper_id,
            f"{self.dt:g}",
            err,
            self.status,
            f"{self.wallclock:.6f}",
        ]


def run_sweep(
    stepper_ids,
    dt_grid,
    spec: BenchmarkSpec,
    cfg: SphereConfig,
    reference: PrognosticState,
    rexi_setup: RexiSetup | None = None,
    error_filter: float = ERROR_FILTER_METERS,
) -> list[SweepRow]:
    """One row per (stepper id, dt), sorted; divergence is recorded per
    row and never aborts the sweep; errors above the filter threshold are
    flagged rather than dropped."""
    params = spec.model_params(cfg)
    state0 = benchmark_initial_state(spec, cfg)
    horizon = spec.horizon_hours * 3600.0
    rows = []
    for stepper_id in stepper_ids:
        for dt in dt_grid:
            if abs(horizon / dt - round(horizon / dt)) > 1e-9:
                rows.append(SweepRow(stepper_id, dt, None, "diverged", 0.0))
                continue
            stepper = build_stepper(stepper_id, params, rexi_setup)
            t0 = time.perf_counter()
            try:
                result = integrate(stepper, state0, dt, horizon)
            except Exception:
                rows.append(
                    SweepRow(stepper_id, dt, None, "diverged", time.perf_counter() - t0)
                )
                continue
            wall = time.perf_counter() - t0
            if result.diverged:
                rows.append(SweepRow(stepper_id, dt, None, "diverged", wall))
                continue
            err = linf_error(result.state, reference, "h")
            status = "ok" if err <= error_filter else "filtered"
            rows.append(SweepRow(stepper_id, dt, err, status, wall))
    rows.sort(key=lambda r: (r.stepper_id, r.dt))
    return rows


def write_sweep_csv(path: str | Path, rows) -> None:
    lines = ["stepper_id,dt_seconds,linf_h_error_m,status,wallclock_s"]
    lines += [",".join(r.csv_fields()) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")
