"""Complex shifted solves (dt*L + alpha) x = b in spectral space.

L is the linear gravity operator (group ``lg``) or the full linear
operator including Coriolis (group ``l``).  The gravity operator is
diagonal per (l, m) mode, with vorticity fully decoupled and a 2x2
(phi', div) block; the Coriolis-inclusive operator couples neighboring
degrees l through the spectral sin(lat) recurrences and is solved as a
banded complex system per zonal wavenumber m (bandwidth 4 with the
interleaved (phi', vort, div) unknown ordering).
"""

from __future__ import annotations

import dataclasses
import functools

import numpy as np
from scipy.linalg import lapack

from .errors import ConfigurationError, SolverError
from .sphere import SphereConfig, plan_for
from .swe import LG, L, ModelParams, PrognosticState, TermGroup, tendency_group

_KL = 4
_KU = 4
_COND_LIMIT = 1e13


@dataclasses.dataclass(frozen=True)
class ShiftedSolveSpec:
    """One shifted solve: term group, step size, complex shift, model."""

    term_group: TermGroup
    dt: float
    alpha: complex
    params: ModelParams

    def __post_init__(self):
        if self.dt <= 0:
            raise ConfigurationError("dt must be positive")
        if self.term_group.atoms not in (LG.atoms, L.atoms):
            raise ConfigurationError(
                f"shifted solves support groups 'lg' and 'l', got {self.term_group.token!r}"
            )


def _epsilons(trunc: int, m: int) -> np.ndarray:
    l = np.arange(trunc + 2, dtype=float)
    num = l * l - m * m
    den = 4.0 * l * l - 1.0
    out = np.zeros(trunc + 2)
    good = num > 0
    out[good] = np.sqrt(num[good] / den[good])
    return out


class ShiftedLinearSolver:
    """Reusable factorization cache for one (group, dt, params) triple.

    The Coriolis band matrices are assembled once per m; their LU factors
    are cached per (m, alpha) and reused for every right-hand side, which
    is what makes the repeated identical shifts of a REXI sum cheap.
    Warm the cache single-threaded, then share it read-only.
    """

    def __init__(self, group: TermGroup, dt: float, params: ModelParams):
        if group.atoms not in (LG.atoms, L.atoms):
            raise ConfigurationError(
                f"shifted solves support groups 'lg' and 'l', got {group.token!r}"
            )
        self.group = group
        self.dt = float(dt)
        self.params = params
        cfg = params.cfg
        self.trunc = cfg.trunc
        plan = plan_for(cfg)
        self._kappa = plan.ll1 / cfg.radius_a**2
        self._with_coriolis = group.atoms == L.atoms and cfg.omega > 0.0
        self._bands: dict[int, np.ndarray] = {}
        self._factors: dict[tuple[int, complex], tuple[np.ndarray, np.ndarray]] = {}
        self._band_norms: dict[int, float] = {}

    # ------------------------------------------------------------------
    # gravity-only path: diagonal in (l, m)

    def _solve_lg_batch(self, alphas: np.ndarray, stacked: np.ndarray) -> np.ndarray:
        """Solve (dt*L_g + alpha) x = b for a batch of shifts at once.

        Returns an array of shape (len(alphas), 3, n, n).
        """
        phi_b, vort_b, div_b = stacked
        a = np.asarray(alphas, dtype=np.complex128)[:, None, None]
        kap = self._kappa[None, :, None]
        phibar = self.params.mean_geopotential
        det = a * a + self.dt * self.dt * phibar * kap
        scale = np.abs(a) ** 2 + self.dt * self.dt * phibar * kap
        bad = np.abs(det) <= 1e-13 * scale
        if np.any(bad):
            k, l, _ = np.argwhere(bad)[0]
            raise SolverError(
                f"singular gravity block at degree l={l} for shift alpha={alphas[k]}"
            )
        if np.any(a == 0.0):
            raise SolverError("alpha = 0 makes the decoupled vorticity row singular")
        phi = (a * phi_b[None] + self.dt * phibar * div_b[None]) / det
        div = (-self.dt * kap * phi_b[None] + a * div_b[None]) / det
        vort = vort_b[None] / a
        return np.stack([phi, np.broadcast_to(vort, phi.shape).copy(), div], axis=1)

    def _apply_lg(self, alpha: complex, stacked: np.ndarray) -> np.ndarray:
        phi_b, vort_b, div_b = stacked
        kap = self._kappa[:, None]
        phibar = self.params.mean_geopotential
        phi = alpha * phi_b - self.dt * phibar * div_b
        div = self.dt * kap * phi_b + alpha * div_b
        vort = alpha * vort_b
        return np.stack([phi, vort, div])

    # ------------------------------------------------------------------
    # Coriolis-inclusive path: banded per zonal wavenumber

    def _band_for_m(self, m: int) -> np.ndarray:
        """dt*L in LAPACK band storage (without the alpha diagonal)."""
        band = self._bands.get(m)
        if band is not None:
            return band
        cfg = self.params.cfg
        trunc = self.trunc
        dt = self.dt
        phibar = self.params.mean_geopotential
        omega2 = 2.0 * cfg.omega
        eps = _epsilons(trunc, m)
        nl = trunc + 1 - m
        n = 3 * nl
        ab = np.zeros((2 * _KL + _KU + 1, n), dtype=np.complex128)

        def put(i, j, val):
            ab[_KL + _KU + i - j, j] += val

        for k in range(nl):
            l = m + k
            p = 3 * k
            # gravity block
            put(p, p + 2, -dt * phibar)
            put(p + 2, p, dt * self._kappa[l])
            if not self._with_coriolis:
                continue
            if l >= 1:
                rot = dt * omega2 * 1j * m / (l * (l + 1.0))
                put(p + 1, p + 1, rot)
                put(p + 2, p + 2, rot)
            if k >= 1:
                # couplings to degree l-1 (stream/potential absent for l-1 = 0)
                fac = (l + 1.0) / l if l - 1 >= 1 else 1.0
                put(p + 1, p - 1, -dt * omega2 * eps[l] * fac)
                put(p + 2, p - 2, dt * omega2 * eps[l] * fac)
            if k + 1 < nl:
                lofac = l / (l + 1.0)
                put(p + 1, p + 5, -dt * omega2 * eps[l + 1] * lofac)
                put(p + 2, p + 4, dt * omega2 * eps[l + 1] * lofac)
        ab.setflags(write=False)
        self._bands[m] = ab
        self._band_norms[m] = float(
            np.max(np.sum(np.abs(ab[_KL:, :]), axis=0))
        )
        return ab

    def _factor(self, m: int, alpha: complex):
        key = (m, complex(alpha))
        cached = self._factors.get(key)
        if cached is not None:
            return cached
        ab = self._band_for_m(m).copy()
        n = ab.shape[1]
        ab[_KL + _KU, :] += alpha
        lu, piv, info = lapack.zgbtrf(ab, _KL, _KU)
        if info != 0:
            raise SolverError(f"banded LU failed for (m={m}, alpha={alpha}): info={info}")
        diag = np.abs(lu[_KL + _KU, :])
        norm = self._band_norms[m] + abs(alpha)
        if np.min(diag) == 0.0 or norm / np.min(diag) > _COND_LIMIT:
            raise SolverError(
                f"numerically singular band matrix for (m={m}, alpha={alpha})"
            )
        self._factors[key] = (lu, piv)
        return lu, piv

    def warm(self, alphas):
        """Populate the factorization cache (call before sharing threads)."""
        if self._with_coriolis or self.group.atoms == L.atoms:
            for m in range(self.trunc + 1):
                for alpha in alphas:
                    self._factor(m, alpha)
        return self

    def _solve_l_one(self, alpha: complex, stacked: np.ndarray) -> np.ndarray:
        trunc = self.trunc
        out = np.zeros_like(stacked)
        for m in range(trunc + 1):
            nl = trunc + 1 - m
            rhs = np.empty(3 * nl, dtype=np.complex128)
            rhs[0::3] = stacked[0, m:, m]
            rhs[1::3] = stacked[1, m:, m]
            rhs[2::3] = stacked[2, m:, m]
            lu, piv = self._factor(m, alpha)
            x, info = lapack.zgbtrs(lu, _KL, _KU, rhs, piv)
            if info != 0:
                raise SolverError(f"banded solve failed for (m={m}, alpha={alpha})")
            out[0, m:, m] = x[0::3]
            out[1, m:, m] = x[1::3]
            out[2, m:, m] = x[2::3]
        return out

    def _apply_l_one(self, alpha: complex, stacked: np.ndarray) -> np.ndarray:
        trunc = self.trunc
        out = np.zeros_like(stacked)
        for m in range(trunc + 1):
            nl = trunc + 1 - m
            x = np.empty(3 * nl, dtype=np.complex128)
            x[0::3] = stacked[0, m:, m]
            x[1::3] = stacked[1, m:, m]
            x[2::3] = stacked[2, m:, m]
            ab = self._band_for_m(m)
            y = alpha * x
            n = 3 * nl
            for off in range(-_KL, _KU + 1):
                row = _KL + _KU - off
                if off >= 0:
                    seg = ab[row, off:n]
                    y[: n - off] += seg * x[off:n]
                else:
                    seg = ab[row, : n + off]
                    y[-off:] += seg * x[: n + off]
            out[0, m:, m] = y[0::3]
            out[1, m:, m] = y[1::3]
            out[2, m:, m] = y[2::3]
        return out

    # ------------------------------------------------------------------
    # public entry points on stacked (3, n, n) coefficient arrays

    def solve_stacked(self, alpha: complex, stacked: np.ndarray) -> np.ndarray:
        if self._with_coriolis:
            return self._solve_l_one(alpha, stacked)
        return self._solve_lg_batch(np.array([alpha]), stacked)[0]

    def solve_stacked_batch(self, alphas, stacked: np.ndarray) -> np.ndarray:
        if self._with_coriolis:
            return np.stack([self._solve_l_one(a, stacked) for a in alphas])
        return self._solve_lg_batch(np.asarray(alphas), stacked)

    def apply_stacked(self, alpha: complex, stacked: np.ndarray) -> np.ndarray:
        """Forward operator (dt*L + alpha) x through the same representation."""
        if self._with_coriolis:
            return self._apply_l_one(alpha, stacked)
        return self._apply_lg(alpha, stacked)


@functools.lru_cache(maxsize=16)
def get_solver(group_token: str, dt: float, params: ModelParams) -> ShiftedLinearSolver:
    return ShiftedLinearSolver(TermGroup.parse(group_token), dt, params)


def solve_lg_shifted(spec: ShiftedSolveSpec, b: PrognosticState) -> PrognosticState:
    """Solve (dt*L_g + alpha) x = b per (l, m) mode."""
    if spec.term_group.atoms != LG.atoms:
        raise ConfigurationError("solve_lg_shifted expects term group 'lg'")
    solver = get_solver("lg", spec.dt, spec.params)
    return PrognosticState.from_stack(
        solver.solve_stacked(spec.alpha, b.stack()), spec.params.cfg
    )


def solve_l_shifted(spec: ShiftedSolveSpec, b: PrognosticState) -> PrognosticState:
    """Solve (dt*(L_g + L_c) + alpha) x = b, banded per zonal wavenumber."""
    if spec.term_group.atoms != L.atoms:
        raise ConfigurationError("solve_l_shifted expects term group 'l'")
    solver = get_solver("l", spec.dt, spec.params)
    return PrognosticState.from_stack(
        solver.solve_stacked(spec.alpha, b.stack()), spec.params.cfg
    )


# ----------------------------------------------------------------------
# dense test oracle


def mode_index_map(trunc: int) -> list[tuple[int, int]]:
    """Packing order of (l, m) modes: m-major, matching the band layout."""
    return [(l, m) for m in range(trunc + 1) for l in range(m, trunc + 1)]


def pack_stacked(stacked: np.ndarray) -> np.ndarray:
    trunc = stacked.shape[1] - 1
    modes = mode_index_map(trunc)
    out = np.empty(3 * len(modes), dtype=np.complex128)
    for i, (l, m) in enumerate(modes):
        out[3 * i : 3 * i + 3] = stacked[:, l, m]
    return out


def unpack_stacked(vec: np.ndarray, trunc: int) -> np.ndarray:
    modes = mode_index_map(trunc)
    out = np.zeros((3, trunc + 1, trunc + 1), dtype=np.complex128)
    for i, (l, m) in enumerate(modes):
        out[:, l, m] = vec[3 * i : 3 * i + 3]
    return out


def dense_operator_matrix(
    term_group: TermGroup, dt: float, params: ModelParams, trunc_small: int
) -> np.ndarray:
    """Materialize dt*L as a dense matrix by probing the tendency path.

    Intended as a test oracle; columns come from applying tendency_group to
    unit coefficient vectors (the operators are zonally symmetric, hence
    complex-linear on the m >= 0 coefficient blocks).
    """
    if trunc_small > 15:
        raise ConfigurationError("dense operator refused above T15 (memory guard)")
    cfg = params.cfg
    if cfg.trunc != trunc_small:
        cfg = SphereConfig.for_truncation(
            trunc_small, cfg.radius_a, cfg.omega, cfg.gravity_g
        )
        params = ModelParams(params.mean_geopotential, cfg)
    modes = mode_index_map(trunc_small)
    n = 3 * len(modes)
    mat = np.zeros((n, n), dtype=np.complex128)
    for col in range(n):
        mode, var = divmod(col, 3)
        l, m = modes[mode]
        probe = PrognosticState.zeros(cfg)
        (probe.phi_pert, probe.vort, probe.div)[var].coeffs[l, m] = 1.0
        out = tendency_group(term_group, probe, params)
        mat[:, col] = pack_stacked(out.stack())
    return dt * mat
