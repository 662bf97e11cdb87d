"""Time steppers and their composition from nomenclature strings.

A stepper id concatenates term groups with the method that integrates
them, e.g. ``lg_irk_lc_n_erk_ver0``: the gravity terms by Crank-Nicolson
and the Coriolis+nonlinear remainder by explicit RK2, Strang-split with
the linear half-steps on the outside (``ver0``; ``ver1`` puts the
remainder outside).  ``ln_erk`` runs everything explicitly; an ``etdrk``
remainder uses the two-stage exponential integrator, which needs no
splitting.
"""

from __future__ import annotations

import dataclasses
import math
import time
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError, DivergenceError, StepperParseError
from .rexi import RexiCoefficients, RexiSetup, coeffs_for_contour
from .solvers import ShiftedLinearSolver, get_solver
from .sphere import synthesis
from .swe import LN, ModelParams, PrognosticState, TermGroup, tendency_group

_METHODS = ("erk", "irk", "rexi", "etdrk")
_GROUP_TOKENS = ("lg", "lc", "l", "n", "ln")
_ALL_ATOMS = frozenset({"lg", "lc", "n"})

PHI_MAX_BLOWUP = 1.0e6  # m^2/s^2, divergence threshold on the height field


@dataclasses.dataclass(frozen=True)
class TimeStepperSpec:
    """Parsed form of a stepper identifier."""

    linear_group: TermGroup
    linear_method: str
    remainder_group: TermGroup | None = None
    remainder_method: str | None = None
    split_version: str | None = None
    order: int = 2

    def __post_init__(self):
        covered = set(self.linear_group.atoms)
        if self.remainder_group is not None:
            overlap = covered & self.remainder_group.atoms
            if overlap:
                raise StepperParseError(f"term groups overlap on {sorted(overlap)}")
            covered |= self.remainder_group.atoms
        if covered != _ALL_ATOMS:
            missing = sorted(_ALL_ATOMS - covered)
            raise StepperParseError(f"stepper does not cover terms {missing}")
        if self.linear_method not in ("erk", "irk", "rexi"):
            raise StepperParseError(f"bad linear method {self.linear_method!r}")
        if self.linear_method in ("irk", "rexi") and not self.linear_group.is_linear:
            raise StepperParseError(
                f"{self.linear_method} cannot integrate nonlinear group "
                f"{self.linear_group.token!r}"
            )
        if self.remainder_group is None:
            if self.split_version is not None:
                raise StepperParseError("split version given for a single stepper")
        elif self.remainder_method == "etdrk":
            if self.split_version is not None:
                raise StepperParseError("etdrk hosts its nonlinearities; no split version")
            if self.linear_method != "rexi":
                raise StepperParseError("etdrk requires an exponential linear part")
        elif self.remainder_method == "erk":
            if self.split_version not in ("ver0", "ver1"):
                raise StepperParseError(
                    "two distinct steppers require a _ver0 or _ver1 suffix"
                )
        else:
            raise StepperParseError(f"bad remainder method {self.remainder_method!r}")

    def canonical_id(self) -> str:
        parts = [self.linear_group.token, self.linear_method]
        if self.remainder_group is not None:
            parts += [self.remainder_group.token, self.remainder_method]
        if self.split_version is not None:
            parts.append(self.split_version)
        return "_".join(parts)


def parse_stepper_id(stepper_id: str, order: int = 2) -> TimeStepperSpec:
    """Parse a nomenclature string into its composition.

    Deterministic; round-trips through ``canonical_id``.  Unknown tokens,
    overlapping groups, and a missing version suffix raise a parse error
    naming the offending token.
    """
    if not stepper_id:
        raise StepperParseError("empty stepper id")
    tokens = stepper_id.split("_")
    version = None
    if tokens and tokens[-1] in ("ver0", "ver1"):
        version = tokens.pop()
    segments: list[tuple[TermGroup, str]] = []
    pending: TermGroup | None = None
    for tok in tokens:
        if tok in _GROUP_TOKENS:
            group = TermGroup.parse(tok)
            if pending is not None:
                if pending.atoms & group.atoms:
                    raise StepperParseError(
                        f"group token {tok!r} overlaps earlier terms in {stepper_id!r}"
                    )
                pending = pending | group
            else:
                pending = group
        elif tok in _METHODS:
            if pending is None:
                raise StepperParseError(f"method {tok!r} has no term group before it")
            segments.append((pending, tok))
            pending = None
        else:
            raise StepperParseError(f"unknown token {tok!r} in {stepper_id!r}")
    if pending is not None:
        raise StepperParseError(f"trailing term group without a method in {stepper_id!r}")
    if not segments:
        raise StepperParseError(f"no integrator segments in {stepper_id!r}")
    if len(segments) == 1:
        group, method = segments[0]
        if method in ("etdrk",):
            raise StepperParseError("etdrk needs an explicit linear segment first")
        return TimeStepperSpec(group, method, split_version=version, order=order)
    if len(segments) == 2:
        (lin_group, lin_method), (rem_group, rem_method) = segments
        return TimeStepperSpec(
            lin_group, lin_method, rem_group, rem_method, version, order
        )
    raise StepperParseError(f"too many integrator segments in {stepper_id!r}")


# ----------------------------------------------------------------------
# elementary steps (generic over anything supporting + and scalar *)


def erk2_step(rhs: Callable, u, dt: float):
    """Classical midpoint RK2."""
    k1 = rhs(u)
    k2 = rhs(u + (0.5 * dt) * k1)
    return u + dt * k2


def rk4_step(rhs: Callable, u, dt: float):
    """Classical fourth-order Runge-Kutta."""
    k1 = rhs(u)
    k2 = rhs(u + (0.5 * dt) * k1)
    k3 = rhs(u + (0.5 * dt) * k2)
    k4 = rhs(u + dt * k3)
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def tree_sum(terms: np.ndarray) -> np.ndarray:
    """Fixed-topology pairwise reduction over axis 0.

    Adjacent indices are added level by level ((0,1), (2,3), ...; an odd
    tail is carried).  The result depends only on the term values and this
    tree, never on how the terms were computed or scheduled.
    """
    arr = terms
    while arr.shape[0] > 1:
        n = arr.shape[0]
        even = arr[0 : n - (n % 2) : 2] + arr[1 : n : 2]
        if n % 2:
            arr = np.concatenate([even, arr[n - 1 : n]], axis=0)
        else:
            arr = even
    return arr[0]


def realify_stacked(stacked: np.ndarray) -> tuple[np.ndarray, float]:
    """Discard the imaginary residue of the zonal coefficients.

    A conjugate-symmetric REXI sum applied to a real-origin state is
    analytically real; floating point leaves a small m = 0 residue which
    is returned for diagnostics.
    """
    residue = float(np.max(np.abs(stacked[:, :, 0].imag))) if stacked.size else 0.0
    out = stacked.copy()
    out[:, :, 0] = out[:, :, 0].real
    return out, residue


def irk_cn_step(
    group: TermGroup,
    state: PrognosticState,
    dt: float,
    params: ModelParams,
    a: float = 0.5,
    solver: ShiftedLinearSolver | None = None,
) -> PrognosticState:
    """Crank-Nicolson: backward Euler over a*dt after forward Euler over
    (1-a)*dt, both through the same spectral operator (a = 1/2, no filter)."""
    if solver is None:
        solver = get_solver(group.token, dt, params)
    stacked = state.stack()
    # rhs = (I + (1-a) dt L) U; apply_stacked(0, x) is dt*L x
    rhs = stacked + (1.0 - a) * solver.apply_stacked(0.0, stacked)
    # (I - a dt L) x = rhs  <=>  ((a dt) L - 1) x = -rhs
    cn_solver = get_solver(group.token, a * dt, params)
    x = cn_solver.solve_stacked(-1.0 + 0.0j, -rhs)
    x, _ = realify_stacked(x)
    return PrognosticState.from_stack(x, params.cfg)


def rexi_term_weights(coeffs: RexiCoefficients) -> np.ndarray:
    return coeffs.betas


def rexi_step(
    group: TermGroup,
    state: PrognosticState,
    dt: float,
    coeffs: RexiCoefficients,
    params: ModelParams,
    solver: ShiftedLinearSolver | None = None,
) -> PrognosticState:
    """Exponential step U' = sum_n beta_n (dt L + alpha_n)^{-1} U.

    Terms are reduced by the fixed pairwise tree (identical to the
    parallel path at any worker count) and the zonal imaginary residue of
    the real-origin state is discarded after the sum.
    """
    if solver is None:
        solver = get_solver(group.token, dt, params)
    stacked = state.stack()
    sols = solver.solve_stacked_batch(coeffs.alphas, stacked)
    weighted = coeffs.betas[:, None, None, None] * sols
    total = tree_sum(weighted)
    total, _ = realify_stacked(total)
    return PrognosticState.from_stack(total, params.cfg)


def etdrk2_generic(apply_psi: Callable, nonlinear_rhs: Callable, u, dt: float):
    """Two-stage exponential time differencing, generic over the state.

    ``apply_psi(k, v)`` must evaluate psi_k(dt L) v.
    """
    nu = nonlinear_rhs(u)
    a = apply_psi(0, u) + dt * apply_psi(1, nu)
    na = nonlinear_rhs(a)
    return a + dt * apply_psi(2, na - nu)


def etdrk2_step(
    linear_group: TermGroup,
    nonlinear_rhs: Callable,
    state: PrognosticState,
    dt: float,
    coeff_set: dict[int, RexiCoefficients],
    params: ModelParams,
    solver: ShiftedLinearSolver | None = None,
) -> PrognosticState:
    """ETD2RK with each psi_k(dt L) v evaluated by its REXI sum."""
    if solver is None:
        solver = get_solver(linear_group.token, dt, params)

    def apply_psi(k: int, v: PrognosticState) -> PrognosticState:
        coeffs = coeff_set[k]
        sols = solver.solve_stacked_batch(coeffs.alphas, v.stack())
        total = tree_sum(coeffs.betas[:, None, None, None] * sols)
        total, _ = realify_stacked(total)
        return PrognosticState.from_stack(total, params.cfg)

    return etdrk2_generic(apply_psi, nonlinear_rhs, state, dt)


# ----------------------------------------------------------------------
# composed steppers


class TimingCollector:
    """Accumulates per-category wallclock over the steps of one run."""

    def __init__(self):
        self.overall = 0.0
        self.nonlinearities = 0.0
        self.rexi_total = 0.0
        self.broadcast = 0.0
        self.term_solves = 0.0
        self.reduce = 0.0

    def add(self, category: str, seconds: float):
        setattr(self, category, getattr(self, category) + seconds)

    def add_rexi_breakdown(self, breakdown):
        self.overall += breakdown.overall
        self.rexi_total += breakdown.rexi_total
        self.broadcast += breakdown.broadcast
        self.term_solves += breakdown.term_solves
        self.reduce += breakdown.reduce


class Stepper:
    """One full-step integrator for a fixed spec/params pair."""

    spec: TimeStepperSpec
    collector: TimingCollector | None = None
    workers: int = 1

    def step(self, state: PrognosticState, dt: float) -> PrognosticState:
        raise NotImplementedError

    def instrument(self, collector: TimingCollector | None, workers: int = 1):
        self.collector = collector
        self.workers = workers
        for child in ("linear", "remainder"):
            sub = getattr(self, child, None)
            if isinstance(sub, Stepper):
                sub.instrument(collector, workers)
        return self


class ExplicitStepper(Stepper):
    def __init__(self, group: TermGroup, params: ModelParams, order: int = 2):
        if order not in (2, 4):
            raise ConfigurationError("explicit Runge-Kutta orders 2 and 4 only")
        self.group = group
        self.params = params
        self.order = order
        self._rhs = lambda u: tendency_group(group, u, params)

    def step(self, state, dt):
        t0 = time.perf_counter() if self.collector else 0.0
        if self.order == 4:
            out = rk4_step(self._rhs, state, dt)
        else:
            out = erk2_step(self._rhs, state, dt)
        if self.collector:
            elapsed = time.perf_counter() - t0
            self.collector.add("overall", elapsed)
            self.collector.add("nonlinearities", elapsed)
        return out


class CrankNicolsonStepper(Stepper):
    def __init__(self, group: TermGroup, params: ModelParams, a: float = 0.5):
        self.group = group
        self.params = params
        self.a = a

    def step(self, state, dt):
        t0 = time.perf_counter() if self.collector else 0.0
        out = irk_cn_step(self.group, state, dt, self.params, self.a)
        if self.collector:
            self.collector.add("overall", time.perf_counter() - t0)
        return out


class RexiStepper(Stepper):
    """Plain exponential step; coefficients and solver cached per dt."""

    def __init__(self, group: TermGroup, params: ModelParams, setup: RexiSetup):
        self.group = group
        self.params = params
        self.setup = setup
        self._cache: dict[float, tuple[RexiCoefficients, ShiftedLinearSolver]] = {}

    def _for_dt(self, dt: float):
        hit = self._cache.get(dt)
        if hit is None:
            coeffs = self.setup.coefficients("psi0", dt)
            solver = get_solver(self.group.token, dt, self.params)
            solver.warm(coeffs.alphas)
            hit = (coeffs, solver)
            self._cache[dt] = hit
        return hit

    def step(self, state, dt):
        coeffs, solver = self._for_dt(dt)
        if self.collector is None and self.workers == 1:
            return rexi_step(self.group, state, dt, coeffs, self.params, solver)
        from .parallel import distribute_terms, parallel_rexi_apply

        plan = distribute_terms(coeffs.num_terms, self.workers)
        out, breakdown = parallel_rexi_apply(
            self.group, state, dt, coeffs, plan, self.params, solver
        )
        if self.collector is not None:
            self.collector.add_rexi_breakdown(breakdown)
        return out


class EtdrkStepper(Stepper):
    def __init__(
        self,
        linear_group: TermGroup,
        remainder_group: TermGroup,
        params: ModelParams,
        setup: RexiSetup,
    ):
        self.linear_group = linear_group
        self.remainder_group = remainder_group
        self.params = params
        self.setup = setup
        self._cache: dict[float, tuple[dict, ShiftedLinearSolver]] = {}
        self._rhs = lambda u: tendency_group(remainder_group, u, params)

    def _for_dt(self, dt: float):
        hit = self._cache.get(dt)
        if hit is None:
            contour = self.setup.contour_for_dt(dt)
            coeff_set = {
                k: coeffs_for_contour(f"psi{k}", contour) for k in (0, 1, 2)
            }
            solver = get_solver(self.linear_group.token, dt, self.params)
            solver.warm(coeff_set[0].alphas)
            hit = (coeff_set, solver)
            self._cache[dt] = hit
        return hit

    def step(self, state, dt):
        coeff_set, solver = self._for_dt(dt)
        if self.collector is None and self.workers == 1:
            return etdrk2_step(
                self.linear_group, self._rhs, state, dt, coeff_set, self.params, solver
            )
        from .parallel import distribute_terms, parallel_rexi_apply

        def apply_psi(k, v):
            coeffs = coeff_set[k]
            plan = distribute_terms(coeffs.num_terms, self.workers)
            out, breakdown = parallel_rexi_apply(
                self.linear_group, v, dt, coeffs, plan, self.params, solver
            )
            if self.collector is not None:
                self.collector.add_rexi_breakdown(breakdown)
            return out

        def timed_rhs(u):
            t0 = time.perf_counter()
            out = self._rhs(u)
            if self.collector is not None:
                elapsed = time.perf_counter() - t0
                self.collector.add("overall", elapsed)
                self.collector.add("nonlinearities", elapsed)
            return out

        return etdrk2_generic(apply_psi, timed_rhs, state, dt)


class StrangSplitStepper(Stepper):
    """ver0: L(dt/2) N(dt) L(dt/2); ver1: N(dt/2) L(dt) N(dt/2)."""

    def __init__(self, linear: Stepper, remainder: Stepper, version: str):
        if version not in ("ver0", "ver1"):
            raise ConfigurationError(f"unknown split version {version!r}")
        self.linear = linear
        self.remainder = remainder
        self.version = version

    def step(self, state, dt):
        if self.version == "ver0":
            outer, inner = self.linear, self.remainder
        else:
            outer, inner = self.remainder, self.linear
        labels = ("first-half", "middle", "second-half")
        u = state
        for label, (stepper, h) in zip(
            labels, ((outer, 0.5 * dt), (inner, dt), (outer, 0.5 * dt))
        ):
            u = stepper.step(u, h)
            finite = getattr(u, "is_finite", None)
            if finite is not None and not finite():
                raise DivergenceError(f"substep diverged at the {label} stage")
        return u


def build_stepper(
    spec: TimeStepperSpec | str,
    params: ModelParams,
    rexi_setup: RexiSetup | None = None,
) -> Stepper:
    """Assemble the composed stepper for a spec or identifier string."""
    if isinstance(spec, str):
        spec = parse_stepper_id(spec)
    setup = rexi_setup or RexiSetup()

    def leaf(group: TermGroup, method: str, order: int = 2) -> Stepper:
        if method == "erk":
            return ExplicitStepper(group, params, order=order)
        if method == "irk":
            return CrankNicolsonStepper(group, params)
        if method == "rexi":
            return RexiStepper(group, params, setup)
        raise ConfigurationError(f"cannot build leaf stepper for {method!r}")

    if spec.remainder_group is None:
        stepper = leaf(spec.linear_group, spec.linear_method, spec.order)
    elif spec.remainder_method == "etdrk":
        stepper = EtdrkStepper(spec.linear_group, spec.remainder_group, params, setup)
    else:
        linear = leaf(spec.linear_group, spec.linear_method)
        remainder = ExplicitStepper(spec.remainder_group, params, order=2)
        stepper = StrangSplitStepper(linear, remainder, spec.split_version)
    stepper.spec = spec
    return stepper


# ----------------------------------------------------------------------
# integration driver


@dataclasses.dataclass
class IntegrationResult:
    state: PrognosticState
    n_steps: int
    diverged: bool = False
    blow_up_step: int | None = None


def _state_blown_up(state: PrognosticState) -> bool:
    if not state.is_finite():
        return True
    phi = synthesis(state.phi_pert, state.cfg)
    return bool(np.max(np.abs(phi.values)) > PHI_MAX_BLOWUP)


def integrate(
    stepper: Stepper,
    state0: PrognosticState,
    dt: float,
    t_end: float,
    observers: Sequence[Callable] = (),
) -> IntegrationResult:
    """March ``state0`` to ``t_end`` in steps of ``dt`` with observer calls.

    ``t_end`` must be an integer multiple of ``dt`` (partial final steps
    are refused so convergence fits stay honest).  Observers are invoked
    with (step_index, time, state) at t = 0 and after every step.  A
    blow-up stops early and flags the result instead of raising.
    """
    if dt <= 0:
        raise ConfigurationError("dt must be positive")
    n_float = t_end / dt
    n_steps = int(round(n_float))
    if abs(n_float - n_steps) > 1e-9 * max(1.0, abs(n_float)):
        raise ConfigurationError(
            f"t_end={t_end} is not an integer multiple of dt={dt}"
        )
    u = state0
    for obs in observers:
        obs(0, 0.0, u)
    for k in range(1, n_steps + 1):
        try:
            u = stepper.step(u, dt)
        except DivergenceError:
            return IntegrationResult(u, k - 1, diverged=True, blow_up_step=k)
        if _state_blown_up(u):
            return IntegrationResult(u, k, diverged=True, blow_up_step=k)
        for obs in observers:
            obs(k, k * dt, u)
    return IntegrationResult(u, n_steps)
