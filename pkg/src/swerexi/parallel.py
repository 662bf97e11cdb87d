"""Term-parallel REXI execution with deterministic reduction and timings.

Workers are threads in one process sharing the immutable coefficient and
factorization tables; the "broadcast" is a timed no-op memory publication
kept so the measurement schema matches a rank-distributed run.  Every
worker writes its weighted term results into disjoint slots of one
preallocated array and the driver reduces them over a fixed pairwise tree
on the term index, so the floating-point result is a pure function of the
inputs and is bitwise identical for every worker count.
"""

from __future__ import annotations

import dataclasses
import json
import time
from concurrent.futures import ThreadPoolExecutor, as_completed

import numpy as np

from .errors import ConfigurationError, SolverError
from .rexi import RexiCoefficients
from .solvers import ShiftedLinearSolver, get_solver
from .steppers import realify_stacked, tree_sum
from .swe import ModelParams, PrognosticState, TermGroup

BREAKDOWN_SLACK = 0.05


@dataclasses.dataclass(frozen=True)
class WorkPlan:
    """Balanced contiguous assignment of term indices to workers."""

    assignments: tuple[tuple[int, ...], ...]
    num_workers: int
    num_terms: int

    def __post_init__(self):
        flat = [i for chunk in self.assignments for i in chunk]
        if sorted(flat) != list(range(self.num_terms)):
            raise ConfigurationError("assignments must partition the term indices")
        sizes = [len(c) for c in self.assignments]
        if sizes and max(sizes) - min(sizes) > 1:
            raise ConfigurationError("work plan is unbalanced")


def distribute_terms(num_terms: int, num_workers: int) -> WorkPlan:
    """Contiguous partition with worker sizes differing by at most one."""
    if num_terms < 1 or num_workers < 1:
        raise ConfigurationError("need at least one term and one worker")
    base, extra = divmod(num_terms, num_workers)
    chunks = []
    start = 0
    for w in range(num_workers):
        size = base + (1 if w < extra else 0)
        chunks.append(tuple(range(start, start + size)))
        start += size
    return WorkPlan(tuple(chunks), num_workers, num_terms)


@dataclasses.dataclass
class TimingBreakdown:
    """Per-category wallclock record of one parallel REXI application."""

    overall: float
    nonlinearities: float
    rexi_total: float
    broadcast: float
    term_solves: float
    reduce: float

    def validate(self):
        for name, value in dataclasses.asdict(self).items():
            if value < 0:
                raise ConfigurationError(f"negative timing for {name}")
        if self.broadcast + self.term_solves + self.reduce > self.rexi_total * (
            1.0 + BREAKDOWN_SLACK
        ):
            raise ConfigurationError("REXI sub-categories exceed the REXI total")
        if self.rexi_total > self.overall * (1.0 + BREAKDOWN_SLACK):
            raise ConfigurationError("REXI total exceeds the overall time")
        return self

    def merged_with(self, other: "TimingBreakdown") -> "TimingBreakdown":
        return TimingBreakdown(
            *(
                getattr(self, f.name) + getattr(other, f.name)
                for f in dataclasses.fields(self)
            )
        )

    def to_json(self, num_workers: int, num_terms: int, ensemble_index: int) -> str:
        payload = dataclasses.asdict(self)
        payload.update(
            {"K": num_workers, "N": num_terms, "ensemble_index": ensemble_index}
        )
        return json.dumps(payload, sort_keys=True)


def parallel_rexi_apply(
    group: TermGroup,
    state: PrognosticState,
    dt: float,
    coeffs: RexiCoefficients,
    plan: WorkPlan,
    params: ModelParams,
    solver: ShiftedLinearSolver | None = None,
    deterministic: bool = True,
) -> tuple[PrognosticState, TimingBreakdown]:
    """Evaluate the REXI sum with the terms spread over a thread pool.

    Semantically identical to the serial ``rexi_step``; with the default
    fixed-tree reduce the result is bitwise identical for every worker
    count.  ``deterministic=False`` switches to a completion-order
    accumulation (throughput experiments only; result may differ at the
    1e-13 level).
    """
    if plan.num_terms != coeffs.num_terms:
        raise ConfigurationError("work plan does not match the coefficient count")
    t_start = time.perf_counter()
    if solver is None:
        solver = get_solver(group.token, dt, params)
        solver.warm(coeffs.alphas)

    t0 = time.perf_counter()
    # broadcast: publish the read-only input block to the workers
    stacked = state.stack()
    stacked.setflags(write=False)
    alphas = coeffs.alphas
    betas = coeffs.betas
    t_broadcast = time.perf_counter() - t0

    shape = (coeffs.num_terms,) + stacked.shape
    weighted = np.empty(shape, dtype=np.complex128)
    errors: list[Exception] = []

    def run_chunk(chunk):
        try:
            idx = np.asarray(chunk, dtype=int)
            sols = solver.solve_stacked_batch(alphas[idx], stacked)
            weighted[idx] = betas[idx, None, None, None] * sols
        except SolverError as exc:
            errors.append(SolverError(f"terms {chunk}: {exc}"))

    t0 = time.perf_counter()
    if plan.num_workers == 1:
        for chunk in plan.assignments:
            if chunk:
                run_chunk(chunk)
    else:
        with ThreadPoolExecutor(max_workers=plan.num_workers) as pool:
            futures = [
                pool.submit(run_chunk, chunk) for chunk in plan.assignments if chunk
            ]
            for fut in as_completed(futures):
                fut.result()
    t_solves = time.perf_counter() - t0
    if errors:
        raise errors[0]

    t0 = time.perf_counter()
    if deterministic:
        total = tree_sum(weighted)
    else:
        total = np.zeros_like(stacked)
        for chunk in plan.assignments:
            if chunk:
                total = total + tree_sum(weighted[list(chunk)])
    total, _ = realify_stacked(total)
    out = PrognosticState.from_stack(total, params.cfg)
    t_reduce = time.perf_counter() - t0

    t_end = time.perf_counter()
    breakdown = TimingBreakdown(
        overall=t_end - t_start,
        nonlinearities=0.0,
        rexi_total=t_end - t_start,
        broadcast=t_broadcast,
        term_solves=t_solves,
        reduce=t_reduce,
    ).validate()
    return out, breakdown


def amdahl_report(breakdowns: dict[int, TimingBreakdown]) -> list[dict]:
    """Serial-fraction estimate and projected versus measured speedups.

    The serial share is everything outside the term solves of the K = 1
    run (nonlinearities, broadcast, reduce, bookkeeping); the projection
    is Amdahl's law on the remaining parallel share.
    """
    if 1 not in breakdowns:
        raise ConfigurationError("amdahl_report needs a K=1 baseline breakdown")
    if len(breakdowns) < 2:
        raise ConfigurationError("need breakdowns for at least two worker counts")
    base = breakdowns[1]
    parallel_share = base.term_solves / base.overall if base.overall > 0 else 0.0
    serial_share = 1.0 - parallel_share
    rows = []
    for k in sorted(breakdowns):
        b = breakdowns[k]
        projected = 1.0 / (serial_share + parallel_share / k)
        measured = base.overall / b.overall if b.overall > 0 else float("nan")
        rows.append(
            {
                "K": k,
                "overall": b.overall,
                "projected_speedup": projected,
                "measured_speedup": measured,
                "serial_fraction": serial_share,
                "max_speedup": 1.0 / serial_share if serial_share > 0 else float("inf"),
            }
        )
    return rows
