"""Fixed-step time marching and run records."""

from __future__ import annotations

import math
import time
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .core import (
    ContractError,
    OdeProblem,
    RunRecord,
    SolverConfig,
    StepFailure,
)

MAX_SAMPLES = 1_000_000


class MarchResult(NamedTuple):
    steps: np.ndarray  # step index of each sample
    states: np.ndarray
    steps_done: int
    iterations: int
    final: np.ndarray  # last state (or GLM input vector) reached
    failed: bool
    residual: float
    last_iterations: int


class Stepper:
    """Uniform interface over the one-step and multivalue integrators.

    A stepper owns mutable per-run counters and is not meant to be shared
    between concurrent runs; build one per run.
    """

    name = "stepper"
    order: Optional[int] = None

    def __init__(self, solver: Optional[SolverConfig] = None):
        self.solver = solver or SolverConfig()
        self.iterations = 0

    def _advance(self, kernels):
        """Return ``(advance_kernel, params)`` for the generic march loop."""
        raise NotImplementedError

    def _solve(self, kernels):
        return _kernels.solver_for(kernels, self.solver)

    def start(self, problem: OdeProblem, h: float) -> np.ndarray:
        """Initial marching state for ``problem`` (``y0`` for one-step methods)."""
        return np.array(problem.y0, dtype=float)

    def step(self, problem: OdeProblem, t: float, y, h: float) -> np.ndarray:
        k = _kernels.kernels_for(problem.rhs)
        advance, params = self._advance(k)
        y = np.array(y, dtype=float)
        ynew, it, ok, res = advance(
            self._solve(k), problem.rhs, float(t), y, float(h), params,
            self.solver.tol, self.solver.max_iter,
        )
        self.iterations += it
        if not ok:
            raise StepFailure(it, res, t=t)
        return ynew

    def march(self, problem: OdeProblem, h: float, n_steps: int, stride: int = 1,
              start: Optional[np.ndarray] = None) -> MarchResult:
        k = _kernels.kernels_for(problem.rhs)
        advance, params = self._advance(k)
        y0 = self.start(problem, h) if start is None else np.array(start, dtype=float)
        out = k.march(
            advance, self._solve(k), problem.rhs, problem.t0, y0, float(h),
            int(n_steps), int(stride), params, self.solver.tol, self.solver.max_iter,
        )
        return self._wrap(out)

    def _wrap(self, out) -> MarchResult:
        states, steps, count, done, iters, ok, res, last_it, final = out
        self.iterations += int(iters)
        return MarchResult(steps[:count], states[:count], int(done), int(iters),
                           final, not ok, float(res), int(last_it))

    def __repr__(self):
        return f"{type(self).__name__}(solver={self.solver!r})"


def steps_for(t_end: float, h: float, t0: float = 0.0) -> int:
    """Number of uniform steps of size ``h`` covering ``[t0, t_end]``."""
    if not h > 0:
        raise ContractError("step size must be positive")
    span = t_end - t0
    if span < 0:
        raise ContractError("end time precedes the initial time")
    return max(0, math.ceil(span / h - 1e-9))


def default_stride(n_steps: int) -> int:
    return max(1, math.ceil(n_steps / MAX_SAMPLES))


def integrate(problem: OdeProblem, stepper: Stepper, h: float, *,
              t_end: Optional[float] = None, n_steps: Optional[int] = None,
              stride: Optional[int] = None) -> RunRecord:
    """March ``problem`` with fixed step ``h`` and return a sampled record.

    Exactly one of ``t_end`` and ``n_steps`` is required.  Wall-clock time
    covers the starting procedure and the march (stage solves included);
    it excludes problem construction, JIT compilation (a one-step warm-up
    runs first) and error evaluation.
    """
    h = float(h)
    if not (h > 0 and np.isfinite(h)):
        raise ContractError("step size must be positive and finite")
    if (t_end is None) == (n_steps is None):
        raise ContractError("give exactly one of t_end and n_steps")
    if n_steps is None:
        n_steps = steps_for(t_end, h, problem.t0)
    n_steps = int(n_steps)
    if n_steps < 0:
        raise ContractError("n_steps must be non-negative")
    stride = default_stride(n_steps) if stride is None else int(stride)
    if stride < 1:
        raise ContractError("stride must be >= 1")

    iterations_before = stepper.iterations
    if n_steps:
        try:
            stepper.march(problem, h, 1, 1)
        except Exception:
            pass  # real failures surface in the timed run
        stepper.iterations = iterations_before

    tic = time.perf_counter()
    x0 = stepper.start(problem, h)
    result = stepper.march(problem, h, n_steps, stride, start=x0)
    wall = time.perf_counter() - tic

    record = _make_record(problem, stepper, h, result, wall,
                          stepper.iterations - iterations_before)
    if result.failed:
        err = StepFailure(result.last_iterations, result.residual,
                          step_index=result.steps_done,
                          t=problem.t0 + result.steps_done * h)
        err.record = record
        raise err
    return record


def _make_record(problem: OdeProblem, stepper: Stepper, h: float,
                 result: MarchResult, wall: float, iterations: int) -> RunRecord:
    times = problem.t0 + result.steps.astype(float) * h
    states = result.states
    metadata = {"stride": int(result.steps[1] - result.steps[0]) if len(result.steps) > 1 else 1}

    global_errors = None
    if problem.exact is not None:
        global_errors = np.linalg.norm(states - problem.exact_states(times), axis=1)

    energy_errors = None
    if problem.hamiltonian is not None:
        energies = problem.energies(states)
        e0 = energies[0]  # same evaluation path as the samples, so E_e(t0) == 0 exactly
        if e0 == 0.0:
            energy_errors = energies - e0
            metadata["energy_error"] = "absolute"
        else:
            energy_errors = (energies - e0) / e0
            metadata["energy_error"] = "relative"

    return RunRecord(
        problem=problem.name,
        method=stepper.name,
        h=h,
        times=times,
        states=states,
        global_errors=global_errors,
        energy_errors=energy_errors,
        wall_seconds=wall,
        steps=result.steps_done,
        solver_iterations=int(iterations),
        params=dict(problem.params),
        metadata=metadata,
    )
