"""Problem and trajectory types shared by the integrators and the harness.

State vectors are laid out momenta first, ``y = (p, q)``.  Every shipped
problem follows this convention and the constructors check it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

__all__ = [
    "ContractError",
    "UnsupportedMetricError",
    "ZeroReferenceEnergyError",
    "ConvergenceError",
    "StepFailure",
    "ConfigurationError",
    "SolverConfig",
    "SeparableParts",
    "OdeProblem",
    "RunRecord",
    "evaluate_split_rhs",
    "energy_error",
    "global_error",
]


class ContractError(ValueError):
    """A caller violated an input contract (shape, finiteness, range)."""


class UnsupportedMetricError(ValueError):
    """The requested metric needs data the problem does not provide."""


class ZeroReferenceEnergyError(ArithmeticError):
    """Relative energy error requested with ``H(y0) == 0``.

    Callers should fall back to the absolute error ``H(y) - e0`` and flag it.
    """


class ConvergenceError(RuntimeError):
    """A nonlinear stage solve hit its iteration cap or diverged."""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class StepFailure(ConvergenceError):
    """A time step could not be completed."""

    def __init__(self, iterations: int, residual: float, step_index: Optional[int] = None,
                 t: Optional[float] = None):
        self.step_index = step_index
        self.t = t
        self.record = None  # partial RunRecord, when raised from a full run
        where = "" if step_index is None else f" at step {step_index}"
        if t is not None:
            where += f" (t={t:.17g})"
        super().__init__(f"stage solver failed{where}", iterations, residual)


class ConfigurationError(ValueError):
    """Invalid problem, tableau or experiment configuration."""


@dataclass(frozen=True)
class SolverConfig:
    """Settings for the implicit stage solve.

    Iteration stops once the max-norm of successive iterates falls below
    ``tol * (1 + |z|_max)`` *and* has stopped decreasing, so the returned
    stages sit at the round-off floor rather than merely inside ``tol``.
    """

    max_iter: int = 50
    tol: float = 1e-14
    newton: bool = False

    def __post_init__(self):
        if self.max_iter < 1:
            raise ConfigurationError("max_iter must be >= 1")
        if not (self.tol > 0 and np.isfinite(self.tol)):
            raise ConfigurationError("tol must be positive and finite")


@dataclass(frozen=True)
class SeparableParts:
    """Gradients of ``H(p, q) = T(p) + V(q)``."""

    grad_kinetic: Callable[[np.ndarray], np.ndarray]
    grad_potential: Callable[[np.ndarray], np.ndarray]


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float).ravel()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class OdeProblem:
    """An initial value problem ``y' = rhs(t, y)``, ``y(t0) = y0``.

    ``hamiltonian`` and ``exact`` are optional.  Both must accept stacked
    inputs: ``hamiltonian(Y)`` with ``Y`` of shape ``(..., dimension)`` and
    ``exact(t)`` with an array of times, returning ``(len(t), dimension)``.
    Scalar-only callables still work, at the cost of a Python loop.

    When ``rhs`` is a numba ``@njit`` function the integrators run compiled
    kernels; any other callable runs the same kernels in plain Python.
    """

    name: str
    dimension: int
    rhs: Callable[[float, np.ndarray], np.ndarray]
    y0: np.ndarray
    t0: float = 0.0
    hamiltonian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    exact: Optional[Callable[[np.ndarray], np.ndarray]] = None
    split: Optional[SeparableParts] = None
    params: Mapping[str, object] = field(default_factory=dict)

    def __post_init__(self):
        y0 = _frozen_array(self.y0)
        object.__setattr__(self, "y0", y0)
        object.__setattr__(self, "t0", float(self.t0))
        object.__setattr__(self, "params", dict(self.params))
        if self.dimension < 1:
            raise ContractError("dimension must be positive")
        if y0.shape != (self.dimension,):
            raise ContractError(
                f"y0 has length {y0.shape[0]}, expected dimension {self.dimension}"
            )
        if not np.all(np.isfinite(y0)):
            raise ContractError("y0 must be finite")
        if (self.hamiltonian is not None or self.split is not None) and self.dimension % 2:
            raise ContractError("Hamiltonian problems need an even (p, q) state length")
        f0 = np.asarray(self.rhs(self.t0, y0.copy()))
        if f0.shape != (self.dimension,):
            raise ContractError(f"rhs returned shape {f0.shape}, expected ({self.dimension},)")

    @property
    def degrees_of_freedom(self) -> int:
        return self.dimension // 2

    def energy(self, y) -> float:
        if self.hamiltonian is None:
            raise UnsupportedMetricError(f"problem {self.name!r} has no Hamiltonian")
        return float(self.hamiltonian(np.asarray(y, dtype=float)))

    def energies(self, states: np.ndarray) -> np.ndarray:
        """Hamiltonian of each row of ``states``."""
        if self.hamiltonian is None:
            raise UnsupportedMetricError(f"problem {self.name!r} has no Hamiltonian")
        states = np.asarray(states, dtype=float)
        try:
            out = np.asarray(self.hamiltonian(states), dtype=float)
        except Exception:
            out = None
        if out is None or out.shape != states.shape[:-1]:
            out = np.array([float(self.hamiltonian(row)) for row in states])
        return out

    def exact_states(self, times) -> np.ndarray:
        """Exact solution at each of ``times`` as a ``(len(times), dimension)`` array."""
        if self.exact is None:
            raise UnsupportedMetricError(f"problem {self.name!r} has no exact solution")
        times = np.atleast_1d(np.asarray(times, dtype=float))
        try:
            out = np.asarray(self.exact(times), dtype=float)
        except Exception:
            out = None
        if out is None or out.shape != (times.shape[0], self.dimension):
            out = np.array([np.asarray(self.exact(float(t)), dtype=float) for t in times])
        return out


def _check_state(problem: OdeProblem, y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    if y.shape != (problem.dimension,):
        raise ContractError(
            f"state has shape {y.shape}, problem {problem.name!r} has dimension {problem.dimension}"
        )
    return y


def evaluate_split_rhs(problem: OdeProblem, y) -> np.ndarray:
    """Right-hand side ``(-grad V(q), grad T(p))`` for separable problems.

    Problems without a separable split fall back to ``rhs(t0, y)``.
    """
    y = _check_state(problem, y)
    if problem.split is None:
        return np.asarray(problem.rhs(problem.t0, y.copy()), dtype=float)
    n = problem.degrees_of_freedom
    p, q = y[:n], y[n:]
    dp = -np.asarray(problem.split.grad_potential(q), dtype=float)
    dq = np.asarray(problem.split.grad_kinetic(p), dtype=float)
    return np.concatenate([dp, dq])


def energy_error(problem: OdeProblem, y, e0: float) -> float:
    """Signed relative Hamiltonian error ``(H(y) - e0) / e0``."""
    y = _check_state(problem, y)
    if e0 == 0.0:
        raise ZeroReferenceEnergyError(
            "reference energy is zero; use the absolute error H(y) - e0 instead"
        )
    return (problem.energy(y) - e0) / e0


def global_error(problem: OdeProblem, t: float, y) -> float:
    """Euclidean norm of ``y - exact(t)`` over all components."""
    y = _check_state(problem, y)
    ref = problem.exact_states([t])[0]
    return float(np.linalg.norm(y - ref))


@dataclass
class RunRecord:
    """Sampled trajectory of one integration run.

    ``energy_errors`` are signed; ``metadata["energy_error"]`` is
    ``"relative"`` or ``"absolute"`` (the latter when ``H(y0) == 0``).
    """

    problem: str
    method: str
    h: float
    times: np.ndarray
    states: np.ndarray
    global_errors: Optional[np.ndarray]
    energy_errors: Optional[np.ndarray]
    wall_seconds: float
    steps: int
    solver_iterations: int
    params: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ContractError("a run record needs at least the initial sample")
        if times.size > 1 and not np.all(np.diff(times) > 0):
            raise ContractError("sample times must be strictly increasing")
        if np.asarray(self.states).shape[0] != times.size:
            raise ContractError("states and times must align")
        for label in ("global_errors", "energy_errors"):
            values = getattr(self, label)
            if values is not None and np.asarray(values).shape != times.shape:
                raise ContractError(f"{label} must align 1:1 with sample times")

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]
