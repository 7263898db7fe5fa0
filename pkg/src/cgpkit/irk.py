"""Implicit Runge-Kutta stepping from a Butcher tableau."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import ConfigurationError, OdeProblem, SolverConfig
from .runner import Stepper


def _frozen(x, ndim) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim != ndim:
        raise ConfigurationError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class RkTableau:
    """Butcher tableau ``(A, b, c)`` of an s-stage Runge-Kutta method.

    Construction checks the shapes, ``c_i = sum_j A_ij`` and ``sum b = 1``.
    """

    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    name: str = "rk"
    order: Optional[int] = None

    def __post_init__(self):
        A, b, c = _frozen(self.A, 2), _frozen(self.b, 1), _frozen(self.c, 1)
        s = b.size
        if A.shape != (s, s) or c.size != s:
            raise ConfigurationError(f"inconsistent tableau shapes A{A.shape}, b({s},), c({c.size},)")
        if not np.allclose(A.sum(axis=1), c, rtol=0, atol=1e-14):
            raise ConfigurationError("row sums of A must equal c")
        if abs(b.sum() - 1.0) > 1e-14:
            raise ConfigurationError("weights b must sum to 1")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)

    @property
    def stages(self) -> int:
        return self.b.size

    def symplecticity_residual(self) -> np.ndarray:
        """``b_i A_ij + b_j A_ji - b_i b_j``; zero for symplectic methods."""
        M = self.b[:, None] * self.A
        return M + M.T - np.outer(self.b, self.b)

    def stability_function(self, z: complex) -> complex:
        """``R(z) = 1 + z b^T (I - z A)^{-1} 1``."""
        s = self.stages
        return 1 + z * self.b @ np.linalg.solve(np.eye(s) - z * self.A, np.ones(s))


def gauss2_tableau() -> RkTableau:
    """Two-stage Gauss-Legendre collocation method (order 4, symplectic, symmetric)."""
    r = math.sqrt(3.0) / 6.0
    return RkTableau(
        A=[[0.25, 0.25 - r], [0.25 + r, 0.25]],
        b=[0.5, 0.5],
        c=[0.5 - r, 0.5 + r],
        name="gauss2",
        order=4,
    )


class IrkStepper(Stepper):
    """Implicit RK stepper; the stage derivatives are solved by fixed-point
    iteration (or Newton), starting from ``f(t, y)`` in every stage."""

    def __init__(self, tableau: Optional[RkTableau] = None, solver: Optional[SolverConfig] = None,
                 name: Optional[str] = None):
        super().__init__(solver)
        self.tableau = tableau or gauss2_tableau()
        self.order = self.tableau.order
        self.name = name or ("irk4" if self.tableau.name == "gauss2" else self.tableau.name)
        t = self.tableau
        self._params = (np.array(t.A), np.array(t.b), np.array(t.c))

    def _advance(self, kernels):
        return kernels.rk_advance, self._params


def step_irk(problem: OdeProblem, t: float, y, h: float, tableau: Optional[RkTableau] = None,
             solver: Optional[SolverConfig] = None) -> np.ndarray:
    """One step ``y + h sum_i b_i f(Y_i)`` of the implicit RK method ``tableau``."""
    return IrkStepper(tableau, solver).step(problem, t, y, h)
