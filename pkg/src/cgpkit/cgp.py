"""Continuous Galerkin-Petrov time stepping, cGP(k).

On each interval ``[t_{n-1}, t_n]`` the discrete solution is a degree-k
polynomial in time written in the Lagrange basis at the (k+1) Gauss-Lobatto
points of the reference interval ``[-1, 1]``; its coefficients ``U^0..U^k``
solve

    sum_j alpha[i, j] U^j = h/2 sum_mu beta[i, mu] F(t_mu, U^mu),  i < k,

with ``U^0`` carried over from the previous interval.  cGP(1) is the
Crank-Nicolson scheme; cGP(2) is solved as a fixed point in the end value.

The reference-interval data are assembled in 40-digit arithmetic and rounded
once to double precision, so rational entries come out correctly rounded.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, NamedTuple, Optional

import mpmath as mp
import numpy as np

from . import _kernels
from .core import ConvergenceError, OdeProblem, SolverConfig, StepFailure
from .runner import Stepper

MAX_ORDER = 5
_DPS = 40


class UnsupportedOrderError(ValueError):
    pass


def _check_order(k) -> int:
    if isinstance(k, bool) or int(k) != k or not 1 <= k <= MAX_ORDER:
        raise UnsupportedOrderError(f"cGP order must be an integer in 1..{MAX_ORDER}, got {k!r}")
    return int(k)


# -- exact-ish polynomial helpers, coefficient lists low -> high ------------

def _pmul(a, b):
    out = [mp.mpf(0)] * (len(a) + len(b) - 1)
    for i, x in enumerate(a):
        for j, y in enumerate(b):
            out[i + j] += x * y
    return out


def _pder(a):
    return [i * a[i] for i in range(1, len(a))] or [mp.mpf(0)]


def _peval(a, x):
    acc = mp.mpf(0)
    for c in reversed(a):
        acc = acc * x + c
    return acc


def _pint(a):
    """Integral over [-1, 1]."""
    return sum((2 * c / (m + 1) for m, c in enumerate(a) if m % 2 == 0), mp.mpf(0))


def _legendre(k):
    prev, cur = [mp.mpf(1)], [mp.mpf(0), mp.mpf(1)]
    if k == 0:
        return prev
    for n in range(1, k):
        nxt = [mp.mpf(0)] + [(2 * n + 1) * c for c in cur]
        for i, c in enumerate(prev):
            nxt[i] -= n * c
        prev, cur = cur, [c / (n + 1) for c in nxt]
    return cur


@lru_cache(maxsize=None)
def _lobatto_mp(k):
    with mp.workdps(_DPS):
        pk = _legendre(k)
        dpk = _pder(pk)
        guesses = np.polynomial.legendre.Legendre.basis(k).deriv().roots() if k > 1 else []
        interior = sorted(mp.findroot(lambda x: _peval(dpk, x), mp.mpf(float(g))) for g in guesses)
        nodes = [mp.mpf(-1)] + interior + [mp.mpf(1)]
        # exact symmetry about zero
        nodes = [(nodes[i] - nodes[k - i]) / 2 for i in range(k + 1)]
        weights = [mp.mpf(2) / (k * (k + 1) * _peval(pk, x) ** 2) for x in nodes]
        weights = [(weights[i] + weights[k - i]) / 2 for i in range(k + 1)]
    return tuple(nodes), tuple(weights)


def _to_float(x) -> float:
    # drop round-off left over from the extended-precision solve
    return 0.0 if abs(x) < mp.mpf(10) ** (10 - _DPS) else float(x)


def _readonly(values) -> np.ndarray:
    if values and isinstance(values[0], (list, tuple)):
        arr = np.array([[_to_float(x) for x in row] for row in values], dtype=float)
    else:
        arr = np.array([_to_float(x) for x in values], dtype=float)
    arr.setflags(write=False)
    return arr


def lobatto_rule(k: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the (k+1)-point Gauss-Lobatto rule on [-1, 1].

    Exact for polynomials of degree <= 2k - 1.  ``1 <= k <= 5``.
    """
    k = _check_order(k)
    nodes, weights = _lobatto_mp(k)
    return _readonly(nodes), _readonly(weights)


@dataclass(frozen=True, eq=False)
class CgpCoefficients:
    """Reference-interval data of cGP(k).

    Attributes
    ----------
    order : int
    nodes, weights : ndarray, shape (k+1,)
        Gauss-Lobatto rule on [-1, 1].
    alpha : ndarray, shape (k, k+1)
        ``alpha[i, j]`` = integral of ``phi_j' * psi_i``.
    beta : ndarray, shape (k, k+1)
        ``beta[i, mu]`` = ``w_mu * psi_i(theta_mu)``.
    gamma : ndarray, shape (k+1, k+1)
        ``phi_j(theta_mu)``; the identity for the Lagrange trial basis.
    test_basis : ndarray, shape (k, k)
        Monomial coefficients (low to high) of the test functions ``psi_i``.
    inner_inverse : ndarray, shape (k, k)
        Inverse of ``alpha[:, 1:]``, used to put the stage system in
        fixed-point form.
    """

    order: int
    nodes: np.ndarray
    weights: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    test_basis: np.ndarray
    inner_inverse: np.ndarray

    def trial_basis(self, theta) -> np.ndarray:
        """Values ``phi_j(theta)`` of the Lagrange trial basis, shape (..., k+1)."""
        theta = np.asarray(theta, dtype=float)
        x = self.nodes
        out = np.ones(theta.shape + (x.size,))
        for j in range(x.size):
            for m in range(x.size):
                if m != j:
                    out[..., j] *= (theta - x[m]) / (x[j] - x[m])
        return out

    def dense_output(self, stages, theta) -> np.ndarray:
        """Evaluate ``u_h`` at reference coordinate(s) ``theta`` from the stage values."""
        return self.trial_basis(theta) @ np.asarray(stages, dtype=float)


@lru_cache(maxsize=None)
def _assemble(k: int) -> CgpCoefficients:
    nodes, weights = _lobatto_mp(k)
    with mp.workdps(_DPS):
        phi = []
        for j in range(k + 1):
            poly = [mp.mpf(1)]
            for m in range(k + 1):
                if m != j:
                    poly = _pmul(poly, [-nodes[m] / (nodes[j] - nodes[m]), 1 / (nodes[j] - nodes[m])])
            phi.append(poly)
        dphi = [_pder(p) for p in phi]

        # Test space P_{k-1}: psi_{k-1} = 1; for i < k-1, psi_i has zero mean
        # and is dual to the inner trial derivatives, int phi_j' psi_i = delta_{i+1,j}.
        psi = []
        for i in range(k - 1):
            mat = mp.matrix(k, k)
            rhs = mp.matrix(k, 1)
            for row, j in enumerate(range(1, k)):
                for m in range(k):
                    mat[row, m] = _pint(_pmul(dphi[j], [0] * m + [1]))
                rhs[row] = 1 if j == i + 1 else 0
            for m in range(k):
                mat[k - 1, m] = _pint([0] * m + [1])
            sol = mp.lu_solve(mat, rhs)
            psi.append([sol[m] for m in range(k)])
        psi.append([mp.mpf(1)] + [mp.mpf(0)] * (k - 1))

        alpha = [[_pint(_pmul(dphi[j], psi[i])) for j in range(k + 1)] for i in range(k)]
        beta = [[weights[mu] * _peval(psi[i], nodes[mu]) for mu in range(k + 1)] for i in range(k)]
        gamma = [[mp.mpf(1) if j == mu else mp.mpf(0) for mu in range(k + 1)] for j in range(k + 1)]
        inner = mp.inverse(mp.matrix([row[1:] for row in alpha]))
        inner = [[inner[i, j] for j in range(k)] for i in range(k)]

    nodes_f, weights_f = _readonly(nodes), _readonly(weights)
    return CgpCoefficients(
        order=k,
        nodes=nodes_f,
        weights=weights_f,
        alpha=_readonly(alpha),
        beta=_readonly(beta),
        gamma=_readonly(gamma),
        test_basis=_readonly(psi),
        inner_inverse=_readonly(inner),
    )


def assemble_cgp(k: int) -> CgpCoefficients:
    """Assemble the cGP(k) coefficient matrices for ``1 <= k <= 5``."""
    return _assemble(_check_order(k))


# -- stage solver --------------------------------------------------------------

class FixedPointResult(NamedTuple):
    value: np.ndarray
    iterations: int
    residual: float


def solve_stage_fixed_point(G: Callable, guess, config: Optional[SolverConfig] = None) -> FixedPointResult:
    """Solve ``u = G(u)`` by fixed-point iteration, or Newton if configured.

    Raises :class:`ConvergenceError` when the iteration cap is reached or the
    iterates blow up; it never returns an unconverged value.
    """
    config = config or SolverConfig()
    scalar = np.ndim(guess) == 0
    z0 = np.atleast_1d(np.array(guess, dtype=float))

    def fmap(rhs, z, args):
        return np.atleast_1d(np.asarray(G(z[0] if scalar else z), dtype=float))

    solve = _kernels.solver_for(_kernels.PY, config)
    z, it, ok, res = solve(fmap, None, z0, (), config.tol, config.max_iter)
    if not ok:
        raise ConvergenceError("fixed-point iteration did not converge", it, res)
    return FixedPointResult(z[0] if scalar else z, it, res)


# -- steppers ------------------------------------------------------------------

@dataclass
class CgpStepWork:
    """Stage values of one cGP step; ``stages[0]`` is the carried-over ``U^0``."""

    stages: np.ndarray
    stage_rhs: np.ndarray
    iterations: int
    converged: bool
    residual: float


def _stage_rhs(problem, coeffs, t, h, stages):
    times = t + 0.5 * h * (coeffs.nodes + 1.0)
    return np.array([problem.rhs(float(tj), np.array(u)) for tj, u in zip(times, stages)])


class Cgp1Stepper(Stepper):
    """cGP(1), i.e. Crank-Nicolson, solved as a fixed point in ``U^1``."""

    name = "cgp1"
    order = 2

    def _advance(self, kernels):
        return kernels.cgp1_advance, (0.0,)


class Cgp2Stepper(Stepper):
    """cGP(2), solved as a fixed point in the end value ``U^2``.

    Each sweep evaluates ``U^1 = U^0/2 + U^2/2 + h/8 (F^0 - F^2)`` and then
    ``U^2 <- U^0 + h/6 (F^0 + 4 F^1 + F^2)``, starting from ``U^2 = U^0``.
    """

    name = "cgp2"
    order = 4

    def __init__(self, solver: Optional[SolverConfig] = None):
        super().__init__(solver)
        self.work: Optional[CgpStepWork] = None

    def _advance(self, kernels):
        return kernels.cgp2_advance, (0.0,)

    def step_stages(self, problem: OdeProblem, t: float, y, h: float) -> tuple[np.ndarray, np.ndarray]:
        """One step returning ``(U^1, U^2)``; the midpoint is the dense value at ``t + h/2``."""
        k = _kernels.kernels_for(problem.rhs)
        y = np.array(y, dtype=float)
        u1, u2, it, ok, res = k.cgp2_step(self._solve(k), problem.rhs, float(t), y, float(h),
                                          self.solver.tol, self.solver.max_iter)
        self.iterations += it
        stages = np.stack([y, u1, u2])
        self.work = CgpStepWork(stages, _stage_rhs(problem, assemble_cgp(2), t, h, stages), it, ok, res)
        if not ok:
            raise StepFailure(it, res, t=t)
        return u1, u2


class CgpStepper(Stepper):
    """cGP(k) for general k, driven by :func:`assemble_cgp`.

    All k unknown stages are updated together each sweep.
    """

    def __init__(self, k: int, solver: Optional[SolverConfig] = None):
        super().__init__(solver)
        self.coefficients = assemble_cgp(k)
        self.name = f"cgp{self.coefficients.order}"
        self.order = 2 * self.coefficients.order
        c = self.coefficients
        self._params = (
            np.array(c.nodes), np.array(c.inner_inverse), np.array(c.alpha[:, 0]), np.array(c.beta),
        )
        self.work: Optional[CgpStepWork] = None

    def _advance(self, kernels):
        return kernels.cgpk_advance, self._params

    def step_stages(self, problem: OdeProblem, t: float, y, h: float) -> np.ndarray:
        """One step returning all stage values, shape ``(k+1, dimension)``."""
        k = _kernels.kernels_for(problem.rhs)
        y = np.array(y, dtype=float)
        z, it, ok, res = k.cgpk_stages(self._solve(k), problem.rhs, float(t), y, float(h),
                                       self._params, self.solver.tol, self.solver.max_iter)
        self.iterations += it
        stages = np.vstack([y, z.reshape(self.coefficients.order, y.size)])
        self.work = CgpStepWork(stages, _stage_rhs(problem, self.coefficients, t, h, stages), it, ok, res)
        if not ok:
            raise StepFailure(it, res, t=t)
        return stages


def step_cgp1(problem: OdeProblem, t: float, y, h: float,
              solver: Optional[SolverConfig] = None) -> np.ndarray:
    """One Crank-Nicolson step ``U^1 = U^0 + h/2 (F(t, U^0) + F(t + h, U^1))``."""
    return Cgp1Stepper(solver).step(problem, t, y, h)


def step_cgp2(problem: OdeProblem, t: float, y, h: float,
              solver: Optional[SolverConfig] = None) -> tuple[np.ndarray, np.ndarray]:
    """One cGP(2) step; returns ``(y_mid, y_end)``."""
    return Cgp2Stepper(solver).step_stages(problem, t, y, h)


def step_cgp(coefficients: CgpCoefficients, problem: OdeProblem, t: float, y, h: float,
             solver: Optional[SolverConfig] = None) -> np.ndarray:
    """One cGP(k) step; returns the ``(k+1, dimension)`` stage values."""
    return CgpStepper(coefficients.order, solver).step_stages(problem, t, y, h)
