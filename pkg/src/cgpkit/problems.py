"""Benchmark Hamiltonian systems.

* harmonic oscillator ``H = (p^2 + q^2) / 2``;
* Kepler two-body problem ``H = |p|^2 / 2 - 1 / |q|`` started at
  periapsis with eccentricity ``e``;
* a planar seven-atom Argon cluster with Lennard-Jones pair forces.

All right-hand sides are numba functions so the integrators run compiled.
States are ``(p, q)``; the Argon state is ``(p_1x, p_1y, ..., q_7y)`` with
momenta in kg nm/ns and positions in nm, so time is measured in ns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from typing import Optional

import numpy as np
from numba import njit

from .core import ConfigurationError, ContractError, OdeProblem, SeparableParts

FS = 1e-6  # one femtosecond in nanoseconds

# -- harmonic oscillator ---------------------------------------------------------


@njit
def sho_rhs(t, y):
    return np.array([-y[1], y[0]])


def sho_hamiltonian(Y):
    Y = np.asarray(Y, dtype=float)
    return 0.5 * (Y[..., 0] ** 2 + Y[..., 1] ** 2)


def make_sho(y0=(0.0, 1.0)) -> OdeProblem:
    """Harmonic oscillator ``q' = p``, ``p' = -q`` with ``y0 = (p0, q0)``."""
    p0, q0 = (float(v) for v in y0)

    def exact(t):
        t = np.asarray(t, dtype=float)
        c, s = np.cos(t), np.sin(t)
        return np.stack([p0 * c - q0 * s, q0 * c + p0 * s], axis=-1)

    return OdeProblem(
        name="sho",
        dimension=2,
        rhs=sho_rhs,
        y0=(p0, q0),
        hamiltonian=sho_hamiltonian,
        exact=exact,
        split=SeparableParts(lambda p: np.asarray(p, dtype=float), lambda q: np.asarray(q, dtype=float)),
        params={"p0": p0, "q0": q0},
    )


# -- Kepler ------------------------------------------------------------------------


@dataclass(frozen=True)
class KeplerConfig:
    eccentricity: float = 0.0
    periods: int = 1

    def __post_init__(self):
        if not 0.0 <= self.eccentricity < 1.0:
            raise ConfigurationError(f"eccentricity must lie in [0, 1), got {self.eccentricity}")
        if int(self.periods) != self.periods or self.periods < 1:
            raise ConfigurationError("periods must be a positive integer")

    @property
    def period(self) -> float:
        return 2.0 * math.pi

    @property
    def t_end(self) -> float:
        return self.periods * self.period


@njit
def kepler_rhs(t, y):
    q1, q2 = y[2], y[3]
    r2 = q1 * q1 + q2 * q2
    r3 = r2 * math.sqrt(r2)
    return np.array([-q1 / r3, -q2 / r3, y[0], y[1]])


def kepler_hamiltonian(Y):
    Y = np.asarray(Y, dtype=float)
    return 0.5 * (Y[..., 0] ** 2 + Y[..., 1] ** 2) - 1.0 / np.hypot(Y[..., 2], Y[..., 3])


def angular_momentum(Y):
    """``q1 p2 - q2 p1`` for Kepler states."""
    Y = np.asarray(Y, dtype=float)
    return Y[..., 2] * Y[..., 1] - Y[..., 3] * Y[..., 0]


def eccentric_anomaly(e: float, t, tol: float = 1e-15, max_iter: int = 100) -> np.ndarray:
    """Solve ``E - e sin E = t (mod 2 pi)`` for ``E`` in ``[0, 2 pi)``.

    Newton's method safeguarded by the bracket ``[M - e, M + e]``, which
    always contains the root; steps leaving the bracket fall back to
    bisection.
    """
    M = np.mod(np.asarray(t, dtype=float), 2.0 * np.pi)
    E = M.copy()
    lo, hi = M - e, M + e
    for _ in range(max_iter):
        f = E - e * np.sin(E) - M
        lo = np.where(f < 0, E, lo)
        hi = np.where(f > 0, E, hi)
        step = f / (1.0 - e * np.cos(E))
        trial = E - step
        bad = ~((trial > lo) & (trial < hi))
        new = np.where(bad, 0.5 * (lo + hi), trial)
        done = np.abs(new - E) <= tol * (1.0 + np.abs(E))
        E = new
        if np.all(done):
            return E
    raise RuntimeError("Kepler equation solve did not converge")


def kepler_exact(e: float, t) -> np.ndarray:
    """Exact ``(p1, p2, q1, q2)`` at time(s) ``t`` for the periapsis start."""
    if not 0.0 <= e < 1.0:
        raise ContractError(f"eccentricity must lie in [0, 1), got {e}")
    E = eccentric_anomaly(e, t)
    c, s = np.cos(E), np.sin(E)
    w = math.sqrt(1.0 - e * e)
    den = 1.0 - e * c
    return np.stack([-s / den, w * c / den, c - e, w * s], axis=-1)


def make_kepler(config=None) -> OdeProblem:
    """Kepler problem; ``config`` is a :class:`KeplerConfig` or an eccentricity."""
    if config is None:
        config = KeplerConfig()
    elif not isinstance(config, KeplerConfig):
        config = KeplerConfig(float(config))
    e = config.eccentricity
    y0 = (0.0, math.sqrt((1.0 + e) / (1.0 - e)), 1.0 - e, 0.0)

    def grad_potential(q):
        q = np.asarray(q, dtype=float)
        return q / np.linalg.norm(q) ** 3

    return OdeProblem(
        name="kepler",
        dimension=4,
        rhs=kepler_rhs,
        y0=y0,
        hamiltonian=kepler_hamiltonian,
        exact=lambda t: kepler_exact(e, t),
        split=SeparableParts(lambda p: np.asarray(p, dtype=float), grad_potential),
        params={"e": e, "periods": config.periods},
    )


# -- Argon cluster ------------------------------------------------------------------


def _load_argon_data():
    text = (resources.files("cgpkit") / "data" / "argon7.txt").read_text()
    rows = np.loadtxt(text.splitlines(), comments="#")
    return rows[:, :2], rows[:, 2:]


def _default_positions():
    return _load_argon_data()[0]


def _default_velocities():
    return _load_argon_data()[1]


@dataclass(frozen=True, eq=False)
class ArgonConfig:
    """Lennard-Jones cluster constants (SI mass and energy, nm, nm/ns)."""

    mass: float = 66.34e-27
    sigma: float = 0.341
    epsilon: float = 1.654028284e-21
    positions: np.ndarray = field(default_factory=_default_positions)
    velocities: np.ndarray = field(default_factory=_default_velocities)

    def __post_init__(self):
        for label in ("mass", "sigma", "epsilon"):
            value = getattr(self, label)
            if not (value > 0 and np.isfinite(value)):
                raise ConfigurationError(f"{label} must be positive and finite")
        q = np.array(self.positions, dtype=float)
        v = np.array(self.velocities, dtype=float)
        if q.ndim != 2 or q.shape[1] != 2 or v.shape != q.shape:
            raise ConfigurationError("positions and velocities must both have shape (atoms, 2)")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(v))):
            raise ConfigurationError("initial data must be finite")
        d = np.linalg.norm(q[:, None, :] - q[None, :, :], axis=-1)
        i, j = np.triu_indices(len(q), 1)
        if np.any(d[i, j] == 0.0):
            raise ConfigurationError("two atoms share the same initial position")
        for arr in (q, v):
            arr.setflags(write=False)
        object.__setattr__(self, "positions", q)
        object.__setattr__(self, "velocities", v)

    @property
    def atoms(self) -> int:
        return self.positions.shape[0]


def lj_potential(r, sigma: float, epsilon: float):
    """Pair energy ``4 eps ((sigma/r)^12 - (sigma/r)^6)``."""
    s6 = (sigma / np.asarray(r, dtype=float)) ** 6
    return 4.0 * epsilon * (s6 * s6 - s6)


def lj_force_magnitude(r, sigma: float, epsilon: float):
    """``-dV/dr``; positive means repulsion."""
    r = np.asarray(r, dtype=float)
    s6 = (sigma / r) ** 6
    return 24.0 * epsilon * (2.0 * s6 * s6 - s6) / r


def argon_potential(Q, config: ArgonConfig):
    """Total pair energy for positions ``Q`` of shape ``(..., 2 * atoms)``."""
    Q = np.asarray(Q, dtype=float)
    q = Q.reshape(Q.shape[:-1] + (config.atoms, 2))
    i, j = np.triu_indices(config.atoms, 1)
    r = np.linalg.norm(q[..., i, :] - q[..., j, :], axis=-1)
    return lj_potential(r, config.sigma, config.epsilon).sum(axis=-1)


def argon_forces(Q, config: ArgonConfig) -> np.ndarray:
    """Forces ``-grad V`` for one configuration, flattened like ``Q``."""
    q = np.asarray(Q, dtype=float).reshape(config.atoms, 2)
    diff = q[:, None, :] - q[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(r, np.inf)
    f = lj_force_magnitude(r, config.sigma, config.epsilon) / r
    return (f[..., None] * diff).sum(axis=1).ravel()


def _argon_rhs(n_atoms: int, mass: float, sigma: float, epsilon: float):
    sig6 = sigma ** 6
    n = 2 * n_atoms

    @njit
    def rhs(t, y):
        out = np.zeros(2 * n)
        for k in range(n):
            out[n + k] = y[k] / mass
        for i in range(n_atoms):
            xi, yi = y[n + 2 * i], y[n + 2 * i + 1]
            for j in range(i + 1, n_atoms):
                dx = y[n + 2 * j] - xi
                dy = y[n + 2 * j + 1] - yi
                r2 = dx * dx + dy * dy
                s6 = sig6 / (r2 * r2 * r2)
                c = 24.0 * epsilon * (s6 - 2.0 * s6 * s6) / r2
                out[2 * i] += c * dx
                out[2 * i + 1] += c * dy
                out[2 * j] -= c * dx
                out[2 * j + 1] -= c * dy
        return out

    return rhs


def make_argon7(config: Optional[ArgonConfig] = None) -> OdeProblem:
    """Planar Argon cluster; time in ns, see :data:`FS` for femtoseconds."""
    config = config or ArgonConfig()
    m = config.mass
    n = 2 * config.atoms
    y0 = np.concatenate([(m * config.velocities).ravel(), config.positions.ravel()])

    def hamiltonian(Y):
        Y = np.asarray(Y, dtype=float)
        kinetic = 0.5 * (Y[..., :n] ** 2).sum(axis=-1) / m
        return kinetic + argon_potential(Y[..., n:], config)

    return OdeProblem(
        name="argon",
        dimension=2 * n,
        rhs=_argon_rhs(config.atoms, m, config.sigma, config.epsilon),
        y0=y0,
        hamiltonian=hamiltonian,
        split=SeparableParts(
            lambda p: np.asarray(p, dtype=float) / m,
            lambda q: -argon_forces(q, config),
        ),
        params={"atoms": config.atoms, "mass": m, "sigma": config.sigma, "epsilon": config.epsilon},
    )


def total_momentum(Y, atoms: int = 7) -> np.ndarray:
    """Sum of atomic momenta, shape ``(..., 2)``."""
    Y = np.asarray(Y, dtype=float)
    return Y[..., : 2 * atoms].reshape(Y.shape[:-1] + (atoms, 2)).sum(axis=-2)
