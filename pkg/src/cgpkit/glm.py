"""General linear methods driven by an ``(A, U, B, V)`` tableau.

One step maps the r-component input vector ``x`` (each component a state
vector) to

    Y      = h A f(Y) + U x
    x_new  = h B f(Y) + V x

The first input component is taken to approximate the solution ``y(t_n)``.

Tableau file format
-------------------
Plain text, one item per line, ``#`` starts a comment::

    name = euler        # optional
    s = 1               # stages
    r = 1               # input components
    p = 1               # declared order
    A
    0
    U
    1
    B
    1
    V
    1
    c                   # optional stage abscissae, one row of s values
    0
    starter identity    # or "starter reference" followed by r rows

Matrix blocks are given row by row, entries separated by whitespace.
Entries are decimal (``0.25``, ``-1e-3``) or rational (``1/3``) literals;
they are parsed exactly and rounded once to double precision.  A
``starter reference`` block has one row per input component listing the
multipliers ``m_0 m_1 ...`` of ``y(t0), h y'(t0), h^2 y''(t0), ...``; its
first row must be ``1``.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from typing import Optional

import numpy as np

from . import _kernels
from .cgp import Cgp2Stepper
from .core import ConfigurationError, OdeProblem, SolverConfig, StepFailure
from .irk import RkTableau
from .runner import MarchResult, Stepper

POWER_BOUND = 100.0
POWER_STEPS = 10_000
STARTER_REFINEMENT = 100
_FIT_DEGREE = 8  # higher degrees amplify round-off in the 3rd and 4th derivatives

BLOCKS = ("A", "U", "B", "V", "c")


class GlmParseError(ConfigurationError):
    """Malformed or invalid tableau text; ``line`` and ``block`` locate the problem."""

    def __init__(self, message: str, line: Optional[int] = None, block: Optional[str] = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if block is not None:
            where.append(f"block {block}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)
        self.line = line
        self.block = block


@dataclass(frozen=True)
class StarterSpec:
    """How to build the initial input vector.

    ``method`` is ``"identity"`` (r = 1, input ``[y0]``) or ``"reference"``:
    component k is ``sum_i definitions[k][i] * h^i y^(i)(t0)``.
    """

    method: str = "identity"
    definitions: tuple = ((1.0,),)

    def __post_init__(self):
        if self.method not in ("identity", "reference"):
            raise ConfigurationError(f"unknown starter method {self.method!r}")
        defs = tuple(tuple(float(m) for m in row) for row in self.definitions)
        if not defs or any(len(row) == 0 for row in defs):
            raise ConfigurationError("starter definitions need at least one multiplier per component")
        first = defs[0]
        if first[0] != 1.0 or any(m != 0.0 for m in first[1:]):
            raise ConfigurationError("the first input component must be y0 itself")
        if self.method == "identity" and len(defs) != 1:
            raise ConfigurationError("the identity starter only applies to r = 1")
        object.__setattr__(self, "definitions", defs)

    @property
    def max_derivative(self) -> int:
        return max(len(row) for row in self.definitions) - 1


def _matrix(x, name) -> np.ndarray:
    arr = np.array(x, dtype=float)
    ndim = 1 if name == "c" else 2
    if arr.ndim != ndim:
        raise ConfigurationError(f"{name} must be {ndim}-d, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ConfigurationError(f"matrix {name} has non-finite entries")
    arr.setflags(write=False)
    return arr


def power_bound(V: np.ndarray, steps: int = POWER_STEPS) -> float:
    """Largest ``||V^m||_2`` for ``m = 1..steps``."""
    P = np.eye(V.shape[0])
    worst = 0.0
    for _ in range(steps):
        P = P @ V
        worst = max(worst, np.linalg.norm(P, 2))
        if not np.isfinite(worst):
            break
    return worst


@dataclass(frozen=True, eq=False)
class GlmTableau:
    A: np.ndarray
    U: np.ndarray
    B: np.ndarray
    V: np.ndarray
    order: int
    starter: StarterSpec = field(default_factory=StarterSpec)
    c: Optional[np.ndarray] = None
    name: str = "glm"

    def __post_init__(self):
        A, U, B, V = (_matrix(getattr(self, k), k) for k in "AUBV")
        s, r = A.shape[0], V.shape[0]
        for label, M, shape in (("A", A, (s, s)), ("U", U, (s, r)), ("B", B, (r, s)), ("V", V, (r, r))):
            if M.shape != shape:
                raise ConfigurationError(f"matrix {label} has shape {M.shape}, expected {shape}")
        c = A.sum(axis=1) if self.c is None else _matrix(self.c, "c")
        if c.shape != (s,):
            raise ConfigurationError(f"abscissae c have shape {c.shape}, expected ({s},)")
        c = np.array(c)
        c.setflags(write=False)
        if len(self.starter.definitions) != r:
            raise ConfigurationError(
                f"starter defines {len(self.starter.definitions)} components, tableau has r = {r}"
            )
        if int(self.order) != self.order or self.order < 1:
            raise ConfigurationError("declared order must be a positive integer")
        bound = power_bound(V)
        if not bound <= POWER_BOUND:
            raise ConfigurationError(f"V is not power bounded (max ||V^m|| = {bound:.3g})")
        for k, v in zip("AUBV", (A, U, B, V)):
            object.__setattr__(self, k, v)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "order", int(self.order))

    @property
    def stages(self) -> int:
        return self.A.shape[0]

    @property
    def inputs(self) -> int:
        return self.V.shape[0]

    def __eq__(self, other):
        if not isinstance(other, GlmTableau):
            return NotImplemented
        return (
            self.name == other.name
            and self.order == other.order
            and self.starter == other.starter
            and all(np.array_equal(getattr(self, k), getattr(other, k)) for k in ("A", "U", "B", "V", "c"))
        )

    __hash__ = None


def rk_as_glm(tableau: RkTableau, name: Optional[str] = None) -> GlmTableau:
    """Embed a Runge-Kutta method as a GLM with a single input component."""
    s = tableau.stages
    return GlmTableau(
        A=tableau.A,
        U=np.ones((s, 1)),
        B=tableau.b.reshape(1, s),
        V=np.ones((1, 1)),
        order=tableau.order or 1,
        c=tableau.c,
        name=name or tableau.name,
    )


def euler_glm() -> GlmTableau:
    """Forward Euler written as a GLM (s = r = 1)."""
    return GlmTableau(A=[[0.0]], U=[[1.0]], B=[[1.0]], V=[[1.0]], order=1, name="euler")


# -- stepping ------------------------------------------------------------------

def _params(tableau: GlmTableau):
    return (np.array(tableau.A), np.array(tableau.U), np.array(tableau.B),
            np.array(tableau.V), np.array(tableau.c))


def _check_inputs(problem: OdeProblem, tableau: GlmTableau, inputs) -> np.ndarray:
    x = np.array(inputs, dtype=float)
    if x.shape != (tableau.inputs, problem.dimension):
        raise ConfigurationError(
            f"input vector has shape {x.shape}, expected ({tableau.inputs}, {problem.dimension})"
        )
    return x


def _derivative_terms(problem: OdeProblem, h: float, order: int) -> np.ndarray:
    """Scaled derivatives ``h^i y^(i)(t0)`` for ``i = 0..order``.

    Orders 0 and 1 are exact.  Higher orders are read off a Chebyshev fit of
    a fine cGP(2) trajectory on ``[t0 - h, t0 + h]``.
    """
    y0 = np.array(problem.y0)
    terms = [y0, h * np.asarray(problem.rhs(problem.t0, y0.copy()), dtype=float)]
    if order >= 2:
        fine = h / STARTER_REFINEMENT
        stepper = Cgp2Stepper()
        fwd = stepper.march(problem, fine, STARTER_REFINEMENT)
        bwd = stepper.march(problem, -fine, STARTER_REFINEMENT)
        for res in (fwd, bwd):
            if res.failed:
                raise StepFailure(res.last_iterations, res.residual, step_index=res.steps_done)
        s = np.concatenate([-bwd.steps[:0:-1], fwd.steps]) / STARTER_REFINEMENT
        Y = np.vstack([bwd.states[:0:-1], fwd.states])
        coef = np.polynomial.chebyshev.chebfit(s, Y, _FIT_DEGREE)
        cheb = np.polynomial.chebyshev
        for i in range(2, order + 1):
            terms.append(cheb.chebval(0.0, cheb.chebder(coef, i)))
    return np.array(terms[: order + 1])


def start_glm(problem: OdeProblem, tableau: GlmTableau, h: float) -> np.ndarray:
    """Initial input vector, shape ``(r, dimension)``; row 0 is ``y0`` exactly."""
    spec = tableau.starter
    if spec.method == "identity":
        return np.array(problem.y0, dtype=float).reshape(1, -1)
    if spec.max_derivative > _FIT_DEGREE:
        raise ConfigurationError(f"starter derivatives above order {_FIT_DEGREE} are not supported")
    terms = _derivative_terms(problem, float(h), spec.max_derivative)
    x = np.zeros((tableau.inputs, problem.dimension))
    for k, row in enumerate(spec.definitions):
        for i, m in enumerate(row):
            if m != 0.0:
                x[k] += m * terms[i]
    x[0] = problem.y0
    return x


class GlmStepper(Stepper):
    """Stepper whose marching state is the ``(r, dimension)`` input vector.

    Recorded states are the first input component.
    """

    def __init__(self, tableau: GlmTableau, solver: Optional[SolverConfig] = None,
                 name: Optional[str] = None):
        super().__init__(solver)
        self.tableau = tableau
        self.order = tableau.order
        self.name = name or f"glm:{tableau.name}"
        self._params = _params(tableau)

    def start(self, problem: OdeProblem, h: float) -> np.ndarray:
        return start_glm(problem, self.tableau, h)

    def step(self, problem: OdeProblem, t: float, inputs, h: float) -> np.ndarray:
        k = _kernels.kernels_for(problem.rhs)
        x = _check_inputs(problem, self.tableau, inputs)
        out, it, ok, res = k.glm_advance(self._solve(k), problem.rhs, float(t), x, float(h),
                                         self._params, self.solver.tol, self.solver.max_iter)
        self.iterations += it
        if not ok:
            raise StepFailure(it, res, t=t)
        return out

    def march(self, problem: OdeProblem, h: float, n_steps: int, stride: int = 1,
              start: Optional[np.ndarray] = None) -> MarchResult:
        k = _kernels.kernels_for(problem.rhs)
        x0 = self.start(problem, h) if start is None else _check_inputs(problem, self.tableau, start)
        out = k.glm_march(self._solve(k), problem.rhs, problem.t0, x0, float(h), int(n_steps),
                          int(stride), self._params, self.solver.tol, self.solver.max_iter)
        return self._wrap(out)


def step_glm(problem: OdeProblem, t: float, inputs, h: float, tableau: GlmTableau,
             solver: Optional[SolverConfig] = None) -> np.ndarray:
    """One GLM step from the input vector ``inputs`` (shape ``(r, dimension)``)."""
    return GlmStepper(tableau, solver).step(problem, t, inputs, h)


# -- text format -----------------------------------------------------------------

_HEADER = re.compile(r"^(name|s|r|p)\s*=\s*(\S+)$")


def _number(token: str, line: int, block: str) -> float:
    try:
        return float(Fraction(token))
    except (ValueError, ZeroDivisionError):
        raise GlmParseError(f"not a number: {token!r}", line, block) from None


def loads(text: str) -> GlmTableau:
    """Parse a tableau from its text form (see module docstring)."""
    header: dict = {}
    blocks: dict = {}
    starter_method = None
    current = None
    first_line: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if m:
            header[m.group(1)] = (m.group(2), lineno)
            current = None
            continue
        tokens = line.split()
        if tokens[0] in BLOCKS and len(tokens) == 1:
            current = tokens[0]
        elif tokens[0] == "starter":
            if len(tokens) != 2:
                raise GlmParseError("expected 'starter identity' or 'starter reference'", lineno, "starter")
            current, starter_method = "starter", tokens[1]
        elif current is None:
            raise GlmParseError(f"unexpected line {line!r}", lineno)
        else:
            blocks.setdefault(current, []).append([_number(t, lineno, current) for t in tokens])
            continue
        if current in blocks:
            raise GlmParseError("duplicate block", lineno, current)
        blocks[current] = []
        first_line[current] = lineno

    dims = {}
    for key in ("s", "r", "p"):
        if key not in header:
            raise GlmParseError(f"missing header field {key!r}")
        value, lineno = header[key]
        try:
            dims[key] = int(value)
        except ValueError:
            raise GlmParseError(f"header {key!r} must be an integer, got {value!r}", lineno) from None
        if dims[key] < 1:
            raise GlmParseError(f"header {key!r} must be positive", lineno)
    s, r = dims["s"], dims["r"]

    shapes = {"A": (s, s), "U": (s, r), "B": (r, s), "V": (r, r), "c": (1, s)}
    mats = {}
    for label, shape in shapes.items():
        if label not in blocks:
            if label == "c":
                continue
            raise GlmParseError("missing matrix block", block=label)
        rows = blocks[label]
        if len(rows) != shape[0] or any(len(row) != shape[1] for row in rows):
            got = (len(rows), max((len(row) for row in rows), default=0))
            raise GlmParseError(f"matrix {label} has shape {got}, expected {shape}",
                                first_line[label], label)
        mats[label] = np.array(rows)

    if starter_method is None:
        starter_method = "identity"
    rows = blocks.get("starter") or [[1.0]]
    try:
        starter = StarterSpec(starter_method, tuple(tuple(row) for row in rows))
    except ConfigurationError as exc:
        raise GlmParseError(str(exc), first_line.get("starter"), "starter") from None

    try:
        return GlmTableau(
            A=mats["A"], U=mats["U"], B=mats["B"], V=mats["V"], order=dims["p"],
            starter=starter, c=mats["c"][0] if "c" in mats else None,
            name=header.get("name", ("glm", 0))[0],
        )
    except GlmParseError:
        raise
    except ConfigurationError as exc:
        raise GlmParseError(str(exc)) from None


def dumps(tableau: GlmTableau) -> str:
    """Serialize ``tableau``; floats use ``repr`` so :func:`loads` round-trips exactly."""
    lines = [f"name = {tableau.name}", f"s = {tableau.stages}", f"r = {tableau.inputs}",
             f"p = {tableau.order}"]
    for label in BLOCKS:
        M = np.atleast_2d(getattr(tableau, label))
        lines.append(label)
        lines.extend(" ".join(repr(float(x)) for x in row) for row in M)
    lines.append(f"starter {tableau.starter.method}")
    if tableau.starter.method == "reference":
        lines.extend(" ".join(repr(m) for m in row) for row in tableau.starter.definitions)
    return "\n".join(lines) + "\n"


def load_glm_tableau(source) -> GlmTableau:
    """Load a tableau from text, a file path, or a built-in name (``euler``, ``gauss2``)."""
    if isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source):
        path = os.fspath(source)
        if not os.path.exists(path) and re.fullmatch(r"\w+", path):
            data = resources.files("cgpkit") / "data" / f"{path}.glm"
            if not data.is_file():
                raise ConfigurationError(f"no built-in GLM tableau named {path!r}")
            return loads(data.read_text())
        with open(path, encoding="utf-8") as fh:
            return loads(fh.read())
    return loads(source)
