"""Error series, power-law growth fits and run summaries."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import RunRecord, UnsupportedMetricError

METRICS = ("global", "energy")
MIN_FIT_POINTS = 10


class FitError(ValueError):
    """Too little positive data in the window to fit a power law."""


def envelope(values) -> np.ndarray:
    """Running maximum of ``|values|``."""
    return np.maximum.accumulate(np.abs(np.asarray(values, dtype=float)))


@dataclass(frozen=True, eq=False)
class ErrorSeries:
    """Per-sample error magnitudes and their running maximum."""

    metric: str
    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.abs(np.asarray(self.values, dtype=float))
        if t.shape != v.shape or t.ndim != 1:
            raise ValueError("times and values must be 1-d and aligned")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def envelope(self) -> np.ndarray:
        return envelope(self.values)

    @property
    def maximum(self) -> float:
        return float(self.values.max()) if self.values.size else 0.0

    def positive(self):
        """``(times, envelope)`` restricted to ``t > 0`` and positive envelope, for log plots."""
        env = self.envelope
        keep = (self.times > 0) & (env > 0)
        return self.times[keep], env[keep]


def compute_error_series(record: RunRecord, metric: str) -> ErrorSeries:
    """``metric`` is ``"global"`` (E_g) or ``"energy"`` (|E_e|)."""
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    values = record.global_errors if metric == "global" else record.energy_errors
    if values is None:
        raise UnsupportedMetricError(f"run of {record.problem!r} has no {metric} error data")
    return ErrorSeries(metric, record.times, values)


@dataclass(frozen=True)
class GrowthFit:
    """``log10 env = exponent * log10 t + intercept`` over ``window``."""

    exponent: float
    intercept: float
    window: tuple
    residual: float
    points: int


def fit_growth_exponent(series: ErrorSeries, window: Optional[tuple] = None) -> GrowthFit:
    """Least-squares power-law exponent of the error envelope.

    Parameters
    ----------
    series : ErrorSeries
    window : (t_min, t_max), optional
        Defaults to the last two decades of the sampled time range,
        ``[t_end / 100, t_end]``.

    Raises
    ------
    FitError
        Fewer than ten positive envelope points in the window.
    """
    t, env = series.times, series.envelope
    if t.size == 0 or t[-1] <= 0:
        raise FitError("no positive sample times")
    if window is None:
        window = (t[-1] / 100.0, t[-1])
    lo, hi = float(window[0]), float(window[1])
    keep = (t >= lo) & (t <= hi) & (t > 0) & (env > 0)
    if keep.sum() < MIN_FIT_POINTS:
        raise FitError(f"only {int(keep.sum())} positive points in window [{lo:g}, {hi:g}]")
    x, y = np.log10(t[keep]), np.log10(env[keep])
    (slope, intercept), res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(res[0] / x.size)) if res.size else 0.0
    lo_used, hi_used = float(t[keep][0]), float(t[keep][-1])
    return GrowthFit(float(slope), float(intercept), (lo_used, hi_used), rms, int(x.size))


@dataclass(frozen=True)
class SummaryRow:
    method: str
    problem: str
    param: str
    h: float
    steps: int
    max_global_error: Optional[float]
    max_energy_error: Optional[float]
    wall_seconds: float
    solver_iters: int


def _param_label(params: dict) -> str:
    return ";".join(f"{k}={v}" for k, v in params.items() if k in ("e", "p0", "q0")) if params else ""


def summarize_run(record: RunRecord) -> SummaryRow:
    """Table row: maxima of ``E_g`` and ``|E_e|`` plus cost."""
    g = record.global_errors
    e = record.energy_errors
    return SummaryRow(
        method=record.method,
        problem=record.problem,
        param=_param_label(record.params),
        h=record.h,
        steps=record.steps,
        max_global_error=None if g is None else float(np.max(np.abs(g))),
        max_energy_error=None if e is None else float(np.max(np.abs(e))),
        wall_seconds=record.wall_seconds,
        solver_iters=record.solver_iterations,
    )


def observed_orders(hs, errors) -> list:
    """Pairwise ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})``; ``None`` where undefined."""
    out = []
    for (h0, e0), (h1, e1) in zip(zip(hs, errors), zip(hs[1:], errors[1:])):
        if e0 is None or e1 is None or not (e0 > 0 and e1 > 0) or h0 == h1:
            out.append(None)
        else:
            out.append(float(np.log(e0 / e1) / np.log(h0 / h1)))
    return out
