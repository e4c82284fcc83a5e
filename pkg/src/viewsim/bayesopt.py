"""Gaussian-process Bayesian optimisation with expected improvement.

Points live in a box described by :class:`ParamSpace`; the GP works on
normalised ``[0, 1]^d`` coordinates.  :func:`tune` persists its trace after
every evaluation so an interrupted run can be resumed from the CSV.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.stats import norm

from .csvio import fmt_float, parse_bool01, parse_float, parse_int, read_rows, write_rows


@dataclass(frozen=True)
class Dim:
    name: str
    lo: float
    hi: float
    scale: str = "linear"
    integer: bool = False

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: need lo < hi, got [{self.lo}, {self.hi}]")
        if self.scale not in ("linear", "log10"):
            raise ValueError(f"{self.name}: scale must be linear or log10")
        if self.scale == "log10" and self.lo <= 0:
            raise ValueError(f"{self.name}: log10 scale needs lo > 0")

    def _bounds(self):
        if self.scale == "log10":
            return math.log10(self.lo), math.log10(self.hi)
        return self.lo, self.hi

    def from_unit(self, u: float):
        a, b = self._bounds()
        x = a + min(max(u, 0.0), 1.0) * (b - a)
        if self.scale == "log10":
            x = 10.0 ** x
        x = min(max(x, self.lo), self.hi)
        return int(round(x)) if self.integer else float(x)

    def to_unit(self, x) -> float:
        a, b = self._bounds()
        x = math.log10(x) if self.scale == "log10" else float(x)
        return (x - a) / (b - a)


class ParamSpace:
    def __init__(self, dims):
        self.dims = tuple(dims)
        names = [d.name for d in self.dims]
        if len(set(names)) != len(names):
            raise ValueError("dimension names must be unique")

    @classmethod
    def default(cls) -> "ParamSpace":
        """The five training hyperparameters tuned for actor-critic agents."""
        return cls([
            Dim("actor_lr", 1e-5, 1e-1, "log10"),
            Dim("critic_lr", 1e-5, 1e-1, "log10"),
            Dim("epochs", 1, 100, integer=True),
            Dim("minibatch", 16, 512, integer=True),
            Dim("gamma", 0.5, 0.999),
        ])

    @property
    def names(self) -> list:
        return [d.name for d in self.dims]

    def __len__(self):
        return len(self.dims)

    def from_unit(self, u) -> dict:
        return {d.name: d.from_unit(float(v)) for d, v in zip(self.dims, u)}

    def to_unit(self, point: dict) -> np.ndarray:
        return np.array([d.to_unit(point[d.name]) for d in self.dims])

    def contains(self, point: dict) -> bool:
        for d in self.dims:
            x = point[d.name]
            if not d.lo <= x <= d.hi or (d.integer and x != int(x)):
                return False
        return True


@dataclass
class GpModel:
    """Exact GP regression with a squared-exponential kernel and constant mean."""

    x: np.ndarray
    y: np.ndarray
    length_scale: np.ndarray
    signal_variance: float
    noise_variance: float
    mean: float
    chol: tuple
    weights: np.ndarray

    @property
    def best(self) -> float:
        return float(self.y.max())


def se_kernel(a, b, length_scale, signal_variance) -> np.ndarray:
    a = np.atleast_2d(a) / length_scale
    b = np.atleast_2d(b) / length_scale
    d2 = np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T
    return signal_variance * np.exp(-0.5 * np.maximum(d2, 0.0))


def gp_fit(x, y, length_scale=0.2, signal_variance=1.0, noise_variance=1e-4) -> GpModel:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.asarray(y, dtype=float).reshape(-1)
    if x.shape[0] == 0 or x.shape[0] != y.size:
        raise ValueError("gp_fit needs at least one observation and matching x/y")
    ls = np.broadcast_to(np.asarray(length_scale, dtype=float), (x.shape[1],)).copy()
    mean = float(y.mean())
    k = se_kernel(x, x, ls, signal_variance)
    jitter = max(noise_variance, 1e-6)
    while True:
        try:
            chol = cho_factor(k + jitter * np.eye(len(y)), lower=True)
            break
        except np.linalg.LinAlgError:
            jitter *= 10.0
    weights = cho_solve(chol, y - mean)
    return GpModel(x, y, ls, float(signal_variance), jitter, mean, chol, weights)


def gp_posterior(model: GpModel, points):
    """Posterior mean and (non-negative) variance at one point or a batch."""
    q = np.atleast_2d(np.asarray(points, dtype=float))
    ks = se_kernel(q, model.x, model.length_scale, model.signal_variance)
    mean = model.mean + ks @ model.weights
    v = cho_solve(model.chol, ks.T)
    var = np.maximum(model.signal_variance - np.sum(ks * v.T, axis=1), 0.0)
    if np.ndim(points) == 1:
        return float(mean[0]), float(var[0])
    return mean, var


def expected_improvement(mean, var, best: float) -> np.ndarray:
    mean = np.asarray(mean, dtype=float)
    sd = np.sqrt(np.asarray(var, dtype=float))
    gap = mean - best
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, gap / sd, 0.0)
        ei = gap * norm.cdf(z) + sd * norm.pdf(z)
    return np.where(sd > 0, ei, np.maximum(gap, 0.0))


def suggest(model: Optional[GpModel], space: ParamSpace, rng, n_candidates: int = 4096) -> dict:
    """EI maximiser over uniform candidates; a uniform draw when there is no model."""
    if model is None:
        return space.from_unit(rng.random(len(space)))
    cand = rng.random((n_candidates, len(space)))
    # score what would actually be evaluated, i.e. after integer rounding
    cand = np.array([space.to_unit(space.from_unit(c)) for c in cand])
    mean, var = gp_posterior(model, cand)
    ei = expected_improvement(mean, var, model.best)
    return space.from_unit(cand[int(np.argmax(ei))])


@dataclass(frozen=True)
class TraceEntry:
    index: int
    point: dict
    value: float
    flagged: bool


@dataclass(frozen=True)
class TuneResult:
    best_point: dict
    best_value: float
    trace: list


def trace_header(space: ParamSpace) -> list:
    return ["eval_index", *space.names, "reward", "flagged"]


def write_trace(path, space: ParamSpace, trace) -> None:
    rows = [
        [e.index, *(str(e.point[d.name]) if d.integer else fmt_float(e.point[d.name]) for d in space.dims),
         fmt_float(e.value), int(e.flagged)]
        for e in trace
    ]
    write_rows(path, trace_header(space), rows)


def read_trace(path, space: ParamSpace) -> list:
    parsers = [parse_int, *(parse_int if d.integer else parse_float for d in space.dims), parse_float, parse_bool01]
    out = []
    for row in read_rows(path, trace_header(space), parsers):
        point = dict(zip(space.names, row[1:-2]))
        out.append(TraceEntry(row[0], point, row[-2], row[-1]))
    return out


def tune(objective: Callable[[dict], float], space: ParamSpace, budget: int, init_points: int = 8,
         seed=0, trace_path=None, n_candidates: int = 4096, gp_options: Optional[dict] = None) -> TuneResult:
    """Maximise ``objective`` with ``init_points`` random draws then EI-guided ones.

    Evaluation ``i`` draws from ``default_rng([seed, i])``, so a run resumed
    from ``trace_path`` continues exactly where it stopped.  A failing or
    non-finite objective is recorded as 0 and flagged.
    """
    if init_points < 1 or budget < init_points:
        raise ValueError("need budget >= init_points >= 1")
    trace = []
    if trace_path is not None and Path(trace_path).exists():
        trace = read_trace(trace_path, space)
        if len(trace) > budget:
            raise ValueError(f"trace already holds {len(trace)} evaluations, more than the budget {budget}")
    gp_options = gp_options or {}
    for i in range(len(trace), budget):
        rng = np.random.default_rng([seed, i])
        model = None
        if i >= init_points:
            model = gp_fit([space.to_unit(e.point) for e in trace], [e.value for e in trace], **gp_options)
        point = suggest(model, space, rng, n_candidates)
        try:
            value = float(objective(point))
            flagged = not math.isfinite(value)
        except Exception:
            value, flagged = 0.0, True
        if flagged:
            value = 0.0
        trace.append(TraceEntry(i, point, value, flagged))
        if trace_path is not None:
            write_trace(trace_path, space, trace)
    best = max(trace, key=lambda e: e.value)
    return TuneResult(best.point, best.value, trace)


def best_so_far(trace) -> np.ndarray:
    return np.maximum.accumulate([e.value for e in trace])
