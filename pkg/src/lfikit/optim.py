"""Derivative-free minimization: Nelder-Mead simplex and annealed global search.

Both searches clamp every proposal into the declared box, count objective
evaluations against a budget, and are fully deterministic given the spec's
seed. The annealer runs a Cauchy-visiting global phase on a geometric
temperature ladder and hands its best point to a Nelder-Mead polish.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .rng import RngStream
from .simulators import DesignBox

_ANNEAL_STREAM = 0xA55A

# classic simplex coefficients: reflection, expansion, contraction, shrink
_REFLECT = 1.0
_EXPAND = 2.0
_CONTRACT = 0.5
_SHRINK = 0.5


@dataclass
class ObjectiveSpec:
    """A function to minimize over a box, with an evaluation budget and seed."""

    objective: object
    bounds: DesignBox
    budget: int | None = None
    seed: int = 0


@dataclass
class OptResult:
    argmin: np.ndarray
    value: float
    evaluations: int
    converged: bool
    trace: list | None = None


class _Budget:
    """Clamping, counting wrapper around the raw objective."""

    def __init__(self, spec: ObjectiveSpec, limit):
        self.fn = spec.objective
        self.box = spec.bounds
        self.limit = limit
        self.used = 0
        self.best_x = None
        self.best_f = math.inf

    @property
    def exhausted(self):
        return self.limit is not None and self.used >= self.limit

    def __call__(self, x):
        x = self.box.clamp(x)
        self.used += 1
        f = float(self.fn(x))
        if f < self.best_f:
            self.best_f = f
            self.best_x = x.copy()
        return f


def _initial_simplex(x0, box):
    d = x0.shape[0]
    vertices = [x0.copy()]
    steps = 0.05 * box.widths
    for i in range(d):
        v = x0.copy()
        # step inward when the start sits against the upper face
        if v[i] + steps[i] <= box.hi_array[i]:
            v[i] += steps[i]
        else:
            v[i] -= steps[i]
        vertices.append(v)
    return np.asarray(vertices)


def _nelder_mead_loop(budget, x0, tol, trace=None):
    box = budget.box
    simplex = _initial_simplex(x0, box)
    values = np.full(simplex.shape[0], np.inf)
    for i in range(simplex.shape[0]):
        if budget.exhausted:
            break
        values[i] = budget(simplex[i])
    d = x0.shape[0]
    converged = False
    while not budget.exhausted:
        order = np.argsort(values, kind="stable")
        simplex = simplex[order]
        values = values[order]
        if trace is not None:
            trace.append((budget.used, float(values[0])))
        if values[-1] - values[0] < tol:
            converged = True
            break
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        reflected = box.clamp(centroid + _REFLECT * (centroid - worst))
        f_r = budget(reflected)
        if f_r < values[0]:
            expanded = box.clamp(centroid + _EXPAND * (reflected - centroid))
            f_e = budget(expanded)
            if f_e < f_r:
                simplex[-1], values[-1] = expanded, f_e
            else:
                simplex[-1], values[-1] = reflected, f_r
        elif f_r < values[-2]:
            simplex[-1], values[-1] = reflected, f_r
        else:
            if f_r < values[-1]:
                contracted = box.clamp(centroid + _CONTRACT * (reflected - centroid))
            else:
                contracted = box.clamp(centroid - _CONTRACT * (centroid - worst))
            f_c = budget(contracted)
            if f_c < min(f_r, values[-1]):
                simplex[-1], values[-1] = contracted, f_c
            else:
                # shrink toward the best vertex
                for i in range(1, d + 1):
                    simplex[i] = box.clamp(
                        simplex[0] + _SHRINK * (simplex[i] - simplex[0])
                    )
                    values[i] = budget(simplex[i])
                    if budget.exhausted:
                        break
    return converged


def nelder_mead(spec: ObjectiveSpec, x0, tol: float = 1e-8) -> OptResult:
    """Simplex descent from x0; stops on value spread < tol or budget."""
    x0 = np.asarray(x0, dtype=float)
    box = spec.bounds
    if x0.shape != (box.dim,):
        raise InvalidArgumentError(f"x0 must have dimension {box.dim}")
    if not box.contains(x0):
        raise InvalidArgumentError("x0 must lie within the bounds")
    budget = _Budget(spec, spec.budget)
    converged = _nelder_mead_loop(budget, x0, tol)
    return OptResult(
        argmin=budget.best_x,
        value=budget.best_f,
        evaluations=budget.used,
        converged=converged,
    )


def annealing_search(spec: ObjectiveSpec, tol: float = 1e-10) -> OptResult:
    """Cauchy-visiting annealing over the box, then a Nelder-Mead polish.

    The global phase runs 200*d iterations by default (spec.budget overrides
    the total), cooling geometrically from T0 = 5e3 * mean box width. The
    polish starts from the best point seen, so the result is never worse
    than any visited sample.
    """
    box = spec.bounds
    d = box.dim
    widths = box.widths
    if not np.isfinite(box.lo_array).all() or not np.isfinite(box.hi_array).all():
        raise InvalidArgumentError("annealing requires finite bounds")
    total_budget = spec.budget if spec.budget is not None else 320 * d
    n_global = max(1, int(total_budget * 5 / 8))
    rng = RngStream(spec.seed, _ANNEAL_STREAM)
    gen = rng.generator

    budget = _Budget(spec, total_budget)
    t0 = 5e3 * float(widths.mean())
    t_min = t0 * 1e-8
    x = box.lo_array + widths * gen.random(d)
    f = budget(x)
    for k in range(n_global):
        if budget.exhausted:
            break
        frac = (t_min / t0) ** (k / max(n_global - 1, 1))
        temp = t0 * frac
        scale = widths * math.sqrt(frac)
        step = scale * np.tan(np.pi * (gen.random(d) - 0.5))
        candidate = box.clamp(x + step)
        f_c = budget(candidate)
        if f_c < f or gen.random() < math.exp(max(-(f_c - f) / temp, -700.0)):
            x, f = candidate, f_c
    start = budget.best_x.copy()
    budget.limit = None  # the polish runs to its own tolerance
    polished = _nelder_mead_loop(budget, start, tol)
    return OptResult(
        argmin=budget.best_x,
        value=budget.best_f,
        evaluations=budget.used,
        converged=polished,
    )
