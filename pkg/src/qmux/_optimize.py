"""Bracketing 1-D searches used by the rate-at-fidelity optimizers."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .core import InfeasibleError

log = logging.getLogger(__name__)

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_max(f, lo: float, hi: float, tol: float = 1e-10, max_iter: int = 500):
    """Maximize a unimodal ``f`` on [lo, hi]; returns (x, f(x))."""
    a, b = lo, hi
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) <= tol * max(1.0, abs(a) + abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - INVPHI * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + INVPHI * (b - a)
            fd = f(d)
    candidates = [(fc, c), (fd, d), (f(a), a), (f(b), b)]
    fx, x = max(candidates)
    return x, fx


def bisect_boundary(ok, good: float, bad: float, tol: float = 1e-10, max_iter: int = 400) -> float:
    """Shrink [good, bad] around the point where ``ok`` flips; returns the last good x."""
    for _ in range(max_iter):
        if abs(bad - good) <= tol * max(1.0, abs(good)):
            break
        mid = 0.5 * (good + bad)
        if ok(mid):
            good = mid
        else:
            bad = mid
    return good


@dataclass(frozen=True)
class ConstrainedMax:
    x: float
    objective: float
    constraint_value: float
    at_boundary: bool
    monotone_constraint: bool


def maximize_with_floor(
    objective,
    constraint,
    floor: float,
    lo: float,
    hi: float,
    n_grid: int = 241,
    tol: float = 1e-10,
    name: str = "parameter",
) -> ConstrainedMax:
    """Maximize ``objective(x)`` on (lo, hi] subject to ``constraint(x) >= floor``.

    A log-spaced scan locates the best feasible grid point; the optimum is
    then refined either by bisection on the constraint boundary or by a
    golden-section search between the neighbouring grid points.
    """
    xs = np.geomspace(lo, hi, n_grid)
    cons = np.array([constraint(x) for x in xs])
    objs = np.array([objective(x) for x in xs])
    feasible = cons >= floor
    monotone = bool(np.all(np.diff(cons) <= 1e-15 * np.abs(cons[1:]) + 1e-300))
    if not monotone:
        log.info("constraint is not monotone in %s over [%g, %g]", name, lo, hi)
    if not feasible.any():
        raise InfeasibleError(
            f"no {name} in [{lo:g}, {hi:g}] reaches the floor {floor!r}; best value "
            f"{cons.max():.12g}",
            constraint=f"{name}: constraint >= {floor!r}",
        )
    idx = int(np.argmax(np.where(feasible, objs, -np.inf)))
    left = xs[idx - 1] if idx > 0 else lo
    right_feasible = idx + 1 < n_grid and feasible[idx + 1]
    if idx + 1 < n_grid and not right_feasible and objs[idx + 1] >= objs[idx]:
        # objective still rising where the constraint cuts in
        x = bisect_boundary(lambda t: constraint(t) >= floor, xs[idx], xs[idx + 1], tol)
        return ConstrainedMax(x, objective(x), constraint(x), True, monotone)
    right = xs[idx + 1] if idx + 1 < n_grid else xs[idx]
    if idx > 0 and not feasible[idx - 1]:
        left = xs[idx]

    def penalized(t):
        return objective(t) if constraint(t) >= floor else -np.inf

    x, fx = golden_max(penalized, left, right, tol)
    if not math.isfinite(fx):
        x = float(xs[idx])
        fx = objective(x)
    return ConstrainedMax(x, fx, constraint(x), False, monotone)
