"""Derivative-free minimization of the frame cost over (offset, heading,
curvature, grade).

The entropy term has no usable gradient, so a Nelder-Mead simplex with the
standard reflection/expansion/contraction/shrink coefficients (1, 2, 0.5, 0.5)
is used.  The simplex operates in scaled coordinates (each variable divided by
its initial step) so the four heterogeneous units are comparable.  Box bounds
are enforced softly: out-of-box points are evaluated at their clamped position
plus a quadratic barrier on the excess, which keeps the simplex geometry
intact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cost import CostConfig, frame_cost
from .errors import InitializationError, OptimizationError
from .lane_model import FramePoints, LaneHypothesis, LaneSet

DEFAULT_BOUNDS = ((-6.0, 6.0), (-1.0, 1.0), (-0.05, 0.05), (-0.15, 0.15))


@dataclass(frozen=True)
class OptimizerConfig:
    initial_steps: tuple[float, ...] = (0.5, 0.02, 0.002, 0.02)
    cost_tol: float = 1e-6          # spread of simplex costs
    simplex_tol: float = 1e-4       # simplex diameter in scaled coordinates
    max_iterations: int = 500
    scan_points: int = 41           # grid resolution per variable for scan init
    bounds: tuple[tuple[float, float], ...] = DEFAULT_BOUNDS
    barrier_weight: float = 1e3
    restart_jitter: float = 0.1     # fraction of the initial steps
    jitter_seed: int = 916
    optimize_slope: bool = True     # when False, the grade is pinned at 0

    def __post_init__(self):
        if any(s <= 0 for s in self.initial_steps):
            raise ValueError("initial steps must be positive")
        if self.cost_tol <= 0 or self.simplex_tol <= 0 or self.max_iterations <= 0:
            raise ValueError("tolerances and max_iterations must be positive")
        if self.scan_points < 2:
            raise ValueError("scan grid needs at least 2 points")


@dataclass
class OptResult:
    best: LaneHypothesis
    best_cost: float
    iterations: int
    converged: bool
    trajectory: list[float] = field(default_factory=list)


def _penalized(objective, x, lo, hi, steps, barrier_weight):
    clamped = np.clip(x, lo, hi)
    value = objective(LaneHypothesis.from_array(clamped))
    if np.isnan(value):
        raise OptimizationError(
            f"objective returned NaN at hypothesis {clamped.tolist()}")
    excess = (x - clamped) / steps
    return float(value) + barrier_weight * float((excess * excess).sum())


def _simplex_run(f, z0, max_iterations, cost_tol, simplex_tol, trajectory):
    """One Nelder-Mead run in scaled coordinates; returns (z, fz, iters, conv)."""
    n = z0.size
    verts = [z0.copy()] + [z0 + np.eye(n)[i] for i in range(n)]
    vals = [f(v) for v in verts]
    iterations = 0
    converged = False

    for _ in range(max_iterations):
        order = np.argsort(vals, kind="stable")
        verts = [verts[i] for i in order]
        vals = [vals[i] for i in order]
        iterations += 1
        best = vals[0] if not trajectory else min(trajectory[-1], vals[0])
        trajectory.append(best)

        diameter = max(np.max(np.abs(v - verts[0])) for v in verts[1:])
        if vals[-1] - vals[0] <= cost_tol or diameter <= simplex_tol:
            converged = True
            break

        centroid = np.mean(verts[:-1], axis=0)
        worst, f_worst = verts[-1], vals[-1]
        reflected = centroid + (centroid - worst)
        f_reflected = f(reflected)

        if f_reflected < vals[0]:
            expanded = centroid + 2.0 * (centroid - worst)
            f_expanded = f(expanded)
            if f_expanded < f_reflected:
                verts[-1], vals[-1] = expanded, f_expanded
            else:
                verts[-1], vals[-1] = reflected, f_reflected
        elif f_reflected < vals[-2]:
            verts[-1], vals[-1] = reflected, f_reflected
        else:
            if f_reflected < f_worst:
                contracted = centroid + 0.5 * (reflected - centroid)
                f_contracted = f(contracted)
                accept = f_contracted <= f_reflected
            else:
                contracted = centroid - 0.5 * (centroid - worst)
                f_contracted = f(contracted)
                accept = f_contracted < f_worst
            if accept:
                verts[-1], vals[-1] = contracted, f_contracted
            else:
                for i in range(1, n + 1):
                    verts[i] = verts[0] + 0.5 * (verts[i] - verts[0])
                    vals[i] = f(verts[i])

    i_best = int(np.argmin(vals))
    return verts[i_best], vals[i_best], iterations, converged


def nelder_mead(objective: Callable[[LaneHypothesis], float],
                init: LaneHypothesis, cfg: OptimizerConfig) -> OptResult:
    """Minimize `objective` starting from `init`.

    When cfg.optimize_slope is False the grade stays fixed at the initial
    value.  The binned entropy term makes the surface locally flat at fine
    scales, so the simplex tends to collapse a little early; if iteration
    budget remains after the first run, one restart is made from the best
    point with a fresh full-size simplex (deterministically jittered by
    restart_jitter x the initial steps) and the better result kept.  The
    budget max_iterations is shared across both runs.
    """
    x0 = init.as_array()
    steps = np.asarray(cfg.initial_steps, dtype=float)
    lo = np.array([b[0] for b in cfg.bounds])
    hi = np.array([b[1] for b in cfg.bounds])
    free = np.ones(4, dtype=bool)
    if not cfg.optimize_slope:
        free[3] = False

    def f_scaled(z):
        x = x0.copy()
        x[free] = z * steps[free]
        return _penalized(objective, x, lo, hi, steps, cfg.barrier_weight)

    trajectory: list[float] = []
    z0 = x0[free] / steps[free]
    z_best, f_best, iters, converged = _simplex_run(
        f_scaled, z0, cfg.max_iterations, cfg.cost_tol, cfg.simplex_tol,
        trajectory)

    rng = np.random.default_rng(cfg.jitter_seed)
    while iters < cfg.max_iterations:
        z_jit = z_best + cfg.restart_jitter * rng.standard_normal(z_best.size)
        z2, f2, it2, conv2 = _simplex_run(
            f_scaled, z_jit, cfg.max_iterations - iters, cfg.cost_tol,
            cfg.simplex_tol, trajectory)
        iters += it2
        improved = f2 < f_best - cfg.cost_tol
        if f2 < f_best:
            z_best, f_best, converged = z2, f2, conv2
        if not improved:
            break

    x_best = x0.copy()
    x_best[free] = z_best * steps[free]
    x_best = np.clip(x_best, lo, hi)
    return OptResult(best=LaneHypothesis.from_array(x_best),
                     best_cost=float(f_best), iterations=iters,
                     converged=converged, trajectory=trajectory)


def init_by_scan(frame: FramePoints, cfg: OptimizerConfig,
                 cost_cfg: CostConfig) -> LaneHypothesis:
    """Initial hypothesis from cascaded 1-D grid sweeps of the loss.

    Offset, heading, curvature, and grade are swept across their boxes on
    the scan grid in that order, each conditioned on the argmins found so
    far (independent zero-conditioned sweeps make each variable absorb the
    terms of the others twice over, and the grade's zero-conditioned curve
    degenerates toward the compression corner of its box).  The cascade is
    repeated once with the conditioning in place.  Heading and curvature
    trade off along a near-degenerate valley that 1-D sweeps cannot track,
    so a local joint grid over the two follows, and a final zoomed pass
    re-sweeps each variable in a +/- 2-cell window for sub-cell resolution.
    Raises InitializationError for an empty frame or when every sweep point
    costs the degenerate sentinel.
    """
    if frame.is_empty:
        raise InitializationError("frame has no road or lane points")
    result = np.zeros(4)
    overall_min = np.inf
    n_vars = 4 if cfg.optimize_slope else 3

    def cost_at(x):
        return frame_cost(frame, LaneHypothesis.from_array(x), cost_cfg)

    def sweep(i, lo, hi):
        nonlocal overall_min
        grid = np.linspace(lo, hi, cfg.scan_points)
        costs = np.empty(grid.size)
        for k, g in enumerate(grid):
            x = result.copy()
            x[i] = g
            costs[k] = cost_at(x)
        overall_min = min(overall_min, float(costs.min()))
        return float(grid[int(np.argmin(costs))])

    def cell(i):
        return (cfg.bounds[i][1] - cfg.bounds[i][0]) / (cfg.scan_points - 1)

    def window(i, half_cells):
        w = half_cells * cell(i)
        return (max(cfg.bounds[i][0], result[i] - w),
                min(cfg.bounds[i][1], result[i] + w))

    for _ in range(2):
        for i in range(n_vars):
            result[i] = sweep(i, cfg.bounds[i][0], cfg.bounds[i][1])

    g1 = np.linspace(*window(1, 2), 17)
    g2 = np.linspace(*window(2, 2), 17)
    best = (np.inf, result[1], result[2])
    for v1 in g1:
        for v2 in g2:
            x = result.copy()
            x[1], x[2] = v1, v2
            c = cost_at(x)
            if c < best[0]:
                best = (c, v1, v2)
    overall_min = min(overall_min, best[0])
    result[1], result[2] = best[1], best[2]

    for i in range(n_vars):
        result[i] = sweep(i, *window(i, 2))
    if overall_min >= cost_cfg.degenerate_cost:
        raise InitializationError("every scanned hypothesis is degenerate")
    return LaneHypothesis.from_array(result)


def init_from_previous(prev: LaneSet) -> LaneHypothesis:
    """Reuse the previous frame's optimum as the initial guess."""
    return LaneHypothesis(prev.central_offset, prev.shared.heading,
                          prev.shared.curvature, prev.slope.grade)
