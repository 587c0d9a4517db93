"""Physics-based objective for joint lane/slope parameter estimation.

Two terms are combined:

  road fit:  every road-area point pulls the virtual central line toward it
             through a Gaussian kernel,
                 J_road = -sum_i exp(-((x_i - f(c, y_i)) / sigma_d)^2)

  lane fit:  residual offsets of lane-marking points against the zero-offset
             shared polynomial are histogrammed; a correct hypothesis gives a
             few sharp clusters (low entropy), a wrong one smears them.  A
             coverage penalty total/in_range punishes hypotheses that throw
             residuals outside the histogram range,
                 J_lane = entropy(hist) + kappa * total / in_range

  combined:  J = road_weight * J_road + J_lane

The slope grade is part of the hypothesis, so points are stored flat-BEV and
slope-corrected here, per evaluation.

Scale correction: the grade hypothesis rescales the corrected lateral axis
point-wise by s_i = h / (h + y_flat_i * grade); without compensation a
compressing grade shrinks every residual and cluster, lowering both terms for
free, and the global minimum moves to the compression corner of the grade box
regardless of the true geometry.  Dispersion is therefore measured in the
data's native lateral scale: the road kernel width becomes sigma_d * s_i per
point, and the entropy gets the change-of-variables term -mean(log s_i).
Both corrections vanish at grade 0, where the cost is exactly the plain
formula above.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import slope_correct_arrays
from .lane_model import FramePoints, LaneHypothesis, SharedParams, eval_lane


@dataclass(frozen=True)
class CostConfig:
    sigma_d: float = 3.0          # meters; road-kernel width
    kappa: float = 2.0            # coverage-penalty constant
    road_weight: float = 0.001    # weight of the road term in the combined cost
    bin_width: float = 0.1        # meters; twice the design point noise
    hist_min: float = -12.0
    hist_max: float = 12.0
    degenerate_cost: float = 1e6  # sentinel so the simplex can still rank hypotheses

    def __post_init__(self):
        if self.sigma_d <= 0 or self.kappa < 0 or self.road_weight < 0:
            raise ValueError("sigma_d must be > 0; kappa and road_weight >= 0")
        if self.bin_width <= 0 or self.hist_max <= self.hist_min:
            raise ValueError("histogram range must be non-empty with positive bins")

    @property
    def n_bins(self) -> int:
        return int(round((self.hist_max - self.hist_min) / self.bin_width))


@dataclass(frozen=True)
class OffsetHistogram:
    """Binned residual-offset distribution with entropy and coverage counts."""

    bin_edges: np.ndarray
    counts: np.ndarray
    total: int      # all residuals, including out-of-range
    in_range: int   # residuals that landed in a bin
    entropy: float  # nats, over normalized in-range counts

    @property
    def bin_centers(self) -> np.ndarray:
        return 0.5 * (self.bin_edges[:-1] + self.bin_edges[1:])


def _entropy_nats(counts: np.ndarray) -> float:
    n = counts.sum()
    if n == 0:
        return 0.0
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def offset_histogram(residuals, cfg: CostConfig) -> OffsetHistogram:
    """Fixed-width histogram over [hist_min, hist_max); out-of-range residuals
    are excluded from the bins but still counted in `total`."""
    res = np.asarray(residuals, dtype=float).reshape(-1)
    n_bins = cfg.n_bins
    edges = cfg.hist_min + cfg.bin_width * np.arange(n_bins + 1)
    idx = np.floor((res - cfg.hist_min) / cfg.bin_width).astype(np.int64)
    ok = (idx >= 0) & (idx < n_bins) & np.isfinite(res)
    counts = np.bincount(idx[ok], minlength=n_bins)
    return OffsetHistogram(bin_edges=edges, counts=counts, total=res.size,
                           in_range=int(ok.sum()), entropy=_entropy_nats(counts))


def _road_term(x, y, central_offset, shared, cfg, scale):
    if x.size == 0:
        return 0.0
    res = x - (central_offset + shared.heading * y + shared.curvature * y * y)
    sigma = cfg.sigma_d if scale is None else cfg.sigma_d * scale
    r = res / sigma
    return float(-np.exp(-(r * r)).sum())


def _lane_term(x, y, shared, cfg, scale):
    if x.size == 0:
        return 0.0
    res = x - (shared.heading * y + shared.curvature * y * y)
    # Two histogram phases, half a bin apart: binning makes the entropy
    # piecewise constant with plateaus at the recovery-tolerance scale;
    # averaging the shifted phase halves the plateau without narrowing the
    # bins the peak finder sees.  Both phases come from one half-width
    # bincount: phase bins are sums of adjacent half-bins.
    n = cfg.n_bins
    idx = np.floor((res - cfg.hist_min) * (2.0 / cfg.bin_width)).astype(np.int64)
    ok = (idx >= 0) & (idx < 2 * n)
    in_range = int(ok.sum())
    if in_range == 0:
        return cfg.degenerate_cost
    half = np.bincount(idx[ok], minlength=2 * n + 1)
    h0 = _entropy_nats(half[0:2 * n:2] + half[1:2 * n:2])
    h1 = _entropy_nats(half[1:2 * n:2] + half[2:2 * n + 1:2])
    entropy = 0.5 * (h0 + h1)
    if scale is not None:
        entropy -= float(np.mean(np.log(scale)))
    return entropy + cfg.kappa * res.size / in_range


def road_fit_cost(road_xy, central_offset: float, shared: SharedParams,
                  cfg: CostConfig, scale=None) -> float:
    """Gaussian-kernel distance of road points to the central line; empty -> 0.

    `scale`, when given, is the per-point lateral scale factor of the slope
    correction; the kernel width follows it so that the term measures the
    distance in the data's native scale.
    """
    pts = np.asarray(road_xy, dtype=float).reshape(-1, 2)
    return _road_term(pts[:, 0], pts[:, 1], central_offset, shared, cfg, scale)


def lane_entropy_cost(lane_xy, shared: SharedParams, cfg: CostConfig,
                      scale=None) -> float:
    """Histogram entropy plus coverage penalty of lane-point residuals.

    Empty input costs 0 (the road term alone still constrains the fit);
    no in-range residuals costs the degenerate sentinel.  `scale` carries the
    per-point lateral scale factor of the slope correction; the entropy gets
    the change-of-variables term -mean(log scale) so that a compressing grade
    cannot lower it for free.
    """
    pts = np.asarray(lane_xy, dtype=float).reshape(-1, 2)
    return _lane_term(pts[:, 0], pts[:, 1], shared, cfg, scale)


def _lateral_scale(y_corrected, grade: float, h: float):
    """Per-point lateral scale factor of the slope correction, x' / x_flat."""
    return (h - grade * y_corrected) / h


def frame_cost(frame: FramePoints, hyp: LaneHypothesis, cfg: CostConfig) -> float:
    """Combined cost of a hypothesis on one frame.

    Points are slope-corrected with the hypothesis grade first; a correction
    that pushes any point past the slope horizon yields the sentinel cost.
    """
    h = frame.camera_height
    shared = hyp.shared
    grade = hyp.grade

    road = frame.road_xy
    road_scale = None
    rx, ry = road[:, 0], road[:, 1]
    if road.shape[0] and grade != 0.0:
        rx, ry, ok = slope_correct_arrays(rx, ry, grade, h)
        if not ok.all():
            return cfg.degenerate_cost
        road_scale = _lateral_scale(ry, grade, h)

    lane = frame.lane_xy
    lane_scale = None
    lx, ly = lane[:, 0], lane[:, 1]
    if lane.shape[0] and grade != 0.0:
        lx, ly, ok = slope_correct_arrays(lx, ly, grade, h)
        if not ok.all():
            return cfg.degenerate_cost
        lane_scale = _lateral_scale(ly, grade, h)

    j_road = _road_term(rx, ry, hyp.central_offset, shared, cfg, road_scale)
    j_lane = _lane_term(lx, ly, shared, cfg, lane_scale)
    return cfg.road_weight * j_road + j_lane
