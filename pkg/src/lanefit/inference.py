"""Per-frame lane inference: optimize shared parameters, extract per-lane
offsets from histogram peaks, assign points to lanes, and classify lane
attributes.  Sequential state (previous optimum, failure count) is carried by
a TrackerState so consecutive frames can reuse the last solution as the
initial guess.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Sequence

import numpy as np

from .cost import CostConfig, OffsetHistogram, frame_cost, offset_histogram
from .errors import InitializationError
from .geometry import SlopeModel, slope_correct_arrays
from .lane_model import (FramePoints, LaneAttributes, LaneHypothesis, LaneSet,
                         SharedParams, empty_lane_set, residual_offsets)
from .optimizer import (OptimizerConfig, OptResult, init_by_scan,
                        init_from_previous, nelder_mead)


@dataclass(frozen=True)
class PeakConfig:
    min_separation: float = 2.5        # meters, minimum real-world lane width
    min_prominence_floor: float = 20.0  # points
    min_prominence_frac: float = 0.02   # of the total lane-point count

    def __post_init__(self):
        if self.min_separation <= 0 or self.min_prominence_floor <= 0:
            raise ValueError("peak thresholds must be positive")

    def min_prominence(self, total_points: int) -> float:
        return max(self.min_prominence_floor,
                   self.min_prominence_frac * total_points)


@dataclass
class TrackerState:
    """Sequential state across frames of one stream."""

    previous: Optional[LaneSet] = None
    frame_count: int = 0
    failures: int = 0
    max_failures: int = 3
    last_init_mode: Optional[str] = None


@dataclass(frozen=True)
class PipelineConfig:
    cost: CostConfig = field(default_factory=CostConfig)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    peaks: PeakConfig = field(default_factory=PeakConfig)
    assign_gate: float = 0.5
    sequential: bool = True
    expected_lanes: Optional[int] = None
    tag_colors: Mapping[int, str] = field(default_factory=dict)
    initial_hint: Optional[LaneHypothesis] = None
    # Refinement stage: the binned entropy carries near-degenerate alias
    # minima displaced by about bin_width / mean(y) in heading; a second
    # minimization at finer bins separates them reliably.
    refine_bin_factor: float = 0.5
    refine_steps_factor: float = 0.25
    refine_budget: int = 300


def _local_maxima(counts: np.ndarray) -> list[int]:
    """Indices of local maxima; a plateau yields its midpoint.  Runs touching
    the array boundary are not peaks."""
    n = counts.size
    maxima = []
    i = 1
    while i < n - 1:
        if counts[i] > counts[i - 1]:
            j = i
            while j + 1 < n and counts[j + 1] == counts[i]:
                j += 1
            if j + 1 < n and counts[j + 1] < counts[i]:
                maxima.append((i + j) // 2)
            i = j + 1
        else:
            i += 1
    return maxima


def _prominence(counts: np.ndarray, peak: int) -> float:
    """Height of a peak above the higher of its two flanking minima.

    Each flank extends to the nearest strictly higher sample or the boundary.
    """
    height = counts[peak]
    left_min = height
    i = peak - 1
    while i >= 0 and counts[i] <= height:
        left_min = min(left_min, counts[i])
        i -= 1
    right_min = height
    i = peak + 1
    while i < counts.size and counts[i] <= height:
        right_min = min(right_min, counts[i])
        i += 1
    return float(height - max(left_min, right_min))


def _refine(counts: np.ndarray, peak: int, centers: np.ndarray,
            bin_width: float) -> float:
    """Sub-bin peak position by fitting a parabola through three bins."""
    if peak == 0 or peak == counts.size - 1:
        return float(centers[peak])
    c_l, c_m, c_r = float(counts[peak - 1]), float(counts[peak]), float(counts[peak + 1])
    denom = c_l - 2.0 * c_m + c_r
    if denom >= 0.0:
        return float(centers[peak])
    delta = 0.5 * (c_l - c_r) / denom
    delta = float(np.clip(delta, -0.5, 0.5))
    return float(centers[peak] + delta * bin_width)


def find_offset_peaks(hist: OffsetHistogram, cfg: PeakConfig,
                      expected_n: Optional[int] = None) -> list[float]:
    """Per-lane offsets from the residual histogram.

    Local maxima closer than min_separation are resolved in favor of the
    higher-prominence peak; survivors below the minimum prominence are
    discarded.  Returned offsets are parabola-refined bin centers, ascending,
    and always pairwise at least min_separation apart.  When expected_n is
    given, only the expected_n most prominent peaks are kept.
    """
    counts = hist.counts.astype(float)
    centers = hist.bin_centers
    bin_width = float(hist.bin_edges[1] - hist.bin_edges[0])
    candidates = _local_maxima(counts)
    if not candidates:
        return []

    proms = {i: _prominence(counts, i) for i in candidates}
    refined = {i: _refine(counts, i, centers, bin_width) for i in candidates}

    kept: list[int] = []
    for i in sorted(candidates, key=lambda i: (-proms[i], i)):
        if all(abs(refined[i] - refined[j]) >= cfg.min_separation for j in kept):
            kept.append(i)

    threshold = cfg.min_prominence(hist.total)
    kept = [i for i in kept if proms[i] >= threshold]

    if expected_n is not None and len(kept) > expected_n:
        kept = sorted(kept, key=lambda i: (-proms[i], i))[:expected_n]

    return sorted(refined[i] for i in kept)


def assign_points_to_lanes(residuals, offsets: Sequence[float],
                           gate: float = 0.5):
    """Group point indices by the nearest offset within `gate` meters.

    Equidistant points join the leftmost (lower-index) lane.  Returns
    (groups, outliers) as index arrays into `residuals`.
    """
    res = np.asarray(residuals, dtype=float).reshape(-1)
    if len(offsets) == 0 or res.size == 0:
        return [np.zeros(0, dtype=np.int64) for _ in offsets], \
            np.arange(res.size, dtype=np.int64)
    dist = np.abs(res[:, None] - np.asarray(offsets)[None, :])
    nearest = np.argmin(dist, axis=1)
    in_gate = dist[np.arange(res.size), nearest] <= gate
    groups = [np.nonzero(in_gate & (nearest == k))[0] for k in range(len(offsets))]
    return groups, np.nonzero(~in_gate)[0]


def classify_lane(y_values, tags, tag_colors: Mapping[int, str],
                  min_points: int = 10, bucket: float = 1.0,
                  min_gap: float = 3.0, min_gap_count: int = 2,
                  style_y_max: float = 35.0,
                  occupancy_frac: float = 0.3) -> LaneAttributes:
    """Color and style of one lane from its assigned points.

    Color is the majority color tag.  Style: the points are bucketed along y
    at `bucket` resolution; at least `min_gap_count` interior gaps of at
    least `min_gap` meters mean dashed, otherwise solid.  Sparse far-range
    buckets are ignored by capping the span at style_y_max and requiring a
    bucket to hold a noise-robust minimum count before it counts as occupied.
    """
    y = np.asarray(y_values, dtype=float).reshape(-1)
    tags = np.asarray(tags).reshape(-1)
    if y.size < min_points:
        return LaneAttributes("unknown", "unknown")

    votes: dict[str, int] = {}
    for t in tags:
        c = tag_colors.get(int(t))
        if c in ("white", "yellow"):
            votes[c] = votes.get(c, 0) + 1
    color = max(votes, key=votes.get) if votes else "unknown"

    y_style = y[y <= style_y_max]
    if y_style.size < min_points:
        y_style = y
    idx = np.floor((y_style - y_style.min()) / bucket).astype(np.int64)
    counts = np.bincount(idx)
    occupied_counts = counts[counts > 0]
    threshold = max(1.0, occupancy_frac * float(np.median(occupied_counts)))
    occupied = np.nonzero(counts >= threshold)[0]
    if occupied.size < 2:
        return LaneAttributes(color, "solid")
    gaps = np.diff(occupied) - 1  # empty buckets between occupied ones
    n_gaps = int((gaps >= min_gap / bucket).sum())
    style = "dashed" if n_gaps >= min_gap_count else "solid"
    return LaneAttributes(color, style)


def classify_attributes(groups_y, groups_tags, tag_colors: Mapping[int, str],
                        **kwargs) -> tuple[LaneAttributes, ...]:
    return tuple(classify_lane(y, t, tag_colors, **kwargs)
                 for y, t in zip(groups_y, groups_tags))


def infer_lanes(frame: FramePoints, config: PipelineConfig,
                tracker: TrackerState) -> LaneSet:
    """Run the full per-frame pipeline and update the tracker.

    Initial guess comes from the previous frame when sequential mode is on
    and the last result was usable, otherwise from the grid scan (or the
    externally supplied hint, when set).  An empty frame yields an empty
    LaneSet with zero confidence instead of raising.
    """
    slope_on = config.optimizer.optimize_slope
    try:
        init, mode = _choose_init(frame, config, tracker)
    except InitializationError:
        return _finish(tracker, empty_lane_set(), mode="none")
    tracker.last_init_mode = mode

    result = _optimize_two_stage(frame, config, init, tournament=mode != "previous")
    hyp = result.best
    shared = hyp.shared
    grade = hyp.grade if slope_on else 0.0

    lane = frame.lane_xy
    if lane.shape[0]:
        lx, ly, ok = slope_correct_arrays(lane[:, 0], lane[:, 1], grade,
                                          frame.camera_height)
        lx, ly = lx[ok], ly[ok]
        tags = frame.lane_tags[ok]
        res = residual_offsets(np.stack([lx, ly], axis=1), shared)
    else:
        ly = np.zeros(0)
        tags = frame.lane_tags
        res = np.zeros(0)

    hist = offset_histogram(res, config.cost)
    offsets = find_offset_peaks(hist, config.peaks, config.expected_lanes)
    groups, _ = assign_points_to_lanes(res, offsets, config.assign_gate)
    attributes = classify_attributes([ly[g] for g in groups],
                                     [tags[g] for g in groups],
                                     config.tag_colors)

    if hist.total == 0:
        confidence = 0.0
    else:
        confidence = hist.in_range / hist.total * (1.0 if result.converged else 0.5)

    lane_set = LaneSet(shared=shared, slope=SlopeModel(grade),
                       offsets=tuple(offsets), central_offset=hyp.central_offset,
                       attributes=attributes, confidence=confidence)
    return _finish(tracker, lane_set, mode)


def _choose_init(frame: FramePoints, config: PipelineConfig,
                 tracker: TrackerState):
    if (config.sequential and tracker.previous is not None
            and tracker.previous.confidence > 0.0):
        return init_from_previous(tracker.previous), "previous"
    if config.initial_hint is not None:
        return config.initial_hint, "hint"
    return init_by_scan(frame, config.optimizer, config.cost), "scan"


def _optimize_two_stage(frame: FramePoints, config: PipelineConfig,
                        init: LaneHypothesis, tournament: bool) -> OptResult:
    """Coarse minimization followed by a fine-binned polish.

    At acquisition (scan or hint init) the polish also starts from the two
    alias candidates shifted along the heading/curvature trade-off valley
    and keeps the lowest fine cost; when tracking from the previous frame
    the basin is already settled and a single polish suffices.  The reported
    best cost and trajectory stay at the configured bin width.
    """
    coarse = nelder_mead(lambda h: frame_cost(frame, h, config.cost),
                         init, config.optimizer)
    fine_cost = replace(config.cost,
                        bin_width=config.cost.bin_width * config.refine_bin_factor)
    fine_opt = replace(
        config.optimizer,
        initial_steps=tuple(s * config.refine_steps_factor
                            for s in config.optimizer.initial_steps),
        max_iterations=config.refine_budget)

    starts = [coarse.best]
    if tournament:
        starts.extend(_alias_candidates(frame, config, coarse.best))

    best: Optional[OptResult] = None
    iterations = coarse.iterations
    for start in starts:
        r = nelder_mead(lambda h: frame_cost(frame, h, fine_cost),
                        start, fine_opt)
        iterations += r.iterations
        if best is None or r.best_cost < best.best_cost:
            best = r
    final_cost = frame_cost(frame, best.best, config.cost)
    trajectory = coarse.trajectory + [min(coarse.best_cost, final_cost)]
    return OptResult(best=best.best, best_cost=final_cost,
                     iterations=iterations,
                     converged=coarse.converged and best.converged,
                     trajectory=trajectory)


def _alias_candidates(frame: FramePoints, config: PipelineConfig,
                      center: LaneHypothesis) -> list[LaneHypothesis]:
    lane = frame.lane_xy
    if lane.shape[0] < 10:
        return []
    _, ly, ok = slope_correct_arrays(lane[:, 0], lane[:, 1], center.grade,
                                     frame.camera_height)
    y = ly[ok]
    if y.size < 10 or np.mean(y) <= 1.0:
        return []
    step = config.cost.bin_width / float(np.mean(y))
    ratio = -float(np.mean(y ** 3) / np.mean(y ** 4))
    out = []
    for s in (step, -step):
        out.append(LaneHypothesis(center.central_offset,
                                  center.heading + s,
                                  center.curvature + s * ratio,
                                  center.grade))
    return out


def _finish(tracker: TrackerState, lane_set: LaneSet, mode: str) -> LaneSet:
    tracker.frame_count += 1
    tracker.last_init_mode = mode
    if lane_set.confidence > 0.0:
        tracker.previous = lane_set
        tracker.failures = 0
    else:
        tracker.failures += 1
        if tracker.failures >= tracker.max_failures:
            tracker.previous = None
    return lane_set


def optimize_frame(frame: FramePoints, config: PipelineConfig,
                   init: LaneHypothesis) -> OptResult:
    """Expose the bare optimization step (used by diagnostics and tests)."""
    return nelder_mead(lambda h: frame_cost(frame, h, config.cost),
                       init, config.optimizer)
