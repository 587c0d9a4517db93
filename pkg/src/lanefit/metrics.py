"""Evaluation metrics: point-wise lane accuracy against image-space ground
truth, pixel-area confusion metrics for the ego lane, lane-level true
positive rate, and curvature-series comparison.

Lane matching is greedy one-to-one by ascending mean point distance; the
scheme is fixed and documented rather than replicating any external
benchmark script byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image, ImageDraw

from .errors import FormatError
from .geometry import CameraModel, bev_to_image_arrays
from .lane_model import LaneSet, sample_lane


@dataclass(frozen=True)
class LaneGroundTruth:
    """Per-lane image-space polylines, each monotone in row."""

    lanes: tuple[np.ndarray, ...]  # (K, 2) arrays of (u, v)

    def __post_init__(self):
        lanes = []
        for poly in self.lanes:
            arr = np.asarray(poly, dtype=float).reshape(-1, 2)
            if arr.shape[0] >= 2 and np.any(np.diff(arr[:, 1]) <= 0):
                raise FormatError("ground-truth polyline rows must be increasing")
            lanes.append(arr)
        object.__setattr__(self, "lanes", tuple(lanes))

    @property
    def total_points(self) -> int:
        return sum(p.shape[0] for p in self.lanes)


def project_lane_polyline(offset: float, lane_set: LaneSet, camera: CameraModel,
                          y_range=(1.0, 60.0), step: float = 0.5) -> np.ndarray:
    """Image-space polyline of one lane of a LaneSet, rows ascending."""
    bev = sample_lane(offset, lane_set.shared, y_range, step)
    uv, valid = bev_to_image_arrays(camera, bev[:, 0], bev[:, 1],
                                    lane_set.slope.grade)
    uv = uv[valid]
    w, h = camera.image_size
    inside = (uv[:, 0] >= -w) & (uv[:, 0] <= 2 * w) & (uv[:, 1] >= 0) & (uv[:, 1] < h)
    uv = uv[inside]
    return uv[np.argsort(uv[:, 1], kind="stable")]


def ground_truth_from_lane_set(lane_set: LaneSet, camera: CameraModel,
                               rows, y_range=(1.0, 60.0),
                               step: float = 0.25) -> LaneGroundTruth:
    """Sample a true LaneSet at fixed image rows, the annotation style used
    for point-accuracy evaluation."""
    rows = np.asarray(rows, dtype=float)
    lanes = []
    for a0 in lane_set.offsets:
        poly = project_lane_polyline(a0, lane_set, camera, y_range, step)
        if poly.shape[0] < 2:
            continue
        pts = _sample_at_rows(poly, rows)
        if pts.shape[0] >= 2:
            lanes.append(pts)
    return LaneGroundTruth(lanes=tuple(lanes))


def _sample_at_rows(poly: np.ndarray, rows: np.ndarray) -> np.ndarray:
    """Interpolate a (u, v) polyline at the requested rows (within coverage)."""
    v = poly[:, 1]
    inside = (rows >= v.min()) & (rows <= v.max())
    r = rows[inside]
    u = np.interp(r, v, poly[:, 0])
    return np.stack([u, r], axis=1)


def _mean_row_distance(pred_poly: np.ndarray, gt_pts: np.ndarray):
    """Mean |du| between a predicted polyline and gt points at shared rows.

    Returns (mean, per-point |du| with inf where the prediction has no
    coverage)."""
    du = np.full(gt_pts.shape[0], np.inf)
    if pred_poly.shape[0] >= 2:
        v = pred_poly[:, 1]
        covered = (gt_pts[:, 1] >= v.min()) & (gt_pts[:, 1] <= v.max())
        if covered.any():
            u = np.interp(gt_pts[covered, 1], v, pred_poly[:, 0])
            du[covered] = np.abs(u - gt_pts[covered, 0])
    finite = np.isfinite(du)
    mean = float(du[finite].mean()) if finite.any() else np.inf
    return mean, du


def _greedy_match(cost: np.ndarray) -> list[tuple[int, int]]:
    """One-to-one matching by ascending cost; cost[i, j] = gt i vs pred j."""
    pairs = []
    used_g, used_p = set(), set()
    order = np.argsort(cost, axis=None, kind="stable")
    for flat in order:
        i, j = np.unravel_index(flat, cost.shape)
        if not np.isfinite(cost[i, j]):
            break
        if i in used_g or j in used_p:
            continue
        pairs.append((int(i), int(j)))
        used_g.add(int(i))
        used_p.add(int(j))
    return pairs


def point_accuracy(pred: LaneSet, gt: LaneGroundTruth, camera: CameraModel,
                   threshold_px: float = 20.0, y_range=(1.0, 60.0)) -> float:
    """Fraction of ground-truth sample points matched by a predicted lane
    within threshold_px after projection into the image."""
    total = gt.total_points
    if total == 0 or pred.lane_count == 0:
        return 0.0
    pred_polys = [project_lane_polyline(a0, pred, camera, y_range)
                  for a0 in pred.offsets]
    cost = np.full((len(gt.lanes), len(pred_polys)), np.inf)
    dus = {}
    for i, gt_pts in enumerate(gt.lanes):
        for j, poly in enumerate(pred_polys):
            cost[i, j], dus[i, j] = _mean_row_distance(poly, gt_pts)
    matched = 0
    for i, j in _greedy_match(cost):
        matched += int((dus[i, j] <= threshold_px).sum())
    return matched / total


@dataclass(frozen=True)
class PixelMetrics:
    f_score: float
    precision: float
    recall: float
    fpr: float


def pixel_f_measure(pred_mask: np.ndarray, gt_mask: np.ndarray) -> PixelMetrics:
    """Standard pixel-confusion metrics between two boolean area masks."""
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise FormatError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    tp = float(np.logical_and(pred, gt).sum())
    fp = float(np.logical_and(pred, ~gt).sum())
    fn = float(np.logical_and(~pred, gt).sum())
    tn = float(np.logical_and(~pred, ~gt).sum())
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn) if tp + fn > 0 else 0.0
    f_score = (2 * precision * recall / (precision + recall)
               if precision + recall > 0 else 0.0)
    fpr = fp / (fp + tn) if fp + tn > 0 else 0.0
    return PixelMetrics(f_score, precision, recall, fpr)


def ego_lane_mask(lane_set: LaneSet, camera: CameraModel,
                  y_range=(1.0, 60.0)) -> np.ndarray:
    """Boolean image mask of the ego lane: the area between the two offsets
    bracketing x = 0.  Fewer than two bracketing offsets yields an empty mask
    (the frame then scores zero recall)."""
    w, h = camera.image_size
    mask = np.zeros((h, w), dtype=bool)
    offsets = np.asarray(lane_set.offsets)
    left = offsets[offsets <= 0.0]
    right = offsets[offsets > 0.0]
    if left.size == 0 or right.size == 0:
        return mask
    lane_left, lane_right = float(left.max()), float(right.min())
    left_poly = project_lane_polyline(lane_left, lane_set, camera, y_range)
    right_poly = project_lane_polyline(lane_right, lane_set, camera, y_range)
    if left_poly.shape[0] < 2 or right_poly.shape[0] < 2:
        return mask
    polygon = np.vstack([left_poly, right_poly[::-1]])
    img = Image.new("1", (w, h), 0)
    ImageDraw.Draw(img).polygon([(float(u), float(v)) for u, v in polygon],
                                fill=1)
    return np.asarray(img, dtype=bool)


def true_positive_rate(pred_lanes, gt_lanes, threshold_px: float = 20.0) -> float:
    """Fraction of ground-truth lanes matched one-to-one by a prediction with
    mean point distance at most threshold_px."""
    gt_polys = [np.asarray(p, dtype=float).reshape(-1, 2) for p in gt_lanes]
    pred_polys = [np.asarray(p, dtype=float).reshape(-1, 2) for p in pred_lanes]
    if not gt_polys:
        return 0.0
    if not pred_polys:
        return 0.0
    cost = np.full((len(gt_polys), len(pred_polys)), np.inf)
    for i, gt_pts in enumerate(gt_polys):
        for j, poly in enumerate(pred_polys):
            cost[i, j], _ = _mean_row_distance(poly, gt_pts)
    matched = sum(1 for i, j in _greedy_match(cost)
                  if cost[i, j] <= threshold_px)
    return matched / len(gt_polys)


def curvature_series_rmse(pred_seq, ref_seq) -> float:
    """Root-mean-square difference of two aligned curvature sequences."""
    a = np.asarray(pred_seq, dtype=float).reshape(-1)
    b = np.asarray(ref_seq, dtype=float).reshape(-1)
    if a.size != b.size:
        raise FormatError(f"sequence lengths differ: {a.size} vs {b.size}")
    if a.size == 0:
        return 0.0
    return float(np.sqrt(np.mean((a - b) ** 2)))
