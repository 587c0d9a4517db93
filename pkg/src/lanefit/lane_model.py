"""Polynomial lane representation and residual-offset computation.

Every lane line in a frame is modeled as x = offset + heading*y + curvature*y^2
with the heading and curvature coefficients shared across lanes and only the
lateral offset unique per lane.  Parameters live in meters-based vehicle
coordinates: heading is dimensionless, curvature has units 1/m.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import SlopeModel

MIN_LANE_SEPARATION = 2.5  # meters, minimum real-world lane width

LANE_COLORS = ("white", "yellow", "unknown")
LANE_STYLES = ("solid", "dashed", "unknown")


@dataclass(frozen=True)
class SharedParams:
    """Coefficients common to all lane lines in a frame."""

    heading: float
    curvature: float


@dataclass(frozen=True)
class LaneHypothesis:
    """Decision vector of the per-frame optimization."""

    central_offset: float
    heading: float
    curvature: float
    grade: float

    def as_array(self) -> np.ndarray:
        return np.array([self.central_offset, self.heading, self.curvature,
                         self.grade])

    @staticmethod
    def from_array(x) -> "LaneHypothesis":
        return LaneHypothesis(float(x[0]), float(x[1]), float(x[2]), float(x[3]))

    @property
    def shared(self) -> SharedParams:
        return SharedParams(self.heading, self.curvature)


@dataclass(frozen=True)
class LaneAttributes:
    color: str = "unknown"
    style: str = "unknown"

    def __post_init__(self):
        if self.color not in LANE_COLORS:
            raise ValueError(f"unknown lane color {self.color!r}")
        if self.style not in LANE_STYLES:
            raise ValueError(f"unknown lane style {self.style!r}")


@dataclass(frozen=True)
class LaneSet:
    """Final per-frame output: shared geometry plus per-lane offsets/attributes."""

    shared: SharedParams
    slope: SlopeModel
    offsets: tuple[float, ...]
    central_offset: float
    attributes: tuple[LaneAttributes, ...]
    confidence: float

    def __post_init__(self):
        off = tuple(float(o) for o in self.offsets)
        if any(b <= a for a, b in zip(off, off[1:])):
            raise ValueError(f"offsets must be strictly ascending, got {off}")
        if len(self.attributes) != len(off):
            raise ValueError("one attribute entry required per offset")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")
        object.__setattr__(self, "offsets", off)
        object.__setattr__(self, "attributes", tuple(self.attributes))

    @property
    def lane_count(self) -> int:
        return len(self.offsets)

    def separation_ok(self, min_separation: float = MIN_LANE_SEPARATION) -> bool:
        return all(b - a >= min_separation
                   for a, b in zip(self.offsets, self.offsets[1:]))

    def to_record(self, frame_id: int) -> dict:
        """Wire-format record (one JSON object per frame, see README)."""
        return {
            "frame_id": int(frame_id),
            "a1": self.shared.heading,
            "a2": self.shared.curvature,
            "b": self.slope.grade,
            "central_offset": self.central_offset,
            "offsets": list(self.offsets),
            "attributes": [{"color": a.color, "style": a.style}
                           for a in self.attributes],
            "confidence": self.confidence,
        }


def empty_lane_set() -> LaneSet:
    return LaneSet(shared=SharedParams(0.0, 0.0), slope=SlopeModel(0.0),
                   offsets=(), central_offset=0.0, attributes=(), confidence=0.0)


@dataclass(frozen=True)
class FramePoints:
    """Flat-BEV point sets of one frame; slope correction is applied lazily.

    road_xy: (N, 2) lateral/longitudinal coordinates of road-area samples.
    lane_xy: (M, 2) lane-marking samples; lane_tags carries their raw labels.
    """

    road_xy: np.ndarray
    lane_xy: np.ndarray
    lane_tags: np.ndarray
    camera_height: float

    def __post_init__(self):
        road = np.asarray(self.road_xy, dtype=float).reshape(-1, 2)
        lane = np.asarray(self.lane_xy, dtype=float).reshape(-1, 2)
        tags = np.asarray(self.lane_tags, dtype=np.int32).reshape(-1)
        if tags.shape[0] != lane.shape[0]:
            raise ValueError("lane_tags must match lane_xy length")
        if not self.camera_height > 0:
            raise ValueError("camera_height must be positive")
        object.__setattr__(self, "road_xy", road)
        object.__setattr__(self, "lane_xy", lane)
        object.__setattr__(self, "lane_tags", tags)

    @property
    def is_empty(self) -> bool:
        return self.road_xy.shape[0] == 0 and self.lane_xy.shape[0] == 0

    @staticmethod
    def empty(camera_height: float = 1.5) -> "FramePoints":
        z = np.zeros((0, 2))
        return FramePoints(z, z, np.zeros(0, dtype=np.int32), camera_height)


def eval_lane(offset: float, shared: SharedParams, y):
    """x-coordinate of the lane line at longitudinal position(s) y."""
    return offset + shared.heading * y + shared.curvature * y * y


def sample_lane(offset: float, shared: SharedParams, y_range: tuple[float, float],
                step: float) -> np.ndarray:
    """Polyline (x, y) of a lane over y_range, endpoints included.

    Returns an empty (0, 2) array when the range is reversed.
    """
    if step <= 0:
        raise ValueError("step must be positive")
    y0, y1 = y_range
    if y1 < y0:
        return np.zeros((0, 2))
    n = int(np.floor((y1 - y0) / step + 1e-9))
    ys = y0 + step * np.arange(n + 1)
    if ys[-1] < y1 - 1e-9:
        ys = np.append(ys, y1)
    return np.stack([eval_lane(offset, shared, ys), ys], axis=1)


def residual_offsets(lane_xy, shared: SharedParams) -> np.ndarray:
    """Lateral residuals of points against the zero-offset shared polynomial.

    For points on a lane with offset a0 the residuals cluster at a0; order
    is preserved.
    """
    pts = np.asarray(lane_xy, dtype=float).reshape(-1, 2)
    return pts[:, 0] - eval_lane(0.0, shared, pts[:, 1])
