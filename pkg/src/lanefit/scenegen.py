"""Synthetic scene oracle: renders semantic label maps from known lane, road,
and slope parameters through the exact forward camera model.

Rasterization works by per-pixel ground intersection (inverse mapping) rather
than polygon scan conversion, so the generator and the inference path share
one geometric model and round-trip tolerances stay analyzable.  Each scene
reports its rasterization quantum - the worst-case ground footprint of one
pixel inside the ROI - so tests can derive tolerances from it instead of
magic numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image

from .errors import GenerationError
from .geometry import CameraModel, Roi, SlopeModel
from .ingest import (LABEL_LANE_WHITE, LABEL_LANE_YELLOW, LABEL_OTHER,
                     LABEL_ROAD, LABEL_SKY, SemanticMask)
from .lane_model import LaneSet, eval_lane

DEFAULT_DASH = (3.0, 6.0)  # meters on / off

_COLOR_LABELS = {"white": LABEL_LANE_WHITE, "yellow": LABEL_LANE_YELLOW,
                 "unknown": LABEL_LANE_WHITE}


@dataclass(frozen=True)
class Degradation:
    occlusion_rects: tuple[tuple[int, int, int, int], ...] = ()  # u0, v0, u1, v1
    lane_dropout: float = 0.0   # fraction of lane pixels relabeled as road
    label_noise: float = 0.0    # fraction of all pixels given a random label
    lateral_noise: float = 0.0  # std (m) of per-row jitter of marking centers

    def __post_init__(self):
        for frac in (self.lane_dropout, self.label_noise):
            if not 0.0 <= frac <= 1.0:
                raise ValueError("degradation fractions must lie in [0, 1]")
        if self.lateral_noise < 0:
            raise ValueError("lateral_noise must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    """Everything needed to render one frame deterministically."""

    truth: LaneSet
    camera: CameraModel
    road_half_width: float
    seed: int
    marking_half_width: float = 0.075
    y_max: float = 60.0
    dash_patterns: tuple = ()   # per lane: (on_m, off_m) or None for solid
    dash_phase: float = 0.0
    degradation: Degradation = field(default_factory=Degradation)

    def __post_init__(self):
        if self.road_half_width <= 0:
            raise GenerationError("road half-width must be positive")
        if self.y_max <= 0:
            raise GenerationError("y extent must be positive")
        for a0 in self.truth.offsets:
            if abs(a0 - self.truth.central_offset) > self.road_half_width:
                raise GenerationError(
                    f"lane offset {a0} lies outside the road half-width")
        if not self.dash_patterns:
            derived = tuple(DEFAULT_DASH if a.style == "dashed" else None
                            for a in self.truth.attributes)
            object.__setattr__(self, "dash_patterns", derived)
        elif len(self.dash_patterns) != self.truth.lane_count:
            raise GenerationError("one dash pattern entry required per lane")


@dataclass(frozen=True)
class Scene:
    mask: SemanticMask
    truth: LaneSet
    quantum_lateral: float   # worst-case lateral pixel footprint in the ROI (m)
    quantum_forward: float   # worst-case forward pixel footprint in the ROI (m)
    spec: SceneSpec


def _ground_grid(camera: CameraModel, grade: float):
    """Ground intersection of every pixel ray with the plane z = grade*y.

    Returns (x, y, valid) arrays of shape (H, W).
    """
    w, h_px = camera.image_size
    t = camera.transform
    us = np.arange(w, dtype=float)
    vs = np.arange(h_px, dtype=float)
    uu, vv = np.meshgrid(us, vs)
    rx = t[0, 0] * uu + t[0, 1] * vv + t[0, 2]
    ry = t[1, 0] * uu + t[1, 1] * vv + t[1, 2]
    rz = t[2, 0] * uu + t[2, 1] * vv + t[2, 2]
    denom = rz - grade * ry
    valid = denom < -1e-12
    s = np.where(valid, -camera.height / np.where(valid, denom, -1.0), 0.0)
    return s * rx, s * ry, valid


def generate_scene(spec: SceneSpec) -> Scene:
    """Render the label map and return it with the ground truth."""
    camera = spec.camera
    truth = spec.truth
    grade = truth.slope.grade
    x_g, y_g, valid = _ground_grid(camera, grade)
    if not valid.any():
        raise GenerationError("camera sees no ground")

    h_px = camera.image_size[1]
    rng_jitter, rng_drop, rng_noise = [
        np.random.default_rng(s) for s in np.random.SeedSequence(spec.seed).spawn(3)]

    labels = np.full(x_g.shape, LABEL_OTHER, dtype=np.uint8)
    labels[~valid] = LABEL_SKY

    on_road = valid & (y_g > 0) & (y_g <= spec.y_max)
    center = eval_lane(truth.central_offset, truth.shared, y_g)
    labels[on_road & (np.abs(x_g - center) <= spec.road_half_width)] = LABEL_ROAD

    n_lanes = truth.lane_count
    jitter = (rng_jitter.standard_normal((n_lanes, h_px)) * spec.degradation.lateral_noise
              if spec.degradation.lateral_noise > 0 else np.zeros((n_lanes, h_px)))
    for i, a0 in enumerate(truth.offsets):
        lane_center = eval_lane(a0, truth.shared, y_g) + jitter[i][:, None]
        band = on_road & (np.abs(x_g - lane_center) <= spec.marking_half_width)
        pattern = spec.dash_patterns[i]
        if pattern is not None:
            on_len, off_len = pattern
            band &= np.mod(y_g + spec.dash_phase, on_len + off_len) < on_len
        labels[band] = _COLOR_LABELS[truth.attributes[i].color]

    deg = spec.degradation
    if deg.lane_dropout > 0:
        lane_mask = (labels == LABEL_LANE_WHITE) | (labels == LABEL_LANE_YELLOW)
        drop = (rng_drop.random(labels.shape) < deg.lane_dropout) & lane_mask
        labels[drop] = LABEL_ROAD
    if deg.label_noise > 0:
        noisy = rng_noise.random(labels.shape) < deg.label_noise
        labels[noisy] = rng_noise.integers(0, 5, size=int(noisy.sum()),
                                           dtype=np.uint8)
    for u0, v0, u1, v1 in deg.occlusion_rects:
        labels[max(v0, 0):v1, max(u0, 0):u1] = LABEL_OTHER

    q_lat, q_fwd = _quantum(x_g, y_g, valid)
    return Scene(mask=SemanticMask(labels=labels), truth=truth,
                 quantum_lateral=q_lat, quantum_forward=q_fwd, spec=spec)


def _quantum(x_g, y_g, valid, roi: Roi = Roi()):
    in_roi = valid & roi.contains(x_g, y_g)

    def max_step(axis):
        both = in_roi & np.roll(in_roi, 1, axis=axis)
        both[(0,) if axis == 0 else (slice(None), 0)] = False
        if not both.any():
            return 0.0
        dx = x_g - np.roll(x_g, 1, axis=axis)
        dy = y_g - np.roll(y_g, 1, axis=axis)
        return float(np.sqrt(dx[both] ** 2 + dy[both] ** 2).max())

    return max_step(1), max_step(0)


@dataclass(frozen=True)
class ClipMotion:
    """Per-frame parameter drift of a synthetic clip.

    forward_per_frame advances the dash-pattern phase (ego motion along a
    pattern-stationary road); the rates add to the respective parameter each
    frame.  lateral_rate shifts the central line and every lane offset
    together (ego lateral drift).
    """

    forward_per_frame: float = 0.0
    lateral_rate: float = 0.0
    heading_rate: float = 0.0
    curvature_rate: float = 0.0
    slope_rate: float = 0.0


def clip_specs(spec: SceneSpec, frames: int, motion: ClipMotion,
               seed: int | None = None) -> list[SceneSpec]:
    if frames < 1:
        raise GenerationError("a clip needs at least one frame")
    base_seed = spec.seed if seed is None else seed
    truth = spec.truth
    out = []
    for k in range(frames):
        shared = replace(truth.shared,
                         heading=truth.shared.heading + k * motion.heading_rate,
                         curvature=truth.shared.curvature + k * motion.curvature_rate)
        slope = SlopeModel(truth.slope.grade + k * motion.slope_rate)
        offsets = tuple(a0 + k * motion.lateral_rate for a0 in truth.offsets)
        frame_truth = replace(truth, shared=shared, slope=slope, offsets=offsets,
                              central_offset=truth.central_offset + k * motion.lateral_rate)
        out.append(replace(spec, truth=frame_truth,
                           dash_phase=spec.dash_phase + k * motion.forward_per_frame,
                           seed=base_seed + k))
    return out


def generate_clip(spec: SceneSpec, frames: int, motion: ClipMotion,
                  seed: int | None = None) -> list[Scene]:
    """Render a deterministic sequence of smoothly drifting scenes."""
    return [generate_scene(s) for s in clip_specs(spec, frames, motion, seed)]


def occlusions_covering_fraction(spec: SceneSpec, fraction: float, seed: int,
                                 rect_size: tuple[int, int] = (90, 36),
                                 max_rects: int = 400) -> Degradation:
    """Occlusion rectangles that remove at least `fraction` of the lane pixels.

    Rectangles are placed at seeded random positions below the horizon of the
    degradation-free rendering until the target coverage is reached.
    """
    base = generate_scene(replace(spec, degradation=Degradation()))
    labels = base.mask.labels
    lane_mask = (labels == LABEL_LANE_WHITE) | (labels == LABEL_LANE_YELLOW)
    total = int(lane_mask.sum())
    if total == 0:
        raise GenerationError("scene has no lane pixels to occlude")
    rows = np.nonzero(lane_mask.any(axis=1))[0]
    v_lo, v_hi = int(rows.min()), int(rows.max())
    rng = np.random.default_rng(seed)
    w, h_px = spec.camera.image_size
    rw, rh = rect_size
    covered = np.zeros_like(lane_mask)
    rects = []
    while covered[lane_mask].sum() < fraction * total:
        if len(rects) >= max_rects:
            raise GenerationError("could not reach requested occlusion fraction")
        u0 = int(rng.integers(0, max(1, w - rw)))
        v0 = int(rng.integers(v_lo, max(v_lo + 1, v_hi - rh)))
        rects.append((u0, v0, u0 + rw, v0 + rh))
        covered[v0:v0 + rh, u0:u0 + rw] = True
    return replace(spec.degradation, occlusion_rects=tuple(rects))


def write_mask(mask: SemanticMask, path) -> None:
    """Store a label map in the same 8-bit format the ingest module reads."""
    Image.fromarray(mask.labels, mode="L").save(path)
