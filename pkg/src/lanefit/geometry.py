"""Pinhole camera model and image <-> birds-eye-view mapping with slope correction.

Coordinate conventions (fixed throughout the package):

  Vehicle frame (right-handed):
    - origin: on the ground directly below the camera center
    - x-axis: lateral, positive to the right
    - y-axis: longitudinal, positive forward
    - z-axis: up; the flat ground plane is z = 0
    - the camera center sits at (0, 0, h), h = mounting height

  Camera frame (standard computer vision):
    - x right, y down, z forward along the optical axis

  Image frame:
    - u: column, increases rightward; v: row, increases downward; pixels

A non-flat road is modeled by a linear height profile: ground height in the
vehicle frame is z = g*y where g is the road grade (rise over run).  Seen
from the camera center the same profile reads z_cam_rel = g*y - h.

The derived 3x3 transform maps a homogeneous pixel (u, v, 1) to a ray
direction in vehicle-frame axes; scaling that ray by the camera-axis depth
z_c yields the 3D point relative to the camera center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import BehindCameraError, DegenerateSlopeError, HorizonError

# camera <- vehicle rotation of a level, forward-looking camera:
# optical axis = vehicle +y, image right = vehicle +x, image down = vehicle -z
FORWARD_MOUNT = np.array([[1.0, 0.0, 0.0],
                          [0.0, 0.0, -1.0],
                          [0.0, 1.0, 0.0]])

MAX_TRANSFORM_CONDITION = 1e12
_HORIZON_EPS = 1e-12
_SLOPE_EPS = 1e-6


def rotation_from_rpy(roll_deg: float, pitch_deg: float, yaw_deg: float) -> np.ndarray:
    """Camera<-vehicle rotation from mounting angles in degrees.

    pitch: positive tilts the optical axis down toward the road.
    yaw: positive turns the view left (counterclockwise seen from above).
    roll: rotation about the optical axis, positive rolls the image clockwise.
    """
    r = math.radians(roll_deg)
    p = math.radians(pitch_deg)
    y = math.radians(yaw_deg)
    rz_roll = np.array([[math.cos(r), -math.sin(r), 0.0],
                        [math.sin(r), math.cos(r), 0.0],
                        [0.0, 0.0, 1.0]])
    rx_pitch = np.array([[1.0, 0.0, 0.0],
                         [0.0, math.cos(p), -math.sin(p)],
                         [0.0, math.sin(p), math.cos(p)]])
    rz_yaw = np.array([[math.cos(y), math.sin(y), 0.0],
                       [-math.sin(y), math.cos(y), 0.0],
                       [0.0, 0.0, 1.0]])
    return rz_roll @ rx_pitch @ FORWARD_MOUNT @ rz_yaw


@dataclass(frozen=True)
class CameraModel:
    """Intrinsics, mounting extrinsics, and the cached pixel-to-ray transform.

    `rotation` is the camera<-vehicle rotation.  `height` is the camera
    center's height above the ground (meters, > 0).  `translation` is the
    camera<-vehicle translation consistent with the camera sitting at
    (0, 0, height) in the vehicle frame; it is derived, not configured.
    """

    fx: float
    fy: float
    cx: float
    cy: float
    rotation: np.ndarray
    height: float
    image_size: tuple[int, int]  # (width, height) in pixels
    translation: np.ndarray = field(init=False, repr=False)
    transform: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rot = np.asarray(self.rotation, dtype=float)
        if rot.shape != (3, 3):
            raise ValueError(f"rotation must be 3x3, got {rot.shape}")
        if not np.allclose(rot.T @ rot, np.eye(3), atol=1e-9):
            raise ValueError("rotation is not orthonormal within 1e-9")
        if not self.height > 0:
            raise ValueError(f"camera height must be positive, got {self.height}")
        object.__setattr__(self, "rotation", rot)
        t = -rot @ np.array([0.0, 0.0, self.height])
        object.__setattr__(self, "translation", t)
        tr = _pixel_ray_transform(self.fx, self.fy, self.cx, self.cy, rot)
        cond = np.linalg.cond(tr)
        if not np.isfinite(cond) or cond > MAX_TRANSFORM_CONDITION:
            raise ValueError(f"pixel-ray transform is ill-conditioned (cond={cond:.3e})")
        object.__setattr__(self, "transform", tr)

    @property
    def intrinsic_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])


def _pixel_ray_transform(fx, fy, cx, cy, rotation):
    if fx == 0 or fy == 0:
        raise ValueError("focal lengths must be non-zero")
    k_inv = np.array([[1.0 / fx, 0.0, -cx / fx],
                      [0.0, 1.0 / fy, -cy / fy],
                      [0.0, 0.0, 1.0]])
    return rotation.T @ k_inv


def build_transform(camera: CameraModel) -> np.ndarray:
    """The cached 3x3 transform taking (u, v, 1) to a vehicle-axes ray."""
    return camera.transform


@dataclass(frozen=True)
class ImagePoint:
    u: float
    v: float


@dataclass(frozen=True)
class FlatBevPoint:
    """Ground point under the flat-road assumption, camera-footprint origin.

    depth_scale is the camera-axis depth eliminated by the ground constraint.
    """

    x: float
    y: float
    depth_scale: float = 0.0


@dataclass(frozen=True)
class BevPoint:
    """Slope-corrected ground point: x lateral (right +), y forward (+), meters."""

    x: float
    y: float


@dataclass(frozen=True)
class SlopeModel:
    """Linear road height profile, z = grade * y relative to the ground origin."""

    grade: float
    max_grade: float = 0.15

    def __post_init__(self):
        if abs(self.grade) > self.max_grade:
            raise ValueError(
                f"grade {self.grade} exceeds plausible bound +/-{self.max_grade}")


@dataclass(frozen=True)
class Roi:
    """Ground region kept for inference; points outside are dropped."""

    y_max: float = 60.0
    x_max: float = 12.0
    y_min: float = 0.0

    def contains(self, x, y):
        return (y > self.y_min) & (y <= self.y_max) & (np.abs(x) <= self.x_max)


def image_to_flat_bev(camera: CameraModel, p: ImagePoint) -> FlatBevPoint:
    """Back-project a pixel onto the flat ground plane.

    Raises HorizonError when the pixel ray is parallel to or above the horizon.
    """
    r = camera.transform @ np.array([p.u, p.v, 1.0])
    if r[2] >= -_HORIZON_EPS:
        raise HorizonError(f"pixel ({p.u}, {p.v}) does not hit the ground plane")
    depth = -camera.height / r[2]
    return FlatBevPoint(float(depth * r[0]), float(depth * r[1]), float(depth))


def pixels_to_flat_bev(camera: CameraModel, uv: np.ndarray):
    """Vectorized flat-ground back-projection.

    Returns (xy, depth, valid); rows of `uv` with rays at or above the
    horizon are flagged invalid instead of raising.
    """
    uv = np.asarray(uv, dtype=float)
    ones = np.ones((uv.shape[0], 1))
    rays = np.hstack([uv, ones]) @ camera.transform.T
    valid = rays[:, 2] < -_HORIZON_EPS
    depth = np.zeros(uv.shape[0])
    depth[valid] = -camera.height / rays[valid, 2]
    xy = rays[:, :2] * depth[:, None]
    return xy, depth, valid


def slope_correct(p: FlatBevPoint, slope: SlopeModel, h: float) -> BevPoint:
    """Re-map a flat-ground estimate onto the sloped road plane.

    With grade g, the corrected point is
        y = y_flat / (y_flat*g/h + 1)
        x = -x_flat * (g*y - h) / h
    g = 0 is the exact identity.
    """
    g = slope.grade
    if g == 0.0:
        return BevPoint(p.x, p.y)
    denom = p.y * g / h + 1.0
    if denom <= _SLOPE_EPS:
        raise DegenerateSlopeError(
            f"point y={p.y} lies at/beyond the slope horizon for grade {g}")
    y = p.y / denom
    x = -p.x * (g * y - h) / h
    return BevPoint(x, y)


def slope_correct_arrays(x: np.ndarray, y: np.ndarray, grade: float, h: float):
    """Vectorized slope correction. Returns (x', y', valid)."""
    if grade == 0.0:
        return x, y, np.ones(x.shape, dtype=bool)
    denom = y * grade / h + 1.0
    valid = denom > _SLOPE_EPS
    yc = np.where(valid, y / np.where(valid, denom, 1.0), 0.0)
    xc = -x * (grade * yc - h) / h
    return xc, yc, valid


def bev_to_image(camera: CameraModel, p: BevPoint, slope: SlopeModel) -> ImagePoint:
    """Project a slope-corrected ground point back into the image.

    Exact inverse of image_to_flat_bev followed by slope_correct under the
    same slope model.  Raises BehindCameraError for points not in front.
    """
    world = np.array([p.x, p.y, slope.grade * p.y - camera.height])
    cam = camera.rotation @ world
    if cam[2] <= 1e-9:
        raise BehindCameraError(f"ground point ({p.x}, {p.y}) is behind the camera")
    return ImagePoint(float(camera.fx * cam[0] / cam[2] + camera.cx),
                      float(camera.fy * cam[1] / cam[2] + camera.cy))


def bev_to_image_arrays(camera: CameraModel, x: np.ndarray, y: np.ndarray,
                        grade: float):
    """Vectorized ground-to-image projection. Returns (uv, valid)."""
    world = np.stack([x, y, grade * y - camera.height], axis=1)
    cam = world @ camera.rotation.T
    valid = cam[:, 2] > 1e-9
    z = np.where(valid, cam[:, 2], 1.0)
    uv = np.stack([camera.fx * cam[:, 0] / z + camera.cx,
                   camera.fy * cam[:, 1] / z + camera.cy], axis=1)
    return uv, valid


def correct_with_height_profile(p: FlatBevPoint, coeffs, h: float,
                                y_max: float = 200.0, tol: float = 1e-10) -> BevPoint:
    """Slope correction for a general polynomial height profile (hook).

    `coeffs` are ascending-power coefficients of the profile relative to the
    camera center; coeffs[0] must be -h so the profile passes through the
    ground origin.  Solves  y_flat * profile(y) + h*y = 0  by bisection on
    (0, y_max].  Only the linear specialization is exercised elsewhere; this
    path exists for experimentation and is validated against it.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    if abs(coeffs[0] + h) > 1e-9:
        raise ValueError("height profile must equal -h at y = 0")
    if p.y == 0.0:
        return BevPoint(p.x, 0.0)

    def residual(y):
        return p.y * np.polyval(coeffs[::-1], y) + h * y

    lo, hi = 0.0, y_max
    if residual(hi) <= 0.0:
        raise DegenerateSlopeError("no ground intersection within y_max")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if residual(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol:
            break
    y = 0.5 * (lo + hi)
    x = -p.x * np.polyval(coeffs[::-1], y) / h
    return BevPoint(x, y)


def load_camera_config(path) -> CameraModel:
    """Read a camera description from a YAML file.

    Expected keys: fx, fy, cx, cy, width, height, roll_deg, pitch_deg,
    yaw_deg, height_m.  See configs/camera_example.yaml for a worked example.
    """
    with open(path) as f:
        raw = yaml.safe_load(f)
    return camera_from_dict(raw)


def camera_from_dict(raw: dict) -> CameraModel:
    required = {"fx", "fy", "cx", "cy", "width", "height", "height_m"}
    missing = required - raw.keys()
    if missing:
        raise ValueError(f"camera config missing keys: {sorted(missing)}")
    rot = rotation_from_rpy(raw.get("roll_deg", 0.0),
                            raw.get("pitch_deg", 0.0),
                            raw.get("yaw_deg", 0.0))
    return CameraModel(fx=float(raw["fx"]), fy=float(raw["fy"]),
                       cx=float(raw["cx"]), cy=float(raw["cy"]),
                       rotation=rot, height=float(raw["height_m"]),
                       image_size=(int(raw["width"]), int(raw["height"])))
