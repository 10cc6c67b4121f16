"""Downward orthographic camera: projection, rendering, and observations.

The camera window is centered on the drone with the heading toward the
image top and the drone's right toward the image right.  Pixel (0, 0) is
the top-left corner; coordinates refer to pixel centers.  Ground scale is
meters_per_pixel = scale_per_altitude * altitude, identical for both axes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drone import DronePose
from .world import RoadGraph


@dataclass(frozen=True)
class CameraConfig:
    width: int = 400
    height: int = 100
    # 0.00125 * 60 m altitude = 0.075 m/px: a 6 m road spans 80 px (20% of width)
    scale_per_altitude: float = 0.00125

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0 or self.scale_per_altitude <= 0:
            raise ValueError("camera dimensions and scale must be positive")

    @property
    def cx(self) -> float:
        return (self.width - 1) / 2.0

    @property
    def cy(self) -> float:
        return (self.height - 1) / 2.0

    def meters_per_pixel(self, altitude: float) -> float:
        return self.scale_per_altitude * altitude

    def footprint_half_extent(self, altitude: float) -> tuple[float, float]:
        """Half extents (along right, along heading) of the ground window."""
        mpp = self.meters_per_pixel(altitude)
        return self.width / 2.0 * mpp, self.height / 2.0 * mpp


@dataclass(frozen=True)
class SimTruth:
    """Exact simulator state attached to rendered observations."""

    nav_position: np.ndarray
    nav_bearing: float
    nav_speed: float
    nav_pixel: np.ndarray
    junction_dist: float


@dataclass
class Observation:
    """One camera frame with its capture metadata."""

    raster: np.ndarray
    pose: DronePose
    tick: int
    meters_per_pixel: float
    truth: SimTruth | None = None

    def __post_init__(self):
        if self.raster.ndim != 2 or self.raster.dtype != np.uint8:
            raise ValueError("raster must be a 2-D uint8 array")
        if self.meters_per_pixel <= 0:
            raise ValueError("meters_per_pixel must be positive")

    @property
    def height(self) -> int:
        return self.raster.shape[0]

    @property
    def width(self) -> int:
        return self.raster.shape[1]


def pixel_to_world_matrix(pose: DronePose, camera: CameraConfig) -> np.ndarray:
    """3x3 affine mapping homogeneous pixel coords to world meters."""
    mpp = camera.meters_per_pixel(pose.altitude)
    h, r = pose.heading, pose.right
    origin = pose.position - camera.cx * mpp * r + camera.cy * mpp * h
    return np.array([
        [r[0] * mpp, -h[0] * mpp, origin[0]],
        [r[1] * mpp, -h[1] * mpp, origin[1]],
        [0.0, 0.0, 1.0],
    ])


def world_to_pixel_matrix(pose: DronePose, camera: CameraConfig) -> np.ndarray:
    """3x3 affine mapping homogeneous world meters to pixel coords."""
    mpp = camera.meters_per_pixel(pose.altitude)
    h, r = pose.heading, pose.right
    p = pose.position
    return np.array([
        [r[0] / mpp, r[1] / mpp, camera.cx - (p @ r) / mpp],
        [-h[0] / mpp, -h[1] / mpp, camera.cy + (p @ h) / mpp],
        [0.0, 0.0, 1.0],
    ])


def apply_affine(m: np.ndarray, points: np.ndarray) -> np.ndarray:
    pts = np.atleast_2d(np.asarray(points, float))
    out = pts @ m[:2, :2].T + m[:2, 2]
    return out if np.asarray(points).ndim == 2 else out[0]


def world_to_pixel(pose: DronePose, camera: CameraConfig, points) -> np.ndarray:
    return apply_affine(world_to_pixel_matrix(pose, camera), points)


def pixel_to_world(pose: DronePose, camera: CameraConfig, pixels) -> np.ndarray:
    return apply_affine(pixel_to_world_matrix(pose, camera), pixels)


def pixel_transform(pose_i: DronePose, pose_j: DronePose, camera: CameraConfig) -> np.ndarray:
    """Exact 3x3 transform taking frame-j pixels to frame-i pixels.

    For the orthographic downward camera this is a similarity; it is the
    analytic ground truth that homography estimation is measured against.
    """
    return world_to_pixel_matrix(pose_i, camera) @ pixel_to_world_matrix(pose_j, camera)


def in_footprint(pose: DronePose, camera: CameraConfig, point, margin_px: float = 0.0) -> bool:
    px = world_to_pixel(pose, camera, point)
    return bool(
        margin_px <= px[0] <= camera.width - 1 - margin_px
        and margin_px <= px[1] <= camera.height - 1 - margin_px
    )


# -- texture ---------------------------------------------------------------

_MIX1 = np.uint64(0x9E3779B97F4A7C15)
_MIX2 = np.uint64(0xC2B2AE3D27D4EB4F)
_MIX3 = np.uint64(0x165667B19E3779F9)


def _lattice_hash(ix: np.ndarray, iy: np.ndarray, seed: int) -> np.ndarray:
    """Deterministic per-cell value in [0, 1)."""
    with np.errstate(over="ignore"):
        u = (ix.astype(np.int64).view(np.uint64) * _MIX1
             + iy.astype(np.int64).view(np.uint64) * _MIX2
             + np.uint64(seed & 0xFFFFFFFF) * _MIX3)
        u ^= u >> np.uint64(33)
        u *= _MIX2
        u ^= u >> np.uint64(29)
    return (u >> np.uint64(40)).astype(np.float64) / float(1 << 24)


def _smoothstep(t: np.ndarray) -> np.ndarray:
    return t * t * (3.0 - 2.0 * t)


def value_noise(points: np.ndarray, cell: float, seed: int) -> np.ndarray:
    """Bilinear value noise over a seeded integer lattice, in [0, 1)."""
    g = np.asarray(points, float) / cell
    i0 = np.floor(g).astype(np.int64)
    f = _smoothstep(g - i0)
    ix, iy = i0[:, 0], i0[:, 1]
    v00 = _lattice_hash(ix, iy, seed)
    v10 = _lattice_hash(ix + 1, iy, seed)
    v01 = _lattice_hash(ix, iy + 1, seed)
    v11 = _lattice_hash(ix + 1, iy + 1, seed)
    top = v00 + (v10 - v00) * f[:, 0]
    bot = v01 + (v11 - v01) * f[:, 0]
    return top + (bot - top) * f[:, 1]


def ground_texture(points: np.ndarray, seed: int) -> np.ndarray:
    """Two-octave background texture in [0, 1)."""
    return 0.65 * value_noise(points, 7.0, seed) + 0.35 * value_noise(points, 1.8, seed + 1)


@dataclass
class RenderSettings:
    texture_seed: int = 0
    background_base: float = 60.0
    background_span: float = 60.0
    road_level: float = 205.0
    road_texture_span: float = 18.0
    edge_feather_m: float = 0.5
    navigator_half_size_m: float = 1.0
    navigator_level: float = 25.0
    extras: dict = field(default_factory=dict)


def render_observation(world: RoadGraph, pose: DronePose, camera: CameraConfig,
                       tick: int = 0, settings: RenderSettings | None = None,
                       nav_position: np.ndarray | None = None,
                       truth: SimTruth | None = None) -> Observation:
    """Render the orthographic ground window under the drone.

    Roads are drawn bright over a darker two-octave texture; the navigator,
    when given, appears as a dark board around its ground position.
    Off-map regions simply render as background.
    """
    settings = settings or RenderSettings()
    mpp = camera.meters_per_pixel(pose.altitude)

    xs = np.arange(camera.width, dtype=float)
    ys = np.arange(camera.height, dtype=float)
    px = np.stack(np.meshgrid(xs, ys), axis=-1).reshape(-1, 2)
    wpts = pixel_to_world(pose, camera, px)

    lo, hi = wpts.min(axis=0), wpts.max(axis=0)
    edge_idx = world.edges_near(lo, hi, pad=settings.edge_feather_m)
    coverage = world.road_coverage(wpts, edge_idx)

    tex = ground_texture(wpts, settings.texture_seed)
    background = settings.background_base + settings.background_span * tex
    road = settings.road_level - settings.road_texture_span * tex
    alpha = np.clip(coverage / settings.edge_feather_m + 0.5, 0.0, 1.0)
    values = background + alpha * (road - background)

    if nav_position is None and truth is not None:
        nav_position = truth.nav_position
    if nav_position is not None:
        board = np.max(np.abs(wpts - np.asarray(nav_position, float)), axis=1)
        nav_alpha = np.clip((settings.navigator_half_size_m - board) / (mpp + 1e-9) + 0.5, 0.0, 1.0)
        values = values + nav_alpha * (settings.navigator_level - values)

    raster = np.clip(np.rint(values), 0, 255).astype(np.uint8)
    raster = raster.reshape(camera.height, camera.width)
    return Observation(raster=raster, pose=pose, tick=tick,
                       meters_per_pixel=mpp, truth=truth)
