"""The walking navigator and the drone that follows it.

Collection runs pair a route-following walker with a first-order-lag
pursuit drone.  The lag is intentional: it makes the camera observe the
walker from varied angles and offsets instead of a fixed centered view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .camera import CameraConfig, in_footprint
from .drone import DronePose, wrap_angle
from .geometry import TrackingLostError
from .world import Route


@dataclass(frozen=True)
class NavigatorState:
    route: Route
    progress: float = 0.0
    speed: float = 1.5
    finished: bool = False

    def __post_init__(self):
        if len(self.route.points) < 2:
            raise ValueError("navigator needs a route with at least one edge")
        if not 0.0 <= self.progress <= self.route.length + 1e-9:
            raise ValueError("progress outside route")
        if self.speed < 0 or not math.isfinite(self.speed):
            raise ValueError("speed must be finite and non-negative")

    @property
    def position(self) -> np.ndarray:
        return self.route.position_at(self.progress)

    @property
    def bearing(self) -> float:
        return self.route.bearing_at(self.progress)


def step_navigator(state: NavigatorState, dt: float) -> NavigatorState:
    if dt <= 0 or not math.isfinite(dt):
        raise ValueError("dt must be positive and finite")
    if state.finished:
        return state
    progress = state.progress + state.speed * dt
    if progress >= state.route.length:
        return replace(state, progress=state.route.length, finished=True)
    return replace(state, progress=progress)


@dataclass(frozen=True)
class PursuitConfig:
    tau_yaw: float = 2.0
    tau_pos: float = 1.0
    # pixel the tracker tries to hold the navigator at; None = image center
    target_px: tuple[float, float] | None = None

    def __post_init__(self):
        if self.tau_yaw < 0 or self.tau_pos < 0:
            raise ValueError("time constants must be non-negative")


def _lag_gain(dt: float, tau: float) -> float:
    if tau <= 1e-9:
        return 1.0
    return 1.0 - math.exp(-dt / tau)


def track_navigator(pose: DronePose, nav: NavigatorState, dt: float,
                    camera: CameraConfig, cfg: PursuitConfig | None = None) -> DronePose:
    """One pursuit step: ease yaw toward the walker's bearing and position
    toward holding the walker at the target pixel."""
    if dt <= 0 or not math.isfinite(dt):
        raise ValueError("dt must be positive and finite")
    cfg = cfg or PursuitConfig()
    if not in_footprint(pose, camera, nav.position):
        raise TrackingLostError("navigator left the camera footprint")

    yaw = wrap_angle(pose.yaw + wrap_angle(nav.bearing - pose.yaw) * _lag_gain(dt, cfg.tau_yaw))

    tx, ty = cfg.target_px if cfg.target_px is not None else (camera.cx, camera.cy)
    mpp = camera.meters_per_pixel(pose.altitude)
    goal_pose = DronePose(pose.x, pose.y, yaw, pose.altitude)
    offset = ((tx - camera.cx) * mpp) * goal_pose.right + ((camera.cy - ty) * mpp) * goal_pose.heading
    goal = nav.position - offset
    position = pose.position + (goal - pose.position) * _lag_gain(dt, cfg.tau_pos)
    return DronePose(float(position[0]), float(position[1]), yaw, pose.altitude)
