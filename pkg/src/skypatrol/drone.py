"""Drone pose, control command contract, and kinematic stepping.

Frame conventions used across the whole package:

- World coordinates are meters, drawn with +y up.
- ``yaw`` is the clockwise-positive angle from the +x axis, wrapped into
  (-pi, pi].  heading(yaw) = (cos yaw, -sin yaw).
- The drone's right-hand direction (image right for the downward camera)
  is d(heading)/d(yaw) = (-sin yaw, -cos yaw), so a positive rotation
  command turns the heading toward image right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

# Yaw-rate magnitude below which the constant-curvature arc degenerates
# to straight-line motion.
STRAIGHT_YAW_RATE = 1e-6


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    w = math.remainder(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def heading_vec(yaw: float) -> np.ndarray:
    return np.array([math.cos(yaw), -math.sin(yaw)])


def right_vec(yaw: float) -> np.ndarray:
    return np.array([-math.sin(yaw), -math.cos(yaw)])


class CommandRangeError(ValueError):
    """A control command field lies outside its open interval."""


@dataclass(frozen=True)
class ControlCommand:
    """Rotation (rad/s), heading speed (m/s) and translation (m/s).

    Each field must lie strictly inside its interval; out-of-range or
    non-finite values are rejected at construction time.
    """

    rotation: float = 0.0
    heading_speed: float = 0.0
    translation: float = 0.0

    ROTATION_LIMIT = math.pi / 2
    SPEED_LIMIT = 10.0
    TRANSLATION_LIMIT = 3.0

    def __post_init__(self):
        for name, value, limit in (
            ("rotation", self.rotation, self.ROTATION_LIMIT),
            ("heading_speed", self.heading_speed, self.SPEED_LIMIT),
            ("translation", self.translation, self.TRANSLATION_LIMIT),
        ):
            if not math.isfinite(value):
                raise CommandRangeError(f"{name} is not finite: {value!r}")
            if not -limit < value < limit:
                raise CommandRangeError(
                    f"{name}={value} outside open interval (-{limit}, {limit})"
                )

    @classmethod
    def clamped(cls, rotation: float, heading_speed: float, translation: float,
                margin: float = 1e-6) -> "ControlCommand":
        """Build a command with each field clipped just inside its interval."""
        def clip(v, lim):
            bound = lim * (1.0 - margin)
            return min(max(v, -bound), bound)
        return cls(
            rotation=clip(rotation, cls.ROTATION_LIMIT),
            heading_speed=clip(heading_speed, cls.SPEED_LIMIT),
            translation=clip(translation, cls.TRANSLATION_LIMIT),
        )


@dataclass(frozen=True)
class DronePose:
    x: float
    y: float
    yaw: float
    altitude: float = 60.0

    def __post_init__(self):
        for name in ("x", "y", "yaw", "altitude"):
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"pose field {name} is not finite")
        if self.altitude <= 0:
            raise ValueError(f"altitude must be positive, got {self.altitude}")
        object.__setattr__(self, "yaw", wrap_angle(self.yaw))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    @property
    def heading(self) -> np.ndarray:
        return heading_vec(self.yaw)

    @property
    def right(self) -> np.ndarray:
        return right_vec(self.yaw)


def step_drone(pose: DronePose, cmd: ControlCommand, dt: float) -> DronePose:
    """Advance the drone by dt seconds under a constant command.

    Heading speed moves along the heading, translation strafes toward the
    drone's right, and yaw integrates the rotation command.  When the yaw
    rate is non-negligible the position update uses the exact
    constant-curvature arc.
    """
    if not (isinstance(dt, (int, float)) and math.isfinite(dt)) or dt <= 0:
        raise ValueError(f"dt must be a positive finite number, got {dt!r}")

    s, t, w = cmd.heading_speed, cmd.translation, cmd.rotation
    psi0 = pose.yaw
    psi1 = psi0 + w * dt

    if abs(w) > STRAIGHT_YAW_RATE:
        sin0, cos0 = math.sin(psi0), math.cos(psi0)
        sin1, cos1 = math.sin(psi1), math.cos(psi1)
        dx = (s * (sin1 - sin0) + t * (cos1 - cos0)) / w
        dy = (s * (cos1 - cos0) - t * (sin1 - sin0)) / w
    else:
        h = heading_vec(psi0)
        r = right_vec(psi0)
        dx = (s * h[0] + t * r[0]) * dt
        dy = (s * h[1] + t * r[1]) * dt

    return DronePose(pose.x + dx, pose.y + dy, wrap_angle(psi1), pose.altitude)
