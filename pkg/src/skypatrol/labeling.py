"""Auto-labeling: direction and translation labels from tracked motion.

Each consecutive frame pair is labeled by compensating the drone's
ego-motion with an estimated homography, then reading the navigator's
residual displacement in the first frame's pixel coordinates:

- direction: theta = angle of the displacement from image-up, positive
  toward image right; D = theta / (pi/2), in (-1, 1);
- translation: the abscissa where the motion line through the box center
  crosses the bottom image row, in half-widths about the image center.

Pairs whose displacement is implausibly large (inconsistent tracking) or
has almost no forward component are rejected with reason codes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .camera import CameraConfig, Observation, world_to_pixel
from .dataset import LabeledDataset, LabeledSample, config_hash
from .geometry import (BoundingBox, EstimationError, GeometryError,
                       TrackingLostError, estimate_homography,
                       synthesize_matches, track_box, transform_point)
from .seeding import rng_for


class ConsistencyError(GeometryError):
    """Displacement too large to be real navigator motion."""


class DegenerateMotionError(GeometryError):
    """No usable forward motion between the frames."""


class TranslationRangeError(GeometryError):
    """Bottom-edge intersection falls outside the frame."""


@dataclass(frozen=True)
class LabelConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    tracker: str = "oracle"
    tracker_jitter_px: float = 1.0
    match_count: int = 100
    match_noise_px: float = 0.5
    match_outlier_frac: float = 0.1
    ransac_threshold_px: float = 2.0
    ransac_iterations: int = 1000
    # largest credible inter-frame displacement, as a frame-diagonal fraction
    reasonable_frac: float = 0.15
    min_forward_px: float = 2.0

    def reasonable_px(self) -> float:
        return self.reasonable_frac * math.hypot(self.camera.width, self.camera.height)

    def to_dict(self) -> dict:
        return {
            "camera": {"width": self.camera.width, "height": self.camera.height,
                       "scale_per_altitude": self.camera.scale_per_altitude},
            "tracker": self.tracker, "tracker_jitter_px": self.tracker_jitter_px,
            "match_count": self.match_count, "match_noise_px": self.match_noise_px,
            "match_outlier_frac": self.match_outlier_frac,
            "ransac_threshold_px": self.ransac_threshold_px,
            "ransac_iterations": self.ransac_iterations,
            "reasonable_frac": self.reasonable_frac,
            "min_forward_px": self.min_forward_px,
        }


def direction_from_motion(motion: np.ndarray) -> tuple[float, float]:
    """(theta, D) for a pixel-space displacement (image y grows downward)."""
    theta = math.atan2(motion[0], -motion[1])
    return theta, theta / (math.pi / 2)


def translation_label(box_center: np.ndarray, theta: float, camera: CameraConfig) -> float:
    """Bottom-row intersection of the motion line, in half-widths.

    The motion line through the box center has image direction
    (sin theta, -cos theta); walking it back to the bottom row lands at
    x = b_x - (y_bottom - b_y) * tan(theta).
    """
    y_bottom = camera.height - 1
    t_px = box_center[0] - (y_bottom - box_center[1]) * math.tan(theta)
    return (t_px - camera.cx) / (camera.width / 2.0)


def ground_truth_labels(obs_i: Observation, obs_j: Observation,
                        camera: CameraConfig) -> tuple[float, float] | None:
    """Exact (D, T) from simulator truth, bypassing tracking and matching."""
    if obs_i.truth is None or obs_j.truth is None:
        return None
    a = world_to_pixel(obs_i.pose, camera, obs_i.truth.nav_position)
    b = world_to_pixel(obs_i.pose, camera, obs_j.truth.nav_position)
    motion = b - a
    if -motion[1] <= 1e-9:
        return None
    theta, d = direction_from_motion(motion)
    t = translation_label(a, theta, camera)
    return d, t


def label_pair(obs_i: Observation, obs_j: Observation, box: BoundingBox,
               cfg: LabelConfig, rng: np.random.Generator) -> tuple[LabeledSample, BoundingBox]:
    """Label one frame pair; returns the sample and the box carried forward."""
    if obs_i.raster.shape != (cfg.camera.height, cfg.camera.width):
        raise GeometryError("observation does not match the configured camera")

    box_next = track_box((obs_i, obs_j), box, mode=cfg.tracker,
                         jitter_px=cfg.tracker_jitter_px, seed=rng)

    # H maps second-frame pixels into the first frame, so the tracked box
    # can be read in a fixed coordinate system
    matches = synthesize_matches(obs_j.pose, obs_i.pose, cfg.camera,
                                 noise_px=cfg.match_noise_px,
                                 outlier_frac=cfg.match_outlier_frac,
                                 count=cfg.match_count, seed=rng)
    h, flagged = estimate_homography(matches, threshold_px=cfg.ransac_threshold_px,
                                     iterations=cfg.ransac_iterations, seed=rng)

    compensated = transform_point(h, box_next.center)
    motion = compensated - box.center
    dist = float(np.linalg.norm(motion))
    if dist > cfg.reasonable_px():
        raise ConsistencyError(
            f"displacement {dist:.1f} px exceeds {cfg.reasonable_px():.1f} px")
    forward = -motion[1]
    if forward < cfg.min_forward_px:
        raise DegenerateMotionError(f"forward motion {forward:.2f} px below threshold")

    theta, d = direction_from_motion(motion)
    t = translation_label(box.center, theta, cfg.camera)
    if not -1.0 < t < 1.0:
        raise TranslationRangeError(f"intersection {t:.3f} outside (-1, 1)")

    gt = ground_truth_labels(obs_i, obs_j, cfg.camera)
    diag = {
        "motion_px": [round(float(motion[0]), 4), round(float(motion[1]), 4)],
        "inliers": flagged.inlier_count,
        "h_cond": round(float(np.linalg.cond(h.matrix)), 4),
    }
    if obs_i.truth is not None and math.isfinite(obs_i.truth.junction_dist):
        diag["junction_dist"] = round(float(obs_i.truth.junction_dist), 4)
    sample = LabeledSample(frame=obs_i.raster, d=d, t=t,
                           gt_d=None if gt is None else gt[0],
                           gt_t=None if gt is None else gt[1],
                           diag=diag)
    return sample, box_next


REASONS = {
    ConsistencyError: "consistency",
    DegenerateMotionError: "degenerate-motion",
    TranslationRangeError: "t-out-of-range",
    TrackingLostError: "tracking-lost",
    EstimationError: "estimation-failure",
}


def label_sequence(frames: list[Observation], box: BoundingBox, cfg: LabelConfig,
                   seed: int = 0) -> LabeledDataset:
    """Fold label_pair over consecutive frames, logging rejections.

    A lost tracker ends the walk (the box cannot be carried further); all
    other failures skip the pair and keep going.
    """
    if len(frames) < 2:
        raise GeometryError("need at least two frames")
    rng = rng_for(seed, "labeling")
    samples: list[LabeledSample] = []
    rejections: list[dict] = []
    for i in range(len(frames) - 1):
        try:
            sample, box = label_pair(frames[i], frames[i + 1], box, cfg, rng)
            samples.append(sample)
        except GeometryError as exc:
            reason = next((name for klass, name in REASONS.items()
                           if isinstance(exc, klass)), "error")
            rejections.append({"index": i, "reason": reason, "detail": str(exc)})
            if isinstance(exc, TrackingLostError):
                break
    header = {"seed": seed, "config_hash": config_hash(cfg.to_dict()),
              "label_config": cfg.to_dict()}
    return LabeledDataset(samples=samples, header=header, rejections=rejections)
