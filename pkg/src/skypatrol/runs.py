"""Collection runs: walk a navigator along a route and film it.

A run steps the navigator and the pursuing drone at the physics rate and
keeps every Nth frame, so consecutive kept frames show enough navigator
motion for labeling to be well conditioned.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .camera import (CameraConfig, Observation, RenderSettings, SimTruth,
                     render_observation, world_to_pixel)
from .drone import DronePose, step_drone
from .geometry import BoundingBox, TrackingLostError
from .navigator import NavigatorState, PursuitConfig, step_navigator, track_navigator
from .seeding import rng_for
from .world import RoadGraph, Route, random_route, route_fillet


@dataclass(frozen=True)
class CollectConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    pursuit: PursuitConfig = field(default_factory=PursuitConfig)
    dt: float = 0.02
    frame_period_s: float = 1.5
    nav_speed: float = 1.5
    altitude: float = 60.0
    max_frames: int = 200
    route_min_length: float = 320.0
    # driven corners are rounded with a per-corner random radius; None
    # keeps the raw polyline (turn onset then happens exactly at the node)
    corner_radius: tuple | None = (2.5, 6.0)

    def steps_per_frame(self) -> int:
        return max(1, round(self.frame_period_s / self.dt))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt, "frame_period_s": self.frame_period_s,
            "nav_speed": self.nav_speed, "altitude": self.altitude,
            "max_frames": self.max_frames, "route_min_length": self.route_min_length,
            "corner_radius": list(self.corner_radius) if self.corner_radius else None,
            "pursuit": {"tau_yaw": self.pursuit.tau_yaw, "tau_pos": self.pursuit.tau_pos},
        }


def _observe(world: RoadGraph, pose: DronePose, nav: NavigatorState,
             camera: CameraConfig, tick: int, settings: RenderSettings) -> Observation:
    truth = SimTruth(
        nav_position=nav.position, nav_bearing=nav.bearing, nav_speed=nav.speed,
        nav_pixel=world_to_pixel(pose, camera, nav.position),
        junction_dist=world.junction_distance(nav.position))
    return render_observation(world, pose, camera, tick=tick,
                              settings=settings, truth=truth)


def collect_run(world: RoadGraph, cfg: CollectConfig, seed: int = 0,
                route: Route | None = None) -> list[Observation]:
    """Film one navigator walk; returns the kept frames in order.

    The drone starts directly over the navigator, aligned with it; losing
    the navigator ends the run with the frames gathered so far.
    """
    if route is None:
        route = random_route(world, rng_for(seed, "route"), min_length=cfg.route_min_length)
    if cfg.corner_radius is not None:
        route = route_fillet(route, rng_for(seed, "fillet"),
                             radius_range=tuple(cfg.corner_radius))
    nav = NavigatorState(route=route, progress=0.0, speed=cfg.nav_speed)
    start = nav.position
    pose = DronePose(float(start[0]), float(start[1]), nav.bearing, cfg.altitude)
    settings = RenderSettings(texture_seed=int(rng_for(seed, "texture").integers(2**31)))

    frames = [_observe(world, pose, nav, cfg.camera, 0, settings)]
    tick = 0
    try:
        while len(frames) < cfg.max_frames and not nav.finished:
            for _ in range(cfg.steps_per_frame()):
                nav = step_navigator(nav, cfg.dt)
                pose = track_navigator(pose, nav, cfg.dt, cfg.camera, cfg.pursuit)
                tick += 1
                if nav.finished:
                    break
            frames.append(_observe(world, pose, nav, cfg.camera, tick, settings))
    except TrackingLostError:
        pass
    return frames


def initial_box(obs: Observation, half_size_m: float = 1.0, pad_px: float = 3.0) -> BoundingBox:
    """Navigator bounding box in the first frame, from simulator truth."""
    if obs.truth is None:
        raise ValueError("initial box needs simulator truth")
    size = 2.0 * half_size_m / obs.meters_per_pixel + 2.0 * pad_px
    cx, cy = obs.truth.nav_pixel
    return BoundingBox(float(cx), float(cy), size, size)


@dataclass(frozen=True)
class PatrolConfig:
    camera: CameraConfig = field(default_factory=CameraConfig)
    dt: float = 0.02
    control_period_s: float = 0.1
    altitude: float = 60.0
    max_steps: int = 600
    lost_threshold_m: float = 30.0
    # cruise cap; must stay below lookahead / turn time or corners overshoot
    s_max: float = 6.0
    texture_seed: int | None = None  # None: derive from the run seed

    def ticks_per_step(self) -> int:
        return max(1, round(self.control_period_s / self.dt))

    def to_dict(self) -> dict:
        return {
            "dt": self.dt, "control_period_s": self.control_period_s,
            "altitude": self.altitude, "max_steps": self.max_steps,
            "lost_threshold_m": self.lost_threshold_m,
            "s_max": self.s_max, "texture_seed": self.texture_seed,
        }


@dataclass(frozen=True)
class PatrolTrace:
    poses: tuple
    telemetry: tuple
    lost: bool
    ticks: int


def start_pose_on_route(world: RoadGraph, seed: int, altitude: float,
                        min_length: float = 320.0) -> DronePose:
    route = random_route(world, rng_for(seed, "route"), min_length=min_length)
    p = route.position_at(0.0)
    return DronePose(float(p[0]), float(p[1]), route.bearing_at(0.0), altitude)


def patrol_run(world: RoadGraph, weights, cfg: PatrolConfig = PatrolConfig(),
               schedule=(), seed: int = 0,
               start: DronePose | None = None) -> PatrolTrace:
    """Closed-loop patrol: render, predict, command, integrate; no navigator.

    ``schedule`` holds (tick, UserInstruction) pairs; an instruction joins
    the snapshot once the tick counter reaches its activation tick. The run
    ends early if the drone drifts past the lost threshold from every road.
    """
    from .controller import ControlConfig, control_step
    from .net import forward

    if start is None:
        start = start_pose_on_route(world, seed, cfg.altitude)
    texture = cfg.texture_seed
    if texture is None:
        texture = int(rng_for(seed, "texture").integers(2**31))
    settings = RenderSettings(texture_seed=texture)
    ctrl = ControlConfig(sigma=weights.sigma, s_max=cfg.s_max)

    pose = start
    tick = 0
    poses, telemetry = [pose], []
    lost = False
    for _ in range(cfg.max_steps):
        if world.nearest_road(pose.position)[0] > cfg.lost_threshold_m:
            lost = True
            break
        obs = render_observation(world, pose, cfg.camera, tick=tick,
                                 settings=settings)
        pred = forward(weights, obs.raster)
        active = [ins for t, ins in schedule if t <= tick]
        command, tele = control_step(pred, active, pose, ctrl)
        tele["tick"] = tick
        telemetry.append(tele)
        for _ in range(cfg.ticks_per_step()):
            pose = step_drone(pose, command, cfg.dt)
            tick += 1
        poses.append(pose)
    return PatrolTrace(poses=tuple(poses), telemetry=tuple(telemetry),
                       lost=lost, ticks=tick)


def _round(v: float, nd: int = 9) -> float:
    return round(float(v), nd)


def save_runs(root, runs: list, header: dict | None = None) -> None:
    """Persist collected observation runs: PGM frames plus JSONL metadata.

    Wall-clock and host details belong in ``header``; everything else is
    written with sorted keys and rounded floats so equal runs give equal
    bytes.
    """
    from .dataset import DatasetError, write_pgm

    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    if not runs or any(len(r) == 0 for r in runs):
        raise DatasetError("nothing to save: empty run list")
    for ri, frames in enumerate(runs):
        run_dir = root / f"run_{ri:03d}"
        (run_dir / "frames").mkdir(parents=True, exist_ok=True)
        with open(run_dir / "meta.jsonl", "w") as f:
            for fi, obs in enumerate(frames):
                write_pgm(run_dir / "frames" / f"f_{fi:04d}.pgm", obs.raster)
                truth = None
                if obs.truth is not None:
                    t = obs.truth
                    jd = None if not math.isfinite(t.junction_dist) else _round(t.junction_dist)
                    truth = {
                        "nav_x": _round(t.nav_position[0]), "nav_y": _round(t.nav_position[1]),
                        "nav_bearing": _round(t.nav_bearing), "nav_speed": _round(t.nav_speed),
                        "nav_px": _round(t.nav_pixel[0]), "nav_py": _round(t.nav_pixel[1]),
                        "junction_dist": jd,
                    }
                row = {"tick": obs.tick, "mpp": _round(obs.meters_per_pixel),
                       "pose": {"x": _round(obs.pose.x), "y": _round(obs.pose.y),
                                "yaw": _round(obs.pose.yaw), "alt": _round(obs.pose.altitude)},
                       "truth": truth}
                f.write(json.dumps(row, sort_keys=True, separators=(",", ":")) + "\n")
    head = dict(header or {})
    head["runs"] = len(runs)
    head["frames"] = [len(r) for r in runs]
    with open(root / "header.json", "w") as f:
        json.dump(head, f, indent=1, sort_keys=True)


def load_runs(root) -> tuple[list, dict]:
    """Inverse of save_runs: returns (runs, header)."""
    from .dataset import DatasetError, read_pgm

    root = Path(root)
    try:
        with open(root / "header.json") as f:
            header = json.load(f)
    except FileNotFoundError as exc:
        raise DatasetError(f"{root}: not a run directory (missing header.json)") from exc
    runs = []
    for ri in range(int(header.get("runs", 0))):
        run_dir = root / f"run_{ri:03d}"
        frames = []
        with open(run_dir / "meta.jsonl") as f:
            for fi, line in enumerate(f):
                row = json.loads(line)
                raster = read_pgm(run_dir / "frames" / f"f_{fi:04d}.pgm")
                pose = DronePose(row["pose"]["x"], row["pose"]["y"],
                                 row["pose"]["yaw"], row["pose"]["alt"])
                truth = None
                if row["truth"] is not None:
                    t = row["truth"]
                    jd = math.inf if t["junction_dist"] is None else t["junction_dist"]
                    truth = SimTruth(
                        nav_position=np.array([t["nav_x"], t["nav_y"]]),
                        nav_bearing=t["nav_bearing"], nav_speed=t["nav_speed"],
                        nav_pixel=np.array([t["nav_px"], t["nav_py"]]),
                        junction_dist=jd)
                frames.append(Observation(raster=raster, pose=pose, tick=row["tick"],
                                          meters_per_pixel=row["mpp"], truth=truth))
        runs.append(frames)
    return runs, header
