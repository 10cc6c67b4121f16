"""Prediction-to-command policy: candidate roads, instruction fusion, scaling.

The direction mixture is cut into sections above a density threshold; each
section's midpoint is a candidate road. An in-range user instruction picks
the candidate nearest its desired direction, otherwise the straightest
candidate wins. Heading speed scales with how peaked the chosen section is.
"""

import dataclasses
import math

import numpy as np

from .drone import ControlCommand, DronePose
from .net import GmmParams, NetError, Prediction, gmm_pdf

HALF_PI = math.pi / 2


@dataclasses.dataclass(frozen=True)
class ControlConfig:
    alpha: float = 0.5  # rad -> rad/s for the rotation command
    s_max: float = 10.0
    beta: float = 3.0  # normalized translation -> m/s
    threshold: float = 0.5
    grid_n: int = 256
    sigma: float = 0.1  # reference spread for the speed law

    def __post_init__(self):
        if self.grid_n < 64:
            raise NetError("grid_n must be at least 64")
        if self.threshold <= 0 or self.sigma <= 0:
            raise NetError("threshold and sigma must be positive")

    @property
    def rho_ref(self) -> float:
        # peak density of a single full-weight component
        return 1.0 / (self.sigma * math.sqrt(2.0 * math.pi))

    def to_dict(self):
        return dataclasses.asdict(self)


@dataclasses.dataclass(frozen=True)
class Candidate:
    direction: float
    peak: float
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.direction <= self.hi:
            raise NetError("candidate direction outside its section")


@dataclasses.dataclass(frozen=True)
class UserInstruction:
    x: float
    y: float
    du: float
    radius: float = 1000.0
    ident: int | None = None

    def __post_init__(self):
        if not abs(self.du) < 1.0:
            raise NetError("instruction direction must lie in (-1, 1)")
        if not self.radius > 0:
            raise NetError("instruction radius must be positive")

    def distance_to(self, drone: DronePose) -> float:
        return math.hypot(drone.x - self.x, drone.y - self.y)

    def active_for(self, drone: DronePose) -> bool:
        return self.distance_to(drone) < self.radius


def extract_candidates(gmm: GmmParams, threshold: float = 0.5,
                       grid_n: int = 256) -> list:
    """Threshold the density on a uniform grid; one candidate per section."""

    if grid_n < 64:
        raise NetError("grid_n must be at least 64")
    xs = -1.0 + (2.0 * np.arange(grid_n) + 1.0) / grid_n  # cell centers
    dens = gmm_pdf(gmm, xs)
    above = dens > threshold
    out = []
    i = 0
    while i < grid_n:
        if not above[i]:
            i += 1
            continue
        j = i
        while j + 1 < grid_n and above[j + 1]:
            j += 1
        out.append(Candidate(direction=float(0.5 * (xs[i] + xs[j])),
                             peak=float(dens[i:j + 1].max()),
                             lo=float(xs[i]), hi=float(xs[j])))
        i = j + 1
    return out


def fuse_instruction(candidates, instr: UserInstruction | None,
                     drone: DronePose):
    """Pick the candidate for this tick, or None when no road is seen.

    An active instruction pulls toward its desired direction; otherwise the
    candidate closest to straight ahead wins. Ties prefer the smaller
    absolute direction, then the leftmost.
    """

    if not candidates:
        return None
    want = instr.du if instr is not None and instr.active_for(drone) else None

    def key(c):
        primary = abs(c.direction - want) if want is not None else abs(c.direction)
        return (primary, abs(c.direction), c.direction)

    return min(candidates, key=key)


def make_command(chosen: Candidate | None, t_hat: float,
                 cfg: ControlConfig = ControlConfig()) -> ControlCommand:
    translation = cfg.beta * t_hat
    if chosen is None:
        return ControlCommand.clamped(0.0, 0.0, translation)
    rotation = cfg.alpha * chosen.direction * HALF_PI
    speed = cfg.s_max * min(1.0, chosen.peak / cfg.rho_ref)
    return ControlCommand.clamped(rotation, speed, translation)


def control_step(prediction: Prediction, instructions, drone: DronePose,
                 cfg: ControlConfig = ControlConfig()):
    """One 10 Hz decision: returns (ControlCommand, telemetry dict).

    ``instructions`` is a snapshot; the nearest active one is used.
    """

    candidates = extract_candidates(prediction.gmm, cfg.threshold, cfg.grid_n)
    active = [i for i in instructions if i.active_for(drone)]
    instr = min(active, key=lambda i: i.distance_to(drone)) if active else None
    chosen = fuse_instruction(candidates, instr, drone)
    command = make_command(chosen, prediction.t_hat, cfg)
    telemetry = {
        "candidates": [{"dir": c.direction, "peak": c.peak} for c in candidates],
        "chosen": candidates.index(chosen) if chosen is not None else None,
        "instruction": instr.ident if instr is not None else None,
        "command": {"d": command.rotation, "s": command.heading_speed,
                    "t": command.translation},
    }
    return command, telemetry
