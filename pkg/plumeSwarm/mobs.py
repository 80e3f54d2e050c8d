"""
MoBS baseline controller

Each drone searches on its own: it flies golden-angle spokes out from the
takeoff point and, once it smells the plume, switches to a moth-like
chemotaxis that keeps its heading while the signal grows and turns at
random otherwise. Drones never talk to each other.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi


class MobsMode(Enum):
    SPOKE = "spoke"
    CHEMOTAXIS = "chemotaxis"


@dataclass(frozen=True)
class MobsParams:
    detection_threshold: float = 0.005
    spoke_waypoints: int = 100
    spoke_step: float = 1.0
    golden_ratio: float = 1.618
    chemotaxis_step: float = 1.0
    zero_signal_limit: int = 4

    def __post_init__(self):
        if self.spoke_waypoints < 1:
            raise ConfigError(f"spoke_waypoints must be at least 1, got {self.spoke_waypoints}")
        if self.spoke_step <= 0 or self.chemotaxis_step <= 0:
            raise ConfigError("MoBS step lengths must be positive")
        if self.golden_ratio <= 1:
            raise ConfigError(f"golden_ratio must exceed 1, got {self.golden_ratio}")

    @property
    def spoke_increment(self) -> float:
        return TWO_PI / self.golden_ratio


def spoke_angle(base_angle: float, k: int, params: MobsParams = MobsParams()) -> float:
    """Heading of spoke k: base + k * 2 pi / phi, wrapped to [0, 2 pi)."""
    if k < 0:
        raise ValueError(f"Spoke index must be non-negative, got {k}")
    return (base_angle + k * params.spoke_increment) % TWO_PI


def spoke_waypoints(angle: float, center: Sequence[float] = (0.0, 0.0),
                    params: MobsParams = MobsParams()) -> np.ndarray:
    """(count, 2) waypoints at 1..count steps from the center along `angle`."""
    distances = params.spoke_step * np.arange(1, params.spoke_waypoints + 1)
    direction = np.array([math.cos(angle), math.sin(angle)])
    return np.asarray(center, dtype=float) + distances[:, None] * direction


@dataclass
class MobsDrone:
    """Search state of one MoBS drone."""

    id: int
    base_angle: float
    mode: MobsMode = MobsMode.SPOKE
    spoke: int = 0
    waypoint: int = 0
    heading: float = 0.0
    previous: float = 0.0
    zero_count: int = 0

    @classmethod
    def launch(cls, drone_id: int, rng: np.random.Generator) -> "MobsDrone":
        return cls(id=drone_id, base_angle=float(rng.uniform(0.0, TWO_PI)))

    def spoke_angle(self, params: MobsParams, k: Optional[int] = None) -> float:
        return spoke_angle(self.base_angle, self.spoke if k is None else k, params)

    def spoke_target(self, params: MobsParams, center: Sequence[float]) -> np.ndarray:
        angle = self.spoke_angle(params)
        distance = params.spoke_step * (self.waypoint + 1)
        return np.asarray(center, dtype=float) + distance * np.array([math.cos(angle), math.sin(angle)])


def resume_waypoint(position: Sequence[float], center: Sequence[float], params: MobsParams = MobsParams()) -> int:
    """Index of the first spoke waypoint at or beyond the current distance from the center."""
    distance = float(np.hypot(*(np.asarray(position, dtype=float)[:2] - np.asarray(center, dtype=float))))
    index = math.ceil(distance / params.spoke_step - 1e-9) - 1
    return int(min(max(index, 0), params.spoke_waypoints - 1))


def mobs_step(drone: MobsDrone, reading: float, position: Sequence[float],
              rng: np.random.Generator, params: MobsParams = MobsParams(),
              center: Sequence[float] = (0.0, 0.0)) -> np.ndarray:
    """
    Decide the next 2D target of a drone that just reached its waypoint.

    Args:
        drone: State to update in place
        reading: Sensor value at the waypoint
        position: Current horizontal position
        rng: The drone's own control stream
        params: MoBS constants
        center: Takeoff point the spokes radiate from

    Returns:
        Next horizontal target
    """
    position = np.asarray(position, dtype=float)[:2]
    threshold = params.detection_threshold

    if drone.mode is MobsMode.SPOKE:
        if reading >= threshold:
            drone.mode = MobsMode.CHEMOTAXIS
            drone.heading = drone.spoke_angle(params)
            drone.previous = reading
            drone.zero_count = 0
            logger.debug(f"Drone {drone.id} entered chemotaxis at reading {reading:.4f}")
            return _advance(position, drone.heading, params.chemotaxis_step)
        drone.waypoint += 1
        if drone.waypoint >= params.spoke_waypoints:
            drone.spoke += 1
            drone.waypoint = 0
        return drone.spoke_target(params, center)

    if reading < threshold:
        drone.zero_count += 1
        if drone.zero_count > params.zero_signal_limit:
            drone.mode = MobsMode.SPOKE
            drone.spoke += 1
            drone.waypoint = resume_waypoint(position, center, params)
            drone.zero_count = 0
            logger.debug(f"Drone {drone.id} lost the plume, resuming spoke {drone.spoke} at waypoint {drone.waypoint}")
            return drone.spoke_target(params, center)
    else:
        drone.zero_count = 0

    if reading <= drone.previous:
        drone.heading = float(rng.uniform(0.0, TWO_PI))
    drone.previous = reading
    return _advance(position, drone.heading, params.chemotaxis_step)


def _advance(position: np.ndarray, heading: float, step: float) -> np.ndarray:
    return position + step * np.array([math.cos(heading), math.sin(heading)])


class MobsController:
    """Runs one independent MoBS state machine per drone inside the simulation."""

    name = "mobs"

    def __init__(self, n_drones: int, rngs: Sequence[np.random.Generator],
                 params: MobsParams = MobsParams(), altitude: float = 10.0,
                 center: Tuple[float, float] = (0.0, 0.0)):
        self.params = params
        self.altitude = altitude
        self.center = np.asarray(center, dtype=float)
        self.rngs = list(rngs)
        self.drones: List[MobsDrone] = [MobsDrone.launch(i, self.rngs[i]) for i in range(n_drones)]
        self.samples: Dict[int, int] = {i: 0 for i in range(n_drones)}

    def mode_of(self, drone: int) -> str:
        return self.drones[drone].mode.value

    def _target3(self, target: np.ndarray) -> np.ndarray:
        return np.array([target[0], target[1], self.altitude])

    def start(self, world) -> None:
        for drone in self.drones:
            world.set_path(drone.id, [self._target3(drone.spoke_target(self.params, self.center))])

    def on_event(self, world, arrived: Sequence[int], failed: Sequence[int]) -> None:
        for i in sorted(arrived):
            if not world.alive[i]:
                continue
            reading = float(world.sample([i])[0])
            self.samples[i] += 1
            if world.succeeded:
                return
            target = mobs_step(self.drones[i], reading, world.positions[i], self.rngs[i],
                               self.params, self.center)
            world.set_path(i, [self._target3(target)])
