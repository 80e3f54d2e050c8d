"""
LoCUS swarm controller

The swarm flies as one rigid formation laid out by the range-limited tree.
It assembles over the takeoff point, sweeps an Archimedes spiral until it
smells the plume, then climbs a log-concentration model fitted to the
readings of the last few waypoints, one shell spacing per waypoint. Where
the slope along a ridge is lost in the noise it sweeps back and forth
along the ridge axis with growing legs. Whenever a waypoint is reached
the root polls the swarm for failures and, if any, freezes the formation
while heirs fly beneath it into the vacated slots.
"""

import logging
import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq

from .errors import ConfigError, SwarmLostError
from .numerics import (Sample, ascent_direction, fit_local_model, fit_plane, pairwise_direction, ridge_axis,
                       trust_region_step)
from .tree import RebalanceMove, RecoveryPlan, RecoveryStep, SwarmTree, build_swarm, TreeParams

logger = logging.getLogger(__name__)

Action = Union[RecoveryStep, RebalanceMove]

# Waypoints of readings kept for pooling
HISTORY_WAYPOINTS = 64
# Fractional part of the golden ratio
GOLDEN_FRACTION = (math.sqrt(5.0) - 1.0) / 2.0


class LocusMode(Enum):
    ASSEMBLE = "assemble"
    SPIRAL = "spiral"
    DESCEND = "descend"
    HEALING = "healing"
    DONE = "done"


@dataclass(frozen=True)
class LocusParams:
    """
    Attributes:
        detection_threshold: Reading that counts as plume contact
        jitter_radius: Radius of the common random offset (m)
        max_rotation_deg: Upper bound of the random formation rotation
        heal: Replace failed drones; False only detaches them
        pool_samples: Readings pooled over recent waypoints for the ascent model
        sweep_pool_samples: Readings pooled while sweeping along a ridge
        slope_significance: Standard errors the along-ridge slope must
            exceed before the swarm trusts it
        sweep_leg: First half-leg of a ridge sweep (m)
        sweep_leg_max: Longest half-leg of a ridge sweep (m)
    """

    detection_threshold: float = 0.005
    jitter_radius: float = 0.1
    max_rotation_deg: float = 45.0
    heal: bool = True
    pool_samples: int = 20
    sweep_pool_samples: int = 60
    slope_significance: float = 3.0
    sweep_leg: float = 50.0
    sweep_leg_max: float = 200.0

    def __post_init__(self):
        if not 0 <= self.detection_threshold <= 1:
            raise ConfigError(f"detection_threshold must lie in [0, 1], got {self.detection_threshold}")
        if self.jitter_radius < 0:
            raise ConfigError(f"jitter_radius must be non-negative, got {self.jitter_radius}")
        if not 0 <= self.max_rotation_deg <= 360:
            raise ConfigError(f"max_rotation_deg must lie in [0, 360], got {self.max_rotation_deg}")
        if self.pool_samples < 1 or self.sweep_pool_samples < 1:
            raise ConfigError(f"Pooled sample counts must be positive, got {self.pool_samples} "
                              f"and {self.sweep_pool_samples}")
        if self.slope_significance < 0:
            raise ConfigError(f"slope_significance must be non-negative, got {self.slope_significance}")
        if not 0 < self.sweep_leg <= self.sweep_leg_max:
            raise ConfigError(f"Sweep legs need 0 < sweep_leg <= sweep_leg_max, got {self.sweep_leg} "
                              f"and {self.sweep_leg_max}")

    @property
    def max_rotation(self) -> float:
        return math.radians(self.max_rotation_deg)


@dataclass
class Pose:
    """Common offset and rotation applied to the whole formation."""

    offset: np.ndarray = field(default_factory=lambda: np.zeros(2))
    rotation: float = 0.0

    def rotate(self, vectors: np.ndarray) -> np.ndarray:
        c, s = math.cos(self.rotation), math.sin(self.rotation)
        vectors = np.asarray(vectors, dtype=float)
        return vectors @ np.array([[c, s], [-s, c]])

    def place(self, root: np.ndarray, offsets: np.ndarray) -> np.ndarray:
        return np.asarray(root, dtype=float) + self.rotate(offsets) + self.offset


@dataclass
class SpiralState:
    """Progress along r = a * theta around `center`."""

    center: np.ndarray
    theta: float = 0.0
    spacing: float = 3.0

    @property
    def a(self) -> float:
        return self.spacing / (2.0 * math.pi)

    def point(self, theta: Optional[float] = None) -> np.ndarray:
        theta = self.theta if theta is None else theta
        radius = self.a * theta
        return self.center + radius * np.array([math.cos(theta), math.sin(theta)])


@dataclass
class RidgeSweep:
    """
    Back-and-forth flight along a ridge whose slope is too weak to read.

    `reach` is the distance from `origin` along `axis` at which the next
    turn happens; each turn doubles it up to a limit.
    """

    origin: np.ndarray
    axis: np.ndarray
    heading: float = 1.0
    reach: float = 50.0
    turns: int = 0

    def align(self, axis: np.ndarray) -> np.ndarray:
        """Blend a fresh axis estimate into the sweep axis, keeping its sign."""
        axis = np.asarray(axis, dtype=float)
        if axis @ self.axis < 0:
            axis = -axis
        blended = self.axis + axis
        self.axis = blended / np.linalg.norm(blended)
        return self.axis

    def position(self, point: Sequence[float]) -> float:
        return float((np.asarray(point, dtype=float) - self.origin) @ self.axis)

    def turn(self, point: Sequence[float], limit: float) -> float:
        if self.heading * self.position(point) >= self.reach:
            self.heading = -self.heading
            self.reach = min(2.0 * self.reach, limit)
            self.turns += 1
            logger.debug(f"Ridge sweep turns, next leg reaches {self.reach:.1f} m")
        return self.heading


@dataclass
class LocusState:
    mode: LocusMode
    tree: SwarmTree
    spiral: SpiralState
    root: np.ndarray
    pose: Pose = field(default_factory=Pose)
    plan: Optional[RecoveryPlan] = None
    history: Deque[List[Sample]] = field(default_factory=lambda: deque(maxlen=HISTORY_WAYPOINTS))
    sweep: Optional[RidgeSweep] = None


def spiral_arc_length(theta: float, a: float) -> float:
    """Arc length of r = a * theta from 0 to theta."""
    return 0.5 * a * (theta * math.sqrt(1.0 + theta * theta) + math.asinh(theta))


def arm_spacing(tree: SwarmTree) -> float:
    return max(tree.complete_rings(), 1) * tree.params.r_max


def spiral_next(state: LocusState) -> np.ndarray:
    """
    Advance the spiral by one arc-length step and return the new root waypoint.

    The arm spacing and the step both equal the radius of the deepest
    complete shell, so they follow the live tree. When the spacing changes
    the current radius is kept and the angle rescaled.
    """
    spiral = state.spiral
    spacing = arm_spacing(state.tree)
    if not math.isclose(spacing, spiral.spacing):
        radius = spiral.a * spiral.theta
        spiral.spacing = spacing
        spiral.theta = radius / spiral.a
        logger.debug(f"Spiral arm spacing now {spacing:.2f} m")

    a = spiral.a
    start = spiral_arc_length(spiral.theta, a)
    spiral.theta = brentq(
        lambda t: spiral_arc_length(t, a) - start - spacing,
        spiral.theta,
        spiral.theta + spacing / a,
    )
    state.root = spiral.point()
    return state.root


def estimate_direction(samples: Sequence[Sample]) -> Optional[np.ndarray]:
    """Ascent direction from a plane fit, the pairwise rule for two drones."""
    if len(samples) >= 3:
        fit = fit_plane(samples)
        if fit.rank_deficient and len(samples) > 3:
            logger.warning(f"Plane fit over {len(samples)} samples is rank deficient")
        return ascent_direction(fit)
    if len(samples) == 2:
        return pairwise_direction(samples[0], samples[1])
    return None


def pooled_samples(history: Sequence[Sequence[Sample]], target: int) -> List[Sample]:
    """Readings of the most recent waypoints, newest first, until `target` are gathered."""
    pooled: List[Sample] = []
    for waypoint in reversed(history):
        pooled.extend(waypoint)
        if len(pooled) >= target:
            break
    return pooled


def ascent_step(state: LocusState, params: LocusParams = LocusParams()) -> Optional[np.ndarray]:
    """
    Root displacement from the pooled log-concentration model.

    The model's gradient and curvature give a trust-region step of at most
    one shell spacing. When the slope along the weakest curvature axis is
    not significant the step instead holds the cross-axis Newton position
    and advances along the axis as a ridge sweep.

    Returns:
        The displacement, or None when the pooled readings support no model
    """
    r_max = state.tree.params.r_max
    sweeping = state.sweep is not None
    target = params.sweep_pool_samples if sweeping else params.pool_samples
    samples = pooled_samples(state.history, target)
    model = fit_local_model(samples, state.root)
    if model.rank_deficient or ascent_direction(model) is None:
        return None

    step = trust_region_step(model.gradient, model.hessian, r_max)
    axis = ridge_axis(model.hessian)
    if state.sweep is not None:
        axis = state.sweep.align(axis)
    slope = float(model.gradient @ axis)
    error = model.slope_error(axis)
    limit = params.slope_significance * (2.0 if sweeping else 1.0)
    if not math.isfinite(error) or abs(slope) > limit * error:
        if state.sweep is not None:
            logger.debug(f"Ridge slope {slope:.2e} is significant again, sweep ends")
        state.sweep = None
        return step

    if state.sweep is None:
        heading = float(np.sign(step @ axis)) or 1.0
        state.sweep = RidgeSweep(origin=np.array(state.root, dtype=float), axis=axis,
                                 heading=heading, reach=params.sweep_leg)
        logger.debug(f"Ridge slope {slope:.2e} within noise {error:.2e}, sweeping")
    turns = state.sweep.turns
    heading = state.sweep.turn(state.root, params.sweep_leg_max)

    cross_axis = np.array([-axis[1], axis[0]])
    g_cross = float(model.gradient @ cross_axis)
    h_cross = float(cross_axis @ model.hessian @ cross_axis)
    cross = -g_cross / h_cross if h_cross < 0 else math.copysign(r_max, g_cross)
    cross = float(np.clip(cross, -r_max, r_max))
    spare = r_max * r_max - cross * cross
    along = math.sqrt(spare) if spare > 1e-12 * r_max * r_max else 0.0
    if state.sweep.turns != turns:
        # Shift each new leg off the waypoint lattice of the previous ones
        along *= (state.sweep.turns * GOLDEN_FRACTION) % 1.0
    return cross * cross_axis + heading * along * axis


def descend_step(state: LocusState, samples: Sequence[Sample],
                 params: LocusParams = LocusParams()) -> np.ndarray:
    """
    Choose the next root waypoint from the samples of the last waypoint.

    SPIRAL turns into DESCEND once a direction exists and some reading
    reaches the detection threshold. DESCEND steps by the pooled ascent
    model, or by the plane through the last waypoint while too few
    readings are pooled, and falls back to a spiral centered on the
    current waypoint when the direction vanishes.
    """
    state.history.append(list(samples))
    direction = estimate_direction(samples)
    peak = max((s.val for s in samples), default=0.0)
    r_max = state.tree.params.r_max

    if state.mode is LocusMode.SPIRAL:
        if direction is not None and peak >= params.detection_threshold:
            state.mode = LocusMode.DESCEND
            logger.debug(f"Plume contact at reading {peak:.4f}, descending")
        else:
            return spiral_next(state)

    step = ascent_step(state, params) if len(samples) >= 3 else None
    if step is None:
        if direction is None:
            state.mode = LocusMode.SPIRAL
            state.sweep = None
            state.spiral = SpiralState(center=np.array(state.root, dtype=float), spacing=arm_spacing(state.tree))
            logger.debug("Slope vanished, back to spiral search")
            return spiral_next(state)
        step = r_max * direction

    state.root = np.asarray(state.root, dtype=float) + step
    return state.root


def randomize_pose(rng: np.random.Generator, params: LocusParams = LocusParams()) -> Pose:
    """Uniform offset on the jitter disk and rotation in [0, max rotation]."""
    radius = params.jitter_radius * math.sqrt(rng.random())
    bearing = rng.uniform(0.0, 2.0 * math.pi)
    rotation = rng.uniform(0.0, params.max_rotation)
    return Pose(offset=np.array([radius * math.cos(bearing), radius * math.sin(bearing)]), rotation=rotation)


def distribute_waypoint(tree: SwarmTree, root: Sequence[float], pose: Pose,
                        altitude: float) -> Tuple[Dict[int, np.ndarray], Dict[int, int]]:
    """
    Pass the root waypoint down the tree.

    Each node hands its children the root target; a drone adds its own
    rotated slot offset and the common jitter.

    Returns:
        (targets, hops): 3D target and tree hops per drone
    """
    targets: Dict[int, np.ndarray] = {}
    hops: Dict[int, int] = {}
    if tree.root not in tree.occupancy:
        frontier = deque((slot, 0) for slot in tree.occupied if slot not in tree.parent)
    else:
        frontier = deque([(tree.root, 0)])
    while frontier:
        slot, depth = frontier.popleft()
        drone = tree.occupancy[slot]
        xy = pose.place(root, tree.slot(slot).offset)
        targets[drone] = np.array([xy[0], xy[1], altitude])
        hops[drone] = depth
        frontier.extend((child, depth + 1) for child in tree.children(slot))
    return targets, hops


def check_success(positions: np.ndarray, peak: Sequence[float], radius: float = 1.0) -> bool:
    """True when any position is within `radius` of the peak horizontally."""
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if positions.size == 0:
        return False
    distances = np.hypot(positions[:, 0] - peak[0], positions[:, 1] - peak[1])
    return bool((distances <= radius).any())


class LocusController:
    """
    LoCUS state machine driven by the simulation kernel.

    The kernel calls `start` once and `on_event` whenever drones arrive
    at their targets or fail.
    """

    name = "locus"

    def __init__(self, n_drones: int, rng: np.random.Generator,
                 tree_params: TreeParams = TreeParams(), params: LocusParams = LocusParams(),
                 altitude: float = 10.0, takeoff: Tuple[float, float] = (0.0, 0.0),
                 arrival_tolerance: float = 0.2, record_waypoints: bool = False):
        self.params = params
        self.rng = rng
        self.altitude = altitude
        self.arrival_tolerance = arrival_tolerance
        self.record_waypoints = record_waypoints
        center = np.asarray(takeoff, dtype=float)
        tree = build_swarm(n_drones, tree_params)
        self.state = LocusState(
            mode=LocusMode.ASSEMBLE,
            tree=tree,
            spiral=SpiralState(center=center.copy(), spacing=arm_spacing(tree)),
            root=center.copy(),
        )
        self.heal_events = 0
        self.hops: Dict[int, int] = {}
        self.waypoints: List[Tuple] = []
        self._targets: Dict[int, np.ndarray] = {}
        self._actions: Deque[Action] = deque()
        self._flight: Optional[Action] = None
        self._resume: LocusMode = LocusMode.ASSEMBLE

    @property
    def mode(self) -> LocusMode:
        return self.state.mode

    @property
    def tree(self) -> SwarmTree:
        return self.state.tree

    def mode_of(self, drone: int) -> str:
        return self.state.mode.value

    def start(self, world) -> None:
        self._distribute(world)

    # ------------------------------------------------------------------
    # Events

    def on_event(self, world, arrived: Sequence[int], failed: Sequence[int]) -> None:
        if self.state.mode is LocusMode.DONE:
            return
        if self.state.mode is LocusMode.HEALING:
            flight = self._flight
            if flight is not None and (flight.drone in arrived or not world.alive[flight.drone]):
                self._apply(flight)
                self._flight = None
                self._continue_healing(world)
            if self.state.mode is LocusMode.HEALING:
                return
        if self._waypoint_reached(world):
            self.on_waypoint(world)

    def _waypoint_reached(self, world) -> bool:
        live = [i for i in self._targets if world.alive[i]]
        moving = world.moving
        if any(moving[i] for i in live):
            return False
        return all(
            np.linalg.norm(world.positions[i] - self._targets[i]) <= self.arrival_tolerance for i in live
        )

    def on_waypoint(self, world) -> None:
        """Sample, poll for failures, then heal or pick the next waypoint."""
        live = [int(i) for i in np.flatnonzero(world.alive)]
        readings = world.sample(live)
        if world.succeeded:
            self.state.mode = LocusMode.DONE
            self._record(world, readings)
            return

        failed = [slot for slot in self.tree.occupied if not world.alive[self.tree.occupancy[slot]]]
        if failed:
            if self.params.heal:
                self.poll_and_heal(world, failed)
                if self.state.mode in (LocusMode.HEALING, LocusMode.DONE):
                    return
            else:
                self._detach(failed)

        samples = [Sample(float(world.positions[i][0]), float(world.positions[i][1]), float(r))
                   for i, r in zip(live, readings)]
        if self.state.mode is LocusMode.ASSEMBLE:
            self.state.mode = LocusMode.SPIRAL
        descend_step(self.state, samples, self.params)
        self.state.pose = randomize_pose(self.rng, self.params)
        self._record(world, readings)
        self._distribute(world)

    # ------------------------------------------------------------------
    # Healing

    def poll_and_heal(self, world, failed: Sequence[int]) -> None:
        """
        Start the recovery of the failed slots.

        The formation holds its waypoint while the plan runs; leaf
        removals apply at once and each heir flight waits for the previous
        one to land.
        """
        try:
            plan = self.tree.plan_recovery(failed)
        except SwarmLostError:
            logger.info("Every drone in the swarm has failed")
            self.state.mode = LocusMode.DONE
            return
        logger.debug(f"Healing {len(failed)} failed slots with {plan.flight_count} flights")
        self.state.plan = plan
        self._actions = deque(plan.actions)
        self._resume = self.state.mode
        self.state.mode = LocusMode.HEALING
        self._continue_healing(world)

    def _continue_healing(self, world) -> None:
        while self._actions:
            action = self._actions.popleft()
            if action.drone is None or not world.alive[action.drone]:
                self._apply(action)
                continue
            self._flight = action
            self.heal_events += 1
            world.set_path(action.drone, self._world_path(action.path))
            return
        self.state.plan = None
        self.state.mode = self._resume
        self._retarget()

    def _apply(self, action: Action) -> None:
        if isinstance(action, RecoveryStep):
            self.tree.apply_step(action)
        else:
            self.tree.apply_move(action)

    def _detach(self, failed: Sequence[int]) -> None:
        heights = self.tree.heights()
        for slot in sorted(failed, key=lambda s: (-heights[s], s)):
            self.tree.detach(slot)
        logger.debug(f"Detached {len(failed)} failed slots without replacement")

    def _world_path(self, path: Sequence[Tuple[float, float, float]]) -> List[np.ndarray]:
        points = []
        for x, y, dz in path:
            xy = self.state.pose.place(self.state.root, np.array([x, y]))
            points.append(np.array([xy[0], xy[1], self.altitude + dz]))
        return points

    def _retarget(self) -> None:
        targets, self.hops = distribute_waypoint(self.tree, self.state.root, self.state.pose, self.altitude)
        self._targets = targets

    # ------------------------------------------------------------------
    # Waypoints

    def _distribute(self, world) -> None:
        self._retarget()
        for drone, target in self._targets.items():
            world.set_path(drone, [target])

    def _record(self, world, readings: Sequence[float]) -> None:
        if not self.record_waypoints:
            return
        self.waypoints.append((
            int(world.tick),
            self.state.mode.value,
            float(self.state.root[0]),
            float(self.state.root[1]),
            int(world.alive.sum()),
            self.heal_events,
            float(max(readings, default=0.0)),
            max(self.hops.values(), default=0),
        ))
